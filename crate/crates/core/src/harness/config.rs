//! Experiment configuration: a TOML document with every section optional
//! except `[domain]`. The annotated reference lives in `schema/experiment.toml`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryValue, Circle, DomainSpec, Sign, Vec2, build_annulus};
use crate::error::{Error, Result};
use crate::flow::{Backend, FlowOptions};
use crate::gauge::{GaugeSpec, Schedule};
use crate::lattice::LatticeParams;
use crate::radial::{MIN_RADIAL_N, RadialParams};
use crate::torus::TorusOptions;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Radial,
    Lattice,
    Both,
}

impl BackendChoice {
    pub fn backends(self) -> Vec<Backend> {
        match self {
            BackendChoice::Radial => vec![Backend::Radial],
            BackendChoice::Lattice => vec![Backend::Lattice],
            BackendChoice::Both => vec![Backend::Radial, Backend::Lattice],
        }
    }
}

impl std::str::FromStr for BackendChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" => Ok(Self::Radial),
            "lattice" => Ok(Self::Lattice),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown backend {s:?}; expected radial, lattice or both"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleConfig {
    pub center: [f64; 2],
    pub radius: f64,
    /// Signed boundary coefficient `B`.
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainConfig {
    /// Concentric annulus around the origin.
    Annulus { r_inner: f64, r_outer: f64, b_inner: f64, b_outer: f64 },
    /// Disk with circular holes.
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        b: f64,
        #[serde(default)]
        holes: Vec<HoleConfig>,
    },
}

impl DomainConfig {
    pub fn holes(&self) -> usize {
        match self {
            DomainConfig::Annulus { .. } => 1,
            DomainConfig::Disk { holes, .. } => holes.len(),
        }
    }

    /// `B` of every component, outer circle first.
    pub fn b_values(&self) -> Vec<f64> {
        match self {
            DomainConfig::Annulus { b_inner, b_outer, .. } => vec![*b_outer, *b_inner],
            DomainConfig::Disk { b, holes, .. } => std::iter::once(*b).chain(holes.iter().map(|h| h.b)).collect(),
        }
    }

    /// The same geometry with new `B` values, outer circle first.
    pub fn with_b_values(&self, bs: &[f64]) -> Self {
        match self.clone() {
            DomainConfig::Annulus { r_inner, r_outer, .. } => {
                DomainConfig::Annulus { r_inner, r_outer, b_inner: bs[1], b_outer: bs[0] }
            }
            DomainConfig::Disk { center, radius, mut holes, .. } => {
                for (h, b) in holes.iter_mut().zip(&bs[1..]) {
                    h.b = *b;
                }
                DomainConfig::Disk { center, radius, b: bs[0], holes }
            }
        }
    }

    pub fn build(&self) -> Result<DomainSpec> {
        match self {
            DomainConfig::Annulus { r_inner, r_outer, b_inner, b_outer } => {
                build_annulus(*r_inner, *r_outer, BoundaryValue::new(*b_inner)?, BoundaryValue::new(*b_outer)?)
            }
            DomainConfig::Disk { center, radius, b, holes } => {
                let outer = Circle { center: Vec2::new(center[0], center[1]), radius: *radius };
                let hs = holes
                    .iter()
                    .map(|h| Ok((Circle { center: Vec2::new(h.center[0], h.center[1]), radius: h.radius }, BoundaryValue::new(h.b)?)))
                    .collect::<Result<Vec<_>>>()?;
                DomainSpec::new(outer, BoundaryValue::new(*b)?, hs)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeConfig {
    /// Winding per hole in hole order; missing entries are zero.
    pub windings: Vec<i64>,
    pub schedule: Schedule,
}

impl GaugeConfig {
    pub fn build(&self) -> GaugeSpec {
        GaugeSpec::from_slice(&self.windings).with_schedule(self.schedule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Run the wall-sign calibration before lattice measurements.
    pub run: bool,
    /// Cached calibration report; defaults to `calibration.json` in the output directory.
    pub cache: Option<PathBuf>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { run: true, cache: None }
    }
}

/// Second resolution at which every flow is repeated; the measured value must not change.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub radial: Option<usize>,
    pub lattice: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusConfig {
    pub enabled: bool,
    /// Radial grid size used for the torus operator.
    pub resolution: usize,
    pub n_t: usize,
    pub gap_factor: f64,
    pub window: f64,
    pub pad: usize,
    pub cap: usize,
    pub probe: usize,
}

impl Default for TorusConfig {
    fn default() -> Self {
        let o = TorusOptions::default();
        Self {
            enabled: false,
            resolution: 48,
            n_t: o.n_t,
            gap_factor: o.gap_factor,
            window: o.window,
            pad: o.pad,
            cap: o.cap,
            probe: o.probe,
        }
    }
}

impl TorusConfig {
    pub fn options(&self, n_t: usize) -> TorusOptions {
        TorusOptions { n_t, gap_factor: self.gap_factor, window: self.window, pad: self.pad, cap: self.cap, probe: self.probe }
    }
}

/// Matrix of variations; every empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub windings: Vec<Vec<i64>>,
    /// Sign patterns such as `"+--"`, outer circle first.
    pub signs: Vec<String>,
    /// Factors applied to every `|B|`.
    pub scales: Vec<f64>,
    pub schedules: Vec<Schedule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub backend: BackendChoice,
    pub domain: DomainConfig,
    #[serde(default)]
    pub gauge: GaugeConfig,
    #[serde(default)]
    pub radial: RadialParams,
    #[serde(default)]
    pub lattice: LatticeParams,
    #[serde(default)]
    pub flow: FlowOptions,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub torus: TorusConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Parses and validates a configuration; errors carry the line and key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}

fn parse_signs(pattern: &str, components: usize) -> Result<Vec<Sign>> {
    let signs: Vec<Sign> = pattern
        .chars()
        .map(|c| match c {
            '+' => Ok(Sign::Plus),
            '-' => Ok(Sign::Minus),
            _ => Err(Error::Config(format!("sign pattern {pattern:?} may only contain '+' and '-'"))),
        })
        .collect::<Result<_>>()?;
    if signs.len() != components {
        return Err(Error::Config(format!(
            "sign pattern {pattern:?} has {} entries for {components} boundary components",
            signs.len()
        )));
    }
    Ok(signs)
}

fn check_windings(ws: &[i64], holes: usize) -> Result<()> {
    if ws.len() > holes {
        return Err(Error::Config(format!("{} windings given for {holes} holes", ws.len())));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.domain.build()?;
        check_windings(&self.gauge.windings, d.m() - 1)?;
        self.gauge.schedule.validate()?;
        if self.radial.n < MIN_RADIAL_N {
            return Err(Error::Config(format!("radial.n = {} is below the minimum {MIN_RADIAL_N}", self.radial.n)));
        }
        if !(self.radial.lambda > 0.0) {
            return Err(Error::Config("radial.lambda must be positive".into()));
        }
        self.lattice.validate()?;
        self.flow.validate()?;
        if self.torus.n_t < 8 {
            return Err(Error::Config(format!("torus.n_t = {} is below 8", self.torus.n_t)));
        }
        if let Some(s) = &self.sweep {
            for w in &s.windings {
                check_windings(w, d.m() - 1)?;
            }
            for p in &s.signs {
                parse_signs(p, d.m())?;
            }
            if s.scales.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Config("sweep scales must be positive".into()));
            }
            for sc in &s.schedules {
                sc.validate()?;
            }
        }
        Ok(())
    }

    /// Configurations of every sweep row, in expansion order.
    pub fn expand(&self) -> Result<Vec<CaseConfig>> {
        let base_b = self.domain.b_values();
        let Some(s) = &self.sweep else {
            return Ok(vec![CaseConfig::new(0, self.domain.clone(), self.gauge.clone(), 1.0)]);
        };
        let windings = if s.windings.is_empty() { vec![self.gauge.windings.clone()] } else { s.windings.clone() };
        let signs: Vec<Option<Vec<Sign>>> = if s.signs.is_empty() {
            vec![None]
        } else {
            s.signs.iter().map(|p| parse_signs(p, base_b.len()).map(Some)).collect::<Result<_>>()?
        };
        let scales = if s.scales.is_empty() { vec![1.0] } else { s.scales.clone() };
        let schedules = if s.schedules.is_empty() { vec![self.gauge.schedule] } else { s.schedules.clone() };
        let mut out = Vec::new();
        for w in &windings {
            for sg in &signs {
                for sc in &scales {
                    for sch in &schedules {
                        let bs: Vec<f64> = base_b
                            .iter()
                            .enumerate()
                            .map(|(i, b)| {
                                let sign = sg.as_ref().map(|v| v[i].value()).unwrap_or(b.signum());
                                sign * b.abs() * sc
                            })
                            .collect();
                        let gauge = GaugeConfig { windings: w.clone(), schedule: *sch };
                        out.push(CaseConfig::new(out.len(), self.domain.with_b_values(&bs), gauge, *sc));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One row of an experiment: a concrete domain and gauge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub key: String,
    pub domain: DomainConfig,
    pub gauge: GaugeConfig,
}

impl CaseConfig {
    pub fn new(index: usize, domain: DomainConfig, gauge: GaugeConfig, scale: f64) -> Self {
        let signs: String = domain.b_values().iter().map(|b| if *b > 0.0 { '+' } else { '-' }).collect();
        let ws: Vec<String> = gauge.windings.iter().map(|w| w.to_string()).collect();
        let key = format!("{index:03} w=[{}] b={signs} x{scale} {}", ws.join(","), gauge.schedule.name());
        Self { key, domain, gauge }
    }

    /// File-system friendly form of the key.
    pub fn slug(&self) -> String {
        self.key
            .chars()
            .map(|c| match c {
                'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '.' => c,
                '+' => 'p',
                _ => '_',
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
shape = "annulus"
r_inner = 0.5
r_outer = 1.0
b_inner = -1.0
b_outer = 1.0
"#;

    const THREE_HOLES: &str = r#"
name = "three"
backend = "both"

[domain]
shape = "disk"
radius = 1.0
b = 1.0
holes = [
  { center = [-0.5, 0.0], radius = 0.15, b = -1.0 },
  { center = [0.5, 0.0], radius = 0.15, b = 2.0 },
  { center = [0.0, 0.5], radius = 0.15, b = -0.5 },
]

[gauge]
windings = [1, 0, -2]
schedule = { ramp = { start = 0.2, end = 0.8 } }

[lattice]
cells_per_diameter = 120

[sweep]
windings = [[0, 0, 1], [1, 1, 1]]
signs = ["+---", "++-+"]
scales = [1.0, 10.0]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.lattice.r_wilson, 1.0);
        assert_eq!(c.lattice.lambda, 0.3);
        assert_eq!(c.gauge.schedule, Schedule::Linear);
        assert_eq!(c.backend, BackendChoice::Radial);
        assert_eq!(c.expand().unwrap().len(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("[domain]", "[lattice]\nwilsn = 1.0\n\n[domain]");
        let Err(Error::Parse(msg)) = parse_config(&text) else { panic!() };
        assert!(msg.contains("wilsn"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn round_trip_is_idempotent() {
        let c = parse_config(THREE_HOLES).unwrap();
        let once = to_toml(&c).unwrap();
        let again = parse_config(&once).unwrap();
        assert_eq!(again, c);
        assert_eq!(to_toml(&again).unwrap(), once);
    }

    #[test]
    fn sweep_expands_in_order() {
        let c = parse_config(THREE_HOLES).unwrap();
        let cases = c.expand().unwrap();
        assert_eq!(cases.len(), 8);
        assert!(cases.windows(2).all(|w| w[0].key < w[1].key));
        assert_eq!(cases[0].domain.b_values(), vec![1.0, -1.0, -2.0, -0.5]);
        assert_eq!(cases[1].domain.b_values(), vec![10.0, -10.0, -20.0, -5.0]);
        assert_eq!(cases[2].domain.b_values(), vec![1.0, 1.0, -2.0, 0.5]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(parse_config(&MINIMAL.replace("b_inner = -1.0", "b_inner = 0.0")), Err(Error::InvalidBoundaryData(_))));
        let text = format!("{MINIMAL}\n[gauge]\nwindings = [1, 2]\n");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        let text = format!("{MINIMAL}\n[sweep]\nsigns = [\"+\"]\n");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        assert!(matches!(parse_config("[domain]\nshape = \"square\"\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn reference_schema_parses_to_defaults() {
        let text = include_str!("../../../../schema/experiment.toml");
        let c = parse_config(text).unwrap();
        assert_eq!(c.lattice, LatticeParams::default());
        assert_eq!(c.radial, RadialParams::default());
        assert_eq!(c.flow, FlowOptions::default());
        assert_eq!(c.torus, TorusConfig::default());
        assert_eq!(c.calibration, CalibrationConfig::default());
    }
}
