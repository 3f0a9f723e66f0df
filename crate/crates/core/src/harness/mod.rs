//! Experiment runs: configuration, calibration, flow measurements over a
//! sweep, persisted artifacts and the summary report.

pub mod artifacts;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::flow::{Backend, FamilySampler, FlowResult, FlowRun, FlowStatus, LatticeSampler, RadialSampler, run_flow};
use crate::gauge::{GaugeSpec, predicted_sf};
use crate::lattice::{CalibrationReport, LatticeParams, wall_sign_calibration};
use crate::radial::RadialParams;
use crate::torus::{Clutching, assemble_torus, index_count};

pub use config::{BackendChoice, CaseConfig, ExperimentConfig, load_config, parse_config};
pub use report::{FlowReport, ReportRow, RowStatus, Summary};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DIRACFLOW_WORKERS";

/// Endpoint spectra must agree to this, in units of the sample energy scale.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Lattice resolutions below this are refused before any work is done.
pub const MIN_LATTICE_CELLS: usize = 24;

/// Annulus and resolution of the wall-sign calibration.
pub const CALIBRATION_ANNULUS: (f64, f64) = (0.25, 1.0);
pub const CALIBRATION_CELLS_ACROSS: usize = 48;

/// Worker count from [`WORKERS_ENV`], defaulting to the available parallelism.
pub fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} = {v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Runs `f` on a pool of `n` workers.
pub fn with_workers<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CalibrationCache {
    r_wilson: f64,
    m_wall: f64,
    margin: usize,
    report: CalibrationReport,
}

/// Wall-sign calibration, read from `cache` when it matches the lattice
/// parameters and written there otherwise.
pub fn calibrate(lattice: &LatticeParams, radial: &RadialParams, cache: &Path) -> Result<CalibrationReport> {
    if let Ok(text) = std::fs::read_to_string(cache) {
        if let Ok(c) = serde_json::from_str::<CalibrationCache>(&text) {
            if c.r_wilson == lattice.r_wilson && c.m_wall == lattice.m_wall && c.margin == lattice.margin {
                return Ok(c.report);
            }
        }
    }
    let (r1, r2) = CALIBRATION_ANNULUS;
    let rp = RadialParams { n: radial.n.max(256), ..radial.clone() };
    let report = wall_sign_calibration(r1, r2, CALIBRATION_CELLS_ACROSS, lattice, &rp)?;
    let c = CalibrationCache { r_wilson: lattice.r_wilson, m_wall: lattice.m_wall, margin: lattice.margin, report: report.clone() };
    if let Some(dir) = cache.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(cache, serde_json::to_string_pretty(&c)? + "\n")?;
    Ok(report)
}

/// Sampler for one backend at one resolution.
pub fn sampler(cfg: &ExperimentConfig, backend: Backend, d: &DomainSpec, g: &GaugeSpec, resolution: Option<usize>) -> Result<Box<dyn FamilySampler>> {
    match backend {
        Backend::Radial => {
            let p = RadialParams { n: resolution.unwrap_or(cfg.radial.n), ..cfg.radial.clone() };
            Ok(Box::new(RadialSampler::new(d, g, &p)?))
        }
        Backend::Lattice => {
            let cells = resolution.unwrap_or(cfg.lattice.cells_per_diameter);
            if cells < MIN_LATTICE_CELLS {
                return Err(Error::Resolution(format!(
                    "lattice resolution {cells} is below the minimum {MIN_LATTICE_CELLS} cells per diameter"
                )));
            }
            let p = LatticeParams { cells_per_diameter: cells, ..cfg.lattice.clone() };
            Ok(Box::new(LatticeSampler::new(d, g, &p)?))
        }
    }
}

/// Flow of one case on one backend.
pub fn measure_case(cfg: &ExperimentConfig, case: &CaseConfig, backend: Backend, resolution: Option<usize>) -> Result<FlowRun> {
    let d = case.domain.build()?;
    let g = case.gauge.build();
    let s = sampler(cfg, backend, &d, &g, resolution)?;
    run_flow(s.as_ref(), predicted_sf(&g, &d)?, &cfg.flow)
}

/// Torus index of a case at `n_t` and `2 n_t`.
pub fn torus_case(cfg: &ExperimentConfig, case: &CaseConfig) -> Result<(i64, i64, f64)> {
    let d = case.domain.build()?;
    let g = case.gauge.build();
    let p = RadialParams { n: cfg.torus.resolution, ..cfg.radial.clone() };
    let mut out = Vec::new();
    let mut ratio = f64::INFINITY;
    for n_t in [cfg.torus.n_t, 2 * cfg.torus.n_t] {
        let o = cfg.torus.options(n_t);
        let op = assemble_torus(&d, &g, &p, &o, Clutching::Twisted)?;
        let r = index_count(&op, o.gap_factor, o.probe)?;
        ratio = ratio.min(r.gap_ratio.unwrap_or(f64::INFINITY));
        out.push(r.index);
    }
    Ok((out[0], out[1], ratio))
}

fn row_dir(out: &Path, case: &CaseConfig) -> PathBuf {
    out.join(case.slug())
}

fn run_row(cfg: &ExperimentConfig, case: &CaseConfig, backend: Backend, calibration: &Option<std::result::Result<(), String>>) -> ReportRow {
    let start = Instant::now();
    let mut row = ReportRow::new(case, backend);
    let resolution = match backend {
        Backend::Radial => cfg.radial.n,
        Backend::Lattice => cfg.lattice.cells_per_diameter,
    };
    row.resolution = resolution;
    let outcome = (|| -> Result<()> {
        let d = case.domain.build()?;
        let g = case.gauge.build();
        row.predicted = predicted_sf(&g, &d)?;
        if backend == Backend::Lattice {
            if let Some(Err(msg)) = calibration {
                return Err(Error::Calibration(msg.clone()));
            }
        }
        let run = measure_case(cfg, case, backend, None)?;
        let dir = row_dir(&cfg.output, case);
        std::fs::create_dir_all(&dir)?;
        artifacts::write_spectrum_csv(&dir.join(format!("spectrum_{backend}.csv")), &run.samples, backend.name(), resolution)?;
        artifacts::write_flow_record(&dir.join(format!("flow_{backend}.json")), &run.result)?;
        row.apply_flow(&run.result);
        let (first, last) = (&run.samples[0], &run.samples[run.samples.len() - 1]);
        row.endpoint_defect = artifacts::endpoint_defect(first, last);
        if row.endpoint_defect > ENDPOINT_TOL {
            row.notes.push(format!("endpoint spectra differ by {:.2e}", row.endpoint_defect));
        }
        let refine = match backend {
            Backend::Radial => cfg.stability.radial,
            Backend::Lattice => cfg.stability.lattice,
        };
        if let (Some(r), FlowStatus::Complete) = (refine, run.result.status) {
            let fine = measure_case(cfg, case, backend, Some(r))?;
            artifacts::write_flow_record(&dir.join(format!("flow_{backend}_{r}.json")), &fine.result)?;
            row.refined_resolution = Some(r);
            row.refined_sf = (fine.result.status == FlowStatus::Complete).then_some(fine.result.sf);
            if fine.result.status != FlowStatus::Complete {
                row.notes.push(format!("refined run at {r} inconclusive"));
            }
        }
        if cfg.torus.enabled && backend == Backend::Radial {
            match torus_case(cfg, case) {
                Ok((a, b, ratio)) => {
                    row.torus_index = Some(a);
                    row.torus_index_doubled = Some(b);
                    row.torus_gap_ratio = Some(ratio);
                }
                Err(e) => row.notes.push(format!("torus: {e}")),
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row.runtime_s = start.elapsed().as_secs_f64();
    row.finalize();
    row
}

/// Runs every case of the configuration on the selected backends, writes
/// per-row spectra and flow records plus the report files, and returns the
/// report. Module errors become failure rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<FlowReport> {
    cfg.validate()?;
    let cases = cfg.expand()?;
    std::fs::create_dir_all(&cfg.output)?;
    let backends = cfg.backend.backends();
    let calibration = if backends.contains(&Backend::Lattice) && cfg.calibration.run {
        let cache = cfg.calibration.cache.clone().unwrap_or_else(|| cfg.output.join("calibration.json"));
        Some(match calibrate(&cfg.lattice, &cfg.radial, &cache) {
            Ok(r) if r.map == cfg.lattice.walls => Ok(()),
            Ok(r) => Err(format!(
                "configured wall map {:?} disagrees with the calibrated {:?}",
                cfg.lattice.walls.positive_b_wall, r.map.positive_b_wall
            )),
            Err(e) => Err(e.to_string()),
        })
    } else {
        None
    };
    let jobs: Vec<(usize, Backend)> = (0..cases.len()).flat_map(|i| backends.iter().map(move |b| (i, *b))).collect();
    let mut rows: Vec<ReportRow> = with_workers(workers()?, || {
        jobs.par_iter().map(|(i, b)| run_row(cfg, &cases[*i], *b, &calibration)).collect()
    })?;
    rows.sort_by(|a, b| (&a.key, a.backend).cmp(&(&b.key, b.backend)));
    let report = FlowReport::new(&cfg.name, rows);
    report.write(&cfg.output)?;
    Ok(report)
}

/// Flow of a single case, without sweep expansion or report files.
pub fn run_single(cfg: &ExperimentConfig, backend: Backend) -> Result<FlowResult> {
    let case = CaseConfig::new(0, cfg.domain.clone(), cfg.gauge.clone(), 1.0);
    Ok(measure_case(cfg, &case, backend, None)?.result)
}
