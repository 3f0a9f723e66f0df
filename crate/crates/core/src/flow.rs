//! Spectral flow of sampled families through a gamma ladder, with an
//! independent crossing-tracking count.
//!
//! Samples are windowed spectra at increasing `t`. Eigenvalue motion is
//! controlled by a velocity bound `V >= |d lambda / dt|`, supplied by the
//! sampler: the gauge change `D_t' - D_t` is multiplication by
//! `(s(t') - s(t)) sigma . sum_k w_k grad(theta_k)`, so by Weyl's inequality
//! no eigenvalue moves faster than `max|s'| sup_X |sum_k w_k grad(theta_k)|`.
//! A level `gamma` is valid between two samples `dt` apart when the distances
//! `d_a`, `d_b` from `gamma` to the nearest eigenvalue satisfy
//! `d_a + d_b > V dt`: an eigenvalue crossing `gamma` in between would have to
//! cover both distances.
//!
//! Spectra that carry interior weights (the lattice) are counted on their
//! domain states only; states living in the mass walls are ignored.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CellTag, DomainSpec};
use crate::eigen::SpectrumSample;
use crate::error::{Error, Result};
use crate::gauge::{GaugeSpec, predicted_sf};
use crate::lattice::{DOMAIN_WEIGHT, LatticeParams, LatticeSystem};
use crate::radial::{RadialParams, annulus_data, assemble_annulus_spectrum, resolve_j_range};

/// A family of Hermitian operators that can be sampled at any `t` in `[0, 1]`.
pub trait FamilySampler: Sync {
    fn sample(&self, t: f64) -> Result<SpectrumSample>;

    /// Upper bound on `|d lambda / dt|` for the counted eigenvalues, in the
    /// units of the sampled eigenvalues.
    fn velocity_bound(&self) -> f64;

    fn backend(&self) -> &str;

    fn resolution(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOptions {
    /// Initial number of equally spaced samples, endpoints included.
    pub t_samples: usize,
    /// Bisections allowed below the initial step.
    pub max_depth: usize,
    /// Minimal distance between a ladder level and the spectrum, in lattice
    /// units (divided by the sample energy scale).
    pub gap_margin: f64,
    /// Eigenvalues closer than this are one cluster.
    pub tol_mult: f64,
    /// Run the crossing-tracking cross-check.
    pub track: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { t_samples: 17, max_depth: 12, gap_margin: 1e-3, tol_mult: 1e-6, track: true }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if self.t_samples < 2 {
            return Err(Error::Config("at least two t samples are needed".into()));
        }
        if !(self.gap_margin > 0.0 && self.tol_mult > 0.0 && self.tol_mult < self.gap_margin) {
            return Err(Error::Config("need 0 < tol_mult < gap_margin".into()));
        }
        Ok(())
    }
}

/// Partition `0 = t_0 < ... < t_{n+1} = 1` with levels `gamma_1..gamma_{n+1}`
/// and the counts `m_1..m_n` taken at `t_1..t_n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GammaLadder {
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
    pub m: Vec<usize>,
}

impl GammaLadder {
    pub fn intervals(&self) -> usize {
        self.gamma.len()
    }

    /// `sum_j m_j sign(gamma_j - gamma_{j+1})`.
    pub fn flow(&self) -> i64 {
        self.m
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let d = self.gamma[j] - self.gamma[j + 1];
                if d > 0.0 {
                    *m as i64
                } else if d < 0.0 {
                    -(*m as i64)
                } else {
                    0
                }
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    /// `+1` for an eigenvalue passing zero upwards.
    pub direction: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowStatus {
    Complete,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub sf: i64,
    pub crossings: Vec<Crossing>,
    pub ladder: GammaLadder,
    pub predicted: i64,
    pub agreement: bool,
    pub refinement_depth: usize,
    pub epsilon_shift: f64,
    /// Signed crossing count, when tracking completed.
    pub tracking_sf: Option<i64>,
    pub status: FlowStatus,
    pub backend: String,
    pub resolution: usize,
    pub samples: usize,
    pub diagnostics: Vec<String>,
}

/// A `t`-subinterval that needs more samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineRequest {
    pub t_lo: f64,
    pub t_hi: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<T> {
    Done(T),
    Refine(Vec<RefineRequest>),
}

/// Parameters of ladder construction in sample units.
#[derive(Clone, Copy, Debug)]
pub struct LadderOptions {
    pub velocity: f64,
    pub gap_margin: f64,
    pub tol_mult: f64,
    /// Shift added to every eigenvalue.
    pub epsilon: f64,
}

/// A sample as seen by the ladder: shifted spectrum, usable band, domain states.
#[derive(Clone, Debug)]
struct View {
    t: f64,
    lo: f64,
    hi: f64,
    all: Vec<f64>,
    dom: Vec<f64>,
    /// Exact eigenvalue count below `lo`, when all states are counted.
    below: Option<usize>,
    gap: f64,
}

impl View {
    fn new(s: &SpectrumSample, o: &LadderOptions) -> Self {
        let scale = if s.meta.energy_scale > 0.0 { s.meta.energy_scale } else { 1.0 };
        let all: Vec<f64> = s.eigenvalues.iter().map(|x| x + o.epsilon).collect();
        let dom = all.iter().enumerate().filter(|(i, _)| s.weight(*i) >= DOMAIN_WEIGHT).map(|(_, x)| *x).collect();
        Self {
            t: s.t,
            lo: -s.window + o.epsilon,
            hi: s.window + o.epsilon,
            all,
            dom,
            below: s.weights.is_none().then_some(s.count_below),
            gap: o.gap_margin / scale,
        }
    }

    /// Distance from `g` to the nearest counted eigenvalue or window edge.
    fn distance(&self, g: f64) -> f64 {
        let edge = (g - self.lo).min(self.hi - g);
        self.dom.iter().map(|x| (x - g).abs()).fold(edge, f64::min)
    }

    fn count_less(&self, g: f64) -> Option<usize> {
        self.below.map(|b| b + self.all.iter().filter(|x| **x < g).count())
    }

    fn point_ok(&self, g: f64, tol: f64) -> bool {
        self.distance(g) >= self.gap && self.all.iter().all(|x| (x - g).abs() >= tol)
    }

    fn between(&self, a: f64, b: f64) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.dom.iter().filter(|x| **x > lo && **x < hi).count()
    }
}

fn pair_ok(a: &View, b: &View, g: f64, o: &LadderOptions) -> bool {
    if a.distance(g) + b.distance(g) <= o.velocity * (b.t - a.t) {
        return false;
    }
    match (a.count_less(g), b.count_less(g)) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

fn reach(v: &[View], k0: usize, g: f64, o: &LadderOptions) -> Option<usize> {
    if !v[k0].point_ok(g, o.tol_mult) {
        return None;
    }
    let mut k = k0;
    while k + 1 < v.len() && v[k + 1].point_ok(g, o.tol_mult) && pair_ok(&v[k], &v[k + 1], g, o) {
        k += 1;
    }
    Some(k)
}

fn candidates(v: &View) -> Vec<f64> {
    let mut pts: Vec<f64> = v.dom.iter().copied().filter(|x| *x > v.lo && *x < v.hi).collect();
    pts.sort_by(f64::total_cmp);
    let mut edges = vec![v.lo];
    edges.extend(pts);
    edges.push(v.hi);
    let mut out: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    out.push(0.0);
    out
}

fn views(samples: &[SpectrumSample], o: &LadderOptions) -> Result<Vec<View>> {
    if samples.len() < 2 {
        return Err(Error::Config("a ladder needs at least two samples".into()));
    }
    if samples[0].t != 0.0 || samples[samples.len() - 1].t != 1.0 {
        return Err(Error::Config("samples must include t = 0 and t = 1".into()));
    }
    if samples.windows(2).any(|w| !(w[0].t < w[1].t)) {
        return Err(Error::Config("samples must be strictly increasing in t".into()));
    }
    Ok(samples.iter().map(|s| View::new(s, o)).collect())
}

fn refine(v: &[View], k: usize, reason: String) -> RefineRequest {
    RefineRequest { t_lo: v[k].t, t_hi: v[(k + 1).min(v.len() - 1)].t, reason }
}

/// Greedy ladder: `gamma_1 = 0` held as long as possible, then at each break
/// point the level reaching furthest, until `0` is valid through `t = 1`.
pub fn build_ladder(samples: &[SpectrumSample], o: &LadderOptions) -> Result<Outcome<GammaLadder>> {
    build_ladder_with(samples, o, &mut furthest)
}

/// Level reaching the furthest sample, the one closest to zero on ties.
fn furthest(options: &[(usize, f64)]) -> (usize, f64) {
    let mut best = options[0];
    for &(r, g) in &options[1..] {
        if r > best.0 || (r == best.0 && g.abs() < best.1.abs()) {
            best = (r, g);
        }
    }
    best
}

/// Ladder construction with the choice among valid `(reach, level)` pairs
/// delegated to `choose`.
fn build_ladder_with(
    samples: &[SpectrumSample],
    o: &LadderOptions,
    choose: &mut dyn FnMut(&[(usize, f64)]) -> (usize, f64),
) -> Result<Outcome<GammaLadder>> {
    let v = views(samples, o)?;
    let last = v.len() - 1;
    if !v[0].point_ok(0.0, o.tol_mult) || !v[last].point_ok(0.0, o.tol_mult) {
        return Err(Error::Inconclusive("zero lies in the endpoint spectrum after the shift".into()));
    }
    // Earliest sample from which gamma = 0 holds through t = 1.
    let mut final_start = last;
    while final_start > 0
        && v[final_start - 1].point_ok(0.0, o.tol_mult)
        && pair_ok(&v[final_start - 1], &v[final_start], 0.0, o)
    {
        final_start -= 1;
    }
    let mut ts = vec![0.0];
    let mut gammas = vec![0.0];
    let mut idx = vec![0usize];
    let mut k_start = 0;
    let mut k_end = reach(&v, 0, 0.0, o).unwrap_or(0);
    if k_end == last {
        ts.push(1.0);
        return Ok(Outcome::Done(GammaLadder { t: ts, gamma: gammas, m: vec![] }));
    }
    if final_start == last {
        return Ok(Outcome::Refine(vec![refine(&v, last - 1, "zero level fails next to t = 1".into())]));
    }
    loop {
        if k_end == k_start {
            return Ok(Outcome::Refine(vec![refine(&v, k_start, "no level stays clear of the spectrum".into())]));
        }
        if k_end >= final_start {
            let split = final_start.max(k_start + 1);
            ts.push(v[split].t);
            idx.push(split);
            gammas.push(0.0);
            ts.push(1.0);
            break;
        }
        k_start = k_end;
        let options: Vec<(usize, f64)> =
            candidates(&v[k_start]).into_iter().filter_map(|g| reach(&v, k_start, g, o).map(|r| (r, g))).filter(|(r, _)| *r > k_start).collect();
        let (r, g) = if options.is_empty() { (k_start, 0.0) } else { choose(&options) };
        ts.push(v[k_start].t);
        idx.push(k_start);
        gammas.push(g);
        k_end = r;
    }
    let m = (1..gammas.len()).map(|j| v[idx[j]].between(gammas[j - 1], gammas[j])).collect();
    Ok(Outcome::Done(GammaLadder { t: ts, gamma: gammas, m }))
}

/// Checks `ladder` against the samples and evaluates the ladder sum.
pub fn spectral_flow(samples: &[SpectrumSample], ladder: &GammaLadder, o: &LadderOptions) -> Result<Outcome<i64>> {
    let v = views(samples, o)?;
    let n_int = ladder.gamma.len();
    if ladder.t.len() != n_int + 1 || n_int == 0 {
        return Err(Error::Config("ladder partition and levels do not match".into()));
    }
    if ladder.gamma[0] != ladder.gamma[n_int - 1] || ladder.gamma[0] > 0.0 {
        return Err(Error::Config("ladder must start and end on the same level <= 0".into()));
    }
    let index_of = |t: f64| v.iter().position(|s| s.t == t);
    let mut bounds = Vec::with_capacity(ladder.t.len());
    for t in &ladder.t {
        bounds.push(index_of(*t).ok_or_else(|| Error::Config(format!("ladder point t = {t} is not a sample")))?);
    }
    if ladder.gamma[0] < 0.0 {
        for s in [&v[0], &v[v.len() - 1]] {
            if s.dom.iter().any(|x| *x >= ladder.gamma[0] && *x < 0.0) {
                return Err(Error::Config("endpoint spectrum meets [gamma_1, 0)".into()));
            }
        }
    }
    let mut requests = Vec::new();
    for j in 0..n_int {
        let g = ladder.gamma[j];
        for k in bounds[j]..=bounds[j + 1] {
            if !v[k].point_ok(g, o.tol_mult) {
                requests.push(refine(&v, k.min(v.len() - 2), format!("level {g} meets the spectrum at t = {}", v[k].t)));
                break;
            }
            if k < bounds[j + 1] && !pair_ok(&v[k], &v[k + 1], g, o) {
                requests.push(refine(&v, k, format!("level {g} not protected between samples")));
                break;
            }
        }
    }
    if !requests.is_empty() {
        return Ok(Outcome::Refine(requests));
    }
    let mut sf = 0i64;
    for j in 1..n_int {
        let m = v[bounds[j]].between(ladder.gamma[j - 1], ladder.gamma[j]) as i64;
        let d = ladder.gamma[j - 1] - ladder.gamma[j];
        sf += if d > 0.0 { m } else if d < 0.0 { -m } else { 0 };
    }
    Ok(Outcome::Done(sf))
}

/// Zero crossings by matching eigenvalues of consecutive samples. Counted
/// eigenvalues that can reach each other within `V dt` form clusters; a
/// cluster near zero must have the same size on both sides and lie inside
/// both windows, otherwise the pair is refined.
pub fn track_crossings(samples: &[SpectrumSample], o: &LadderOptions) -> Result<Outcome<Vec<Crossing>>> {
    let v = views(samples, o)?;
    let mut crossings = Vec::new();
    let mut requests = Vec::new();
    for k in 0..v.len() - 1 {
        let (a, b) = (&v[k], &v[k + 1]);
        let dt = b.t - a.t;
        let reach_r = o.velocity * dt;
        match pair_crossings(a, b, reach_r) {
            Some(list) => {
                for (x, y) in list {
                    let frac = if x != y { x / (x - y) } else { 0.5 };
                    let direction = if y > x { 1 } else { -1 };
                    crossings.push(Crossing { t: a.t + dt * frac.clamp(0.0, 1.0), direction });
                }
            }
            None => requests.push(refine(&v, k, "ambiguous eigenvalue matching near zero".into())),
        }
    }
    if requests.is_empty() { Ok(Outcome::Done(crossings)) } else { Ok(Outcome::Refine(requests)) }
}

/// Sign-changing `(before, after)` pairs between two samples, or `None` when
/// the matching is ambiguous.
fn pair_crossings(a: &View, b: &View, r: f64) -> Option<Vec<(f64, f64)>> {
    let lo = a.lo.max(b.lo);
    let hi = a.hi.min(b.hi);
    if r >= 0.5 * hi.min(-lo) {
        return None;
    }
    // Union-find over a.dom ++ b.dom with links |x - y| <= r across samples.
    let na = a.dom.len();
    let nodes: Vec<f64> = a.dom.iter().chain(&b.dom).copied().collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..na {
        for j in na..nodes.len() {
            if (nodes[i] - nodes[j]).abs() <= r {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let roots: BTreeSet<usize> = (0..nodes.len()).filter(|i| nodes[*i].abs() <= r).map(|i| find(&mut parent, i)).collect();
    let mut out = Vec::new();
    for root in roots {
        let members: Vec<usize> = (0..nodes.len()).filter(|i| find(&mut parent, *i) == root).collect();
        let mut xa: Vec<f64> = members.iter().filter(|i| **i < na).map(|i| nodes[*i]).collect();
        let mut xb: Vec<f64> = members.iter().filter(|i| **i >= na).map(|i| nodes[*i]).collect();
        if xa.len() != xb.len() || members.iter().any(|i| nodes[*i] <= lo + r || nodes[*i] >= hi - r) {
            return None;
        }
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        for (x, y) in xa.into_iter().zip(xb) {
            if (x < 0.0) != (y < 0.0) {
                out.push((x, y));
            }
        }
    }
    Some(out)
}

/// Shift that moves zero to the middle of the larger gap next to the endpoint
/// eigenvalue nearest zero, when that eigenvalue is within `tol`.
pub fn endpoint_shift(s: &SpectrumSample, tol: f64) -> f64 {
    let mut vals = s.eigenvalues.clone();
    vals.sort_by(f64::total_cmp);
    let Some((i, x)) = vals.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) else {
        return 0.0;
    };
    if x.abs() >= tol {
        return 0.0;
    }
    let below = if i > 0 { vals[i - 1] } else { -s.window };
    let above = vals.get(i + 1).copied().unwrap_or(s.window);
    let mid = if above - x >= x - below { 0.5 * (x + above) } else { 0.5 * (below + x) };
    -mid
}

/// Result of [`run_flow`] together with the samples it used.
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub result: FlowResult,
    pub samples: Vec<SpectrumSample>,
}

/// Adaptive measurement: sample, build the ladder, bisect where requested,
/// up to `max_depth` bisections below the initial step.
pub fn run_flow(sampler: &dyn FamilySampler, predicted: i64, opts: &FlowOptions) -> Result<FlowRun> {
    opts.validate()?;
    let step0 = 1.0 / (opts.t_samples - 1) as f64;
    let min_step = step0 / 2f64.powi(opts.max_depth as i32);
    let mut ts: Vec<f64> = (0..opts.t_samples).map(|i| i as f64 * step0).collect();
    *ts.last_mut().unwrap() = 1.0;
    let mut samples: Vec<SpectrumSample> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut tracking_failed = !opts.track;
    let mut epsilon = None;
    loop {
        let missing: Vec<f64> = ts.iter().copied().filter(|t| !samples.iter().any(|s| s.t == *t)).collect();
        let fresh: Vec<Result<SpectrumSample>> = missing.par_iter().map(|t| sampler.sample(*t)).collect();
        for s in fresh {
            let mut s = s?;
            if let Some(pos) = missing.iter().position(|t| (*t - s.t).abs() < 1e-15) {
                s.t = missing[pos];
            }
            samples.push(s);
        }
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let eps = *epsilon.get_or_insert_with(|| {
            let s0 = &samples[0];
            let scale = if s0.meta.energy_scale > 0.0 { s0.meta.energy_scale } else { 1.0 };
            endpoint_shift(s0, opts.gap_margin / scale)
        });
        let lo = LadderOptions { velocity: sampler.velocity_bound(), gap_margin: opts.gap_margin, tol_mult: opts.tol_mult, epsilon: eps };
        let ladder = build_ladder(&samples, &lo)?;
        let tracked = if tracking_failed { None } else { Some(track_crossings(&samples, &lo)?) };
        let mut requests = Vec::new();
        let mut inconclusive = None;
        if let Outcome::Refine(r) = &ladder {
            for q in r {
                if q.t_hi - q.t_lo < 2.0 * min_step * (1.0 - 1e-9) {
                    inconclusive = Some(format!("{} on [{:.6}, {:.6}] at maximal depth", q.reason, q.t_lo, q.t_hi));
                } else {
                    requests.push(q.clone());
                }
            }
        }
        if let Some(Outcome::Refine(r)) = &tracked {
            for q in r {
                if q.t_hi - q.t_lo < 2.0 * min_step * (1.0 - 1e-9) {
                    if !tracking_failed {
                        diagnostics.push(format!("tracking stopped: {} on [{:.6}, {:.6}]", q.reason, q.t_lo, q.t_hi));
                    }
                    tracking_failed = true;
                } else if !tracking_failed {
                    requests.push(q.clone());
                }
            }
        }
        if let Some(msg) = inconclusive {
            diagnostics.push(msg);
            return Ok(finish(sampler, predicted, samples, None, None, eps, step0, FlowStatus::Inconclusive, diagnostics));
        }
        if requests.is_empty() {
            let Outcome::Done(ladder) = ladder else { unreachable!() };
            let crossings = match tracked {
                Some(Outcome::Done(c)) if !tracking_failed => Some(c),
                _ => None,
            };
            let check = spectral_flow(&samples, &ladder, &lo)?;
            if let Outcome::Refine(r) = check {
                diagnostics.push(format!("ladder failed its own check: {}", r[0].reason));
                return Ok(finish(sampler, predicted, samples, None, None, eps, step0, FlowStatus::Inconclusive, diagnostics));
            }
            return Ok(finish(sampler, predicted, samples, Some(ladder), crossings, eps, step0, FlowStatus::Complete, diagnostics));
        }
        for q in requests {
            let mid = 0.5 * (q.t_lo + q.t_hi);
            if !ts.contains(&mid) {
                ts.push(mid);
            }
        }
        ts.sort_by(f64::total_cmp);
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    sampler: &dyn FamilySampler,
    predicted: i64,
    samples: Vec<SpectrumSample>,
    ladder: Option<GammaLadder>,
    crossings: Option<Vec<Crossing>>,
    epsilon: f64,
    step0: f64,
    status: FlowStatus,
    mut diagnostics: Vec<String>,
) -> FlowRun {
    let min_dt = samples.windows(2).map(|w| w[1].t - w[0].t).fold(f64::INFINITY, f64::min);
    let refinement_depth = (step0 / min_dt).log2().round().max(0.0) as usize;
    let ladder = ladder.unwrap_or_default();
    let sf = ladder.flow();
    let tracking_sf = crossings.as_ref().map(|c| c.iter().map(|x| x.direction as i64).sum());
    if let Some(ts) = tracking_sf {
        if status == FlowStatus::Complete && ts != sf {
            diagnostics.push(format!("tracking count {ts} differs from the ladder value {sf}"));
        }
    }
    if status == FlowStatus::Inconclusive {
        if let Some((t, g)) = narrowest_gap(&samples) {
            diagnostics.push(format!("narrowest gap around zero {g:.3e} at t = {t:.6}"));
        }
    }
    let result = FlowResult {
        sf,
        crossings: crossings.unwrap_or_default(),
        ladder,
        predicted,
        agreement: status == FlowStatus::Complete && sf == predicted,
        refinement_depth,
        epsilon_shift: epsilon,
        tracking_sf,
        status,
        backend: sampler.backend().to_string(),
        resolution: sampler.resolution(),
        samples: samples.len(),
        diagnostics,
    };
    FlowRun { result, samples }
}

fn narrowest_gap(samples: &[SpectrumSample]) -> Option<(f64, f64)> {
    samples
        .iter()
        .map(|s| {
            let m = s
                .eigenvalues
                .iter()
                .enumerate()
                .filter(|(i, _)| s.weight(*i) >= DOMAIN_WEIGHT)
                .map(|(_, x)| x.abs())
                .fold(f64::INFINITY, f64::min);
            (s.t, m)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Discretization used to sample a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Radial,
    Lattice,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Radial => "radial",
            Backend::Lattice => "lattice",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Radial backend on a concentric annulus.
pub struct RadialSampler {
    pub domain: DomainSpec,
    pub gauge: GaugeSpec,
    pub params: RadialParams,
    pub j_range: (i64, i64),
}

impl RadialSampler {
    pub fn new(domain: &DomainSpec, gauge: &GaugeSpec, params: &RadialParams) -> Result<Self> {
        let j_range = resolve_j_range(domain, gauge, params)?;
        Ok(Self { domain: domain.clone(), gauge: gauge.clone(), params: params.clone(), j_range })
    }
}

impl FamilySampler for RadialSampler {
    fn sample(&self, t: f64) -> Result<SpectrumSample> {
        assemble_annulus_spectrum(&self.domain, &self.gauge, t, self.j_range, &self.params)
    }

    /// Each row of `dH/da` has at most one coupling entry `1/r_k`, plus the
    /// eliminated boundary rows `1/(r_inner B_in)` and `B_out/r_outer`.
    fn velocity_bound(&self) -> f64 {
        let (r_in, r_out, b_in, b_out, w) = annulus_data(&self.domain, &self.gauge).unwrap_or((1.0, 1.0, 1.0, 1.0, 0));
        let per_a = (1.0 / r_in).max(1.0 / (r_in * b_in.abs())).max(b_out.abs() / r_out);
        w.unsigned_abs() as f64 * self.gauge.schedule.max_slope() * per_a
    }

    fn backend(&self) -> &str {
        "radial"
    }

    fn resolution(&self) -> usize {
        self.params.n
    }
}

/// Lattice backend on any rasterized domain.
pub struct LatticeSampler {
    pub system: LatticeSystem,
    velocity: f64,
}

/// Margin on the continuum velocity bound for lattice states, which leak
/// slightly into the walls where the gauge gradient is larger.
pub const LATTICE_VELOCITY_SAFETY: f64 = 1.25;

impl LatticeSampler {
    pub fn new(domain: &DomainSpec, gauge: &GaugeSpec, params: &LatticeParams) -> Result<Self> {
        Self::from_system(LatticeSystem::new(domain, gauge, params)?)
    }

    pub fn from_system(system: LatticeSystem) -> Result<Self> {
        let mut sup: f64 = 0.0;
        let m = &system.mask;
        for j in 0..m.ny {
            for i in 0..m.nx {
                if m.tag(i, j) != CellTag::Interior {
                    continue;
                }
                let p = m.center(i, j);
                let (mut gx, mut gy) = (0.0, 0.0);
                for (c, w) in &system.tubes {
                    let d = p - *c;
                    let r2 = d.x * d.x + d.y * d.y;
                    gx -= *w as f64 * d.y / r2;
                    gy += *w as f64 * d.x / r2;
                }
                sup = sup.max((gx * gx + gy * gy).sqrt());
            }
        }
        let velocity = LATTICE_VELOCITY_SAFETY * system.schedule.max_slope() * sup;
        Ok(Self { system, velocity })
    }
}

impl FamilySampler for LatticeSampler {
    fn sample(&self, t: f64) -> Result<SpectrumSample> {
        Ok(self.system.spectrum(t)?.0)
    }

    fn velocity_bound(&self) -> f64 {
        self.velocity
    }

    fn backend(&self) -> &str {
        "lattice"
    }

    fn resolution(&self) -> usize {
        self.system.params.cells_per_diameter
    }
}

/// Flow of a domain and gauge on the given sampler, compared with the
/// boundary winding prediction.
pub fn measure(sampler: &dyn FamilySampler, d: &DomainSpec, g: &GaugeSpec, opts: &FlowOptions) -> Result<FlowRun> {
    run_flow(sampler, predicted_sf(g, d)?, opts)
}

/// Analytic test family: isolated curves plus a conveyor of levels
/// `k spacing + offset - spacing t`, which moves one level down per period
/// and keeps the endpoint spectra equal.
#[derive(Clone, Debug)]
pub struct SyntheticFamily {
    pub curves: Vec<fn(f64) -> f64>,
    /// `(spacing, offset)` of the conveyor, if any.
    pub conveyor: Option<(f64, f64)>,
    pub window: f64,
    pub velocity: f64,
}

/// Conveyor levels below this index are omitted; they never enter the window.
const CONVEYOR_DEPTH: i64 = 1000;

impl SyntheticFamily {
    /// Three eigenvalue curves in the pattern of the definition figure: one
    /// dips below zero and returns, one falls through zero, one rises and then
    /// falls through zero and back. Spectral flow `-1`.
    pub fn figure_two() -> Self {
        fn dip(t: f64) -> f64 {
            0.35 - 0.7 * (std::f64::consts::PI * t).sin()
        }
        fn swing(t: f64) -> f64 {
            0.2 + 0.5 * (std::f64::consts::TAU * t).sin()
        }
        Self {
            curves: vec![dip, swing],
            conveyor: Some((1.0, 0.5)),
            window: 1.2,
            velocity: 0.7 * std::f64::consts::PI + 0.5 * std::f64::consts::TAU,
        }
    }

    pub fn values(&self, t: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.curves.iter().map(|f| f(t)).collect();
        if let Some((sp, off)) = self.conveyor {
            let top = ((self.window * 4.0 + 4.0) / sp).ceil() as i64;
            for k in -CONVEYOR_DEPTH..=top {
                v.push(k as f64 * sp + off - sp * t);
            }
        }
        v.sort_by(f64::total_cmp);
        v
    }
}

impl FamilySampler for SyntheticFamily {
    fn sample(&self, t: f64) -> Result<SpectrumSample> {
        let meta = crate::eigen::SampleMeta { backend: "synthetic".into(), energy_scale: 1.0, ..Default::default() };
        Ok(crate::eigen::window_from_values(&self.values(t), self.window, t, meta))
    }

    fn velocity_bound(&self) -> f64 {
        self.velocity
    }

    fn backend(&self) -> &str {
        "synthetic"
    }

    fn resolution(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{SampleMeta, window_from_values};

    fn opts(v: f64) -> LadderOptions {
        LadderOptions { velocity: v, gap_margin: 1e-3, tol_mult: 1e-6, epsilon: 0.0 }
    }

    fn family(f: impl Fn(f64) -> Vec<f64>, n: usize, w: f64) -> Vec<SpectrumSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                window_from_values(&f(t), w, t, SampleMeta { energy_scale: 1.0, ..Default::default() })
            })
            .collect()
    }

    #[test]
    fn constant_gapped_family_has_single_interval() {
        let s = family(|_| vec![-1.0, 1.0], 5, 1.5);
        let Outcome::Done(l) = build_ladder(&s, &opts(0.1)).unwrap() else { panic!() };
        assert_eq!(l.intervals(), 1);
        assert_eq!(l.gamma, vec![0.0]);
        assert_eq!(l.flow(), 0);
    }

    #[test]
    fn single_upward_crossing() {
        let s = family(|t| vec![-2.0, t - 0.5, 2.0], 21, 3.0);
        let o = opts(1.0);
        let Outcome::Done(l) = build_ladder(&s, &o).unwrap() else { panic!() };
        assert_eq!(l.flow(), 1);
        assert!(l.gamma.iter().any(|g| *g < -0.5) || l.gamma.iter().any(|g| *g > 0.5));
        assert_eq!(spectral_flow(&s, &l, &o).unwrap(), Outcome::Done(1));
        let Outcome::Done(c) = track_crossings(&s, &o).unwrap() else { panic!() };
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].direction, 1);
        assert!((c[0].t - 0.5).abs() < 1e-9);
    }

    #[test]
    fn narrow_gap_is_stepped_around() {
        // A pair closing to +-1e-4 at t = 1/2 forces the level off zero.
        let s = family(|t| vec![-(1e-4 + (t - 0.5).abs()), 1e-4 + (t - 0.5).abs()], 9, 1.0);
        let Outcome::Done(l) = build_ladder(&s, &opts(1.0)).unwrap() else { panic!() };
        assert!(l.intervals() > 1);
        assert_eq!(l.flow(), 0);
    }

    struct Linear;

    impl FamilySampler for Linear {
        fn sample(&self, t: f64) -> Result<SpectrumSample> {
            Ok(window_from_values(&[t - 0.5], 1.0, t, SampleMeta { energy_scale: 1.0, ..Default::default() }))
        }
        fn velocity_bound(&self) -> f64 {
            1.0
        }
        fn backend(&self) -> &str {
            "linear"
        }
        fn resolution(&self) -> usize {
            0
        }
    }

    #[test]
    fn refinement_depth_is_bounded() {
        let fine = run_flow(&Linear, 1, &FlowOptions { t_samples: 3, ..Default::default() }).unwrap().result;
        assert_eq!(fine.status, FlowStatus::Complete);
        assert_eq!((fine.sf, fine.tracking_sf), (1, Some(1)));
        assert!(fine.refinement_depth >= 1);
        let capped = run_flow(&Linear, 1, &FlowOptions { t_samples: 2, max_depth: 0, ..Default::default() }).unwrap().result;
        assert_eq!(capped.status, FlowStatus::Inconclusive);
        assert!(!capped.agreement);
        assert!(!capped.diagnostics.is_empty());
    }

    #[test]
    fn coarse_sampling_requests_refinement() {
        let s = family(|t| vec![-2.0, t - 0.5, 2.0], 3, 3.0);
        let Outcome::Refine(r) = build_ladder(&s, &opts(1.0)).unwrap() else { panic!() };
        assert!(r[0].t_hi - r[0].t_lo <= 0.5 + 1e-12);
    }

    #[test]
    fn figure_two_family() {
        let fam = SyntheticFamily::figure_two();
        let run = run_flow(&fam, -1, &FlowOptions::default()).unwrap();
        let r = &run.result;
        assert_eq!(r.status, FlowStatus::Complete, "{:?}", r.diagnostics);
        assert_eq!(r.sf, -1);
        assert_eq!(r.tracking_sf, Some(-1));
        assert!(r.agreement);
        // dip: down and up; conveyor: down; swing: down and up
        assert_eq!(r.crossings.len(), 5);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn ladder_sum_is_independent_of_the_ladder(seed in 0u64..u64::MAX, n in 40usize..90) {
            use rand::{Rng, SeedableRng};
            let fam = SyntheticFamily::figure_two();
            let s: Vec<SpectrumSample> = (0..=n).map(|i| fam.sample(i as f64 / n as f64).unwrap()).collect();
            let o = opts(fam.velocity);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pick = |c: &[(usize, f64)]| c[rng.gen_range(0..c.len())];
            if let Outcome::Done(l) = build_ladder_with(&s, &o, &mut pick).unwrap() {
                proptest::prop_assert_eq!(l.flow(), -1);
                proptest::prop_assert_eq!(spectral_flow(&s, &l, &o).unwrap(), Outcome::Done(-1));
            }
        }
    }

    #[test]
    fn endpoint_shift_clears_zero() {
        let s = window_from_values(&[-1.0, 1e-5, 0.8], 2.0, 0.0, SampleMeta::default());
        let eps = endpoint_shift(&s, 1e-3);
        assert!((eps - (1.0 - 1e-5) / 2.0).abs() < 1e-12);
        let far = window_from_values(&[-1.0, 0.5], 2.0, 0.0, SampleMeta::default());
        assert_eq!(endpoint_shift(&far, 1e-3), 0.0);
    }

    #[test]
    fn options_are_validated() {
        assert!(FlowOptions { t_samples: 1, ..Default::default() }.validate().is_err());
        assert!(FlowOptions { tol_mult: 1.0, ..Default::default() }.validate().is_err());
    }

    fn radial_case(b_in: f64, b_out: f64, w: i64) -> FlowResult {
        radial_case_with(b_in, b_out, w, crate::domain::NormalConvention::Outward)
    }

    fn radial_case_with(b_in: f64, b_out: f64, w: i64, convention: crate::domain::NormalConvention) -> FlowResult {
        use crate::domain::{BoundaryValue, build_annulus};
        let d = build_annulus(0.5, 1.0, BoundaryValue::new(b_in).unwrap(), BoundaryValue::new(b_out).unwrap()).unwrap();
        let g = GaugeSpec::from_slice(&[w]);
        let p = RadialParams { n: 64, convention, ..Default::default() };
        let s = RadialSampler::new(&d, &g, &p).unwrap();
        measure(&s, &d, &g, &FlowOptions::default()).unwrap().result
    }

    #[test]
    fn radial_annulus_flows() {
        for (b_in, b_out, w, want) in [(1.0, 1.0, 1, 0), (-1.0, 1.0, 1, 1), (1.0, -1.0, 1, -1), (-1.0, 1.0, -2, -2), (1.0, 1.0, 0, 0)] {
            let r = radial_case(b_in, b_out, w);
            assert_eq!(r.status, FlowStatus::Complete, "{b_in} {b_out} {w}: {:?}", r.diagnostics);
            assert_eq!(r.predicted, want);
            assert_eq!(r.sf, want, "{b_in} {b_out} {w}");
            assert_eq!(r.tracking_sf, Some(want));
        }
    }

    #[test]
    fn inward_normal_counts_the_negative_boundary() {
        use crate::domain::NormalConvention;
        for (b_in, b_out, w) in [(-1.0, 1.0, 1), (1.0, -1.0, 2), (1.0, 1.0, 1)] {
            let outward = radial_case(b_in, b_out, w);
            let inward = radial_case_with(b_in, b_out, w, NormalConvention::Inward);
            assert_eq!(inward.status, FlowStatus::Complete);
            assert_eq!(inward.sf, -outward.sf, "{b_in} {b_out} {w}");
        }
    }
}
