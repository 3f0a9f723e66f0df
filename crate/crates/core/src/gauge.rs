//! Aharonov-Bohm gauge data: the unimodular function `mu`, flux schedules,
//! lattice link phases and discrete winding numbers.
//!
//! With `theta_k` the polar angle around hole center `c_k` and
//! `phi = sum_k w_k theta_k`, the gauge factor is `mu = exp(i phi)` and the
//! family is `D_t = D_0 - s(t) sigma . grad(phi)`, so that `D_1 = mu D_0 mu^-1`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryComponent, DomainSpec, GridMask, Vec2, boundary_components};
use crate::error::{Error, Result};

/// Monotone reparametrization `s: [0, 1] -> [0, 1]` of the flux ramp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Linear,
    Quadratic,
    /// Zero before `start`, one after `end`, linear in between.
    Ramp { start: f64, end: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if let Schedule::Ramp { start, end } = *self {
            if !(0.0 <= start && start < end && end <= 1.0) {
                return Err(Error::Config(format!("ramp schedule needs 0 <= start < end <= 1, got ({start}, {end})")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match *self {
            Schedule::Linear => t,
            Schedule::Quadratic => t * t,
            Schedule::Ramp { start, end } => ((t - start) / (end - start)).clamp(0.0, 1.0),
        }
    }

    /// Upper bound on `ds/dt` over `[0, 1]`.
    pub fn max_slope(&self) -> f64 {
        match *self {
            Schedule::Linear => 1.0,
            Schedule::Quadratic => 2.0,
            Schedule::Ramp { start, end } => 1.0 / (end - start),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Schedule::Linear => "linear".into(),
            Schedule::Quadratic => "quadratic".into(),
            Schedule::Ramp { start, end } => format!("ramp[{start},{end}]"),
        }
    }
}

/// Integer windings per hole plus the flux schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    /// Hole index `k` (1-based) to winding `w_k`; missing holes wind zero times.
    pub windings: BTreeMap<usize, i64>,
    #[serde(default)]
    pub schedule: Schedule,
}

impl GaugeSpec {
    pub fn new(windings: impl IntoIterator<Item = (usize, i64)>) -> Self {
        Self { windings: windings.into_iter().collect(), schedule: Schedule::Linear }
    }

    /// Windings listed in hole order `1..=holes`.
    pub fn from_slice(ws: &[i64]) -> Self {
        Self::new(ws.iter().enumerate().map(|(i, w)| (i + 1, *w)))
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn winding(&self, k: usize) -> i64 {
        self.windings.get(&k).copied().unwrap_or(0)
    }

    pub fn total_abs(&self) -> i64 {
        self.windings.values().map(|w| w.abs()).sum()
    }

    pub fn negated(&self) -> Self {
        Self {
            windings: self.windings.iter().map(|(k, w)| (*k, -w)).collect(),
            schedule: self.schedule,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.windings.values().all(|w| *w == 0)
    }

    /// Rejects windings attached to holes the domain does not have.
    pub fn check_against(&self, d: &DomainSpec) -> Result<()> {
        self.schedule.validate()?;
        for k in self.windings.keys() {
            if *k == 0 || *k > d.holes().len() {
                return Err(Error::Config(format!(
                    "winding given for hole {k}, but the domain has {} holes",
                    d.holes().len()
                )));
            }
        }
        Ok(())
    }

    /// Flux-shifted windings `w + other` hole by hole.
    pub fn plus(&self, other: &GaugeSpec) -> GaugeSpec {
        let mut windings = self.windings.clone();
        for (k, w) in &other.windings {
            *windings.entry(*k).or_insert(0) += w;
        }
        GaugeSpec { windings, schedule: self.schedule }
    }
}

/// Principal value of an angle in `(-pi, pi]`.
pub fn principal(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn nonzero_holes<'a>(g: &'a GaugeSpec, d: &'a DomainSpec) -> impl Iterator<Item = (Vec2, i64)> + 'a {
    d.holes()
        .iter()
        .filter_map(|h| match g.winding(h.index) {
            0 => None,
            w => Some((h.circle.center, w)),
        })
}

/// `phi(p) = sum_k w_k theta_k(p)` with each angle taken in `(-pi, pi]`.
pub fn phase(g: &GaugeSpec, d: &DomainSpec, p: Vec2) -> Result<f64> {
    let mut phi = 0.0;
    for (c, w) in nonzero_holes(g, d) {
        let v = p - c;
        if v.norm() <= 1e-14 * (1.0 + c.norm()) {
            return Err(Error::Singularity(format!("point ({}, {}) is a hole center", p.x, p.y)));
        }
        phi += w as f64 * v.y.atan2(v.x);
    }
    Ok(phi)
}

/// `mu(p) = prod_k ((p - c_k)/|p - c_k|)^{w_k}`.
pub fn mu_eval(g: &GaugeSpec, d: &DomainSpec, p: Vec2) -> Result<Complex64> {
    mu_from(&flux_tubes(g, d), p)
}

/// Winding of `mu` along an oriented boundary component, from the sum of
/// principal phase increments over `n_samples` equally spaced points.
pub fn winding_number(g: &GaugeSpec, d: &DomainSpec, component: &BoundaryComponent, n_samples: usize) -> Result<i64> {
    let required = 8 * (1 + g.total_abs()) as usize;
    if n_samples < required {
        return Err(Error::Undersampling { defect: f64::INFINITY, samples: n_samples });
    }
    let mut total = 0.0;
    let mut prev = mu_eval(g, d, component.point_at(0.0))?;
    for s in 1..=n_samples {
        let cur = mu_eval(g, d, component.point_at(s as f64 / n_samples as f64))?;
        total += (cur * prev.conj()).arg();
        prev = cur;
    }
    let x = total / TAU;
    let rounded = x.round();
    let defect = (x - rounded).abs();
    if defect >= 0.01 {
        return Err(Error::Undersampling { defect, samples: n_samples });
    }
    Ok(rounded as i64)
}

/// Sample count used by [`predicted_sf`] and the reports.
pub fn default_samples(g: &GaugeSpec) -> usize {
    64 * (1 + g.total_abs()) as usize
}

/// Winding of `mu` over the positive boundary, each component traversed with
/// the domain on its left.
pub fn predicted_sf(g: &GaugeSpec, d: &DomainSpec) -> Result<i64> {
    let n = default_samples(g);
    let mut sf = 0;
    for c in boundary_components(d).iter().filter(|c| c.is_positive()) {
        sf += winding_number(g, d, c, n)?;
    }
    Ok(sf)
}

/// Unit-modulus phases on the nearest-neighbor links of a grid.
///
/// `horizontal[j * (nx - 1) + i]` is the phase carried from site `(i, j)` to
/// `(i + 1, j)`, `vertical[j * nx + i]` from `(i, j)` to `(i, j + 1)`.
#[derive(Clone, Debug)]
pub struct LinkField {
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub horizontal: Vec<Complex64>,
    pub vertical: Vec<Complex64>,
}

impl LinkField {
    pub fn trivial(nx: usize, ny: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self {
            nx,
            ny,
            t: 0.0,
            horizontal: vec![one; (nx - 1) * ny],
            vertical: vec![one; nx * (ny - 1)],
        }
    }

    pub fn h(&self, i: usize, j: usize) -> Complex64 {
        self.horizontal[j * (self.nx - 1) + i]
    }

    pub fn v(&self, i: usize, j: usize) -> Complex64 {
        self.vertical[j * self.nx + i]
    }

    /// Counterclockwise product around the plaquette with lower-left site `(i, j)`.
    pub fn plaquette_product(&self, i: usize, j: usize) -> Complex64 {
        self.h(i, j) * self.v(i + 1, j) * self.h(i, j + 1).conj() * self.v(i, j).conj()
    }

    /// Multiplies every link `a -> b` by `g(b) / g(a)` for site phases `g`.
    pub fn gauge_transform(&self, g: &[Complex64]) -> LinkField {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let a = g[j * self.nx + i];
                if i + 1 < self.nx {
                    out.horizontal[j * (self.nx - 1) + i] *= g[j * self.nx + i + 1] / a;
                }
                if j + 1 < self.ny {
                    out.vertical[j * self.nx + i] *= g[(j + 1) * self.nx + i] / a;
                }
            }
        }
        out
    }
}

fn link_phase(holes: &[(Vec2, i64)], s: f64, a: Vec2, b: Vec2) -> Result<Complex64> {
    let mut acc = 0.0;
    for &(c, w) in holes {
        let va = a - c;
        let vb = b - c;
        let cross = va.x * vb.y - va.y * vb.x;
        let dot = va.x * vb.x + va.y * vb.y;
        let scale = va.norm() * vb.norm();
        if scale <= 1e-24 || (cross.abs() <= 1e-12 * scale && dot < 0.0) {
            return Err(Error::Singularity(format!("hole center ({}, {}) lies on a grid link", c.x, c.y)));
        }
        acc += w as f64 * cross.atan2(dot);
    }
    Ok(Complex64::from_polar(1.0, s * acc))
}

/// Peierls phases `exp(i s(t) sum_k w_k dtheta_k)` with `dtheta_k` the
/// principal angle increment of each link seen from hole center `c_k`.
pub fn link_phases(g: &GaugeSpec, d: &DomainSpec, mask: &GridMask, t: f64) -> Result<LinkField> {
    let holes: Vec<(Vec2, i64)> = nonzero_holes(g, d).collect();
    link_phases_from(&holes, g.schedule, mask, t)
}

/// [`link_phases`] for an explicit list of flux tubes `(center, winding)`.
pub fn link_phases_from(holes: &[(Vec2, i64)], schedule: Schedule, mask: &GridMask, t: f64) -> Result<LinkField> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("flux parameter t = {t} outside [0, 1]")));
    }
    let s = schedule.eval(t);
    let (nx, ny) = (mask.nx, mask.ny);
    let mut field = LinkField::trivial(nx, ny);
    field.t = t;
    if holes.is_empty() || s == 0.0 {
        return Ok(field);
    }
    for j in 0..ny {
        for i in 0..nx {
            let a = mask.center(i, j);
            if i + 1 < nx {
                field.horizontal[j * (nx - 1) + i] = link_phase(holes, s, a, mask.center(i + 1, j))?;
            }
            if j + 1 < ny {
                field.vertical[j * nx + i] = link_phase(holes, s, a, mask.center(i, j + 1))?;
            }
        }
    }
    Ok(field)
}

/// Nonzero flux tubes `(center, winding)` of a domain.
pub fn flux_tubes(g: &GaugeSpec, d: &DomainSpec) -> Vec<(Vec2, i64)> {
    nonzero_holes(g, d).collect()
}

/// `prod_k ((p - c_k)/|p - c_k|)^{w_k}` for explicit flux tubes.
pub fn mu_from(holes: &[(Vec2, i64)], p: Vec2) -> Result<Complex64> {
    let mut mu = Complex64::new(1.0, 0.0);
    for &(c, w) in holes {
        let v = p - c;
        let r = v.norm();
        if r <= 1e-14 * (1.0 + c.norm()) {
            return Err(Error::Singularity(format!("point ({}, {}) is a hole center", p.x, p.y)));
        }
        mu *= Complex64::new(v.x / r, v.y / r).powi(w as i32);
    }
    Ok(mu)
}

/// `mu` evaluated at every site of the grid, row-major.
pub fn site_gauge(g: &GaugeSpec, d: &DomainSpec, mask: &GridMask) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(mask.n_sites());
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            out.push(mu_eval(g, d, mask.center(i, j))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundaryValue, Circle, build_annulus, rasterize};

    fn bv(b: f64) -> BoundaryValue {
        BoundaryValue::new(b).unwrap()
    }

    fn annulus(b_in: f64, b_out: f64) -> DomainSpec {
        build_annulus(1.0, 2.0, bv(b_in), bv(b_out)).unwrap()
    }

    fn two_holes(bs: [f64; 3]) -> DomainSpec {
        DomainSpec::new(
            Circle::new(Vec2::ZERO, 2.0),
            bv(bs[0]),
            vec![
                (Circle::new(Vec2::new(-0.9, 0.1), 0.5), bv(bs[1])),
                (Circle::new(Vec2::new(0.9, -0.1), 0.5), bv(bs[2])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn trivial_mu_is_one() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::default();
        for p in [Vec2::new(1.5, 0.0), Vec2::new(-0.3, 1.2)] {
            assert_eq!(mu_eval(&g, &d, p).unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn single_winding_mu_values() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[1]);
        let a = mu_eval(&g, &d, Vec2::new(1.5, 0.0)).unwrap();
        let b = mu_eval(&g, &d, Vec2::new(0.0, 1.5)).unwrap();
        assert!((a - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((b - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn opposite_windings_stay_unimodular() {
        let d = two_holes([1.0, 1.0, 1.0]);
        let g = GaugeSpec::from_slice(&[1, -1]);
        for p in [Vec2::new(1.9, 0.0), Vec2::new(0.0, 1.95), Vec2::new(-1.4, -1.3)] {
            assert!((mu_eval(&g, &d, p).unwrap().norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_at_center_is_singular() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[1]);
        assert!(matches!(mu_eval(&g, &d, Vec2::ZERO), Err(Error::Singularity(_))));
    }

    #[test]
    fn annulus_windings_by_orientation() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[1]);
        let comps = boundary_components(&d);
        assert_eq!(winding_number(&g, &d, &comps[0], 64).unwrap(), 1);
        assert_eq!(winding_number(&g, &d, &comps[1], 64).unwrap(), -1);
    }

    #[test]
    fn undersampling_is_reported() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[5]);
        let comps = boundary_components(&d);
        assert!(matches!(winding_number(&g, &d, &comps[0], 16), Err(Error::Undersampling { .. })));
    }

    #[test]
    fn predicted_annulus_values() {
        let g = GaugeSpec::from_slice(&[1]);
        assert_eq!(predicted_sf(&g, &annulus(1.0, 1.0)).unwrap(), 0);
        assert_eq!(predicted_sf(&g, &annulus(-1.0, 1.0)).unwrap(), 1);
        assert_eq!(predicted_sf(&g, &annulus(1.0, -1.0)).unwrap(), -1);
        assert_eq!(predicted_sf(&g, &annulus(-1.0, -1.0)).unwrap(), 0);
    }

    #[test]
    fn disk_prediction_vanishes() {
        let d = DomainSpec::disk(Vec2::ZERO, 1.0, bv(1.0)).unwrap();
        assert_eq!(predicted_sf(&GaugeSpec::default(), &d).unwrap(), 0);
    }

    #[test]
    fn two_hole_prediction() {
        let g = GaugeSpec::from_slice(&[1, 1]);
        assert_eq!(predicted_sf(&g, &two_holes([1.0, 1.0, 1.0])).unwrap(), 0);
        assert_eq!(predicted_sf(&g, &two_holes([1.0, -1.0, -1.0])).unwrap(), 2);
        assert_eq!(predicted_sf(&g, &two_holes([1.0, 1.0, -1.0])).unwrap(), 1);
    }

    #[test]
    fn t_zero_links_are_trivial() {
        let d = annulus(-1.0, 1.0);
        let mask = rasterize(&d, 0.2).unwrap();
        let f = link_phases(&GaugeSpec::from_slice(&[2]), &d, &mask, 0.0).unwrap();
        assert!(f.horizontal.iter().chain(&f.vertical).all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn plaquette_flux_audit() {
        let d = two_holes([1.0, 1.0, 1.0]);
        let g = GaugeSpec::from_slice(&[1, -2]);
        let mask = rasterize(&d, 0.1).unwrap();
        let t = 0.37;
        let f = link_phases(&g, &d, &mask, t).unwrap();
        let mut found = 0;
        for j in 0..mask.ny - 1 {
            for i in 0..mask.nx - 1 {
                let lo = mask.center(i, j);
                let hi = mask.center(i + 1, j + 1);
                let mut expected = Complex64::new(1.0, 0.0);
                for h in d.holes() {
                    let c = h.circle.center;
                    if lo.x < c.x && c.x < hi.x && lo.y < c.y && c.y < hi.y {
                        expected *= Complex64::from_polar(1.0, TAU * t * g.winding(h.index) as f64);
                        found += 1;
                    }
                }
                assert!((f.plaquette_product(i, j) - expected).norm() < 1e-12);
            }
        }
        assert_eq!(found, 2);
    }

    #[test]
    fn unit_time_links_are_pure_gauge() {
        let d = two_holes([1.0, 1.0, 1.0]);
        let g = GaugeSpec::from_slice(&[1, 2]);
        let mask = rasterize(&d, 0.1).unwrap();
        let f = link_phases(&g, &d, &mask, 1.0).unwrap();
        let mu = site_gauge(&g, &d, &mask).unwrap();
        let pure = LinkField::trivial(mask.nx, mask.ny).gauge_transform(&mu);
        let res = f
            .horizontal
            .iter()
            .zip(&pure.horizontal)
            .chain(f.vertical.iter().zip(&pure.vertical))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn schedules_fix_endpoints() {
        for s in [Schedule::Linear, Schedule::Quadratic, Schedule::Ramp { start: 0.2, end: 0.7 }] {
            assert_eq!(s.eval(0.0), 0.0);
            assert_eq!(s.eval(1.0), 1.0);
        }
    }
}
