//! Wilson-regularized lattice realization of the family on general domains.
//!
//! Sites are cell centers of a [`GridMask`], each carrying a two-component
//! spinor. In lattice units the Hamiltonian is
//!
//! ```text
//! H = sum_x (m(x) + 4r) sigma_z
//!   + sum_{x, e} [ U_{x -> x+e} |x+e><x| (i/2 sigma_e - r sigma_z) + h.c. ]
//! ```
//!
//! whose translation-invariant symbol is
//! `sin k_x sigma_x + sin k_y sigma_y + (m + 2r(2 - cos k_x - cos k_y)) sigma_z`.
//! The Wilson term gaps the three doublers, so only the cone at `k = 0`
//! reaches the window. The mass `m(x)` vanishes on the physical domain and is
//! `+-M_wall` in the exterior and inside each hole; the wall sign fixes the
//! sign of the boundary coefficient `B`, and which wall sign realizes `B > 0`
//! is determined by [`wall_sign_calibration`].
//!
//! A negative wall mass with `M_wall < 2r` is a Chern insulator, so walls of
//! that sign carry chiral states along the grid edge and around flux tubes.
//! Those states live outside the physical domain; eigenvectors are therefore
//! tagged with their weight on interior cells, and the flow counts only the
//! physical part of the spectrum.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryValue, CellTag, DomainSpec, GridMask, Sign, Vec2, build_annulus, rasterize_union_with_margin};
use crate::eigen::{
    BandedHermitian, DenseMatrix, Eigenpairs, HermitianOperator, LanczosOptions, OperatorMeta, SampleMeta,
    SpectrumSample, banded_window, dense,
};
use crate::error::{Error, Result};
use crate::gauge::{GaugeSpec, LinkField, Schedule, flux_tubes, link_phases_from, mu_from};
use crate::radial::{RadialParams, lowest_levels};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Interior weight above which an eigenvector counts as a domain state.
pub const DOMAIN_WEIGHT: f64 = 0.5;

/// Default wall cells kept around the outer circle. Grid edge states couple
/// to the outer boundary states through the wall with strength about
/// `exp(-M_wall * margin)`.
pub const LATTICE_MARGIN: usize = 16;

/// Eigenvalues closer than this (lattice units) are treated as one cluster
/// whose basis is rotated to separate domain from wall states; a tenth of
/// the default gap margin.
pub const CLUSTER_TOL: f64 = 1e-4;

/// Operators up to this size are diagonalized densely.
pub const DENSE_LATTICE_CAP: usize = 800;

/// Which wall mass sign realizes a positive boundary coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallMap {
    pub positive_b_wall: Sign,
}

impl Default for WallMap {
    fn default() -> Self {
        Self { positive_b_wall: Sign::Minus }
    }
}

impl WallMap {
    pub fn wall_for(&self, b: Sign) -> Sign {
        match b {
            Sign::Plus => self.positive_b_wall,
            Sign::Minus => self.positive_b_wall.flip(),
        }
    }

    pub fn b_for(&self, wall: Sign) -> Sign {
        if wall == self.positive_b_wall {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeParams {
    /// Cells across the diameter of the (largest) outer circle.
    pub cells_per_diameter: usize,
    pub r_wilson: f64,
    pub m_wall: f64,
    /// Window half-width in lattice units; bounds the eigenvalues requested.
    pub lambda: f64,
    /// Eigenvalues closest to zero computed per sample.
    pub nev: usize,
    pub margin: usize,
    pub walls: WallMap,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            cells_per_diameter: 96,
            r_wilson: 1.0,
            m_wall: 1.0,
            lambda: 0.3,
            nev: 12,
            margin: LATTICE_MARGIN,
            walls: WallMap::default(),
        }
    }
}

impl LatticeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_wilson > 0.0) {
            return Err(Error::Config(format!("r_wilson = {} must be positive", self.r_wilson)));
        }
        if !(self.m_wall > 0.0 && self.m_wall < 2.0 * self.r_wilson) {
            return Err(Error::Config(format!(
                "wall mass {} must lie in (0, 2 r_wilson) = (0, {})",
                self.m_wall,
                2.0 * self.r_wilson
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 0.5 * self.m_wall) {
            return Err(Error::Config(format!("window {} must lie in (0, M_wall/2)", self.lambda)));
        }
        if self.cells_per_diameter < 8 {
            return Err(Error::Resolution(format!("{} cells per diameter is too coarse", self.cells_per_diameter)));
        }
        if self.margin < crate::domain::DEFAULT_MARGIN {
            return Err(Error::Config(format!("margin {} is below {} cells", self.margin, crate::domain::DEFAULT_MARGIN)));
        }
        if self.nev == 0 {
            return Err(Error::Config("nev must be positive".into()));
        }
        Ok(())
    }
}

/// Signed wall masses by region.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMap {
    pub exterior: f64,
    /// Keyed by the grid's hole numbering.
    pub holes: BTreeMap<usize, f64>,
}

impl MassMap {
    pub fn mass(&self, tag: CellTag) -> f64 {
        match tag {
            CellTag::Interior => 0.0,
            CellTag::Exterior => self.exterior,
            CellTag::Hole(k) => self.holes.get(&k).copied().unwrap_or(self.exterior),
        }
    }
}

/// Wall masses for disjoint parts sharing one grid; all outer circles must
/// carry the same sign.
pub fn mass_map(parts: &[DomainSpec], p: &LatticeParams) -> Result<MassMap> {
    let first = parts.first().ok_or_else(|| Error::InvalidGeometry("no domain".into()))?;
    let outer = first.outer_b().sign();
    if parts.iter().any(|d| d.outer_b().sign() != outer) {
        return Err(Error::InvalidBoundaryData("disjoint parts must share the outer boundary sign".into()));
    }
    let exterior = p.walls.wall_for(outer).value() * p.m_wall;
    let mut holes = BTreeMap::new();
    let mut offset = 0;
    for d in parts {
        for h in d.holes() {
            holes.insert(offset + h.index, p.walls.wall_for(h.b.sign()).value() * p.m_wall);
        }
        offset += d.holes().len();
    }
    Ok(MassMap { exterior, holes })
}

/// Visits every nonzero entry of the lower triangle as `(row, col, value)`.
fn emit_entries(
    nx: usize,
    ny: usize,
    site_mass: &[f64],
    r: f64,
    links: &LinkField,
    periodic: bool,
    sink: &mut dyn FnMut(usize, usize, Complex64) -> Result<()>,
) -> Result<()> {
    // (T_e)^dagger = (i/2) sigma_e - r sigma_z for e = x, y
    let tx = [[Complex64::new(-r, 0.0), 0.5 * I], [0.5 * I, Complex64::new(r, 0.0)]];
    let ty = [[Complex64::new(-r, 0.0), Complex64::new(0.5, 0.0)], [Complex64::new(-0.5, 0.0), Complex64::new(r, 0.0)]];
    let mut hop = |a: usize, b: usize, u: Complex64, t: &[[Complex64; 2]; 2]| -> Result<()> {
        // H[b, a] = U_{a -> b} T^dagger; written as lower entries when b > a.
        for al in 0..2 {
            for be in 0..2 {
                let v = u * t[al][be];
                if v == C0 {
                    continue;
                }
                let (row, col) = (2 * b + al, 2 * a + be);
                if row > col {
                    sink(row, col, v)?;
                } else {
                    sink(col, row, v.conj())?;
                }
            }
        }
        Ok(())
    };
    for j in 0..ny {
        for i in 0..nx {
            let a = j * nx + i;
            if i + 1 < nx {
                hop(a, a + 1, links.h(i, j), &tx)?;
            } else if periodic && nx > 2 {
                hop(a, j * nx, Complex64::new(1.0, 0.0), &tx)?;
            }
            if j + 1 < ny {
                hop(a, a + nx, links.v(i, j), &ty)?;
            } else if periodic && ny > 2 {
                hop(a, i, Complex64::new(1.0, 0.0), &ty)?;
            }
        }
    }
    for (s, m) in site_mass.iter().enumerate() {
        let d = m + 4.0 * r;
        sink(2 * s, 2 * s, Complex64::new(d, 0.0))?;
        sink(2 * s + 1, 2 * s + 1, Complex64::new(-d, 0.0))?;
    }
    Ok(())
}

/// Banded Hamiltonian on an open grid (lattice units).
pub fn assemble_hamiltonian(
    mask: &GridMask,
    links: &LinkField,
    masses: &MassMap,
    p: &LatticeParams,
) -> Result<HermitianOperator> {
    let site_mass: Vec<f64> = mask.tags().iter().map(|t| masses.mass(*t)).collect();
    assemble_from_masses(mask, links, &site_mass, p.r_wilson)
}

fn check_grids(mask: &GridMask, links: &LinkField) -> Result<()> {
    if mask.nx != links.nx || mask.ny != links.ny {
        return Err(Error::Assembly(format!(
            "grid {}x{} does not match link field {}x{}",
            mask.nx, mask.ny, links.nx, links.ny
        )));
    }
    Ok(())
}

fn assemble_from_masses(mask: &GridMask, links: &LinkField, site_mass: &[f64], r: f64) -> Result<HermitianOperator> {
    check_grids(mask, links)?;
    let (nx, ny) = (mask.nx, mask.ny);
    let n = 2 * nx * ny;
    let mut b = BandedHermitian::zeros(n, 2 * nx + 1);
    emit_entries(nx, ny, site_mass, r, links, false, &mut |i, j, v| b.add(i, j, v))?;
    let meta = OperatorMeta { backend: "lattice".into(), t: links.t, resolution: format!("{nx}x{ny}") };
    HermitianOperator::banded(b, meta)
}

/// Dense Hamiltonian on an `nx x ny` grid, optionally periodic (wrap-around
/// links carry no flux). Meant for small test systems.
pub fn assemble_dense(
    nx: usize,
    ny: usize,
    site_mass: &[f64],
    r: f64,
    links: &LinkField,
    periodic: bool,
) -> Result<HermitianOperator> {
    if links.nx != nx || links.ny != ny || site_mass.len() != nx * ny {
        return Err(Error::Assembly("inconsistent grid sizes".into()));
    }
    let mut m = DenseMatrix::zeros(2 * nx * ny);
    emit_entries(nx, ny, site_mass, r, links, periodic, &mut |i, j, v| {
        m.add(i, j, v);
        if i != j {
            m.add(j, i, v.conj());
        }
        Ok(())
    })?;
    let meta = OperatorMeta { backend: "lattice".into(), t: links.t, resolution: format!("{nx}x{ny}") };
    HermitianOperator::dense(m, meta)
}

/// A rasterized domain (or disjoint union of domains) with wall masses and
/// flux tubes, ready to produce `H(t)` at any `t`.
#[derive(Clone, Debug)]
pub struct LatticeSystem {
    pub mask: GridMask,
    pub site_mass: Vec<f64>,
    pub tubes: Vec<(Vec2, i64)>,
    pub schedule: Schedule,
    pub params: LatticeParams,
}

impl LatticeSystem {
    pub fn new(d: &DomainSpec, g: &GaugeSpec, p: &LatticeParams) -> Result<Self> {
        Self::union(&[(d.clone(), g.clone())], p)
    }

    /// Disjoint parts on one grid, separated by exterior wall.
    pub fn union(parts: &[(DomainSpec, GaugeSpec)], p: &LatticeParams) -> Result<Self> {
        p.validate()?;
        let domains: Vec<DomainSpec> = parts.iter().map(|(d, _)| d.clone()).collect();
        let schedule = parts.first().map(|(_, g)| g.schedule).unwrap_or_default();
        if parts.iter().any(|(_, g)| g.schedule != schedule) {
            return Err(Error::Config("disjoint parts must share the flux schedule".into()));
        }
        let radius = domains.iter().map(|d| d.outer().radius).fold(0.0, f64::max);
        let h = 2.0 * radius / p.cells_per_diameter as f64;
        let mask = rasterize_union_with_margin(&domains, h, p.margin)?;
        let masses = mass_map(&domains, p)?;
        let site_mass = mask.tags().iter().map(|t| masses.mass(*t)).collect();
        let tubes = parts.iter().flat_map(|(d, g)| flux_tubes(g, d)).collect();
        Ok(Self { mask, site_mass, tubes, schedule, params: p.clone() })
    }

    pub fn h(&self) -> f64 {
        self.mask.h
    }

    pub fn dim(&self) -> usize {
        2 * self.mask.n_sites()
    }

    pub fn links(&self, t: f64) -> Result<LinkField> {
        link_phases_from(&self.tubes, self.schedule, &self.mask, t)
    }

    pub fn hamiltonian(&self, t: f64) -> Result<HermitianOperator> {
        assemble_from_masses(&self.mask, &self.links(t)?, &self.site_mass, self.params.r_wilson)
    }

    /// `mu` at every site.
    pub fn site_gauge(&self) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(self.mask.n_sites());
        for j in 0..self.mask.ny {
            for i in 0..self.mask.nx {
                out.push(mu_from(&self.tubes, self.mask.center(i, j))?);
            }
        }
        Ok(out)
    }

    /// Fraction of `|v|^2` on interior cells.
    pub fn interior_weight(&self, v: &[Complex64]) -> f64 {
        let mut inside = 0.0;
        let mut total = 0.0;
        for (s, tag) in self.mask.tags().iter().enumerate() {
            let w = v[2 * s].norm_sqr() + v[2 * s + 1].norm_sqr();
            total += w;
            if *tag == CellTag::Interior {
                inside += w;
            }
        }
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }

    /// Interior overlap `<a|P|b>`.
    fn interior_overlap(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut acc = C0;
        for (s, tag) in self.mask.tags().iter().enumerate() {
            if *tag == CellTag::Interior {
                acc += a[2 * s].conj() * b[2 * s] + a[2 * s + 1].conj() * b[2 * s + 1];
            }
        }
        acc
    }

    /// Within each run of eigenvalues closer than `tol`, rotates the vectors
    /// to diagonalize the interior projector. A domain state degenerate with
    /// a wall state is otherwise returned as an even mixture of the two.
    fn separate_clusters(&self, pairs: &mut Eigenpairs, tol: f64) -> Result<()> {
        let n = pairs.values.len();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && pairs.values[end] - pairs.values[end - 1] < tol {
                end += 1;
            }
            let k = end - start;
            if k > 1 {
                let vs = &pairs.vectors[start..end];
                let p = DenseMatrix::from_fn(k, |i, j| self.interior_overlap(&vs[i], &vs[j]));
                let (_, u) = dense::eigh_vectors(&p)?;
                let width = pairs.values[end - 1] - pairs.values[start];
                let res = pairs.residuals[start..end].iter().copied().fold(0.0, f64::max) + width;
                let mut vectors = Vec::with_capacity(k);
                let mut values = Vec::with_capacity(k);
                for c in 0..k {
                    let mut v = vec![C0; vs[0].len()];
                    let mut lam = 0.0;
                    for (i, vi) in vs.iter().enumerate() {
                        let coef = u.get(i, c);
                        lam += coef.norm_sqr() * pairs.values[start + i];
                        for (x, y) in v.iter_mut().zip(vi) {
                            *x += coef * y;
                        }
                    }
                    vectors.push(v);
                    values.push(lam);
                }
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
                for (slot, c) in order.into_iter().enumerate() {
                    pairs.values[start + slot] = values[c];
                    pairs.vectors[start + slot] = std::mem::take(&mut vectors[c]);
                    pairs.residuals[start + slot] = res;
                }
            }
            start = end;
        }
        Ok(())
    }

    /// Eigenpairs closest to zero at parameter `t`, with eigenvalues in
    /// inverse length units (lattice eigenvalues divided by `h`) and interior
    /// weights attached.
    pub fn spectrum(&self, t: f64) -> Result<(SpectrumSample, Eigenpairs)> {
        let op = self.hamiltonian(t)?;
        let nev = self.params.nev;
        let (mut sample, pairs) = if self.dim() <= DENSE_LATTICE_CAP {
            dense_window(&op, nev)?
        } else {
            let crate::eigen::Storage::Banded(b) = op.storage() else {
                return Err(Error::Assembly("lattice operator is not banded".into()));
            };
            banded_window(b, nev, &LanczosOptions { nev, ..Default::default() })?
        };
        if sample.window > self.params.lambda {
            sample = sample.narrowed(self.params.lambda);
        }
        let mut pairs = pairs;
        self.separate_clusters(&mut pairs, CLUSTER_TOL)?;
        let h = self.h();
        let keep: Vec<usize> =
            (0..pairs.values.len()).filter(|i| pairs.values[*i].abs() <= sample.window).collect();
        let mut kept = Eigenpairs::default();
        for i in keep {
            kept.values.push(pairs.values[i] / h);
            kept.vectors.push(pairs.vectors[i].clone());
            kept.residuals.push(pairs.residuals[i] / h);
        }
        sample.t = t;
        sample.window /= h;
        sample.eigenvalues = kept.values.clone();
        sample.weights = Some(kept.vectors.iter().map(|v| self.interior_weight(v)).collect());
        sample.meta = SampleMeta {
            backend: "lattice".into(),
            resolution: self.params.cells_per_diameter,
            channels: None,
            h: Some(h),
            energy_scale: h,
        };
        Ok((sample, kept))
    }
}

/// Dense counterpart of [`banded_window`]: the `nev` eigenpairs closest to
/// zero, cut halfway to the next one.
fn dense_window(op: &HermitianOperator, nev: usize) -> Result<(SpectrumSample, Eigenpairs)> {
    let (vals, vecs) = dense::eigh_vectors(&op.to_dense())?;
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|a, b| vals[*a].abs().total_cmp(&vals[*b].abs()));
    let k = nev.min(idx.len());
    let cut = if k < idx.len() {
        0.5 * (vals[idx[k - 1]].abs() + vals[idx[k]].abs())
    } else {
        vals[idx[k - 1]].abs()
    };
    let mut keep: Vec<usize> = idx.into_iter().filter(|i| vals[*i].abs() <= cut).collect();
    keep.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
    let mut pairs = Eigenpairs::default();
    for i in &keep {
        let v = vecs.column(*i);
        let hv = op.matvec(&v);
        pairs.residuals.push(hv.iter().zip(&v).map(|(a, b)| (a - vals[*i] * b).norm_sqr()).sum::<f64>().sqrt());
        pairs.values.push(vals[*i]);
        pairs.vectors.push(v);
    }
    let sample = SpectrumSample {
        t: op.meta.t,
        window: cut,
        eigenvalues: pairs.values.clone(),
        weights: None,
        count_below: vals.iter().filter(|v| **v < -cut).count(),
        meta: SampleMeta { energy_scale: 1.0, ..Default::default() },
    };
    Ok((sample, pairs))
}

/// Windowed lattice spectrum of `D_t` for a domain and gauge.
pub fn lattice_spectrum(d: &DomainSpec, g: &GaugeSpec, p: &LatticeParams, t: f64) -> Result<SpectrumSample> {
    Ok(LatticeSystem::new(d, g, p)?.spectrum(t)?.0)
}

/// The `count` smallest-`|lambda|` eigenvalues among domain states, sorted by value.
pub fn domain_levels(sample: &SpectrumSample, count: usize) -> Vec<f64> {
    let mut v: Vec<f64> = sample
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| sample.weight(*i) >= DOMAIN_WEIGHT)
        .map(|(_, x)| *x)
        .collect();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    v.truncate(count);
    v.sort_by(f64::total_cmp);
    v
}

/// Domain levels of the lattice, recomputing with more eigenvalues until
/// `count` of them are available.
pub fn lattice_domain_levels(sys: &LatticeSystem, t: f64, count: usize) -> Result<Vec<f64>> {
    let mut s = sys.clone();
    for _ in 0..4 {
        let (sample, _) = s.spectrum(t)?;
        let lv = domain_levels(&sample, count);
        if lv.len() == count {
            return Ok(lv);
        }
        s.params.nev *= 2;
    }
    Err(Error::NoConvergence(format!("fewer than {count} domain states near zero")))
}

/// Sign-insensitive relative distance between two level sets of equal size.
pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).sum::<f64>() / b.len().max(1) as f64;
    let rms = (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / b.len().max(1) as f64).sqrt();
    rms / scale.max(f64::MIN_POSITIVE)
}

/// Largest entrywise relative deviation between two level sets.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub w: i64,
    /// Wall signs `(inner, outer)`.
    pub walls: (Sign, Sign),
    pub lattice: Vec<f64>,
    /// RMS relative discrepancy against the radial spectrum with `B = wall`
    /// and with `B = -wall`.
    pub same: f64,
    pub flipped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub map: WallMap,
    pub cells_per_diameter: usize,
    pub entries: Vec<CalibrationEntry>,
}

/// Flux fraction at which calibration spectra are compared; away from the
/// symmetric points `s = 0, 1/2` where `B -> -B` only reflects the spectrum.
pub const CALIBRATION_T: f64 = 0.25;

/// Eigenvalues computed per calibration run before widening.
pub const CALIBRATION_NEV: usize = 16;

/// Levels compared per calibration run.
pub const CALIBRATION_LEVELS: usize = 6;

/// Matches lattice annulus spectra for every wall-sign pattern against the
/// radial backend and returns the wall sign that realizes `B > 0`.
///
/// The annulus `(r1, r2)` is resolved with spacing `h = (r2 - r1)/n`. The
/// map must be the same for `w = -1` and `w = 1` and must beat the opposite
/// assignment by a clear margin.
pub fn wall_sign_calibration(
    r1: f64,
    r2: f64,
    n: usize,
    base: &LatticeParams,
    radial: &RadialParams,
) -> Result<CalibrationReport> {
    if n < 48 {
        return Err(Error::Resolution(format!("calibration needs at least 48 cells across the annulus, got {n}")));
    }
    let cells = (2.0 * r2 * n as f64 / (r2 - r1)).round() as usize;
    let lp = LatticeParams {
        cells_per_diameter: cells,
        walls: WallMap { positive_b_wall: Sign::Plus },
        nev: CALIBRATION_NEV,
        ..base.clone()
    };
    let bv = |s: Sign| BoundaryValue::from_parts(s, 1.0);
    let mut entries = Vec::new();
    for w in [-1i64, 1] {
        let g = GaugeSpec::from_slice(&[w]);
        for si in [Sign::Plus, Sign::Minus] {
            for so in [Sign::Plus, Sign::Minus] {
                let d = build_annulus(r1, r2, bv(si)?, bv(so)?)?;
                let sys = LatticeSystem::new(&d, &g, &lp)?;
                let lat = lattice_domain_levels(&sys, CALIBRATION_T, CALIBRATION_LEVELS)?;
                let mut err = [0.0; 2];
                for (k, flip) in [false, true].into_iter().enumerate() {
                    let (bi, bo) = if flip { (si.flip(), so.flip()) } else { (si, so) };
                    let dr = build_annulus(r1, r2, bv(bi)?, bv(bo)?)?;
                    let rl = lowest_levels(&dr, &g, CALIBRATION_T, CALIBRATION_LEVELS, radial)?;
                    err[k] = relative_discrepancy(&lat, &rl);
                }
                entries.push(CalibrationEntry { w, walls: (si, so), lattice: lat, same: err[0], flipped: err[1] });
            }
        }
    }
    let mut votes = [0.0, 0.0];
    for w in [-1, 1] {
        let (s, f): (f64, f64) = entries
            .iter()
            .filter(|e| e.w == w)
            .fold((0.0, 0.0), |acc, e| (acc.0 + e.same, acc.1 + e.flipped));
        if (s - f).abs() < 0.25 * s.max(f) {
            return Err(Error::Calibration(format!("w = {w}: wall patterns do not separate (errors {s:.3} vs {f:.3})")));
        }
        votes[usize::from(f < s)] += 1.0;
    }
    if votes[0] > 0.0 && votes[1] > 0.0 {
        return Err(Error::Calibration("the wall-sign map differs between w = -1 and w = 1".into()));
    }
    let positive_b_wall = if votes[0] > 0.0 { Sign::Plus } else { Sign::Minus };
    let best = entries
        .iter()
        .map(|e| if positive_b_wall == Sign::Plus { e.same } else { e.flipped })
        .fold(0.0, f64::max);
    if best > 0.25 {
        return Err(Error::Calibration(format!("best wall-sign map still deviates by {best:.3}")));
    }
    Ok(CalibrationReport { map: WallMap { positive_b_wall }, cells_per_diameter: cells, entries })
}
