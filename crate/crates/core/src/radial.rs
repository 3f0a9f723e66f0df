//! Angular reduction of the family on a concentric annulus.
//!
//! In polar coordinates the ansatz `u1 = f(r) e^{i j theta}`,
//! `u2 = g(r) e^{i (j + 1) theta}` decouples `D_t` into radial channels. With
//! the flat-measure unknowns `f~ = sqrt(r) f`, `g~ = sqrt(r) g` and the gauge
//! potential `s(t) w grad(theta)`, channel `j` is
//!
//! ```text
//! [[0, -i(d/dr + a/r)], [-i(d/dr - a/r), 0]],   a = j + 1/2 - s(t) w,
//! ```
//!
//! on `[r_inner, r_outer]`. With the inward normal, `n_y - i n_x` equals
//! `i e^{i theta}` on the outer circle and `-i e^{i theta}` on the inner one,
//! so the boundary conditions read `i f~ = B_out g~` and `-i f~ = B_in g~`.
//!
//! The grid is `r_k = r_inner + k h`, `h = (r_outer - r_inner)/N`, with `f~`
//! on `r_0..r_{N-1}` and `g~` on `r_1..r_N`; the end values `g~(r_0)` and
//! `f~(r_N)` are eliminated through the boundary conditions. Ordering the
//! unknowns `f_0, g_1, f_1, g_2, ..., f_{N-1}, g_N` makes each channel a
//! Hermitian tridiagonal matrix of size `2N`: forward differences act on `g~`
//! in the `f` rows and the adjoint backward differences on `f~` in the `g`
//! rows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, NormalConvention};
use crate::eigen::{BandedHermitian, HermitianOperator, OperatorMeta, SampleMeta, SpectrumSample, dense};
use crate::error::{Error, Result};
use crate::gauge::GaugeSpec;

/// Smallest radial grid accepted by [`ChannelSpec::new`].
pub const MIN_RADIAL_N: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub j: i64,
    pub t: f64,
    pub w: i64,
    /// `j + 1/2 - s(t) w`.
    pub a: f64,
    pub n: usize,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl ChannelSpec {
    /// Channel at flux fraction `s = s(t)`.
    pub fn new(j: i64, t: f64, s: f64, w: i64, n: usize, r_inner: f64, r_outer: f64) -> Result<Self> {
        if n < MIN_RADIAL_N {
            return Err(Error::Resolution(format!("radial N = {n} is below {MIN_RADIAL_N}")));
        }
        if !(r_inner > 0.0 && r_inner < r_outer) {
            return Err(Error::InvalidGeometry(format!("radial interval ({r_inner}, {r_outer})")));
        }
        Ok(Self { j, t, w, a: coupling(j, s, w), n, r_inner, r_outer })
    }

    pub fn h(&self) -> f64 {
        (self.r_outer - self.r_inner) / self.n as f64
    }
}

/// `a = j + 1/2 - s w`, exact for integer `s`.
pub fn coupling(j: i64, s: f64, w: i64) -> f64 {
    if s == 1.0 {
        (j - w) as f64 + 0.5
    } else if s == 0.0 {
        j as f64 + 0.5
    } else {
        j as f64 + 0.5 - s * w as f64
    }
}

/// Boundary coefficients as they enter the inward-normal form of the conditions.
fn effective_b(b_in: f64, b_out: f64, conv: NormalConvention) -> Result<(f64, f64)> {
    if b_in == 0.0 || b_out == 0.0 || !b_in.is_finite() || !b_out.is_finite() {
        return Err(Error::InvalidBoundaryData(format!("radial boundary data ({b_in}, {b_out})")));
    }
    Ok((conv.b_factor() * b_in, conv.b_factor() * b_out))
}

/// Diagonal and subdiagonal of one radial channel.
pub fn channel_tridiagonal(
    c: &ChannelSpec,
    b_in: f64,
    b_out: f64,
    conv: NormalConvention,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let (bi, bo) = effective_b(b_in, b_out, conv)?;
    let n = c.n;
    let h = c.h();
    let r = |k: usize| c.r_inner + k as f64 * h;
    let mut diag = vec![0.0; 2 * n];
    let mut sub = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    // rows: 2k -> f_k, 2k + 1 -> g_{k+1}
    for k in 0..n {
        // H[g_{k+1}, f_k] = i/h
        sub[2 * k] = Complex64::new(0.0, 1.0 / h);
        if k >= 1 {
            // H[f_k, g_k] = -i(-1/h + a/r_k); f_k follows g_k in the ordering
            sub[2 * k - 1] = Complex64::new(0.0, -(-1.0 / h + c.a / r(k)));
        }
    }
    diag[0] = (1.0 / h - c.a / r(0)) / bi;
    diag[2 * n - 1] = bo * (c.a / r(n) - 1.0 / h);
    Ok((diag, sub))
}

/// The discretized channel operator, stored as a Hermitian band of width one.
pub fn channel_operator(c: &ChannelSpec, b_in: f64, b_out: f64, conv: NormalConvention) -> Result<HermitianOperator> {
    let (diag, sub) = channel_tridiagonal(c, b_in, b_out, conv)?;
    let mut b = BandedHermitian::zeros(diag.len(), 1);
    for (i, d) in diag.iter().enumerate() {
        b.add_diag(i, *d);
    }
    for (i, s) in sub.iter().enumerate() {
        b.add(i + 1, i, *s)?;
    }
    let meta = OperatorMeta { backend: "radial".into(), t: c.t, resolution: format!("N={} j={}", c.n, c.j) };
    HermitianOperator::banded(b, meta)
}

/// Ascending eigenvalues of one channel.
pub fn channel_eigenvalues(c: &ChannelSpec, b_in: f64, b_out: f64, conv: NormalConvention) -> Result<Vec<f64>> {
    let (diag, sub) = channel_tridiagonal(c, b_in, b_out, conv)?;
    dense::tridiagonal_eigvalsh(&diag, &sub)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialParams {
    /// Radial grid size `N` (channel dimension `2N`).
    pub n: usize,
    /// Window half-width in inverse length units.
    pub lambda: f64,
    /// Fixed channel range; chosen automatically when absent.
    pub j_range: Option<(i64, i64)>,
    pub convention: NormalConvention,
}

impl Default for RadialParams {
    fn default() -> Self {
        Self { n: 256, lambda: 2.0, j_range: None, convention: NormalConvention::Outward }
    }
}

/// Annulus data pulled out of a domain: `(r_inner, r_outer, B_in, B_out, w)`.
pub fn annulus_data(d: &DomainSpec, g: &GaugeSpec) -> Result<(f64, f64, f64, f64, i64)> {
    if !d.is_concentric_annulus() {
        return Err(Error::InvalidGeometry("the radial backend needs a concentric annulus".into()));
    }
    let hole = &d.holes()[0];
    Ok((hole.circle.radius, d.outer().radius, hole.b.value(), d.outer_b().value(), g.winding(hole.index)))
}

/// Channel range used for the whole family: every `j` with `|a| <= lambda r_outer + 4`
/// at some `s` in `[0, 1]`.
pub fn default_j_range(r_outer: f64, w: i64, lambda: f64) -> (i64, i64) {
    let k = lambda * r_outer + 4.0;
    let lo_shift = (w.min(0)) as f64;
    let hi_shift = (w.max(0)) as f64;
    ((lo_shift - 0.5 - k).ceil() as i64, (hi_shift - 0.5 + k).floor() as i64)
}

fn min_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
}

/// Channel range for which the extreme channels stay outside twice the
/// window at both ends of the family, widening the default as needed.
pub fn resolve_j_range(d: &DomainSpec, g: &GaugeSpec, p: &RadialParams) -> Result<(i64, i64)> {
    let (r_in, r_out, b_in, b_out, w) = annulus_data(d, g)?;
    if let Some(r) = p.j_range {
        return Ok(r);
    }
    let (mut lo, mut hi) = default_j_range(r_out, w, p.lambda);
    for _ in 0..64 {
        let mut ok = true;
        for s in [0.0, 1.0] {
            for j in [lo, hi] {
                let c = ChannelSpec::new(j, s, s, w, p.n, r_in, r_out)?;
                ok &= min_abs(&channel_eigenvalues(&c, b_in, b_out, p.convention)?) > 2.0 * p.lambda;
            }
        }
        if ok {
            return Ok((lo, hi));
        }
        lo -= 1;
        hi += 1;
    }
    Err(Error::Resolution("could not find a channel range clearing the window".into()))
}

/// Merged windowed spectrum of the channels in `j_range` at parameter `t`.
pub fn assemble_annulus_spectrum(
    d: &DomainSpec,
    g: &GaugeSpec,
    t: f64,
    j_range: (i64, i64),
    p: &RadialParams,
) -> Result<SpectrumSample> {
    let (r_in, r_out, b_in, b_out, w) = annulus_data(d, g)?;
    if j_range.0 > j_range.1 {
        return Err(Error::Config(format!("empty channel range {j_range:?}")));
    }
    let s = g.schedule.eval(t);
    let js: Vec<i64> = (j_range.0..=j_range.1).collect();
    let per_channel: Vec<Result<Vec<f64>>> = js
        .par_iter()
        .map(|&j| {
            let c = ChannelSpec::new(j, t, s, w, p.n, r_in, r_out)?;
            channel_eigenvalues(&c, b_in, b_out, p.convention)
        })
        .collect();
    let mut vals = Vec::new();
    let mut count_below = 0;
    for (k, res) in per_channel.into_iter().enumerate() {
        let ev = res?;
        if k == 0 || k + 1 == js.len() {
            let m = min_abs(&ev);
            if m <= 2.0 * p.lambda {
                return Err(Error::ChannelTruncation { channel: js[k], lambda: m });
            }
        }
        count_below += ev.iter().filter(|v| **v < -p.lambda).count();
        vals.extend(ev.into_iter().filter(|v| v.abs() <= p.lambda));
    }
    vals.sort_by(f64::total_cmp);
    Ok(SpectrumSample {
        t,
        window: p.lambda,
        eigenvalues: vals,
        weights: None,
        count_below,
        meta: SampleMeta {
            backend: "radial".into(),
            resolution: p.n,
            channels: Some(j_range),
            h: None,
            energy_scale: 1.0,
        },
    })
}

/// The `count` eigenvalues of smallest `|lambda|` at parameter `t`, sorted
/// by value; the window is widened until it holds at least `count + 1`.
pub fn lowest_levels(d: &DomainSpec, g: &GaugeSpec, t: f64, count: usize, p: &RadialParams) -> Result<Vec<f64>> {
    let mut q = p.clone();
    for _ in 0..16 {
        let jr = resolve_j_range(d, g, &q)?;
        let sample = assemble_annulus_spectrum(d, g, t, jr, &q)?;
        if sample.eigenvalues.len() > count {
            let mut v = sample.eigenvalues;
            v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            v.truncate(count);
            v.sort_by(f64::total_cmp);
            return Ok(v);
        }
        q.lambda *= 1.5;
    }
    Err(Error::Resolution(format!("fewer than {count} radial levels within reach")))
}

/// Channel-resolved spectrum `(j, eigenvalues in window)` for plotting.
pub fn channel_spectra(
    d: &DomainSpec,
    g: &GaugeSpec,
    t: f64,
    j_range: (i64, i64),
    p: &RadialParams,
) -> Result<Vec<(i64, Vec<f64>)>> {
    let (r_in, r_out, b_in, b_out, w) = annulus_data(d, g)?;
    let s = g.schedule.eval(t);
    (j_range.0..=j_range.1)
        .map(|j| {
            let c = ChannelSpec::new(j, t, s, w, p.n, r_in, r_out)?;
            let ev = channel_eigenvalues(&c, b_in, b_out, p.convention)?;
            Ok((j, ev.into_iter().filter(|v| v.abs() <= p.lambda).collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundaryValue, build_annulus};

    fn bv(b: f64) -> BoundaryValue {
        BoundaryValue::new(b).unwrap()
    }

    fn chan(j: i64, s: f64, w: i64, n: usize) -> ChannelSpec {
        ChannelSpec::new(j, s, s, w, n, 1.0, 2.0).unwrap()
    }

    #[test]
    fn hermitian_by_construction() {
        let op = channel_operator(&chan(0, 0.3, 1, 64), -1.0, 1.0, NormalConvention::Outward).unwrap();
        assert!(op.to_dense().hermiticity_defect() < 1e-12);
    }

    #[test]
    fn relabeling_identity() {
        let conv = NormalConvention::Outward;
        for j in -3..=3 {
            let a = channel_eigenvalues(&chan(j, 1.0, 1, 64), -1.0, 1.0, conv).unwrap();
            let b = channel_eigenvalues(&chan(j - 1, 0.0, 1, 64), -1.0, 1.0, conv).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn chiral_reflection() {
        let conv = NormalConvention::Inward;
        let c = chan(1, 0.4, 1, 64);
        let a = channel_eigenvalues(&c, -0.7, 1.3, conv).unwrap();
        let mut b: Vec<f64> = channel_eigenvalues(&c, 0.7, -1.3, conv).unwrap().into_iter().map(|x| -x).collect();
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_mode_at_balanced_coupling() {
        // Opposite signs and |B_in| = |B_out| put an exact zero mode at a = 0.
        let c = ChannelSpec { a: 0.0, ..chan(0, 0.0, 0, 64) };
        let ev = channel_eigenvalues(&c, -1.0, 1.0, NormalConvention::Inward).unwrap();
        assert!(min_abs(&ev) < 1e-12);
    }

    #[test]
    fn zero_b_is_rejected() {
        assert!(channel_eigenvalues(&chan(0, 0.0, 0, 64), 0.0, 1.0, NormalConvention::Outward).is_err());
    }

    #[test]
    fn small_n_is_rejected() {
        assert!(matches!(ChannelSpec::new(0, 0.0, 0.0, 1, 16, 1.0, 2.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn endpoint_samples_agree() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let g = GaugeSpec::from_slice(&[1]);
        let p = RadialParams { n: 64, ..Default::default() };
        let jr = resolve_j_range(&d, &g, &p).unwrap();
        let a = assemble_annulus_spectrum(&d, &g, 0.0, jr, &p).unwrap();
        let b = assemble_annulus_spectrum(&d, &g, 1.0, jr, &p).unwrap();
        assert_eq!(a.eigenvalues.len(), b.eigenvalues.len());
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_winding_is_t_independent() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let g = GaugeSpec::from_slice(&[0]);
        let p = RadialParams { n: 64, ..Default::default() };
        let jr = resolve_j_range(&d, &g, &p).unwrap();
        let a = assemble_annulus_spectrum(&d, &g, 0.0, jr, &p).unwrap();
        let b = assemble_annulus_spectrum(&d, &g, 0.61, jr, &p).unwrap();
        assert_eq!(a, SpectrumSample { t: 0.0, ..b.clone() });
    }

    #[test]
    fn narrow_range_is_truncation() {
        let d = build_annulus(1.0, 2.0, bv(-1.0), bv(1.0)).unwrap();
        let g = GaugeSpec::from_slice(&[1]);
        let p = RadialParams { n: 64, ..Default::default() };
        let r = assemble_annulus_spectrum(&d, &g, 0.5, (-1, 1), &p);
        assert!(matches!(r, Err(Error::ChannelTruncation { .. })));
    }

    #[test]
    fn first_order_convergence() {
        let lowest = |n: usize| {
            let c = ChannelSpec::new(0, 0.3, 0.3, 1, n, 1.0, 2.0).unwrap();
            min_abs(&channel_eigenvalues(&c, -1.0, 1.0, NormalConvention::Outward).unwrap())
        };
        let (a, b, c) = (lowest(128), lowest(256), lowest(512));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }
}
