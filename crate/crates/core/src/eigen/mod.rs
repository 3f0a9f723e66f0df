//! Hermitian operators, their spectra, and windowed spectrum samples.
//!
//! Small and tridiagonal operators go through the dense Householder/QL
//! kernel in [`dense`]. Large banded operators (the lattice backend) are
//! handled by a shift-inverted block Lanczos in [`lanczos`] on top of the
//! banded `L D L^H` factorization in [`banded`], which also yields exact
//! eigenvalue counts through Sylvester inertia.

pub mod banded;
pub mod dense;
pub mod lanczos;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use banded::{BandedHermitian, LdlFactor};
pub use dense::DenseMatrix;
pub use lanczos::{Eigenpairs, LanczosOptions, shift_invert_eigs};

use crate::error::{Error, Result};

/// Dimension above which a dense eigendecomposition is refused.
pub const DENSE_CAP: usize = 6000;

/// Relative Hermiticity tolerance enforced at assembly.
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum Storage {
    Dense(DenseMatrix),
    Banded(BandedHermitian),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub backend: String,
    pub t: f64,
    pub resolution: String,
}

/// A finite Hermitian matrix standing for one discretized `D_t`.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    storage: Storage,
    pub meta: OperatorMeta,
}

impl HermitianOperator {
    /// Wraps a dense matrix after checking `max|H - H^dagger| <= 1e-12 max|H|`.
    pub fn dense(m: DenseMatrix, meta: OperatorMeta) -> Result<Self> {
        let defect = m.hermiticity_defect();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        if defect > HERMITICITY_TOL * scale {
            return Err(Error::Assembly(format!("Hermiticity defect {defect:.3e} exceeds tolerance")));
        }
        Ok(Self { storage: Storage::Dense(m), meta })
    }

    /// Wraps a banded matrix; only the diagonal can break Hermiticity.
    pub fn banded(b: BandedHermitian, meta: OperatorMeta) -> Result<Self> {
        let defect = b.diagonal_defect();
        if defect > HERMITICITY_TOL * b.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Assembly(format!("Hermiticity defect {defect:.3e} exceeds tolerance")));
        }
        Ok(Self { storage: Storage::Banded(b), meta })
    }

    pub fn n(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.n,
            Storage::Banded(b) => b.n,
        }
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(m) => m.get(i, j),
            Storage::Banded(b) => b.get(i, j),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Banded(b) => b.to_dense(),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.hermiticity_defect(),
            Storage::Banded(b) => b.diagonal_defect(),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        match &self.storage {
            Storage::Dense(m) => m.matvec(x),
            Storage::Banded(b) => {
                let mut y = vec![Complex64::new(0.0, 0.0); b.n];
                b.matvec(x, &mut y);
                y
            }
        }
    }

    fn dense_view(&self) -> Result<std::borrow::Cow<'_, DenseMatrix>> {
        match &self.storage {
            Storage::Dense(m) => Ok(std::borrow::Cow::Borrowed(m)),
            Storage::Banded(b) if b.n <= DENSE_CAP => Ok(std::borrow::Cow::Owned(b.to_dense())),
            Storage::Banded(b) => Err(Error::Size { dim: b.n, cap: DENSE_CAP }),
        }
    }
}

/// All eigenvalues in ascending order.
pub fn eigh(h: &HermitianOperator) -> Result<Vec<f64>> {
    if let Storage::Banded(b) = &h.storage {
        if let Some((d, e)) = b.tridiagonal_parts() {
            return dense::tridiagonal_eigvalsh(&d, &e);
        }
    }
    dense::eigvalsh(&*h.dense_view()?)
}

/// All eigenpairs; eigenvectors are the columns of the returned matrix.
pub fn eigh_vectors(h: &HermitianOperator) -> Result<(Vec<f64>, DenseMatrix)> {
    if let Storage::Banded(b) = &h.storage {
        if let Some((d, e)) = b.tridiagonal_parts() {
            return dense::tridiagonal_eigh(&d, &e);
        }
    }
    dense::eigh_vectors(&*h.dense_view()?)
}

/// The `count` eigenpairs of smallest `|lambda|`, sorted by eigenvalue.
pub fn lowest_abs_eigenpairs(h: &HermitianOperator, count: usize) -> Result<Eigenpairs> {
    let (vals, vecs) = eigh_vectors(h)?;
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|a, b| vals[*a].abs().total_cmp(&vals[*b].abs()));
    idx.truncate(count);
    idx.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
    let mut out = Eigenpairs::default();
    for i in idx {
        let v = vecs.column(i);
        let hv = h.matvec(&v);
        out.residuals.push(hv.iter().zip(&v).map(|(a, b)| (a - vals[i] * b).norm_sqr()).sum::<f64>().sqrt());
        out.values.push(vals[i]);
        out.vectors.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub backend: String,
    /// Radial `N` or lattice cells per outer diameter.
    pub resolution: usize,
    /// Angular channel range of the radial backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<(i64, i64)>,
    /// Grid spacing of the lattice backend, in length units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Energy unit of the eigenvalues relative to the continuum operator.
    pub energy_scale: f64,
}

/// Eigenvalues of one `D_t` inside the closed window `[-window, window]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub t: f64,
    pub window: f64,
    pub eigenvalues: Vec<f64>,
    /// Fraction of each eigenvector supported on the physical domain, when the
    /// discretization carries auxiliary degrees of freedom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Number of eigenvalues strictly below `-window`.
    pub count_below: usize,
    pub meta: SampleMeta,
}

impl SpectrumSample {
    /// Number of eigenvalues strictly below `x`, for `|x| <= window`.
    pub fn count_less(&self, x: f64) -> usize {
        self.count_below + self.eigenvalues.iter().filter(|v| **v < x).count()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Restriction to a narrower window.
    pub fn narrowed(&self, window: f64) -> SpectrumSample {
        let mut out = self.clone();
        out.window = window.min(self.window);
        let keep: Vec<usize> =
            (0..self.eigenvalues.len()).filter(|i| self.eigenvalues[*i].abs() <= out.window).collect();
        out.count_below = self.count_less(-out.window);
        out.eigenvalues = keep.iter().map(|i| self.eigenvalues[*i]).collect();
        out.weights = self.weights.as_ref().map(|w| keep.iter().map(|i| w[*i]).collect());
        out
    }

    /// Same spectrum shifted by `eps` (eigenvalues `lambda + eps`).
    pub fn shifted(&self, eps: f64) -> SpectrumSample {
        let mut out = self.clone();
        for v in &mut out.eigenvalues {
            *v += eps;
        }
        out
    }
}

/// Sorted eigenvalues within `[-lambda, lambda]` (both ends included) and
/// the count below the window.
pub fn window_from_values(vals: &[f64], lambda: f64, t: f64, meta: SampleMeta) -> SpectrumSample {
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count_below = sorted.iter().filter(|v| **v < -lambda).count();
    let eigenvalues = sorted.into_iter().filter(|v| v.abs() <= lambda).collect();
    SpectrumSample { t, window: lambda, eigenvalues, weights: None, count_below, meta }
}

/// Windowed spectrum via the dense kernel. The window is closed: an
/// eigenvalue equal to `+-lambda` is included.
pub fn spectrum_window(h: &HermitianOperator, lambda: f64) -> Result<SpectrumSample> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("window half-width {lambda} must be positive")));
    }
    let vals = eigh(h)?;
    let meta = SampleMeta { backend: h.meta.backend.clone(), energy_scale: 1.0, ..Default::default() };
    Ok(window_from_values(&vals, lambda, h.meta.t, meta))
}

/// Eigenpairs closest to zero of a banded operator, with the exact count of
/// eigenvalues below the returned window from the inertia of `H - sigma`.
///
/// Up to `nev` eigenvalues are returned, all of those inside the closed
/// window `[-cut, cut]`; `cut` sits halfway to the next eigenvalue so the
/// window edge is never shared with an unresolved one. The shift `sigma` is
/// moved off zero when it lands on a tiny pivot or too close to an
/// eigenvalue for the inverse to be applied accurately.
pub fn banded_window(b: &BandedHermitian, nev: usize, opts: &LanczosOptions) -> Result<(SpectrumSample, Eigenpairs)> {
    let scale = b.norm_bound().max(1.0);
    let mut last_err = None;
    for (attempt, offset) in [3e-5, -4.1e-5, 7.3e-5, -1.13e-4, 1.7e-4, -2.9e-4].iter().enumerate() {
        let sigma = offset * scale;
        let factor = match LdlFactor::new(b, sigma) {
            Ok(f) => f,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let o = LanczosOptions {
            nev: nev + 1,
            seed: opts.seed.wrapping_add(attempt as u64),
            max_inverse_norm: Some(1e5 / scale),
            ..opts.clone()
        };
        let pairs = match shift_invert_eigs(b, &factor, &o) {
            Ok(p) => p,
            Err(e @ Error::Singularity(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        // Every eigenvalue within `reach` of sigma has been found.
        let reach = pairs.values.iter().map(|v| (v - sigma).abs()).fold(0.0, f64::max);
        let limit = reach - sigma.abs();
        let mut idx: Vec<usize> = (0..pairs.values.len()).collect();
        idx.sort_by(|x, y| pairs.values[*x].abs().total_cmp(&pairs.values[*y].abs()));
        let inside = idx.iter().filter(|i| pairs.values[**i].abs() < limit).count();
        let keep_n = nev.min(inside);
        let next = if keep_n < idx.len() { pairs.values[idx[keep_n]].abs().min(limit) } else { limit };
        let cut = if keep_n == 0 { 0.5 * next } else { 0.5 * (pairs.values[idx[keep_n - 1]].abs() + next) };
        let mut keep: Vec<usize> = idx.into_iter().take(keep_n).collect();
        keep.sort_by(|x, y| pairs.values[*x].total_cmp(&pairs.values[*y]));
        let between = pairs.values.iter().filter(|v| **v >= -cut && **v < sigma).count();
        let below_window = factor.negatives() - between;
        let mut kept = Eigenpairs::default();
        for i in &keep {
            kept.values.push(pairs.values[*i]);
            kept.vectors.push(pairs.vectors[*i].clone());
            kept.residuals.push(pairs.residuals[*i]);
        }
        let sample = SpectrumSample {
            t: 0.0,
            window: cut,
            eigenvalues: kept.values.clone(),
            weights: None,
            count_below: below_window,
            meta: SampleMeta { energy_scale: 1.0, ..Default::default() },
        };
        return Ok((sample, kept));
    }
    Err(last_err.unwrap_or_else(|| Error::Singularity("no usable shift near zero".into())))
}
