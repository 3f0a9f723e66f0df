//! Banded Hermitian storage and the `L D L^H` factorization used for shift
//! inversion and Sylvester inertia counts.

use num_complex::Complex64;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Hermitian matrix with `A[i, j] = 0` for `|i - j| > kd`.
///
/// Only the lower band is stored, column by column: `A[i, j]` for
/// `j <= i <= j + kd` lives at `ab[j * (kd + 1) + i - j]`. The upper triangle
/// is implied by Hermitian symmetry, so the stored operator is Hermitian by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedHermitian {
    pub n: usize,
    pub kd: usize,
    pub ab: Vec<Complex64>,
}

impl BandedHermitian {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self { n, kd, ab: vec![C0; n * (kd + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.kd && i < self.n);
        j * (self.kd + 1) + i - j
    }

    /// Entry `(i, j)` for any `i, j`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let (lo, hi, conj) = if i >= j { (i, j, false) } else { (j, i, true) };
        if lo - hi > self.kd {
            return C0;
        }
        let z = self.ab[self.slot(lo, hi)];
        if conj {
            z.conj()
        } else {
            z
        }
    }

    /// Adds `v` at `(i, j)` and `conj(v)` at `(j, i)`; a diagonal `v` must be real.
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) -> Result<()> {
        let (lo, hi, v) = if i >= j { (i, j, v) } else { (j, i, v.conj()) };
        if lo - hi > self.kd {
            return Err(Error::Assembly(format!("entry ({i}, {j}) outside bandwidth {}", self.kd)));
        }
        if lo == hi && v.im.abs() > 1e-14 * v.norm().max(1.0) {
            return Err(Error::Assembly(format!("complex diagonal entry {v} at ({i}, {i})")));
        }
        let s = self.slot(lo, hi);
        if lo == hi {
            self.ab[s].re += v.re;
        } else {
            self.ab[s] += v;
        }
        Ok(())
    }

    /// Adds a real number to the diagonal entry `(i, i)`.
    pub fn add_diag(&mut self, i: usize, x: f64) {
        let s = self.slot(i, i);
        self.ab[s].re += x;
    }

    /// Largest imaginary part on the diagonal, the only possible Hermiticity defect.
    pub fn diagonal_defect(&self) -> f64 {
        (0..self.n).map(|i| self.ab[self.slot(i, i)].im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.ab.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Row-sum bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for j in 0..self.n {
            for d in 0..=self.kd.min(self.n - 1 - j) {
                let a = self.ab[j * (self.kd + 1) + d].norm();
                rows[j + d] += a;
                if d > 0 {
                    rows[j] += a;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|z| *z = C0);
        let w = self.kd + 1;
        for j in 0..self.n {
            let m = self.kd.min(self.n - 1 - j);
            let col = &self.ab[j * w..j * w + m + 1];
            let xj = x[j];
            y[j] += col[0].re * xj;
            let mut acc = C0;
            for d in 1..=m {
                let a = col[d];
                y[j + d] += a * xj;
                acc += a.conj() * x[j + d];
            }
            y[j] += acc;
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n);
        for j in 0..self.n {
            for d in 0..=self.kd.min(self.n - 1 - j) {
                let z = self.ab[j * (self.kd + 1) + d];
                m.set(j + d, j, z);
                m.set(j, j + d, z.conj());
            }
        }
        m
    }

    /// Diagonal and subdiagonal when `kd <= 1`.
    pub fn tridiagonal_parts(&self) -> Option<(Vec<f64>, Vec<Complex64>)> {
        if self.kd > 1 {
            return None;
        }
        let d = (0..self.n).map(|i| self.get(i, i).re).collect();
        let e = (0..self.n.saturating_sub(1)).map(|i| self.get(i + 1, i)).collect();
        Some((d, e))
    }
}

/// `A - sigma I = L D L^H` with unit lower banded `L` and real diagonal `D`,
/// computed without pivoting.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    pub n: usize,
    pub kd: usize,
    pub sigma: f64,
    l: Vec<Complex64>,
    d: Vec<f64>,
}

/// Relative pivot size below which the factorization is declared unstable.
pub const PIVOT_GUARD: f64 = 1e-10;

impl LdlFactor {
    pub fn new(a: &BandedHermitian, sigma: f64) -> Result<Self> {
        let (n, kd) = (a.n, a.kd);
        let w = kd + 1;
        let scale = a.norm_bound().max(sigma.abs()).max(f64::MIN_POSITIVE);
        let mut l = a.ab.clone();
        let mut d = vec![0.0; n];
        let mut col = vec![C0; w];
        for j in 0..n {
            let dj = l[j * w].re - sigma;
            if !(dj.abs() > PIVOT_GUARD * scale) {
                return Err(Error::Singularity(format!(
                    "pivot {dj:.3e} at row {j} for shift {sigma}; shift lies too close to the spectrum"
                )));
            }
            d[j] = dj;
            let m = kd.min(n - 1 - j);
            col[..=m].copy_from_slice(&l[j * w..j * w + m + 1]);
            let inv = 1.0 / dj;
            for c in 1..=m {
                let f = col[c].conj() * inv;
                let dst = &mut l[(j + c) * w..(j + c) * w + m - c + 1];
                for (x, y) in dst.iter_mut().zip(&col[c..=m]) {
                    *x -= y * f;
                }
            }
            l[j * w] = Complex64::new(dj, 0.0);
            for x in &mut l[j * w + 1..j * w + m + 1] {
                *x *= inv;
            }
        }
        Ok(Self { n, kd, sigma, l, d })
    }

    /// Number of eigenvalues of `A` strictly below `sigma`.
    pub fn negatives(&self) -> usize {
        self.d.iter().filter(|x| **x < 0.0).count()
    }

    /// Solve followed by iterative refinement against `a`, which recovers
    /// accuracy lost to pivot growth in the unpivoted factorization. Returns
    /// the final relative residual.
    pub fn solve_refined(&self, a: &BandedHermitian, b: &mut [Complex64]) -> f64 {
        let rhs = b.to_vec();
        let bnorm = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        self.solve_in_place(b);
        let mut r = vec![C0; self.n];
        let mut rel = f64::INFINITY;
        for step in 0..3 {
            a.matvec(b, &mut r);
            for ((ri, xi), bi) in r.iter_mut().zip(b.iter()).zip(&rhs) {
                *ri = bi - (*ri - self.sigma * xi);
            }
            rel = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / bnorm;
            if rel <= 1e-10 || step == 2 {
                break;
            }
            self.solve_in_place(&mut r);
            for (xi, di) in b.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        rel
    }

    /// Overwrites `b` with `(A - sigma I)^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, kd) = (self.n, self.kd);
        let w = kd + 1;
        for j in 0..n {
            let m = kd.min(n - 1 - j);
            let bj = b[j];
            if bj != C0 {
                let col = &self.l[j * w + 1..j * w + m + 1];
                for (x, lij) in b[j + 1..j + 1 + m].iter_mut().zip(col) {
                    *x -= lij * bj;
                }
            }
        }
        for (x, dj) in b.iter_mut().zip(&self.d) {
            *x /= *dj;
        }
        for j in (0..n).rev() {
            let m = kd.min(n - 1 - j);
            let col = &self.l[j * w + 1..j * w + m + 1];
            let s: Complex64 = col.iter().zip(&b[j + 1..j + 1 + m]).map(|(l, x)| l.conj() * x).sum();
            b[j] -= s;
        }
    }
}
