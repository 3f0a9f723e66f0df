//! Dense Hermitian eigensolver: Householder reduction to real symmetric
//! tridiagonal form followed by implicit QL iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C1;
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, x) in d.iter().enumerate() {
            m.data[i * d.len() + i] = Complex64::new(*x, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |H - H^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        d
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == C0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius norm, an upper bound for the spectral norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Householder vector `v` (with `v[0] = 1`) and scalar `tau` such that
/// `(I - tau v v^H)^H x = beta e_1` with `beta` real.
fn householder(x: &mut [Complex64]) -> (Complex64, f64) {
    let alpha = x[0];
    let xnorm = x[1..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if xnorm == 0.0 && alpha.im == 0.0 {
        x[0] = C1;
        return (C0, alpha.re);
    }
    let beta = -alpha.re.signum() * alpha.re.hypot(alpha.im).hypot(xnorm);
    let beta = if beta == 0.0 { -alpha.norm().max(xnorm) } else { beta };
    let tau = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
    let scale = C1 / (alpha - beta);
    for z in x[1..].iter_mut() {
        *z *= scale;
    }
    x[0] = C1;
    (tau, beta)
}

/// Reduces a Hermitian matrix to real symmetric tridiagonal form
/// `A = Q T Q^H`. Returns `(d, e, reflectors)` where `e[k]` couples `k` and
/// `k + 1`; `reflectors[k] = (tau, v)` acts on rows `k + 1..n`.
fn tridiagonalize(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>, Vec<(Complex64, Vec<Complex64>)>) {
    let n = a.n;
    let mut m = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut refl = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let len = n - k - 1;
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| m[i * n + k]).collect();
        let (tau, beta) = householder(&mut v);
        e[k] = beta;
        if tau != C0 {
            // p = tau * A22 v
            let mut p = vec![C0; len];
            for (ii, pi) in p.iter_mut().enumerate() {
                let row = &m[(k + 1 + ii) * n + k + 1..(k + 1 + ii) * n + n];
                let s: Complex64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                *pi = tau * s;
            }
            // w = p - (tau/2) (p^H v) v
            let phv: Complex64 = p.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            let alpha = -0.5 * tau * phv;
            let w: Vec<Complex64> = p.iter().zip(&v).map(|(pi, vi)| pi + alpha * vi).collect();
            for ii in 0..len {
                let (vi, wi) = (v[ii], w[ii]);
                let row = &mut m[(k + 1 + ii) * n + k + 1..(k + 1 + ii) * n + n];
                for (jj, x) in row.iter_mut().enumerate() {
                    *x -= vi * w[jj].conj() + wi * v[jj].conj();
                }
            }
        }
        d[k] = m[k * n + k].re;
        refl.push((tau, v));
    }
    if n > 0 {
        d[n - 1] = m[(n - 1) * n + n - 1].re;
    }
    (d, e, refl)
}

/// Implicit-shift QL on a real symmetric tridiagonal matrix. `e[k]` couples
/// `k` and `k + 1` and is destroyed. When `z` is given (row-major `n x n`,
/// real or complex stored as pairs) its columns are rotated alongside.
pub fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [Complex64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(format!("QL iteration stalled at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * f;
                        z[k * n + i] = c * z[k * n + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_pairs(vals: &mut Vec<f64>, z: Option<&mut DenseMatrix>) {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]).then(a.cmp(b)));
    let sorted: Vec<f64> = idx.iter().map(|i| vals[*i]).collect();
    if let Some(z) = z {
        let old = z.clone();
        for (newc, oldc) in idx.iter().enumerate() {
            for r in 0..n {
                z.data[r * n + newc] = old.data[r * n + oldc];
            }
        }
    }
    *vals = sorted;
}

/// Ascending eigenvalues of a dense Hermitian matrix.
pub fn eigvalsh(a: &DenseMatrix) -> Result<Vec<f64>> {
    let (mut d, mut e, _) = tridiagonalize(a);
    tql(&mut d, &mut e, None)?;
    sort_pairs(&mut d, None);
    Ok(d)
}

/// Ascending eigenvalues and orthonormal eigenvectors (as columns).
pub fn eigh_vectors(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.n;
    let (mut d, mut e, refl) = tridiagonalize(a);
    // Q = H_0 H_1 ... H_{n-2}, built right to left.
    let mut q = DenseMatrix::identity(n);
    for (k, (tau, v)) in refl.iter().enumerate().rev() {
        if *tau == C0 {
            continue;
        }
        // Q <- (I - tau v v^H) Q on rows k+1..n
        for c in 0..n {
            let s: Complex64 = v.iter().enumerate().map(|(ii, vi)| vi.conj() * q.data[(k + 1 + ii) * n + c]).sum();
            let f = tau * s;
            for (ii, vi) in v.iter().enumerate() {
                q.data[(k + 1 + ii) * n + c] -= f * vi;
            }
        }
    }
    tql(&mut d, &mut e, Some(&mut q.data))?;
    sort_pairs(&mut d, Some(&mut q));
    Ok((d, q))
}

/// Hermitian tridiagonal matrix with real diagonal `diag` and complex
/// subdiagonal `sub` (`sub[k] = T[k + 1, k]`), reduced to real symmetric form
/// by a diagonal unitary.
pub fn tridiagonal_eigvalsh(diag: &[f64], sub: &[Complex64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    for (k, s) in sub.iter().enumerate() {
        e[k] = s.norm();
    }
    tql(&mut d, &mut e, None)?;
    sort_pairs(&mut d, None);
    Ok(d)
}

/// Eigenpairs of a Hermitian tridiagonal matrix; eigenvectors as columns.
pub fn tridiagonal_eigh(diag: &[f64], sub: &[Complex64]) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    let mut phase = vec![C1; n];
    for (k, s) in sub.iter().enumerate() {
        let r = s.norm();
        e[k] = r;
        phase[k + 1] = if r > 0.0 { phase[k] * (s / r) } else { phase[k] };
    }
    let mut z = DenseMatrix::zeros(n);
    for i in 0..n {
        z.data[i * n + i] = phase[i];
    }
    tql(&mut d, &mut e, Some(&mut z.data))?;
    sort_pairs(&mut d, Some(&mut z));
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
            for j in 0..i {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m.set(i, j, z);
                m.set(j, i, z.conj());
            }
        }
        m
    }

    #[test]
    fn diagonal_and_pauli() {
        assert_eq!(eigvalsh(&DenseMatrix::diag(&[3.0, -1.0, 2.0])).unwrap(), vec![-1.0, 2.0, 3.0]);
        let x = DenseMatrix::from_fn(2, |i, j| if i != j { C1 } else { C0 });
        let v = eigvalsh(&x).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pauli_y_vectors() {
        let y = DenseMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 1) => Complex64::new(0.0, -1.0),
            (1, 0) => Complex64::new(0.0, 1.0),
            _ => C0,
        });
        let (vals, vecs) = eigh_vectors(&y).unwrap();
        for k in 0..2 {
            let v = vecs.column(k);
            let hv = y.matvec(&v);
            let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - vals[k] * b).norm_sqr()).sum();
            assert!(res.sqrt() < 1e-14);
        }
    }

    #[test]
    fn residuals_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 17, 40] {
            let h = random_hermitian(n, &mut rng);
            let (vals, vecs) = eigh_vectors(&h).unwrap();
            let scale = h.frobenius();
            for k in 0..n {
                let v = vecs.column(k);
                let hv = h.matvec(&v);
                let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - vals[k] * b).norm_sqr()).sum();
                assert!(res.sqrt() <= 1e-12 * scale, "n={n} k={k}");
            }
            let g = vecs.adjoint().matmul(&vecs);
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((g.get(i, j) - target).norm() < 1e-12);
                }
            }
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let plain = eigvalsh(&h).unwrap();
            for (a, b) in plain.iter().zip(&vals) {
                assert!((a - b).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sub: Vec<Complex64> = (0..n - 1)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut m = DenseMatrix::diag(&diag);
        for (k, s) in sub.iter().enumerate() {
            m.set(k + 1, k, *s);
            m.set(k, k + 1, s.conj());
        }
        let a = eigvalsh(&m).unwrap();
        let b = tridiagonal_eigvalsh(&diag, &sub).unwrap();
        let (c, z) = tridiagonal_eigh(&diag, &sub).unwrap();
        for i in 0..n {
            assert!((a[i] - b[i]).abs() < 1e-12);
            assert!((a[i] - c[i]).abs() < 1e-12);
            let v = z.column(i);
            let hv = m.matvec(&v);
            let res: f64 = hv.iter().zip(&v).map(|(x, y)| (x - c[i] * y).norm_sqr()).sum();
            assert!(res.sqrt() < 1e-12);
        }
    }
}
