//! Block Lanczos on `(A - sigma I)^{-1}` with full reorthogonalization, for
//! the eigenpairs of a large banded Hermitian matrix closest to a shift.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::banded::{BandedHermitian, LdlFactor};
use super::dense::{DenseMatrix, eigh_vectors};
use crate::error::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Number of eigenvalues closest to the shift.
    pub nev: usize,
    pub block: usize,
    /// Cap on the Krylov basis size.
    pub max_dim: usize,
    /// Residual target for the inverted Ritz pairs, relative to the largest one.
    pub tol: f64,
    pub seed: u64,
    /// Abort with [`Error::Singularity`] when the inverse is larger than this,
    /// i.e. when the shift sits too close to an eigenvalue.
    pub max_inverse_norm: Option<f64>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { nev: 16, block: 4, max_dim: 480, tol: 1e-10, seed: 0x5eed, max_inverse_norm: None }
    }
}

/// Eigenpairs sorted by eigenvalue.
#[derive(Clone, Debug, Default)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
    /// `||A x - lambda x||` per pair.
    pub residuals: Vec<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut s = C0;
    for (x, y) in a.iter().zip(b) {
        s += x.conj() * y;
    }
    s
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

/// Orthogonalizes `w` against `basis` twice; returns the accumulated coefficients.
fn reorthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64]) -> Vec<Complex64> {
    let mut coef = vec![C0; basis.len()];
    for _ in 0..2 {
        for (c, q) in coef.iter_mut().zip(basis) {
            let h = dot(q, w);
            axpy(-h, q, w);
            *c += h;
        }
    }
    coef
}

/// Eigenpairs of `a` closest to `factor.sigma`.
pub fn shift_invert_eigs(a: &BandedHermitian, factor: &LdlFactor, opts: &LanczosOptions) -> Result<Eigenpairs> {
    let n = a.n;
    let p = opts.block.max(1);
    let nev = opts.nev.min(n);
    if nev == 0 {
        return Ok(Eigenpairs::default());
    }
    let max_dim = opts.max_dim.min(n).max(nev.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<Vec<Complex64>> = Vec::new();
    // Start block.
    for _ in 0..p.min(n) {
        let mut v = random_vector(n, &mut rng);
        reorthogonalize(&q, &mut v);
        let nv = norm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        q.push(v);
    }
    let mut t: Vec<Vec<Complex64>> = Vec::new(); // t[col][row], grows with q
    let mut block_start = 0;
    let mut last_check = 0;
    let best: Option<(Vec<f64>, DenseMatrix, Vec<usize>)>;
    loop {
        let block_end = q.len();
        let mut new_block: Vec<Vec<Complex64>> = Vec::with_capacity(block_end - block_start);
        for c in block_start..block_end {
            let mut w = q[c].clone();
            let rel = factor.solve_refined(a, &mut w);
            if rel > 1e-8 {
                return Err(Error::Singularity(format!(
                    "solve with shift {} is inaccurate (relative residual {rel:.1e})",
                    factor.sigma
                )));
            }
            let coef = reorthogonalize(&q, &mut w);
            t.push(coef);
            new_block.push(w);
        }
        // Orthonormalize the new block against itself and the basis.
        let scale = t
            .iter()
            .enumerate()
            .map(|(c, col)| col.get(c).map_or(0.0, |z| z.norm()))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut r = vec![vec![C0; new_block.len()]; new_block.len()];
        let mut accepted: Vec<Vec<Complex64>> = Vec::new();
        for (c, mut w) in new_block.into_iter().enumerate() {
            for (rr, qq) in accepted.iter().enumerate() {
                let h = dot(qq, &w);
                axpy(-h, qq, &mut w);
                r[rr][c] += h;
            }
            for (rr, qq) in accepted.iter().enumerate() {
                let h = dot(qq, &w);
                axpy(-h, qq, &mut w);
                r[rr][c] += h;
            }
            let mut nw = norm(&w);
            if nw <= 1e-12 * scale {
                // Krylov space exhausted in this direction; continue with a fresh vector.
                w = random_vector(n, &mut rng);
                reorthogonalize(&q, &mut w);
                for qq in &accepted {
                    let h = dot(qq, &w);
                    axpy(-h, qq, &mut w);
                }
                nw = 0.0;
                let nr = norm(&w);
                w.iter_mut().for_each(|z| *z /= nr);
            } else {
                reorthogonalize(&q, &mut w);
                for qq in &accepted {
                    let h = dot(qq, &w);
                    axpy(-h, qq, &mut w);
                }
                let nr = norm(&w);
                w.iter_mut().for_each(|z| *z /= nr);
            }
            r[c][c] = Complex64::new(nw, 0.0);
            accepted.push(w);
        }
        let m = q.len();
        let at_cap = m + accepted.len() > max_dim;
        if let (Some(cap), true) = (opts.max_inverse_norm, m < nev + p) {
            // Cheap early estimate of the inverse norm from the diagonal coefficients.
            let est = (0..m).map(|c| t[c][c].norm()).fold(0.0, f64::max);
            if est > cap {
                return Err(Error::Singularity(format!(
                    "eigenvalue within {:.3e} of the shift {}",
                    1.0 / est,
                    factor.sigma
                )));
            }
        }
        if !at_cap && (m < nev + p || m - last_check < p.max(m / 8)) {
            block_start = m;
            q.extend(accepted);
            continue;
        }
        last_check = m;
        // Ritz analysis on the projected matrix.
        // Column j of the projection holds q_i^H Op q_j for every i < q.len() at the time.
        let proj = DenseMatrix::from_fn(m, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => t[j][i],
            std::cmp::Ordering::Equal => Complex64::new(t[j][j].re, 0.0),
            std::cmp::Ordering::Greater => t[i][j].conj(),
        });
        let (theta, s) = eigh_vectors(&proj)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|x, y| theta[*y].abs().total_cmp(&theta[*x].abs()));
        let wanted: Vec<usize> = order.into_iter().take(nev).collect();
        // Residuals are measured against the largest Ritz value, the norm of the inverse.
        let op_norm = theta.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if let Some(cap) = opts.max_inverse_norm {
            if op_norm > cap {
                return Err(Error::Singularity(format!(
                    "eigenvalue within {:.3e} of the shift {}",
                    1.0 / op_norm,
                    factor.sigma
                )));
            }
        }
        let converged = m >= nev + p
            && wanted.iter().all(|&i| {
                // ||B s_last||: residual of the Ritz pair of the inverse
                let mut res2 = 0.0;
                for row in &r {
                    let mut acc = C0;
                    for (c, rc) in row.iter().enumerate() {
                        acc += rc * s.get(block_start + c, i);
                    }
                    res2 += acc.norm_sqr();
                }
                res2.sqrt() <= opts.tol * op_norm
            });
        if converged || at_cap {
            best = Some((theta, s, wanted));
            if !converged && m < n {
                let (theta, _, wanted) = best.as_ref().unwrap();
                let worst = wanted.iter().map(|i| theta[*i].abs()).fold(f64::INFINITY, f64::min);
                return Err(Error::NoConvergence(format!(
                    "shift-invert Lanczos reached basis size {m} before {nev} eigenvalues near {} converged (weakest |1/(lambda - sigma)| = {worst:.3e})",
                    factor.sigma
                )));
            }
            break;
        }
        block_start = m;
        q.extend(accepted);
    }
    let (_, s, wanted) = best.unwrap();
    let mut pairs: Vec<(f64, Vec<Complex64>, f64)> = Vec::with_capacity(nev);
    let mut ax = vec![C0; n];
    for &i in &wanted {
        let mut x = vec![C0; n];
        for (k, qk) in q.iter().enumerate() {
            axpy(s.get(k, i), qk, &mut x);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        a.matvec(&x, &mut ax);
        let lambda = dot(&x, &ax).re;
        let res = ax.iter().zip(&x).map(|(y, z)| (y - lambda * z).norm_sqr()).sum::<f64>().sqrt();
        pairs.push((lambda, x, res));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Eigenpairs::default();
    for (l, v, r) in pairs {
        out.values.push(l);
        out.vectors.push(v);
        out.residuals.push(r);
    }
    Ok(out)
}
