//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use diracflow::eigen::DenseMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations on its real
/// symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`, whose spectrum is the
/// spectrum of `A` with every value doubled.
pub fn jacobi_eigvalsh(a: &DenseMatrix) -> Vec<f64> {
    let n = a.n;
    let m = 2 * n;
    let mut s = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = a.get(i, j);
            s[i * m + j] = z.re;
            s[(i + n) * m + j + n] = z.re;
            s[(i + n) * m + j] = z.im;
            s[i * m + j + n] = -z.im;
        }
    }
    let scale: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| s[i * m + j].powi(2)).sum();
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = s[p * m + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (s[q * m + q] - s[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let akp = s[k * m + p];
                    let akq = s[k * m + q];
                    s[k * m + p] = c * akp - sn * akq;
                    s[k * m + q] = sn * akp + c * akq;
                }
                for k in 0..m {
                    let apk = s[p * m + k];
                    let aqk = s[q * m + k];
                    s[p * m + k] = c * apk - sn * aqk;
                    s[q * m + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..m).map(|i| s[i * m + i]).collect();
    d.sort_by(f64::total_cmp);
    d.into_iter().step_by(2).collect()
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> DenseMatrix {
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

/// Product of three Householder reflections with random complex vectors.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let mut u = DenseMatrix::identity(n);
    for _ in 0..3 {
        let v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let vv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let h = DenseMatrix::from_fn(n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            Complex64::new(delta, 0.0) - 2.0 * v[i] * v[j].conj() / vv
        });
        u = u.matmul(&h);
    }
    u
}

/// Closed-form annulus flow: `w` times the number of positive components
/// counted with orientation.
pub fn annulus_flow(w: i64, b_inner: f64, b_outer: f64) -> i64 {
    w * ((b_outer > 0.0) as i64 - (b_inner > 0.0) as i64)
}

/// Two-hole disk: the outer circle winds `w1 + w2`, hole `k` winds `-w_k`,
/// and only positive components count.
pub fn two_hole_flow(w: [i64; 2], signs: [f64; 3]) -> i64 {
    let mut sf = 0;
    if signs[0] > 0.0 {
        sf += w[0] + w[1];
    }
    for k in 0..2 {
        if signs[k + 1] > 0.0 {
            sf -= w[k];
        }
    }
    sf
}
