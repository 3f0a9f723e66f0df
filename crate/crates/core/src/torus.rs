//! Index of the clutched operator `d/dt + A(t)` on `X x S^1`.
//!
//! Time is discretized with the Crank-Nicolson difference
//! `(psi_{k+1} - psi_k) / dt + (H_{k+1} psi_{k+1} + H_k psi_k) / 2`, whose
//! symbol vanishes only at zero energy and zero frequency.
//!
//! On the radial backend the clutching `mu = e^{i w theta}` maps angular
//! channel `j` at `t = 1` onto channel `j - w` at `t = 0`, so the twisted
//! closure strings channel blocks into `|w|` chains. Each chain is cut where
//! its spectrum is well gapped and closed by spectral projections: the first
//! block keeps its negative eigenspace, the last its positive one, the
//! discrete form of decay at both ends. Kernel and cokernel are counted from
//! the smallest singular values of `L`, via `L^H L` and `L L^H`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::eigen::dense::{eigh_vectors, eigvalsh, tridiagonal_eigh};
use crate::eigen::{BandedHermitian, DenseMatrix, LanczosOptions, LdlFactor, shift_invert_eigs};
use crate::error::{Error, Result};
use crate::gauge::GaugeSpec;
use crate::radial::{ChannelSpec, RadialParams, annulus_data, channel_tridiagonal, resolve_j_range};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Gram matrices up to this size are diagonalized densely.
const DENSE_GRAM_CAP: usize = 800;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusOptions {
    /// Time slices per unit of `t`.
    pub n_t: usize,
    /// Required ratio between the first non-kernel and the last kernel singular value.
    pub gap_factor: f64,
    /// Blocks with an eigenvalue below this magnitude are kept in a chain.
    pub window: f64,
    /// Gapped blocks kept on each side of the retained part of a chain.
    pub pad: usize,
    /// Cap on the dimension of `L`.
    pub cap: usize,
    /// Number of smallest singular values examined.
    pub probe: usize,
}

impl Default for TorusOptions {
    fn default() -> Self {
        Self { n_t: 24, gap_factor: 50.0, window: 1.0, pad: 2, cap: 20_000, probe: 8 }
    }
}

/// Closure of a chain of time blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainEnd {
    /// Last block steps back onto the first.
    Periodic,
    /// Negative eigenspace of the first block, positive of the last.
    Projected,
}

/// Consecutive spatial operators one time step apart.
#[derive(Clone, Debug)]
pub struct Chain {
    pub blocks: Vec<DenseMatrix>,
    pub end: ChainEnd,
}

/// Whether the closure applies the gauge transformation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clutching {
    Twisted,
    Untwisted,
}

/// Row-major rectangular block.
#[derive(Clone, Debug, PartialEq)]
struct Rect {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Rect {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C0; rows * cols] }
    }

    fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    /// `self^H other`.
    fn ah_b(&self, other: &Rect) -> Rect {
        let mut out = Rect::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(r, i).conj();
                if a == C0 {
                    continue;
                }
                let row = &other.data[r * other.cols..(r + 1) * other.cols];
                for (o, b) in out.data[i * other.cols..(i + 1) * other.cols].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn adjoint(&self) -> Rect {
        let mut out = Rect::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        out
    }
}

/// Discretized `d/dt + A(t)` as a block-sparse rectangular matrix.
#[derive(Clone, Debug)]
pub struct TorusOperator {
    pub n_t: usize,
    /// Sizes and global offsets of row and column blocks, offsets laid out
    /// so that coupled blocks are close together.
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    /// `(row block, col block, entries)`.
    blocks: Vec<(usize, usize, Rect)>,
    pub label: String,
}

/// Outcome of [`index_count`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusIndex {
    pub index: i64,
    pub kernel: usize,
    pub cokernel: usize,
    /// Smallest gap ratio of the two counts; absent for an empty operator.
    pub gap_ratio: Option<f64>,
    pub singular_values: Vec<f64>,
    pub adjoint_singular_values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

fn projected_basis(h: &DenseMatrix, negative: bool) -> Result<Rect> {
    let (vals, vecs) = eigh_vectors(h)?;
    let keep: Vec<usize> = (0..vals.len()).filter(|i| (vals[*i] < 0.0) == negative).collect();
    let mut b = Rect::zeros(h.n, keep.len());
    for (c, i) in keep.iter().enumerate() {
        for r in 0..h.n {
            b.data[r * keep.len() + c] = vecs.get(r, *i);
        }
    }
    Ok(b)
}

/// `(s I + H / 2) B`, with `B` the identity when absent.
fn step_block(h: &DenseMatrix, s: f64, basis: Option<&Rect>) -> Rect {
    let n = h.n;
    let mut m = Rect::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.data[i * n + j] = h.get(i, j) * 0.5;
        }
        m.data[i * n + i] += s;
    }
    match basis {
        None => m,
        Some(b) => {
            let mut out = Rect::zeros(n, b.cols);
            for i in 0..n {
                for k in 0..n {
                    let a = m.get(i, k);
                    if a == C0 {
                        continue;
                    }
                    for j in 0..b.cols {
                        out.data[i * b.cols + j] += a * b.get(k, j);
                    }
                }
            }
            out
        }
    }
}

/// Position of unit `k` when a cycle of `m` units is folded onto a line,
/// `0, m-1, 1, m-2, ...`, so that cyclic neighbors are at most two apart.
fn fold(k: usize, m: usize) -> usize {
    if 2 * k < m { 2 * k } else { 2 * (m - 1 - k) + 1 }
}

impl TorusOperator {
    /// Crank-Nicolson operator of the given chains at `n_t` slices per unit `t`.
    pub fn from_chains(chains: &[Chain], n_t: usize, label: impl Into<String>) -> Result<Self> {
        let dt = 1.0 / n_t as f64;
        let mut row_sizes = Vec::new();
        let mut col_sizes = Vec::new();
        let mut blocks = Vec::new();
        // Layout order of (row block or col block) units.
        let mut order: Vec<(bool, usize)> = Vec::new();
        for ch in chains {
            let m = ch.blocks.len();
            let n = ch.blocks.first().map(|b| b.n).unwrap_or(0);
            if m < 2 || ch.blocks.iter().any(|b| b.n != n) {
                return Err(Error::Config("a chain needs at least two blocks of equal size".into()));
            }
            let c0 = col_sizes.len();
            let r0 = row_sizes.len();
            let (first, last) = match ch.end {
                ChainEnd::Periodic => (None, None),
                ChainEnd::Projected => {
                    (Some(projected_basis(&ch.blocks[0], true)?), Some(projected_basis(&ch.blocks[m - 1], false)?))
                }
            };
            let basis = |k: usize| -> Option<&Rect> {
                if k == 0 {
                    first.as_ref()
                } else if k == m - 1 {
                    last.as_ref()
                } else {
                    None
                }
            };
            for k in 0..m {
                col_sizes.push(basis(k).map(|b| b.cols).unwrap_or(n));
            }
            let n_rows = if ch.end == ChainEnd::Periodic { m } else { m - 1 };
            for k in 0..n_rows {
                let next = (k + 1) % m;
                row_sizes.push(n);
                blocks.push((r0 + k, c0 + k, step_block(&ch.blocks[k], -1.0 / dt, basis(k))));
                blocks.push((r0 + k, c0 + next, step_block(&ch.blocks[next], 1.0 / dt, basis(next))));
            }
            let mut units: Vec<(usize, Vec<(bool, usize)>)> = (0..m)
                .map(|k| {
                    let mut u = vec![(false, c0 + k)];
                    if k < n_rows {
                        u.push((true, r0 + k));
                    }
                    let pos = if ch.end == ChainEnd::Periodic { fold(k, m) } else { k };
                    (pos, u)
                })
                .collect();
            units.sort_by_key(|u| u.0);
            order.extend(units.into_iter().flat_map(|u| u.1));
        }
        let mut row_offsets = vec![0; row_sizes.len()];
        let mut col_offsets = vec![0; col_sizes.len()];
        let (mut ro, mut co) = (0, 0);
        // Rows and columns live in separate index spaces but follow the same
        // interleaved order, so both Gram matrices come out banded.
        for (is_row, k) in order {
            if is_row {
                row_offsets[k] = ro;
                ro += row_sizes[k];
            } else {
                col_offsets[k] = co;
                co += col_sizes[k];
            }
        }
        Ok(Self { n_t, row_sizes, col_sizes, row_offsets, col_offsets, blocks, label: label.into() })
    }

    pub fn rows(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    pub fn cols(&self) -> usize {
        self.col_sizes.iter().sum()
    }

    /// The operator `L^H`.
    pub fn adjoint(&self) -> Self {
        Self {
            n_t: self.n_t,
            row_sizes: self.col_sizes.clone(),
            col_sizes: self.row_sizes.clone(),
            row_offsets: self.col_offsets.clone(),
            col_offsets: self.row_offsets.clone(),
            blocks: self.blocks.iter().map(|(r, c, m)| (*c, *r, m.adjoint())).collect(),
            label: format!("{} adjoint", self.label),
        }
    }

    /// Dense copy of `L`, row-major.
    pub fn to_dense(&self) -> (usize, usize, Vec<Complex64>) {
        let (nr, nc) = (self.rows(), self.cols());
        let mut out = vec![C0; nr * nc];
        for (r, c, m) in &self.blocks {
            for i in 0..m.rows {
                for j in 0..m.cols {
                    out[(self.row_offsets[*r] + i) * nc + self.col_offsets[*c] + j] += m.get(i, j);
                }
            }
        }
        (nr, nc, out)
    }

    /// `L^H L` in banded storage.
    fn gram(&self) -> Result<BandedHermitian> {
        let n = self.cols();
        // Group blocks by row block; every pair sharing a row contributes.
        let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); self.row_sizes.len()];
        for (i, (r, _, _)) in self.blocks.iter().enumerate() {
            by_row[*r].push(i);
        }
        let mut terms = Vec::new();
        let mut kd = 0;
        for list in &by_row {
            for &a in list {
                for &b in list {
                    let (ca, cb) = (self.blocks[a].1, self.blocks[b].1);
                    if self.col_offsets[ca] < self.col_offsets[cb] {
                        continue;
                    }
                    let lo = self.col_offsets[cb];
                    let hi = self.col_offsets[ca] + self.col_sizes[ca] - 1;
                    kd = kd.max(hi - lo);
                    terms.push((a, b));
                }
            }
        }
        let mut g = BandedHermitian::zeros(n, kd);
        for (a, b) in terms {
            let (_, ca, ma) = &self.blocks[a];
            let (_, cb, mb) = &self.blocks[b];
            let p = ma.ah_b(mb);
            let (oa, ob) = (self.col_offsets[*ca], self.col_offsets[*cb]);
            for i in 0..p.rows {
                for j in 0..p.cols {
                    let (gi, gj) = (oa + i, ob + j);
                    if gi > gj || (gi == gj && oa != ob) {
                        g.add(gi, gj, p.get(i, j))?;
                    } else if gi == gj {
                        g.add_diag(gi, p.get(i, j).re);
                    }
                }
            }
        }
        Ok(g)
    }

    /// `probe` smallest singular values, ascending.
    pub fn smallest_singular_values(&self, probe: usize) -> Result<Vec<f64>> {
        let g = self.gram()?;
        let mut vals = if g.n <= DENSE_GRAM_CAP {
            eigvalsh(&g.to_dense())?
        } else {
            let delta = 1e-7 * g.norm_bound().max(1.0);
            let factor = LdlFactor::new(&g, -delta)?;
            let o = LanczosOptions { nev: probe.min(g.n), ..Default::default() };
            shift_invert_eigs(&g, &factor, &o)?.values
        };
        vals.sort_by(f64::total_cmp);
        vals.truncate(probe);
        Ok(vals.into_iter().map(|v| v.max(0.0).sqrt()).collect())
    }

    /// Upper bound on `||L||`.
    pub fn norm_bound(&self) -> f64 {
        self.gram().map(|g| g.norm_bound().sqrt()).unwrap_or(f64::INFINITY)
    }
}

/// Kernel size read off an ascending singular value profile: the smallest
/// `k` with `s_{k+1} >= factor * max(s_k, floor)`.
pub fn kernel_size(profile: &[f64], floor: f64, factor: f64) -> Option<(usize, f64)> {
    for k in 0..profile.len() {
        let below = if k == 0 { floor } else { profile[k - 1].max(floor) };
        let ratio = profile[k] / below;
        if ratio >= factor {
            return Some((k, ratio));
        }
    }
    None
}

/// `dim ker L - dim ker L^H`, with both kernels separated from the rest of
/// the singular values by a ratio of at least `gap_factor`.
pub fn index_count(op: &TorusOperator, gap_factor: f64, probe: usize) -> Result<TorusIndex> {
    if op.rows() == 0 && op.cols() == 0 {
        // Every channel stays gapped: nothing to count.
        return Ok(TorusIndex {
            index: 0,
            kernel: 0,
            cokernel: 0,
            gap_ratio: None,
            singular_values: vec![],
            adjoint_singular_values: vec![],
            rows: 0,
            cols: 0,
        });
    }
    let s = op.smallest_singular_values(probe)?;
    let adj = op.adjoint();
    let sa = adj.smallest_singular_values(probe)?;
    let floor = 1e-7 * op.norm_bound();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    let (Some((k, r)), Some((ka, ra))) = (kernel_size(&s, floor, gap_factor), kernel_size(&sa, floor, gap_factor)) else {
        return Err(Error::Inconclusive(format!(
            "no singular value gap of ratio {gap_factor} in [{}] / adjoint [{}]",
            fmt(&s),
            fmt(&sa)
        )));
    };
    Ok(TorusIndex {
        index: k as i64 - ka as i64,
        kernel: k,
        cokernel: ka,
        gap_ratio: Some(r.min(ra)),
        singular_values: s,
        adjoint_singular_values: sa,
        rows: op.rows(),
        cols: op.cols(),
    })
}

fn channel_block(j: i64, t: f64, s: f64, w: i64, data: (f64, f64, f64, f64), p: &RadialParams) -> Result<(DenseMatrix, f64)> {
    let (r_in, r_out, b_in, b_out) = data;
    let c = ChannelSpec::new(j, t, s, w, p.n, r_in, r_out)?;
    let (diag, sub) = channel_tridiagonal(&c, b_in, b_out, p.convention)?;
    let (vals, _) = tridiagonal_eigh(&diag, &sub)?;
    let n = diag.len();
    let mut m = DenseMatrix::zeros(n);
    for (i, d) in diag.iter().enumerate() {
        m.set(i, i, Complex64::new(*d, 0.0));
    }
    for (i, z) in sub.iter().enumerate() {
        m.set(i + 1, i, *z);
        m.set(i, i + 1, z.conj());
    }
    let gap = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    Ok((m, gap))
}

/// Torus operator of an annulus family on the radial backend.
pub fn assemble_torus(d: &DomainSpec, g: &GaugeSpec, p: &RadialParams, o: &TorusOptions, clutching: Clutching) -> Result<TorusOperator> {
    if o.n_t < 8 {
        return Err(Error::Config(format!("torus needs at least 8 time slices, got {}", o.n_t)));
    }
    let (r_in, r_out, b_in, b_out, w) = annulus_data(d, g)?;
    let data = (r_in, r_out, b_in, b_out);
    let q = RadialParams { lambda: p.lambda.max(o.window), ..p.clone() };
    let (jl, jh) = resolve_j_range(d, g, &q)?;
    let ts: Vec<f64> = (0..=o.n_t).map(|i| i as f64 / o.n_t as f64).collect();
    let channel = |j: i64| -> Result<Vec<(DenseMatrix, f64)>> {
        ts.iter().map(|t| channel_block(j, *t, g.schedule.eval(*t), w, data, p)).collect()
    };
    let mut chains = Vec::new();
    if w == 0 || clutching == Clutching::Untwisted {
        for j in jl..=jh {
            let mut blocks = channel(j)?;
            if blocks.iter().all(|b| b.1 >= o.window) {
                continue;
            }
            blocks.pop();
            chains.push(Chain { blocks: blocks.into_iter().map(|b| b.0).collect(), end: ChainEnd::Periodic });
        }
    } else {
        // Channel j at t = 1 continues as channel j - w at t = 0.
        let step = w.abs();
        for class in 0..step {
            let mut js: Vec<i64> = (jl..=jh).filter(|j| (j - jl).rem_euclid(step) == class).collect();
            if w > 0 {
                js.reverse();
            }
            let mut blocks: Vec<(DenseMatrix, f64)> = Vec::new();
            for (i, j) in js.iter().enumerate() {
                let mut c = channel(*j)?;
                if i + 1 < js.len() {
                    c.pop();
                }
                blocks.extend(c);
            }
            let small: Vec<usize> = (0..blocks.len()).filter(|k| blocks[*k].1 < o.window).collect();
            let (Some(&first), Some(&last)) = (small.first(), small.last()) else { continue };
            let lo = first.saturating_sub(o.pad);
            let hi = (last + o.pad).min(blocks.len() - 1);
            if blocks[lo].1 < o.window || blocks[hi].1 < o.window {
                return Err(Error::Resolution(format!(
                    "channel chain is not gapped at its ends; widen the channel range beyond {jl}..{jh}"
                )));
            }
            chains.push(Chain { blocks: blocks.drain(lo..=hi).map(|b| b.0).collect(), end: ChainEnd::Projected });
        }
    }
    let dim: usize = chains.iter().map(|c| c.blocks.len() * c.blocks[0].n).sum();
    if dim > o.cap {
        return Err(Error::Size { dim, cap: o.cap });
    }
    let label = format!("annulus w={w} N={} N_t={} {:?}", p.n, o.n_t, clutching);
    TorusOperator::from_chains(&chains, o.n_t, label)
}

/// The same chains traversed in the opposite direction of `t`.
pub fn reversed(chains: &[Chain]) -> Vec<Chain> {
    chains.iter().map(|c| Chain { blocks: c.blocks.iter().rev().cloned().collect(), end: c.end }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoundaryValue, build_annulus};
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DenseMatrix {
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

    /// Singular values from the dense normal matrix, for cross-checks.
    fn dense_singular_values(op: &TorusOperator) -> Vec<f64> {
        let (nr, nc, l) = op.to_dense();
        let g = DenseMatrix::from_fn(nc, |i, j| (0..nr).map(|r| l[r * nc + i].conj() * l[r * nc + j]).sum());
        eigvalsh(&g).unwrap().into_iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    fn shifted(h: &DenseMatrix, x: f64) -> DenseMatrix {
        let mut m = h.clone();
        for i in 0..m.n {
            m.add(i, i, Complex64::new(x, 0.0));
        }
        m
    }

    #[test]
    fn constant_gapped_loop_is_invertible() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(6, &mut rng);
        let gap = eigvalsh(&h).unwrap().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let n_t = 16;
        let chain = Chain { blocks: vec![h; n_t], end: ChainEnd::Periodic };
        let op = TorusOperator::from_chains(&[chain], n_t, "constant").unwrap();
        let s = op.smallest_singular_values(4).unwrap();
        // |(e^{i th} - 1)/dt + lambda (e^{i th} + 1)/2| >= |lambda| when |lambda| <= 2/dt.
        assert!(s[0] >= gap * (1.0 - 1e-9), "{} < {gap}", s[0]);
        let r = index_count(&op, 50.0, 4).unwrap();
        assert_eq!((r.index, r.kernel, r.cokernel), (0, 0, 0));
    }

    #[test]
    fn banded_gram_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h0 = random_hermitian(4, &mut rng);
        let h1 = random_hermitian(4, &mut rng);
        let blocks: Vec<DenseMatrix> = (0..10)
            .map(|k| {
                let s = k as f64 / 9.0;
                DenseMatrix::from_fn(4, |i, j| h0.get(i, j) * (1.0 - s) + h1.get(i, j) * s)
            })
            .collect();
        for end in [ChainEnd::Periodic, ChainEnd::Projected] {
            let op = TorusOperator::from_chains(&[Chain { blocks: blocks.clone(), end }], 9, "mix").unwrap();
            let want = dense_singular_values(&op);
            let got = op.smallest_singular_values(want.len()).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{end:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn adjoint_has_the_same_singular_values() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let blocks: Vec<DenseMatrix> = (0..12).map(|_| random_hermitian(3, &mut rng)).collect();
        let op = TorusOperator::from_chains(&[Chain { blocks, end: ChainEnd::Projected }], 12, "random").unwrap();
        let a = dense_singular_values(&op);
        let b = dense_singular_values(&op.adjoint());
        // Nonzero singular values coincide; the shorter side has fewer zeros.
        let nz = |v: &[f64]| v.iter().copied().filter(|x| *x > 1e-8).collect::<Vec<_>>();
        let (a, b) = (nz(&a), nz(&b));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    /// Diagonal conveyor `diag(k + 1/2 - t)` strung over `periods` unit intervals:
    /// one level crosses zero downwards per period.
    fn conveyor(periods: usize, n_t: usize, levels: usize) -> Vec<DenseMatrix> {
        let base = 0.5 - (levels / 2) as f64 + (periods / 2) as f64;
        (0..=periods * n_t)
            .map(|i| {
                let t = i as f64 / n_t as f64;
                let d: Vec<f64> = (0..levels).map(|k| base + k as f64 - t).collect();
                DenseMatrix::diag(&d)
            })
            .collect()
    }

    #[test]
    fn conveyor_index_counts_crossings() {
        for periods in [1, 2] {
            let blocks = conveyor(periods, 16, 6);
            let chain = vec![Chain { blocks, end: ChainEnd::Projected }];
            let op = TorusOperator::from_chains(&chain, 16, "conveyor").unwrap();
            let r = index_count(&op, 50.0, 6).unwrap();
            assert_eq!(r.index, -(periods as i64), "{r:?}");
            let back = TorusOperator::from_chains(&reversed(&chain), 16, "reversed").unwrap();
            assert_eq!(index_count(&back, 50.0, 6).unwrap().index, periods as i64);
        }
    }

    #[test]
    fn isolated_shift_keeps_index_zero() {
        // A level dipping toward zero and returning leaves no kernel.
        let n_t = 16;
        let blocks: Vec<DenseMatrix> = (0..=n_t)
            .map(|i| {
                let t = i as f64 / n_t as f64;
                shifted(&DenseMatrix::diag(&[-1.0, 0.8 - 0.6 * (std::f64::consts::PI * t).sin(), 2.0]), 0.0)
            })
            .collect();
        let op = TorusOperator::from_chains(&[Chain { blocks, end: ChainEnd::Projected }], n_t, "dip").unwrap();
        assert_eq!(index_count(&op, 50.0, 4).unwrap().index, 0);
    }

    fn annulus(b_in: f64, b_out: f64) -> DomainSpec {
        build_annulus(0.5, 1.0, BoundaryValue::new(b_in).unwrap(), BoundaryValue::new(b_out).unwrap()).unwrap()
    }

    #[test]
    fn radial_twist_carries_the_index() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[1]);
        let p = RadialParams { n: 32, ..Default::default() };
        let o = TorusOptions { n_t: 16, ..Default::default() };
        let twisted = assemble_torus(&d, &g, &p, &o, Clutching::Twisted).unwrap();
        let r = index_count(&twisted, o.gap_factor, o.probe).unwrap();
        assert_eq!(r.index, 1, "{r:?}");
        let plain = assemble_torus(&d, &g, &p, &o, Clutching::Untwisted).unwrap();
        let u = index_count(&plain, o.gap_factor, o.probe);
        match u {
            Ok(u) => {
                assert_eq!(u.index, 0);
                assert_ne!((u.kernel, u.cokernel), (r.kernel, r.cokernel));
            }
            Err(Error::Inconclusive(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn small_time_grids_are_rejected() {
        let d = annulus(-1.0, 1.0);
        let g = GaugeSpec::from_slice(&[1]);
        let o = TorusOptions { n_t: 4, ..Default::default() };
        assert!(matches!(assemble_torus(&d, &g, &RadialParams::default(), &o, Clutching::Twisted), Err(Error::Config(_))));
        let big = TorusOptions { cap: 100, ..Default::default() };
        assert!(matches!(
            assemble_torus(&d, &g, &RadialParams { n: 32, ..Default::default() }, &big, Clutching::Twisted),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn kernel_size_reads_the_gap() {
        assert_eq!(kernel_size(&[1e-12, 0.3, 0.4], 1e-9, 50.0).map(|x| x.0), Some(1));
        assert_eq!(kernel_size(&[0.3, 0.4], 1e-9, 50.0).map(|x| x.0), Some(0));
        assert_eq!(kernel_size(&[1e-3, 2e-3, 3e-3], 1e-2, 50.0), None);
    }
}
