//! Truncated-SVD grid functions and factor-only arithmetic.
//!
//! A [`LowRankMatrix`] stores `W = U diag(S) V^T` with orthonormal `U`, `V`
//! and positive, nonincreasing `S`. Rank zero (empty factors) is a valid
//! value. Sums are recompressed with pivoted QR of the stacked factors
//! followed by an SVD of the small core ([`LrSum`]); no operation allocates
//! an `n_rows x n_cols` array.

use faer::{Mat, MatRef};

use crate::error::{mismatch, Error, Result};
use crate::sbp::ModeOp;

/// Peak-allocation instrumentation for the factor arithmetic.
///
/// Every temporary block allocated by this module is recorded; tests use
/// [`instrument::peak`] to assert that no full grid-sized array appears.
pub mod instrument {
    use std::cell::Cell;

    thread_local! {
        static PEAK: Cell<usize> = const { Cell::new(0) };
    }

    pub(crate) fn note(rows: usize, cols: usize) {
        PEAK.with(|p| p.set(p.get().max(rows * cols)));
    }

    /// Reset the peak counter of the current thread.
    pub fn reset() {
        PEAK.with(|p| p.set(0));
    }

    /// Largest temporary block (in entries) since the last reset on this thread.
    pub fn peak() -> usize {
        PEAK.with(|p| p.get())
    }
}

/// Multiple of machine epsilon below which accumulated singular values are
/// treated as rounding noise.
const NOISE_FACTOR: f64 = 64.0;

/// SVD-factored matrix `U diag(S) V^T`.
#[derive(Debug, Clone)]
pub struct LowRankMatrix {
    u: Mat<f64>,
    s: Vec<f64>,
    v: Mat<f64>,
}

impl LowRankMatrix {
    /// The zero matrix of the given shape (rank 0).
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            u: Mat::zeros(nrows, 0),
            s: Vec::new(),
            v: Mat::zeros(ncols, 0),
        }
    }

    /// Wrap factors that already form a valid SVD (orthonormal `u`, `v`,
    /// positive nonincreasing `s`).
    pub fn from_svd_parts(u: Mat<f64>, s: Vec<f64>, v: Mat<f64>) -> Result<Self> {
        if u.ncols() != s.len() || v.ncols() != s.len() {
            return Err(mismatch(
                format!("{} factor columns", s.len()),
                format!("{} and {}", u.ncols(), v.ncols()),
            ));
        }
        if s.iter().any(|&x| !(x > 0.0)) || s.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "singular values must be positive and nonincreasing".into(),
            ));
        }
        Ok(Self { u, s, v })
    }

    /// Compress a general factored product `X Y^T` (exact up to rounding
    /// and exact-zero singular values when `eps = 0`).
    pub fn from_factors(x: Mat<f64>, y: Mat<f64>, eps: f64) -> Result<Self> {
        let mut acc = LrSum::new(x.nrows(), y.nrows());
        acc.push_factors(x, y)?;
        Ok(acc.finish(eps))
    }

    /// Rank-one matrix `scale * x y^T`.
    pub fn rank1(x: &[f64], y: &[f64], scale: f64) -> Self {
        let nx = norm2(x);
        let ny = norm2(y);
        let sv = scale.abs() * nx * ny;
        if sv == 0.0 || !sv.is_finite() {
            return Self::zeros(x.len(), y.len());
        }
        let sign = scale.signum();
        Self {
            u: Mat::from_fn(x.len(), 1, |i, _| x[i] / nx),
            s: vec![sv],
            v: Mat::from_fn(y.len(), 1, |i, _| sign * y[i] / ny),
        }
    }

    /// Truncated SVD of a dense matrix (bridge for tests and small grids).
    pub fn from_dense(a: MatRef<'_, f64>, eps: f64) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        if m == 0 || n == 0 {
            return Self::zeros(m, n);
        }
        let svd = a.thin_svd().expect("SVD failed to converge");
        let k = m.min(n);
        let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
        let r = truncation_rank(&s, eps);
        Self {
            u: svd.U().subcols(0, r).to_owned(),
            s: s[..r].to_vec(),
            v: svd.V().subcols(0, r).to_owned(),
        }
    }

    /// Dense reconstruction.
    pub fn to_dense(&self) -> Mat<f64> {
        let us = Mat::from_fn(self.nrows(), self.rank(), |i, j| self.u[(i, j)] * self.s[j]);
        &us * self.v.transpose()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// Number of stored floating point values.
    pub fn storage(&self) -> usize {
        self.rank() * (self.nrows() + self.ncols() + 1)
    }

    /// `alpha * self`, exact.
    pub fn scaled(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.nrows(), self.ncols());
        }
        let mut out = self.clone();
        for s in &mut out.s {
            *s *= alpha.abs();
        }
        if alpha < 0.0 {
            for j in 0..out.v.ncols() {
                for i in 0..out.v.nrows() {
                    out.v[(i, j)] = -out.v[(i, j)];
                }
            }
        }
        out
    }

    /// `w^T W` (a row-direction trace; length `ncols`).
    pub fn left_trace(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.nrows());
        let coef: Vec<f64> = (0..self.rank())
            .map(|k| self.s[k] * (0..w.len()).map(|i| w[i] * self.u[(i, k)]).sum::<f64>())
            .collect();
        (0..self.ncols())
            .map(|j| (0..self.rank()).map(|k| self.v[(j, k)] * coef[k]).sum())
            .collect()
    }

    /// `W w` (a column-direction trace; length `nrows`).
    pub fn right_trace(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.ncols());
        let coef: Vec<f64> = (0..self.rank())
            .map(|k| self.s[k] * (0..w.len()).map(|i| w[i] * self.v[(i, k)]).sum::<f64>())
            .collect();
        (0..self.nrows())
            .map(|j| (0..self.rank()).map(|k| self.u[(j, k)] * coef[k]).sum())
            .collect()
    }

    /// Value at grid point `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (0..self.rank()).map(|k| self.u[(i, k)] * self.s[k] * self.v[(j, k)]).sum()
    }

    /// `U diag(S)` as a new matrix.
    pub fn us(&self) -> Mat<f64> {
        Mat::from_fn(self.nrows(), self.rank(), |i, j| self.u[(i, j)] * self.s[j])
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
}

/// Relative margin on the tail test so that a tail equal to `eps` up to
/// rounding is kept rather than discarded.
const TAIL_MARGIN: f64 = 1e-12;

/// Smallest rank `r` whose discarded tail satisfies `sqrt(sum_{i>=r} s_i^2) < eps`.
/// Exact zeros are always discarded. `s` must be nonincreasing.
pub fn truncation_rank(s: &[f64], eps: f64) -> usize {
    let mut r = s.len();
    let mut tail = 0.0;
    let limit = eps * (1.0 - TAIL_MARGIN);
    while r > 0 {
        let t = tail + s[r - 1] * s[r - 1];
        if s[r - 1] == 0.0 || t.sqrt() < limit {
            tail = t;
            r -= 1;
        } else {
            break;
        }
    }
    r
}

/// Tail-truncate `a` at absolute Frobenius tolerance `eps`.
pub fn truncate(a: &LowRankMatrix, eps: f64) -> LowRankMatrix {
    let r = truncation_rank(&a.s, eps);
    if r == a.rank() {
        return a.clone();
    }
    LowRankMatrix {
        u: a.u.subcols(0, r).to_owned(),
        s: a.s[..r].to_vec(),
        v: a.v.subcols(0, r).to_owned(),
    }
}

/// Accumulator for a sum of factored terms, recompressed on [`LrSum::finish`].
///
/// Each term contributes `X_k diag(w_k) Y_k^T`; the blocks are concatenated
/// and compressed by QR of both stacked factors followed by a truncated SVD
/// of the small core `R_1 diag(w) R_2^T`.
#[derive(Debug, Clone)]
pub struct LrSum {
    m: usize,
    n: usize,
    xs: Vec<Mat<f64>>,
    ws: Vec<Vec<f64>>,
    ys: Vec<Mat<f64>>,
}

impl LrSum {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { m: nrows, n: ncols, xs: Vec::new(), ws: Vec::new(), ys: Vec::new() }
    }

    fn check(&self, m: usize, n: usize) -> Result<()> {
        if m != self.m || n != self.n {
            return Err(mismatch(format!("{}x{}", self.m, self.n), format!("{m}x{n}")));
        }
        Ok(())
    }

    /// Add `coef * a`.
    pub fn push(&mut self, coef: f64, a: &LowRankMatrix) -> Result<&mut Self> {
        self.check(a.nrows(), a.ncols())?;
        if coef != 0.0 && a.rank() > 0 {
            self.xs.push(a.u.clone());
            self.ws.push(a.s.iter().map(|s| coef * s).collect());
            self.ys.push(a.v.clone());
        }
        Ok(self)
    }

    /// Add a general product `x y^T`.
    pub fn push_factors(&mut self, x: Mat<f64>, y: Mat<f64>) -> Result<&mut Self> {
        self.check(x.nrows(), y.nrows())?;
        if x.ncols() != y.ncols() {
            return Err(mismatch(x.ncols(), y.ncols()));
        }
        if x.ncols() > 0 {
            self.ws.push(vec![1.0; x.ncols()]);
            self.xs.push(x);
            self.ys.push(y);
        }
        Ok(self)
    }

    /// Add `coef * x y^T` for vectors.
    pub fn push_outer(&mut self, coef: f64, x: &[f64], y: &[f64]) -> Result<&mut Self> {
        self.check(x.len(), y.len())?;
        if coef != 0.0 {
            self.xs.push(Mat::from_fn(x.len(), 1, |i, _| x[i]));
            self.ws.push(vec![coef]);
            self.ys.push(Mat::from_fn(y.len(), 1, |i, _| y[i]));
        }
        Ok(self)
    }

    /// Total number of stacked columns.
    pub fn stacked_rank(&self) -> usize {
        self.ws.iter().map(Vec::len).sum()
    }

    /// Rounding level of the accumulated sum: a multiple of machine epsilon
    /// times `sum_k |w_k| ||x_k|| ||y_k||`. Singular values below it are noise.
    fn noise_floor(&self) -> f64 {
        let col = |m: &Mat<f64>, j: usize| m.col(j).norm_l2();
        let mut bound = 0.0;
        for ((x, w), y) in self.xs.iter().zip(&self.ws).zip(&self.ys) {
            for (j, wj) in w.iter().enumerate() {
                bound += wj.abs() * col(x, j) * col(y, j);
            }
        }
        NOISE_FACTOR * f64::EPSILON * bound
    }

    /// Recompress to a [`LowRankMatrix`] with absolute tolerance `eps`
    /// (never below the rounding level of the sum).
    pub fn finish(self, eps: f64) -> LowRankMatrix {
        let (m, n) = (self.m, self.n);
        let rtot = self.stacked_rank();
        if rtot == 0 || m == 0 || n == 0 {
            return LowRankMatrix::zeros(m, n);
        }
        instrument::note(m, rtot);
        instrument::note(n, rtot);
        let mut ucat = Mat::<f64>::zeros(m, rtot);
        let mut vcat = Mat::<f64>::zeros(n, rtot);
        let mut d = Vec::with_capacity(rtot);
        let mut off = 0;
        for ((x, w), y) in self.xs.iter().zip(&self.ws).zip(&self.ys) {
            let k = w.len();
            ucat.subcols_mut(off, k).copy_from(x);
            vcat.subcols_mut(off, k).copy_from(y);
            d.extend_from_slice(w);
            off += k;
        }
        let (q1, r1) = orthogonal_basis(ucat);
        let (q2, r2) = orthogonal_basis(vcat);
        // core = R1 diag(d) R2^T
        let (k1, k2) = (r1.nrows(), r2.nrows());
        instrument::note(k1, k2);
        let r1d = Mat::from_fn(k1, rtot, |i, j| r1[(i, j)] * d[j]);
        let core = &r1d * r2.transpose();
        if core.norm_max() == 0.0 {
            return LowRankMatrix::zeros(m, n);
        }
        let svd = core.thin_svd().expect("SVD failed to converge");
        let k = k1.min(k2);
        let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
        let r = truncation_rank(&s, eps.max(self.noise_floor()));
        if r == 0 {
            return LowRankMatrix::zeros(m, n);
        }
        let expand = |q: Option<Mat<f64>>, w: MatRef<'_, f64>| match q {
            Some(q) => &q * w,
            None => w.to_owned(),
        };
        let u = expand(q1, svd.U().subcols(0, r));
        let v = expand(q2, svd.V().subcols(0, r));
        LowRankMatrix { u, s: s[..r].to_vec(), v }
    }
}

/// Factor `a = Q R` with orthonormal `Q`. When `a` has at least as many
/// columns as rows the factorization cannot reduce the size, so `Q = I` is
/// returned as `None` and `R = a`.
fn orthogonal_basis(a: Mat<f64>) -> (Option<Mat<f64>>, Mat<f64>) {
    if a.ncols() >= a.nrows() {
        return (None, a);
    }
    let qr = a.qr();
    (Some(qr.compute_thin_Q()), qr.thin_R().to_owned())
}

/// Weighted sum `sum_k c_k A_k`, recompressed at absolute tolerance `eps`.
pub fn lr_sum(terms: &[(f64, &LowRankMatrix)], eps: f64) -> Result<LowRankMatrix> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidArgument("lr_sum needs at least one term".into()))?;
    let mut acc = LrSum::new(first.1.nrows(), first.1.ncols());
    for (c, a) in terms {
        acc.push(*c, a)?;
    }
    Ok(acc.finish(eps))
}

/// `M A`, refactored to SVD form.
pub fn apply_left(op: &dyn ModeOp, a: &LowRankMatrix) -> Result<LowRankMatrix> {
    if op.dim() != a.nrows() {
        return Err(mismatch(a.nrows(), op.dim()));
    }
    instrument::note(a.nrows(), a.rank());
    let x = op.apply(a.us().as_ref());
    LowRankMatrix::from_factors(x, a.v.clone(), 0.0)
}

/// `A M^T`, refactored to SVD form.
pub fn apply_right(op: &dyn ModeOp, a: &LowRankMatrix) -> Result<LowRankMatrix> {
    if op.dim() != a.ncols() {
        return Err(mismatch(a.ncols(), op.dim()));
    }
    instrument::note(a.ncols(), a.rank());
    let y = op.apply(a.v.as_ref());
    LowRankMatrix::from_factors(a.us(), y, 0.0)
}

/// Frobenius inner product computed from `r_A x r_B` Gram matrices.
pub fn inner(a: &LowRankMatrix, b: &LowRankMatrix) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(mismatch(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    if a.rank() == 0 || b.rank() == 0 {
        return Ok(0.0);
    }
    let gu = a.u.transpose() * &b.u;
    let gv = a.v.transpose() * &b.v;
    let mut acc = 0.0;
    for j in 0..b.rank() {
        for i in 0..a.rank() {
            acc += a.s[i] * b.s[j] * gu[(i, j)] * gv[(i, j)];
        }
    }
    Ok(acc)
}

/// Frobenius norm `sqrt(sum s_i^2)`.
pub fn norm(a: &LowRankMatrix) -> f64 {
    norm2(&a.s)
}
