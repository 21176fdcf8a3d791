//! Three-dimensional tensor trains.
//!
//! A [`TensorTrain`] represents `A(i1, i2, i3) = G1(i1) G2(i2) G3(i3)` with
//! cores `G_k` of shape `r_{k-1} x n_k x r_k` and `r_0 = r_3 = 1`. Each core
//! is stored column-major with index `a + r_{k-1} (i + n_k b)`, so both the
//! left unfolding (`(r_{k-1} n_k) x r_k`) and the right unfolding
//! (`r_{k-1} x (n_k r_k)`) are zero-copy matrix views.
//!
//! Rounding is the two-sweep procedure: right-to-left orthogonalization by
//! QR, then left-to-right truncated SVDs with the error budget split
//! uniformly over the two internal unfoldings.

use faer::{Mat, MatRef};

use crate::error::{mismatch, Error, Result};
use crate::lowrank::truncation_rank;
use crate::sbp::ModeOp;

/// Largest tensor that may be densified.
pub const DENSE_GUARD: usize = 1_000_000;

/// Multiple of machine epsilon (relative to the product of core norms)
/// below which singular values are treated as rounding noise.
const NOISE_FACTOR: f64 = 64.0;

#[derive(Debug, Clone)]
pub struct TensorTrain {
    n: [usize; 3],
    r: [usize; 4],
    cores: [Vec<f64>; 3],
}

impl TensorTrain {
    /// The zero tensor (ranks `(1, 0, 0, 1)`).
    pub fn zeros(n: [usize; 3]) -> Self {
        Self { n, r: [1, 0, 0, 1], cores: [Vec::new(), Vec::new(), Vec::new()] }
    }

    /// Build from explicit cores; validates shapes.
    pub fn from_cores(n: [usize; 3], r: [usize; 4], cores: [Vec<f64>; 3]) -> Result<Self> {
        if r[0] != 1 || r[3] != 1 {
            return Err(Error::InvalidArgument("boundary TT-ranks must be 1".into()));
        }
        for k in 0..3 {
            let len = r[k] * n[k] * r[k + 1];
            if cores[k].len() != len {
                return Err(mismatch(len, cores[k].len()));
            }
        }
        let t = Self { n, r, cores };
        Ok(if t.r[1] == 0 || t.r[2] == 0 { Self::zeros(n) } else { t })
    }

    /// Rank-one tensor `scale * v1 (x) v2 (x) v3`.
    pub fn rank1(v1: &[f64], v2: &[f64], v3: &[f64], scale: f64) -> Self {
        let n = [v1.len(), v2.len(), v3.len()];
        if scale == 0.0 {
            return Self::zeros(n);
        }
        Self {
            n,
            r: [1, 1, 1, 1],
            cores: [v1.iter().map(|x| scale * x).collect(), v2.to_vec(), v3.to_vec()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.n
    }

    pub fn ranks(&self) -> [usize; 4] {
        self.r
    }

    pub fn max_rank(&self) -> usize {
        self.r[1].max(self.r[2])
    }

    pub fn is_zero(&self) -> bool {
        self.r[1] == 0 || self.r[2] == 0
    }

    pub fn core(&self, k: usize) -> &[f64] {
        &self.cores[k]
    }

    /// Number of stored values.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    fn left(&self, k: usize) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.cores[k], self.r[k] * self.n[k], self.r[k + 1])
    }

    fn right(&self, k: usize) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.cores[k], self.r[k], self.n[k] * self.r[k + 1])
    }

    /// Element `A(i1, i2, i3)`.
    pub fn entry(&self, i: [usize; 3]) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let mut v = vec![1.0];
        for k in 0..3 {
            let (ra, rb, n) = (self.r[k], self.r[k + 1], self.n[k]);
            let c = &self.cores[k];
            v = (0..rb)
                .map(|b| (0..ra).map(|a| v[a] * c[a + ra * (i[k] + n * b)]).sum())
                .collect();
        }
        v[0]
    }

    /// `alpha * self`, exact.
    pub fn scaled(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.n);
        }
        let mut out = self.clone();
        for x in &mut out.cores[0] {
            *x *= alpha;
        }
        out
    }

    /// Dense array, column-major with index `i1 + n1 (i2 + n2 i3)`.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let total = self.n.iter().product::<usize>();
        if total > DENSE_GUARD {
            return Err(Error::SizeGuard(total));
        }
        if self.is_zero() {
            return Ok(vec![0.0; total]);
        }
        let c01 = self.left(0) * self.right(1); // n1 x (n2 r2)
        let c01 = col_major_vec(c01.as_ref());
        let c01 = MatRef::from_column_major_slice(&c01, self.n[0] * self.n[1], self.r[2]);
        let full = c01 * self.right(2); // (n1 n2) x n3
        Ok(col_major_vec(full.as_ref()))
    }
}

fn col_major_vec(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn fro(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dims(a: &TensorTrain, b: &TensorTrain) -> Result<()> {
    if a.n != b.n {
        return Err(mismatch(format!("{:?}", a.n), format!("{:?}", b.n)));
    }
    Ok(())
}

/// Weighted sum by core concatenation; ranks add, no rounding.
pub fn tt_sum(terms: &[(f64, &TensorTrain)]) -> Result<TensorTrain> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidArgument("tt_sum needs at least one term".into()))?;
    let n = first.1.n;
    for (_, t) in terms {
        check_dims(first.1, t)?;
    }
    let live: Vec<(f64, &TensorTrain)> =
        terms.iter().filter(|(c, t)| *c != 0.0 && !t.is_zero()).map(|(c, t)| (*c, *t)).collect();
    if live.is_empty() {
        return Ok(TensorTrain::zeros(n));
    }
    let r1: usize = live.iter().map(|(_, t)| t.r[1]).sum();
    let r2: usize = live.iter().map(|(_, t)| t.r[2]).sum();
    let mut c0 = vec![0.0; n[0] * r1];
    let mut c1 = vec![0.0; r1 * n[1] * r2];
    let mut c2 = vec![0.0; r2 * n[2]];
    let (mut o1, mut o2) = (0, 0);
    for (coef, t) in &live {
        let (s1, s2) = (t.r[1], t.r[2]);
        for b in 0..s1 {
            for i in 0..n[0] {
                c0[i + n[0] * (o1 + b)] = coef * t.cores[0][i + n[0] * b];
            }
        }
        for b in 0..s2 {
            for i in 0..n[1] {
                for a in 0..s1 {
                    c1[(o1 + a) + r1 * (i + n[1] * (o2 + b))] = t.cores[1][a + s1 * (i + n[1] * b)];
                }
            }
        }
        for i in 0..n[2] {
            for a in 0..s2 {
                c2[(o2 + a) + r2 * i] = t.cores[2][a + s2 * i];
            }
        }
        o1 += s1;
        o2 += s2;
    }
    TensorTrain::from_cores(n, [1, r1, r2, 1], [c0, c1, c2])
}

/// `A + B` without rounding.
pub fn tt_add(a: &TensorTrain, b: &TensorTrain) -> Result<TensorTrain> {
    tt_sum(&[(1.0, a), (1.0, b)])
}

/// Apply `M` along mode `k`: only core `k` changes.
pub fn tt_apply_mode(op: &dyn ModeOp, a: &TensorTrain, k: usize) -> Result<TensorTrain> {
    if k > 2 {
        return Err(Error::InvalidArgument(format!("mode {k} out of range")));
    }
    if op.dim() != a.n[k] {
        return Err(mismatch(a.n[k], op.dim()));
    }
    let mut out = a.clone();
    if a.is_zero() {
        return Ok(out);
    }
    out.cores[k] = mode_apply_core(op, &a.cores[k], a.r[k], a.n[k], a.r[k + 1]);
    Ok(out)
}

fn mode_apply_core(op: &dyn ModeOp, core: &[f64], ra: usize, n: usize, rb: usize) -> Vec<f64> {
    // Gather all (a, b) fibres into one n x (ra rb) block so the operator is
    // applied with a single call.
    let fib = Mat::from_fn(n, ra * rb, |i, col| {
        let (a, b) = (col % ra, col / ra);
        core[a + ra * (i + n * b)]
    });
    let y = op.apply(fib.as_ref());
    let mut out = vec![0.0; core.len()];
    for col in 0..ra * rb {
        let (a, b) = (col % ra, col / ra);
        for i in 0..n {
            out[a + ra * (i + n * b)] = y[(i, col)];
        }
    }
    out
}

/// Elementwise product with the rank-one tensor `v1 (x) v2 (x) v3`.
pub fn tt_hadamard_rank1(a: &TensorTrain, v: [&[f64]; 3]) -> Result<TensorTrain> {
    for k in 0..3 {
        if v[k].len() != a.n[k] {
            return Err(mismatch(a.n[k], v[k].len()));
        }
    }
    let mut out = a.clone();
    if a.is_zero() {
        return Ok(out);
    }
    for k in 0..3 {
        let (ra, n) = (a.r[k], a.n[k]);
        for (idx, x) in out.cores[k].iter_mut().enumerate() {
            let i = (idx / ra) % n;
            *x *= v[k][i];
        }
    }
    Ok(out)
}

/// `sum_k A x_k N_k` as a single TT with doubled internal ranks.
pub fn tt_mode_sum(a: &TensorTrain, ops: [&dyn ModeOp; 3]) -> Result<TensorTrain> {
    for k in 0..3 {
        if ops[k].dim() != a.n[k] {
            return Err(mismatch(a.n[k], ops[k].dim()));
        }
    }
    if a.is_zero() {
        return Ok(TensorTrain::zeros(a.n));
    }
    let n = a.n;
    let (r1, r2) = (a.r[1], a.r[2]);
    let m0 = mode_apply_core(ops[0], &a.cores[0], 1, n[0], r1);
    let m1 = mode_apply_core(ops[1], &a.cores[1], r1, n[1], r2);
    let m2 = mode_apply_core(ops[2], &a.cores[2], r2, n[2], 1);
    // core 0: [N1 G1 | G1]
    let mut c0 = Vec::with_capacity(2 * n[0] * r1);
    c0.extend_from_slice(&m0);
    c0.extend_from_slice(&a.cores[0]);
    // core 1: [[G2, 0], [N2 G2, G2]]
    let (q1, q2) = (2 * r1, 2 * r2);
    let mut c1 = vec![0.0; q1 * n[1] * q2];
    for b in 0..r2 {
        for i in 0..n[1] {
            for aa in 0..r1 {
                let g = a.cores[1][aa + r1 * (i + n[1] * b)];
                let mg = m1[aa + r1 * (i + n[1] * b)];
                c1[aa + q1 * (i + n[1] * b)] = g;
                c1[(r1 + aa) + q1 * (i + n[1] * b)] = mg;
                c1[(r1 + aa) + q1 * (i + n[1] * (r2 + b))] = g;
            }
        }
    }
    // core 2: [G3; N3 G3]
    let mut c2 = vec![0.0; q2 * n[2]];
    for i in 0..n[2] {
        for aa in 0..r2 {
            c2[aa + q2 * i] = a.cores[2][aa + r2 * i];
            c2[(r2 + aa) + q2 * i] = m2[aa + r2 * i];
        }
    }
    TensorTrain::from_cores(n, [1, q1, q2, 1], [c0, c1, c2])
}

/// Frobenius inner product by sequential core contraction.
pub fn tt_inner(a: &TensorTrain, b: &TensorTrain) -> Result<f64> {
    check_dims(a, b)?;
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    let mut p = Mat::<f64>::from_fn(1, 1, |_, _| 1.0);
    for k in 0..3 {
        // (P B_right) reshaped to (ra n) x rb', then A_left^T times it.
        let pb = &p * b.right(k);
        let pb = col_major_vec(pb.as_ref());
        let pb = MatRef::from_column_major_slice(&pb, a.r[k] * a.n[k], b.r[k + 1]);
        p = a.left(k).transpose() * pb;
    }
    Ok(p[(0, 0)])
}

/// Frobenius norm via the inner product.
pub fn tt_norm(a: &TensorTrain) -> f64 {
    tt_inner(a, a).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
}

/// `||A - B||` evaluated through orthogonalization (accurate for nearly equal inputs).
pub fn tt_dist(a: &TensorTrain, b: &TensorTrain) -> Result<f64> {
    let d = tt_sum(&[(1.0, a), (-1.0, b)])?;
    Ok(orthogonalized(d).1)
}

/// Right-to-left orthogonalization; returns the tensor and its norm.
fn orthogonalized(mut t: TensorTrain) -> (TensorTrain, f64) {
    if t.is_zero() {
        return (t, 0.0);
    }
    for k in [2usize, 1] {
        let (ra, n, rb) = (t.r[k], t.n[k], t.r[k + 1]);
        // X^T = Q R with X the right unfolding.
        let xt = t.right(k).transpose().to_owned();
        let qr = xt.qr();
        let q = qr.compute_thin_Q(); // (n rb) x kk
        let rr = qr.thin_R(); // kk x ra
        let kk = q.ncols();
        let mut newc = vec![0.0; kk * n * rb];
        for col in 0..n * rb {
            for a in 0..kk {
                newc[a + kk * col] = q[(col, a)];
            }
        }
        let prev = t.left(k - 1) * rr.transpose(); // (r_{k-1} n_{k-1}) x kk
        t.cores[k - 1] = col_major_vec(prev.as_ref());
        t.cores[k] = newc;
        t.r[k] = kk;
        let _ = ra;
    }
    let nrm = fro(&t.cores[0]);
    (t, nrm)
}

fn noise_floor(t: &TensorTrain) -> f64 {
    NOISE_FACTOR * f64::EPSILON * t.cores.iter().map(|c| fro(c)).product::<f64>()
}

/// Round with per-unfolding threshold `thr(norm)`.
fn round_with(a: &TensorTrain, thr: impl Fn(f64) -> f64) -> TensorTrain {
    if a.is_zero() {
        return TensorTrain::zeros(a.n);
    }
    let floor = noise_floor(a);
    let (mut t, nrm) = orthogonalized(a.clone());
    if nrm == 0.0 {
        return TensorTrain::zeros(a.n);
    }
    let thr = thr(nrm).max(floor);
    for k in 0..2 {
        let svd = t.left(k).thin_svd().expect("SVD failed to converge");
        let kk = t.left(k).nrows().min(t.left(k).ncols());
        let s: Vec<f64> = (0..kk).map(|i| svd.S()[i]).collect();
        let rho = truncation_rank(&s, thr);
        if rho == 0 {
            return TensorTrain::zeros(a.n);
        }
        let u = svd.U().subcols(0, rho);
        let svt = Mat::from_fn(rho, t.r[k + 1], |i, j| s[i] * svd.V()[(j, i)]);
        let next = &svt * t.right(k + 1); // rho x (n rb)
        t.cores[k] = col_major_vec(u);
        t.cores[k + 1] = col_major_vec(next.as_ref());
        t.r[k + 1] = rho;
    }
    t
}

/// Relative rounding: `||A - round(A)|| <= (delta / sqrt 2) ||A||`.
pub fn tt_round(a: &TensorTrain, delta: f64) -> TensorTrain {
    // budget (delta / sqrt 2) ||A|| split over the d - 1 = 2 unfoldings
    round_with(a, |nrm| delta * nrm / 2.0)
}

/// Absolute rounding: `||A - round(A)|| < eps`.
pub fn tt_round_abs(a: &TensorTrain, eps: f64) -> TensorTrain {
    round_with(a, |_| eps / std::f64::consts::SQRT_2)
}

/// TT-SVD of a dense array (index `i1 + n1 (i2 + n2 i3)`), relative tolerance `delta`.
pub fn tt_from_dense(data: &[f64], n: [usize; 3], delta: f64) -> Result<TensorTrain> {
    let total = n.iter().product::<usize>();
    if total > DENSE_GUARD {
        return Err(Error::SizeGuard(total));
    }
    if data.len() != total {
        return Err(mismatch(total, data.len()));
    }
    let nrm = fro(data);
    if nrm == 0.0 {
        return Ok(TensorTrain::zeros(n));
    }
    let thr = (delta * nrm / 2.0).max(NOISE_FACTOR * f64::EPSILON * nrm);
    let m1 = MatRef::from_column_major_slice(data, n[0], n[1] * n[2]);
    let svd = m1.thin_svd().expect("SVD failed to converge");
    let k = n[0].min(n[1] * n[2]);
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let r1 = truncation_rank(&s, thr);
    if r1 == 0 {
        return Ok(TensorTrain::zeros(n));
    }
    let c0 = col_major_vec(svd.U().subcols(0, r1));
    let rest = Mat::from_fn(r1, n[1] * n[2], |i, j| s[i] * svd.V()[(j, i)]);
    let rest = col_major_vec(rest.as_ref());
    let m2 = MatRef::from_column_major_slice(&rest, r1 * n[1], n[2]);
    let svd2 = m2.thin_svd().expect("SVD failed to converge");
    let k2 = (r1 * n[1]).min(n[2]);
    let s2: Vec<f64> = (0..k2).map(|i| svd2.S()[i]).collect();
    let r2 = truncation_rank(&s2, thr);
    if r2 == 0 {
        return Ok(TensorTrain::zeros(n));
    }
    let c1 = col_major_vec(svd2.U().subcols(0, r2));
    let c2 = col_major_vec(Mat::from_fn(r2, n[2], |i, j| s2[i] * svd2.V()[(j, i)]).as_ref());
    TensorTrain::from_cores(n, [1, r1, r2, 1], [c0, c1, c2])
}

/// Dense reconstruction (test bridge; guarded).
pub fn tt_to_dense(a: &TensorTrain) -> Result<Vec<f64>> {
    a.to_dense()
}
