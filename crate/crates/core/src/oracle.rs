//! Dense full-rank reference implementations.
//!
//! Every low-rank code path has a dense counterpart here, algorithmically
//! identical with truncation disabled. Dense linear solves are guarded to
//! at most [`DENSE_SOLVE_LIMIT`] unknowns so accidental densification of a
//! large problem fails fast.

use faer::{Mat, MatRef};

use crate::domain::{gaussian_source_dense, SourceKind};
use crate::lowrank::truncation_rank;
use crate::sbp::ModeOp;
use crate::wave2d::{FaceSat, Wave2D};
use crate::wave3d::{face_greens, Wave3D};
use crate::waveholtz::{WaveField, WaveSolver};

/// Largest number of unknowns accepted by a dense linear solve.
pub const DENSE_SOLVE_LIMIT: usize = 10_000;

/// Dense truncated SVD.
#[derive(Debug, Clone)]
pub struct DenseSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl DenseSvd {
    pub fn reconstruct(&self) -> Mat<f64> {
        let us = Mat::from_fn(self.u.nrows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        &us * self.v.transpose()
    }
}

/// Full SVD followed by the tail-truncation rule.
pub fn dense_truncate(a: MatRef<'_, f64>, eps: f64) -> DenseSvd {
    let svd = a.thin_svd().expect("SVD failed to converge");
    let k = a.nrows().min(a.ncols());
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let r = truncation_rank(&s, eps);
    DenseSvd {
        u: svd.U().subcols(0, r).to_owned(),
        s: s[..r].to_vec(),
        v: svd.V().subcols(0, r).to_owned(),
    }
}

/// Solve `A X - X B^T = R` through the Kronecker system
/// `(I ⊗ A - B ⊗ I) vec(X) = vec(R)`.
pub fn dense_sylvester(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    r: MatRef<'_, f64>,
) -> crate::Result<Mat<f64>> {
    use faer::linalg::solvers::Solve;
    let (m, n) = (a.nrows(), b.nrows());
    if a.ncols() != m || b.ncols() != n || r.nrows() != m || r.ncols() != n {
        return Err(crate::error::mismatch(format!("{m}x{n}"), format!("{}x{}", r.nrows(), r.ncols())));
    }
    let dim = m * n;
    if dim > DENSE_SOLVE_LIMIT {
        return Err(crate::Error::SizeGuard(dim));
    }
    let k = Mat::from_fn(dim, dim, |p, q| {
        let (i, j) = (p % m, p / m);
        let (k, l) = (q % m, q / m);
        let mut v = 0.0;
        if j == l {
            v += a[(i, k)];
        }
        if i == k {
            v -= b[(j, l)];
        }
        v
    });
    let rhs = Mat::from_fn(dim, 1, |p, _| r[(p % m, p / m)]);
    let x = k.partial_piv_lu().solve(&rhs);
    if (0..dim).any(|p| !x[(p, 0)].is_finite()) {
        return Err(crate::Error::Singular("Kronecker system singular".into()));
    }
    Ok(Mat::from_fn(m, n, |i, j| x[(i + m * j, 0)]))
}

/// Anderson weights as the dense least-squares argmin of
/// `|| [vec dF_0 ... vec dF_{m-1}] u - vec F ||` over all blocks stacked.
///
/// `df[i][l]` is difference `i` (oldest first) on block `l`; `f[l]` the newest residual.
pub fn dense_aa_weights(df: &[Vec<Mat<f64>>], f: &[Mat<f64>]) -> crate::Result<Vec<f64>> {
    let m = df.len();
    let len: usize = f.iter().map(|x| x.nrows() * x.ncols()).sum();
    if df.iter().any(|d| d.len() != f.len()) {
        return Err(crate::error::mismatch(f.len(), df.iter().map(Vec::len).max().unwrap_or(0)));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let stack = |blocks: &[Mat<f64>]| -> Vec<f64> {
        blocks.iter().flat_map(|b| (0..b.ncols()).flat_map(move |j| (0..b.nrows()).map(move |i| b[(i, j)]))).collect()
    };
    let cols: Vec<Vec<f64>> = df.iter().map(|d| stack(d)).collect();
    let d = Mat::from_fn(len, m, |i, j| cols[j][i]);
    let rhs = stack(f);
    let svd = d.thin_svd().map_err(|_| crate::Error::Singular("SVD failed to converge".into()))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let smax = (0..m).map(|k| s[k]).fold(0.0, f64::max);
    let mut x = vec![0.0; m];
    for k in 0..m {
        if s[k] <= 1e-13 * smax {
            continue;
        }
        let c: f64 = (0..len).map(|i| u[(i, k)] * rhs[i]).sum::<f64>() / s[k];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += v[(j, k)] * c;
        }
    }
    Ok(x)
}

impl WaveField for Mat<f64> {
    fn combine(terms: &[(f64, &Self)], _eps: f64) -> crate::Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| crate::Error::InvalidArgument("combine needs at least one term".into()))?;
        let mut out = Mat::zeros(first.1.nrows(), first.1.ncols());
        for (c, a) in terms {
            if a.nrows() != out.nrows() || a.ncols() != out.ncols() {
                return Err(crate::error::mismatch(out.nrows(), a.nrows()));
            }
            out += *a * *c;
        }
        Ok(out)
    }

    fn norm(&self) -> f64 {
        self.norm_l2()
    }

    fn inner(&self, other: &Self) -> crate::Result<f64> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(crate::error::mismatch(self.nrows(), other.nrows()));
        }
        let mut acc = 0.0;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                acc += self[(i, j)] * other[(i, j)];
            }
        }
        Ok(acc)
    }

    fn dist(&self, other: &Self) -> crate::Result<f64> {
        Ok((self - other).norm_l2())
    }

    fn rank(&self) -> usize {
        0
    }

    fn zeros_like(&self) -> Self {
        Mat::zeros(self.nrows(), self.ncols())
    }
}

/// Dense 2D leapfrog with the same operators as [`Wave2D`], no truncation.
///
/// The boundary-implicit update is solved pointwise:
/// `X_ij = R_ij / (1 + p_i + q_j)`.
pub struct DenseWave2D<'a> {
    pub lr: &'a Wave2D,
    forcing: Vec<Mat<f64>>,
}

impl<'a> DenseWave2D<'a> {
    pub fn new(lr: &'a Wave2D) -> Self {
        let d = &lr.domain;
        let forcing = (0..d.num_blocks())
            .map(|id| match lr.source {
                Some(s) if s.kind == SourceKind::GaussianPoint => gaussian_source_dense(&s, d, id),
                _ => Mat::zeros(d.n, d.n),
            })
            .collect();
        Self { lr, forcing }
    }

    /// `L(W)_id - f cos(omega t)`.
    pub fn laplacian(&self, id: usize, w: &[Mat<f64>], t: f64) -> Mat<f64> {
        let lap = &self.lr.laps[id];
        let n = lap.n;
        let wi = &w[id];
        let mut out = lap.axis[0].apply(wi.as_ref());
        out += lap.axis[1].apply(wi.transpose()).transpose();
        for (f, face) in lap.faces.iter().enumerate() {
            let axis = f / 2;
            let mut outer = |x: &[f64], y: &[f64]| {
                for j in 0..n {
                    for i in 0..n {
                        out[(i, j)] += if axis == 0 { x[i] * y[j] } else { y[i] * x[j] };
                    }
                }
            };
            match face {
                FaceSat::Interface { neighbor, x, w: wv } => {
                    let v = &w[*neighbor];
                    for k in 0..2 {
                        let y: Vec<f64> = (0..n)
                            .map(|j| {
                                (0..n).map(|i| wv[k][i] * if axis == 0 { v[(i, j)] } else { v[(j, i)] }).sum()
                            })
                            .collect();
                        outer(&x[k], &y);
                    }
                }
                FaceSat::Dirichlet { x } => {
                    if let Some(data) = &self.lr.dirichlet[id][f] {
                        outer(x, &data.at(self.lr.omega, t));
                    }
                }
                _ => {}
            }
        }
        out - &self.forcing[id] * (self.lr.omega * t).cos()
    }

    fn velocity_term(&self, id: usize, a: &Mat<f64>) -> Mat<f64> {
        let (qx, qy) = (self.lr.velocity_diag(id, 0), self.lr.velocity_diag(id, 1));
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| (qx[i] + qy[j]) * a[(i, j)])
    }
}

impl WaveSolver for DenseWave2D<'_> {
    type Field = Mat<f64>;

    fn num_blocks(&self) -> usize {
        self.lr.num_blocks()
    }

    fn h(&self) -> f64 {
        self.lr.h()
    }

    fn omega(&self) -> f64 {
        self.lr.omega
    }

    fn dt(&self) -> f64 {
        self.lr.dt()
    }

    fn n_steps(&self) -> usize {
        self.lr.n_steps()
    }

    fn zero_state(&self) -> Vec<Mat<f64>> {
        let n = self.lr.domain.n;
        vec![Mat::zeros(n, n); self.num_blocks()]
    }

    fn step(&self, prev: &[Mat<f64>], curr: &[Mat<f64>], t: f64, _eps: &[f64]) -> crate::Result<Vec<Mat<f64>>> {
        let dt = self.dt();
        Ok((0..self.num_blocks())
            .map(|id| {
                let mut r = &curr[id] * 2.0 - &prev[id] + self.laplacian(id, curr, t) * (dt * dt);
                r += self.velocity_term(id, &prev[id]) * (0.5 * dt);
                let (qx, qy) = (self.lr.velocity_diag(id, 0), self.lr.velocity_diag(id, 1));
                Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] / (1.0 + 0.5 * dt * (qx[i] + qy[j])))
            })
            .collect())
    }

    fn backstep(&self, w0: &[Mat<f64>], v0: &[Mat<f64>], _eps: &[f64]) -> crate::Result<Vec<Mat<f64>>> {
        let dt = self.dt();
        Ok((0..self.num_blocks())
            .map(|id| {
                let acc = self.laplacian(id, w0, 0.0) - self.velocity_term(id, &v0[id]);
                &w0[id] - &v0[id] * dt + acc * (0.5 * dt * dt)
            })
            .collect())
    }
}

impl WaveField for Vec<f64> {
    fn combine(terms: &[(f64, &Self)], _eps: f64) -> crate::Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| crate::Error::InvalidArgument("combine needs at least one term".into()))?;
        let mut out = vec![0.0; first.1.len()];
        for (c, a) in terms {
            if a.len() != out.len() {
                return Err(crate::error::mismatch(out.len(), a.len()));
            }
            for (o, x) in out.iter_mut().zip(a.iter()) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn inner(&self, other: &Self) -> crate::Result<f64> {
        if self.len() != other.len() {
            return Err(crate::error::mismatch(self.len(), other.len()));
        }
        Ok(self.iter().zip(other).map(|(a, b)| a * b).sum())
    }

    fn dist(&self, other: &Self) -> crate::Result<f64> {
        Ok(self.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }

    fn rank(&self) -> usize {
        0
    }

    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

/// Apply `M` along `axis` of a cube stored column-major (`i1 + n (i2 + n i3)`).
pub fn dense_mode_apply(op: &dyn ModeOp, x: &[f64], n: usize, axis: usize) -> Vec<f64> {
    let idx = |i: usize, a: usize, b: usize| match axis {
        0 => i + n * (a + n * b),
        1 => a + n * (i + n * b),
        _ => a + n * (b + n * i),
    };
    let fibers = Mat::from_fn(n, n * n, |i, c| x[idx(i, c % n, c / n)]);
    let y = op.apply(fibers.as_ref());
    let mut out = vec![0.0; x.len()];
    for c in 0..n * n {
        for i in 0..n {
            out[idx(i, c % n, c / n)] = y[(i, c)];
        }
    }
    out
}

/// Dense 3D leapfrog with the same operators as [`Wave3D`], no rounding.
#[derive(Debug, Clone)]
pub struct DenseWave3D<'a> {
    pub lr: &'a Wave3D,
    forcing: Vec<Vec<f64>>,
    /// `(cos, sin)` Dirichlet data tensors per block.
    data: Vec<(Vec<f64>, Vec<f64>)>,
    kappa: Vec<Vec<f64>>,
}

impl<'a> DenseWave3D<'a> {
    pub fn new(lr: &'a Wave3D) -> crate::Result<Self> {
        let d = &lr.domain;
        let n = d.n;
        let total = n * n * n;
        if total > crate::tt::DENSE_GUARD {
            return Err(crate::Error::SizeGuard(total));
        }
        let cube = |f: &dyn Fn(usize, usize, usize) -> f64| -> Vec<f64> {
            (0..total).map(|p| f(p % n, (p / n) % n, p / (n * n))).collect()
        };
        let mut forcing = Vec::new();
        let mut data = Vec::new();
        let mut kappa = Vec::new();
        for id in 0..d.num_blocks() {
            let c: Vec<Vec<f64>> = (0..3).map(|a| d.coords(id, a)).collect();
            forcing.push(match lr.source {
                Some(s) if s.kind == SourceKind::GaussianPoint => cube(&|i, j, k| s.gaussian_at(&[c[0][i], c[1][j], c[2][k]])),
                _ => vec![0.0; total],
            });
            let mut dc = vec![0.0; total];
            let mut ds = vec![0.0; total];
            if let Some(s) = lr.source.filter(|s| s.kind == SourceKind::GreensDirichlet) {
                for (f, face) in lr.laps[id].faces.iter().enumerate() {
                    if let FaceSat::Dirichlet { x } = face {
                        let (axis, side) = (f / 2, f % 2);
                        let (re, im) = face_greens(d, id, axis, side, &s)?;
                        for p in 0..total {
                            let ijk = [p % n, (p / n) % n, p / (n * n)];
                            let t: Vec<usize> = (0..3).filter(|&a| a != axis).map(|a| ijk[a]).collect();
                            dc[p] += x[ijk[axis]] * re[(t[0], t[1])];
                            ds[p] += x[ijk[axis]] * im[(t[0], t[1])];
                        }
                    }
                }
            }
            data.push((dc, ds));
            let k = &lr.kappa[id];
            kappa.push(cube(&|i, j, l| k[0][i] + k[1][j] + k[2][l]));
        }
        Ok(Self { lr, forcing, data, kappa })
    }

    /// `L(W)_id - f cos(omega t)` without damping.
    pub fn laplacian(&self, id: usize, w: &[Vec<f64>], t: f64) -> Vec<f64> {
        let lap = &self.lr.laps[id];
        let n = lap.n;
        let mut out = vec![0.0; n * n * n];
        let mut add = |v: Vec<f64>, c: f64| {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        };
        for a in 0..3 {
            add(dense_mode_apply(&lap.axis[a], &w[id], n, a), 1.0);
        }
        for (f, face) in lap.faces.iter().enumerate() {
            if let FaceSat::Interface { neighbor, x, w: wv } = face {
                for k in 0..2 {
                    let p = Mat::from_fn(n, n, |i, j| x[k][i] * wv[k][j]);
                    add(dense_mode_apply(&p, &w[*neighbor], n, f / 2), 1.0);
                }
            }
        }
        let (ct, st) = ((self.lr.omega * t).cos(), (self.lr.omega * t).sin());
        add(self.data[id].0.clone(), ct);
        add(self.data[id].1.clone(), st);
        add(self.forcing[id].clone(), -ct);
        out
    }
}

impl WaveSolver for DenseWave3D<'_> {
    type Field = Vec<f64>;

    fn num_blocks(&self) -> usize {
        self.lr.num_blocks()
    }

    fn h(&self) -> f64 {
        self.lr.h()
    }

    fn omega(&self) -> f64 {
        self.lr.omega
    }

    fn dt(&self) -> f64 {
        self.lr.dt()
    }

    fn n_steps(&self) -> usize {
        self.lr.n_steps()
    }

    fn zero_state(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.lr.domain.n.pow(3)]; self.num_blocks()]
    }

    fn step(&self, prev: &[Vec<f64>], curr: &[Vec<f64>], t: f64, _eps: &[f64]) -> crate::Result<Vec<Vec<f64>>> {
        let dt = self.dt();
        Ok((0..self.num_blocks())
            .map(|id| {
                let l = self.laplacian(id, curr, t);
                (0..l.len())
                    .map(|p| {
                        let (w, wp) = (curr[id][p], prev[id][p]);
                        2.0 * w - wp + dt * dt * l[p] - dt * self.kappa[id][p] * (w - wp)
                    })
                    .collect()
            })
            .collect())
    }

    fn backstep(&self, w0: &[Vec<f64>], v0: &[Vec<f64>], _eps: &[f64]) -> crate::Result<Vec<Vec<f64>>> {
        let dt = self.dt();
        Ok((0..self.num_blocks())
            .map(|id| {
                let l = self.laplacian(id, w0, 0.0);
                (0..l.len())
                    .map(|p| w0[id][p] - dt * v0[id][p] + 0.5 * dt * dt * (l[p] - self.kappa[id][p] * v0[id][p]))
                    .collect()
            })
            .collect())
    }
}

/// Direct solve of the time-harmonic problem behind [`DenseWave2D`].
///
/// With `w(t) = Re(u e^{-i omega t})` the wave equation
/// `w_tt = L w - Q w_t + b(t)`, `b = b_c cos + b_s sin`, becomes
/// `(L + omega^2 + i omega Q) u = -(b_c + i b_s)`. The real operator `L` is
/// assembled column by column from the dense Laplacian. Returns
/// `(Re u, Im u)` per block.
pub fn dense_helmholtz_direct(dense: &DenseWave2D<'_>) -> crate::Result<(Vec<Mat<f64>>, Vec<Mat<f64>>)> {
    use faer::c64;
    use faer::linalg::solvers::Solve;
    let nb = dense.num_blocks();
    let n = dense.lr.domain.n;
    let nn = n * n;
    let dim = nb * nn;
    if dim > DENSE_SOLVE_LIMIT {
        return Err(crate::Error::SizeGuard(dim));
    }
    let omega = dense.lr.omega;
    let zero = dense.zero_state();
    let affine = |t: f64| -> Vec<Mat<f64>> { (0..nb).map(|id| dense.laplacian(id, &zero, t)).collect() };
    let b_c = affine(0.0);
    let b_s = affine(0.5 * std::f64::consts::PI / omega);
    let mut k = Mat::<c64>::zeros(dim, dim);
    let mut w = zero.clone();
    for col in 0..dim {
        let (id, p) = (col / nn, col % nn);
        w[id][(p % n, p / n)] = 1.0;
        for (row_id, b) in b_c.iter().enumerate() {
            let lw = dense.laplacian(row_id, &w, 0.0);
            for j in 0..n {
                for i in 0..n {
                    let v = lw[(i, j)] - b[(i, j)];
                    if v != 0.0 {
                        k[(row_id * nn + i + n * j, col)] = c64::new(v, 0.0);
                    }
                }
            }
        }
        w[id][(p % n, p / n)] = 0.0;
    }
    let mut rhs = Mat::<c64>::zeros(dim, 1);
    for id in 0..nb {
        let (qx, qy) = (dense.lr.velocity_diag(id, 0), dense.lr.velocity_diag(id, 1));
        for j in 0..n {
            for i in 0..n {
                let g = id * nn + i + n * j;
                k[(g, g)] += c64::new(omega * omega, omega * (qx[i] + qy[j]));
                rhs[(g, 0)] = c64::new(-b_c[id][(i, j)], -b_s[id][(i, j)]);
            }
        }
    }
    let u = k.partial_piv_lu().solve(&rhs);
    if (0..dim).any(|g| !(u[(g, 0)].re.is_finite() && u[(g, 0)].im.is_finite())) {
        return Err(crate::Error::Singular("Helmholtz system singular".into()));
    }
    let part = |f: fn(c64) -> f64| -> Vec<Mat<f64>> {
        (0..nb).map(|id| Mat::from_fn(n, n, |i, j| f(u[(id * nn + i + n * j, 0)]))).collect()
    };
    Ok((part(|z| z.re), part(|z| z.im)))
}
