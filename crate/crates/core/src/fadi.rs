//! Sylvester solves for implicit boundary terms.
//!
//! The centred treatment of nonreflecting faces leads to
//!
//! ```text
//! A X - X B^T = G F^T,   A = I/2 + a a^T + b b^T,   B = -I/2 - c c^T - d d^T
//! ```
//!
//! with `a ⟂ b` and `c ⟂ d`. Both operators have three distinct eigenvalues,
//! so factored ADI with the exact spectra as shifts terminates after three
//! steps. [`corner_solve`] evaluates those three steps in closed form with
//! Sherman–Morrison inverses, touching only `n x (r + 2)` blocks;
//! [`fadi_solve`] is the general dense-shift iteration used to cross-check it.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};

use crate::error::{mismatch, Error, Result};
use crate::lowrank::{LowRankMatrix, LrSum};

/// Rank-two perturbation data and right-hand side of the corner equation.
#[derive(Debug, Clone)]
pub struct SylvesterSpec {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub rhs: LowRankMatrix,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl SylvesterSpec {
    /// Validate sizes and the orthogonality conditions `a^T b = c^T d = 0`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: Vec<f64>, rhs: LowRankMatrix) -> Result<Self> {
        let (m, n) = (rhs.nrows(), rhs.ncols());
        if a.len() != m || b.len() != m {
            return Err(mismatch(m, format!("{} and {}", a.len(), b.len())));
        }
        if c.len() != n || d.len() != n {
            return Err(mismatch(n, format!("{} and {}", c.len(), d.len())));
        }
        let check = |x: &[f64], y: &[f64], name: &str| {
            let tol = 1e-12 * (dot(x, x) * dot(y, y)).sqrt().max(1.0);
            if dot(x, y).abs() > tol {
                Err(Error::InvalidArgument(format!("{name} vectors must be orthogonal")))
            } else {
                Ok(())
            }
        };
        check(&a, &b, "a, b")?;
        check(&c, &d, "c, d")?;
        Ok(Self { a, b, c, d, rhs })
    }

    /// Eigenvalues of `A`: `(1/2 + a^T a, 1/2 + b^T b, 1/2)`.
    pub fn eigen_a(&self) -> [f64; 3] {
        [0.5 + dot(&self.a, &self.a), 0.5 + dot(&self.b, &self.b), 0.5]
    }

    /// Eigenvalues of `B`: `(-1/2 - c^T c, -1/2 - d^T d, -1/2)`.
    pub fn eigen_b(&self) -> [f64; 3] {
        [-0.5 - dot(&self.c, &self.c), -0.5 - dot(&self.d, &self.d), -0.5]
    }

    /// Dense `A` (for verification).
    pub fn a_dense(&self) -> Mat<f64> {
        let n = self.a.len();
        Mat::from_fn(n, n, |i, j| {
            (if i == j { 0.5 } else { 0.0 }) + self.a[i] * self.a[j] + self.b[i] * self.b[j]
        })
    }

    /// Dense `B` (for verification).
    pub fn b_dense(&self) -> Mat<f64> {
        let n = self.c.len();
        Mat::from_fn(n, n, |i, j| {
            (if i == j { -0.5 } else { 0.0 }) - self.c[i] * self.c[j] - self.d[i] * self.d[j]
        })
    }
}

/// `[(1 + v^T v) I + u u^T]^{-1} x` without forming the matrix.
pub fn sherman_morrison_inverse_apply(v_norm_sq: f64, u: &[f64], x: &[f64]) -> Vec<f64> {
    let s = 1.0 + v_norm_sq;
    let w = dot(u, x) / (s + dot(u, u));
    x.iter().zip(u).map(|(xi, ui)| (xi - ui * w) / s).collect()
}

/// Scalar coefficients of the closed-form three-step solution.
///
/// `Z_2 = (kz[0] I + kz[1] a a^T + kz[2] b b^T) Z_1`, `Z_3` likewise with
/// `kz_t`, and `Y_2`, `Y_3` with `ky`, `ky_t` and the vectors `c`, `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerCoefficients {
    pub kz: [f64; 3],
    pub kz_t: [f64; 3],
    pub ky: [f64; 3],
    pub ky_t: [f64; 3],
}

/// Coefficients from the squared norms `a^T a, b^T b, c^T c, d^T d`.
pub fn corner_coefficients(aa: f64, bb: f64, cc: f64, dd: f64) -> CornerCoefficients {
    let pd = 1.0 + dd;
    let pb = 1.0 + bb;
    CornerCoefficients {
        kz: [-aa / pd, 1.0 / pd, (1.0 + aa + dd) / (pd * (1.0 + bb + dd))],
        kz_t: [aa * bb / pd, -bb / pd, -aa / pd],
        ky: [-cc / pb, 1.0 / pb, (1.0 + bb + cc) / (pb * (1.0 + bb + dd))],
        ky_t: [cc * dd / pb, -dd / pb, -cc / pb],
    }
}

/// `k0 X + k1 p (p^T X) + k2 q (q^T X)` for an `n x r` block.
fn rank2_update(x: &Mat<f64>, k: [f64; 3], p: &[f64], q: &[f64]) -> Mat<f64> {
    let (n, r) = (x.nrows(), x.ncols());
    let pt: Vec<f64> = (0..r).map(|j| (0..n).map(|i| p[i] * x[(i, j)]).sum()).collect();
    let qt: Vec<f64> = (0..r).map(|j| (0..n).map(|i| q[i] * x[(i, j)]).sum()).collect();
    Mat::from_fn(n, r, |i, j| k[0] * x[(i, j)] + k[1] * p[i] * pt[j] + k[2] * q[i] * qt[j])
}

/// First factor: `[(1 + s) I + p p^T + q q^T]^{-1} X` for orthogonal `p`, `q`.
fn first_factor(x: &Mat<f64>, s: f64, p: &[f64], q: &[f64]) -> Mat<f64> {
    let (pp, qq) = (dot(p, p), dot(q, q));
    let k = [
        1.0 / (1.0 + s),
        -1.0 / ((1.0 + s) * (1.0 + pp + s)),
        -1.0 / ((1.0 + s) * (1.0 + qq + s)),
    ];
    rank2_update(x, k, p, q)
}

/// Exact solution of the corner equation, recompressed at tolerance `eps`.
pub fn corner_solve(spec: &SylvesterSpec, eps: f64) -> Result<LowRankMatrix> {
    let rhs = &spec.rhs;
    let (m, n) = (rhs.nrows(), rhs.ncols());
    if rhs.rank() == 0 {
        return Ok(LowRankMatrix::zeros(m, n));
    }
    let all_zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
    if all_zero(&spec.a) && all_zero(&spec.b) && all_zero(&spec.c) && all_zero(&spec.d) {
        // A = I/2, B = -I/2: the equation reduces to X = G F^T.
        return Ok(crate::lowrank::truncate(rhs, eps));
    }
    let (aa, bb) = (dot(&spec.a, &spec.a), dot(&spec.b, &spec.b));
    let (cc, dd) = (dot(&spec.c, &spec.c), dot(&spec.d, &spec.d));
    let sq: Vec<f64> = rhs.s().iter().map(|s| s.sqrt()).collect();
    let g = Mat::from_fn(m, rhs.rank(), |i, j| rhs.u()[(i, j)] * sq[j]);
    let f = Mat::from_fn(n, rhs.rank(), |i, j| rhs.v()[(i, j)] * sq[j]);

    let k = corner_coefficients(aa, bb, cc, dd);
    let z1 = first_factor(&g, cc, &spec.a, &spec.b);
    let z2 = rank2_update(&z1, k.kz, &spec.a, &spec.b);
    let z3 = rank2_update(&z1, k.kz_t, &spec.a, &spec.b);
    let y1 = first_factor(&f, aa, &spec.c, &spec.d);
    let y2 = rank2_update(&y1, k.ky, &spec.c, &spec.d);
    let y3 = rank2_update(&y1, k.ky_t, &spec.c, &spec.d);

    // X = sum_i Z_i (alpha_i - beta_i) Y_i^T with the Y_i above carrying the
    // sign of (beta_i - alpha_i)^{-1}-scaled ADI factors.
    let w = [1.0 + aa + cc, 1.0 + bb + dd, 1.0];
    let mut acc = LrSum::new(m, n);
    for ((z, y), wi) in [(z1, y1), (z2, y2), (z3, y3)].into_iter().zip(w) {
        let zs = Mat::from_fn(z.nrows(), z.ncols(), |i, j| wi * z[(i, j)]);
        acc.push_factors(zs, y)?;
    }
    Ok(acc.finish(eps))
}

/// Factored ADI for `A X - X B^T = G F^T` with shifts `alpha`, `beta`.
///
/// Returns `sum_i Z_i (beta_i - alpha_i) Y_i^T` compressed without truncation.
pub fn fadi_solve(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    g: MatRef<'_, f64>,
    f: MatRef<'_, f64>,
    alpha: &[f64],
    beta: &[f64],
) -> Result<LowRankMatrix> {
    let (m, n) = (a.nrows(), b.nrows());
    if a.ncols() != m || b.ncols() != n || g.nrows() != m || f.nrows() != n || g.ncols() != f.ncols() {
        return Err(mismatch("conformable A, B, G, F", "mismatched shapes"));
    }
    if alpha.len() != beta.len() || alpha.is_empty() {
        return Err(Error::InvalidArgument("need matching nonempty shift lists".into()));
    }
    let shifted_solve = |op: MatRef<'_, f64>, shift: f64, rhs: MatRef<'_, f64>| -> Result<Mat<f64>> {
        let k = op.nrows();
        let mut s = op.to_owned();
        for i in 0..k {
            s[(i, i)] -= shift;
        }
        let x = s.partial_piv_lu().solve(rhs);
        if (0..x.ncols()).any(|j| (0..k).any(|i| !x[(i, j)].is_finite())) {
            return Err(Error::Singular(format!("shifted operator singular at shift {shift}")));
        }
        Ok(x)
    };
    let mut z = shifted_solve(a, beta[0], g)?;
    let mut y = shifted_solve(b, alpha[0], f)?;
    let mut acc = LrSum::new(m, n);
    acc.push_factors(z.as_ref() * (beta[0] - alpha[0]), y.clone())?;
    for i in 1..alpha.len() {
        let dz = shifted_solve(a, beta[i], z.as_ref())?;
        z = &z + dz * (beta[i] - alpha[i - 1]);
        let dy = shifted_solve(b, alpha[i], y.as_ref())?;
        y = &y + dy * (alpha[i] - beta[i - 1]);
        acc.push_factors(z.as_ref() * (beta[i] - alpha[i]), y.clone())?;
    }
    Ok(acc.finish(0.0))
}

/// `||A X - X B^T - R||_F / ||R||_F` evaluated densely (verification helper).
pub fn sylvester_residual(spec: &SylvesterSpec, x: &LowRankMatrix) -> f64 {
    let (ad, bd) = (spec.a_dense(), spec.b_dense());
    let xd = x.to_dense();
    let rd = spec.rhs.to_dense();
    let res = &ad * &xd - &xd * bd.transpose() - &rd;
    res.norm_l2() / rd.norm_l2().max(f64::MIN_POSITIVE)
}
