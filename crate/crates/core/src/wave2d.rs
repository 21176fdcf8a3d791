//! Low-rank multiblock leapfrog for the 2D wave equation.
//!
//! Each block value `W` is an `n x n` matrix with rows along `x` (axis 0) and
//! columns along `y` (axis 1). The semidiscrete operator is
//!
//! ```text
//! L(W) = M_x W + W M_y^T + sum_faces (neighbour / data couplings)
//! ```
//!
//! where `M_axis = c^2 D2` plus every SAT part acting on the block's own
//! values, and each coupling is a rank-one or rank-two factored term. The
//! conventions per face (`sigma = +1` at the last grid index of an axis, `-1`
//! at the first; `e`, `s` the boundary selector and derivative row):
//!
//! ```text
//! Neumann, damped:  -sigma c^2 H^-1 e s^T W
//! nonreflecting:    -sigma c^2 H^-1 e s^T W - c H^-1 e e^T W_t
//! Dirichlet:         c^2 (sigma H^-1 s - (tau/h) H^-1 e) (e^T W - g)
//! interface:         (c_u^2/2) sigma H^-1 s (u_f - v_g) - (sigma/2) H^-1 e (c_u^2 s_f.u - c_v^2 s_g.v)
//!                    - c_av (tau/h) H^-1 e (u_f - v_g),     c_av = (c_u^2 + c_v^2)/2
//! ```
//!
//! All of these give a discrete energy estimate. The velocity on
//! nonreflecting faces is taken centred, `(W^{k+1} - W^{k-1}) / (2 dt)`, which
//! makes the update implicit in the boundary rows and columns only; the
//! resulting Sylvester equation is solved exactly by [`corner_solve`].

use faer::Mat;
use rayon::prelude::*;

use crate::domain::{gaussian_source_lowrank, greens_value, FaceTag, MultiblockDomain, SourceKind, SourceSpec};
use crate::error::{Error, Result};
use crate::fadi::{corner_solve, SylvesterSpec};
use crate::lowrank::{lr_sum, truncate, LowRankMatrix, LrSum};
use crate::sbp::{build_sbp, BandedOp, ModeOp, SbpOperatorSet};
use crate::waveholtz::WaveSolver;

/// Interface and Dirichlet penalty parameter.
pub const DEFAULT_TAU: f64 = 15.0;
/// Time step as a multiple of `h`.
pub const DEFAULT_CFL: f64 = 0.15;
/// Truncation applied once to the forcing factors.
pub const FORCING_EPS: f64 = 1e-14;

/// SAT data of one face.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceSat {
    /// Absorbing face; `p = c / H_ff` multiplies the boundary velocity.
    Nonreflecting { p: f64 },
    Neumann,
    /// Exterior face of a damping layer: flux cancelled as for Neumann.
    Damped,
    /// Boundary data `g` enters as the outer product `x (x) g`.
    Dirichlet { x: Vec<f64> },
    /// Coupling `sum_k x_k (x) (w_k . V)` to the neighbour's values `V`,
    /// contracted along the face normal.
    Interface { neighbor: usize, x: [Vec<f64>; 2], w: [Vec<f64>; 2] },
}

/// Semidiscrete operator of one block (2D or 3D).
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    pub block: usize,
    pub c: f64,
    pub n: usize,
    /// `c^2 D2` plus own-value SAT parts, one per axis.
    pub axis: Vec<BandedOp>,
    /// One entry per face, index `2 * axis + side`.
    pub faces: Vec<FaceSat>,
}

impl DiscreteLaplacian {
    /// Whether any face carries an implicit velocity term.
    pub fn has_implicit(&self) -> bool {
        self.faces.iter().any(|f| matches!(f, FaceSat::Nonreflecting { .. }))
    }

    /// Diagonal of the boundary velocity operator along `axis`.
    pub fn velocity_diag(&self, axis: usize) -> Vec<f64> {
        let mut q = vec![0.0; self.n];
        for side in 0..2 {
            if let FaceSat::Nonreflecting { p } = self.faces[2 * axis + side] {
                q[if side == 0 { 0 } else { self.n - 1 }] += p;
            }
        }
        q
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn add_outer(m: &mut Mat<f64>, coef: f64, col: &[f64], row: &[f64]) {
    for j in 0..row.len() {
        if row[j] != 0.0 {
            for i in 0..col.len() {
                m[(i, j)] += coef * col[i] * row[j];
            }
        }
    }
}

/// Build the operator of block `id`.
pub fn assemble_laplacian(
    domain: &MultiblockDomain,
    id: usize,
    sbp: &SbpOperatorSet,
    tau: f64,
) -> Result<DiscreteLaplacian> {
    let block = domain
        .blocks
        .get(id)
        .ok_or_else(|| Error::Domain(format!("block {id} out of range")))?;
    if sbp.n != domain.n {
        return Err(crate::error::mismatch(domain.n, sbp.n));
    }
    let (n, h, dim) = (sbp.n, sbp.h, domain.dim);
    let c2 = block.c * block.c;
    let mut own: Vec<Mat<f64>> = (0..dim).map(|_| &sbp.d2 * c2).collect();
    let mut faces = Vec::with_capacity(2 * dim);
    for (f, tag) in block.faces.iter().enumerate() {
        let (axis, side) = (f / 2, f % 2);
        let sigma = if side == 1 { 1.0 } else { -1.0 };
        let bi = sbp.boundary_index(side);
        let hff = sbp.hdiag[bi];
        let s = sbp.s_row(side);
        let hs = sbp.hinv_apply(&s);
        let e = unit(n, bi);
        let he: Vec<f64> = e.iter().map(|v| v / hff).collect();
        let m = &mut own[axis];
        let sat = match *tag {
            FaceTag::Nonreflecting => {
                add_outer(m, -sigma * c2, &he, &s);
                FaceSat::Nonreflecting { p: block.c / hff }
            }
            FaceTag::Neumann => {
                add_outer(m, -sigma * c2, &he, &s);
                FaceSat::Neumann
            }
            FaceTag::Damped => {
                if dim == 2 {
                    return Err(Error::Domain("damped faces are only available in 3D".into()));
                }
                add_outer(m, -sigma * c2, &he, &s);
                FaceSat::Damped
            }
            FaceTag::Dirichlet => {
                add_outer(m, sigma * c2, &hs, &e);
                add_outer(m, -c2 * tau / h, &he, &e);
                let x = hs.iter().zip(&he).map(|(a, b)| -sigma * c2 * a + c2 * tau / h * b).collect();
                FaceSat::Dirichlet { x }
            }
            FaceTag::Interface { neighbor } => {
                let cv2 = domain.blocks[neighbor].c.powi(2);
                let cav = 0.5 * (c2 + cv2);
                add_outer(m, 0.5 * sigma * c2, &hs, &e);
                add_outer(m, -0.5 * sigma * c2, &he, &s);
                add_outer(m, -cav * tau / h, &he, &e);
                let eg = unit(n, sbp.boundary_index(1 - side));
                let sg = sbp.s_row(1 - side);
                let w0 = eg.iter().map(|v| -0.5 * sigma * c2 * v).collect();
                let w1 = sg.iter().zip(&eg).map(|(s, e)| 0.5 * sigma * cv2 * s + cav * tau / h * e).collect();
                FaceSat::Interface { neighbor, x: [hs, he], w: [w0, w1] }
            }
        };
        faces.push(sat);
    }
    Ok(DiscreteLaplacian {
        block: id,
        c: block.c,
        n,
        axis: own.iter().map(|m| BandedOp::from_dense(m.as_ref())).collect(),
        faces,
    })
}

/// Solver parameters shared by the 2D and 3D integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveOptions {
    pub order: usize,
    pub tau: f64,
    pub cfl: f64,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { order: 4, tau: DEFAULT_TAU, cfl: DEFAULT_CFL }
    }
}

/// `(dt, N_t)` with `dt <= cfl h` and `N_t dt = 2 pi / omega` exactly.
pub fn period_steps(omega: f64, h: f64, cfl: f64) -> Result<(f64, usize)> {
    if !(omega > 0.0) || !(h > 0.0) || !(cfl > 0.0) {
        return Err(Error::InvalidArgument("omega, h and cfl must be positive".into()));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let nt = (period / (cfl * h)).ceil() as usize;
    Ok((period / nt as f64, nt))
}

/// Time-harmonic face data `g(t) = g_c cos(omega t) + g_s sin(omega t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FaceData {
    pub fn at(&self, omega: f64, t: f64) -> Vec<f64> {
        let (c, s) = ((omega * t).cos(), (omega * t).sin());
        self.cos.iter().zip(&self.sin).map(|(a, b)| a * c + b * s).collect()
    }
}

/// Grid points of face `f` of a 2D block, ordered along the tangential axis.
fn face_points_2d(domain: &MultiblockDomain, id: usize, f: usize) -> Vec<[f64; 2]> {
    let (axis, side) = (f / 2, f % 2);
    let normal = domain.coords(id, axis);
    let tang = domain.coords(id, 1 - axis);
    let xn = if side == 0 { normal[0] } else { normal[domain.n - 1] };
    tang.iter().map(|&t| if axis == 0 { [xn, t] } else { [t, xn] }).collect()
}

/// Block levels `k - 1` and `k` of a 2D run.
#[derive(Debug, Clone)]
pub struct WaveState2D {
    pub prev: Vec<LowRankMatrix>,
    pub curr: Vec<LowRankMatrix>,
    pub level: usize,
    pub dt: f64,
}

/// Low-rank 2D multiblock integrator.
#[derive(Debug, Clone)]
pub struct Wave2D {
    pub domain: MultiblockDomain,
    pub sbp: SbpOperatorSet,
    pub laps: Vec<DiscreteLaplacian>,
    /// Source `f` per block; the equation carries `-f cos(omega t)`.
    pub forcing: Vec<LowRankMatrix>,
    pub source: Option<SourceSpec>,
    /// Dirichlet data per block and face (`None`: homogeneous).
    pub dirichlet: Vec<Vec<Option<FaceData>>>,
    pub omega: f64,
    dt: f64,
    n_steps: usize,
    /// Boundary velocity diagonals per block and axis.
    q: Vec<[Vec<f64>; 2]>,
}

impl Wave2D {
    /// Assemble all blocks. A Gaussian source becomes forcing; a Green's
    /// function source becomes data on the Dirichlet faces.
    pub fn new(domain: MultiblockDomain, opts: WaveOptions, source: Option<SourceSpec>, omega: f64) -> Result<Self> {
        if domain.dim != 2 {
            return Err(Error::Domain("Wave2D needs a 2D domain".into()));
        }
        domain.validate()?;
        let sbp = build_sbp(opts.order, domain.n, domain.h)?;
        let nb = domain.num_blocks();
        let laps = (0..nb)
            .map(|id| assemble_laplacian(&domain, id, &sbp, opts.tau))
            .collect::<Result<Vec<_>>>()?;
        let n = domain.n;
        let mut forcing = vec![LowRankMatrix::zeros(n, n); nb];
        let mut dirichlet = vec![vec![None; 4]; nb];
        match source {
            Some(s) if s.kind == SourceKind::GaussianPoint => {
                for (id, f) in forcing.iter_mut().enumerate() {
                    *f = truncate(&gaussian_source_lowrank(&s, &domain, id), FORCING_EPS);
                }
            }
            Some(s) => {
                for id in 0..nb {
                    for f in 0..4 {
                        if domain.blocks[id].faces[f] == FaceTag::Dirichlet {
                            let mut data = FaceData { cos: Vec::with_capacity(n), sin: Vec::with_capacity(n) };
                            for p in face_points_2d(&domain, id, f) {
                                let (re, im) = greens_value(&s, &p)?;
                                data.cos.push(re);
                                data.sin.push(im);
                            }
                            dirichlet[id][f] = Some(data);
                        }
                    }
                }
            }
            None => {}
        }
        let (dt, n_steps) = period_steps(omega, domain.h, opts.cfl)?;
        let q = laps.iter().map(|l| [l.velocity_diag(0), l.velocity_diag(1)]).collect();
        Ok(Self { domain, sbp, laps, forcing, source, dirichlet, omega, dt, n_steps, q })
    }

    /// Override the time step (the step count keeps one period when possible).
    pub fn set_time_step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        self.dt = dt;
        let period = 2.0 * std::f64::consts::PI / self.omega;
        self.n_steps = ((period / dt).round() as usize).max(1);
        Ok(())
    }

    /// Boundary velocity diagonal of block `id` along `axis`.
    pub fn velocity_diag(&self, id: usize, axis: usize) -> &[f64] {
        &self.q[id][axis]
    }

    /// Terms of `L(W)_id - f cos(omega t)`, uncompressed.
    fn rhs_terms(&self, id: usize, w: &[LowRankMatrix], t: f64) -> Result<LrSum> {
        let n = self.domain.n;
        let lap = &self.laps[id];
        let wi = &w[id];
        let mut acc = LrSum::new(n, n);
        if wi.rank() > 0 {
            let us = wi.us();
            acc.push_factors(lap.axis[0].apply(us.as_ref()), wi.v().to_owned())?;
            acc.push_factors(us, lap.axis[1].apply(wi.v()))?;
        }
        for (f, face) in lap.faces.iter().enumerate() {
            let axis = f / 2;
            match face {
                FaceSat::Interface { neighbor, x, w: wv } => {
                    let v = w.get(*neighbor).ok_or_else(|| Error::Domain(format!("missing state of block {neighbor}")))?;
                    if v.rank() == 0 {
                        continue;
                    }
                    let xm = Mat::from_fn(n, 2, |i, k| x[k][i]);
                    let traces: Vec<Vec<f64>> = wv
                        .iter()
                        .map(|wk| if axis == 0 { v.left_trace(wk) } else { v.right_trace(wk) })
                        .collect();
                    let ym = Mat::from_fn(n, 2, |i, k| traces[k][i]);
                    if axis == 0 {
                        acc.push_factors(xm, ym)?;
                    } else {
                        acc.push_factors(ym, xm)?;
                    }
                }
                FaceSat::Dirichlet { x } => {
                    if let Some(data) = &self.dirichlet[id][f] {
                        let g = data.at(self.omega, t);
                        if axis == 0 {
                            acc.push_outer(1.0, x, &g)?;
                        } else {
                            acc.push_outer(1.0, &g, x)?;
                        }
                    }
                }
                _ => {}
            }
        }
        acc.push(-(self.omega * t).cos(), &self.forcing[id])?;
        Ok(acc)
    }

    /// `T_eps[L(W)_id - f cos(omega t)]`.
    pub fn laplacian_apply(&self, id: usize, w: &[LowRankMatrix], t: f64, eps: f64) -> Result<LowRankMatrix> {
        Ok(self.rhs_terms(id, w, t)?.finish(eps))
    }

    /// `diag(qx) A + A diag(qy)` pushed into `acc` with coefficient `coef`.
    fn push_velocity(&self, acc: &mut LrSum, id: usize, coef: f64, a: &LowRankMatrix) -> Result<()> {
        if a.rank() == 0 || !self.laps[id].has_implicit() {
            return Ok(());
        }
        let [qx, qy] = &self.q[id];
        let us = a.us();
        let left = Mat::from_fn(us.nrows(), us.ncols(), |i, j| coef * qx[i] * us[(i, j)]);
        acc.push_factors(left, a.v().to_owned())?;
        let right = Mat::from_fn(a.ncols(), a.rank(), |i, j| coef * qy[i] * a.v()[(i, j)]);
        acc.push_factors(us, right)?;
        Ok(())
    }

    fn step_block(&self, id: usize, prev: &[LowRankMatrix], curr: &[LowRankMatrix], t: f64, eps: f64) -> Result<LowRankMatrix> {
        let n = self.domain.n;
        let dt = self.dt;
        let what = self.laplacian_apply(id, curr, t, eps)?;
        let mut acc = LrSum::new(n, n);
        acc.push(2.0, &curr[id])?;
        acc.push(-1.0, &prev[id])?;
        acc.push(dt * dt, &what)?;
        self.push_velocity(&mut acc, id, 0.5 * dt, &prev[id])?;
        let r = acc.finish(eps);
        if !self.laps[id].has_implicit() {
            return Ok(r);
        }
        // (I + P_x) X + X P_y = R with P = (dt/2) diag(q)
        let [qx, qy] = &self.q[id];
        let spike = |q: &[f64], i: usize| {
            let mut v = vec![0.0; n];
            v[i] = (0.5 * dt * q[i]).sqrt();
            v
        };
        let spec = SylvesterSpec::new(spike(qx, 0), spike(qx, n - 1), spike(qy, 0), spike(qy, n - 1), r)?;
        corner_solve(&spec, eps)
    }

    /// Advance a state by one step with per-block tolerances.
    pub fn leapfrog_step(&self, state: &WaveState2D, eps: &[f64]) -> Result<WaveState2D> {
        let t = state.level as f64 * self.dt;
        let next = WaveSolver::step(self, &state.prev, &state.curr, t, eps)?;
        Ok(WaveState2D { prev: state.curr.clone(), curr: next, level: state.level + 1, dt: self.dt })
    }

    /// `W^{-1} = T[W0 - dt V0 + dt^2/2 T(L(W0) - f - Q V0)]` for one block.
    pub fn backstep_initialize(&self, id: usize, w0: &[LowRankMatrix], v0: &LowRankMatrix, eps: f64) -> Result<LowRankMatrix> {
        let dt = self.dt;
        let mut acc = self.rhs_terms(id, w0, 0.0)?;
        self.push_velocity(&mut acc, id, -1.0, v0)?;
        let accel = acc.finish(eps);
        lr_sum(&[(1.0, &w0[id]), (-dt, v0), (0.5 * dt * dt, &accel)], eps)
    }
}

/// Centred difference `(W^{k+1} - W^{k-1}) / (2 dt)`.
pub fn wave_velocity(next: &LowRankMatrix, prev: &LowRankMatrix, dt: f64, eps: f64) -> Result<LowRankMatrix> {
    lr_sum(&[(0.5 / dt, next), (-0.5 / dt, prev)], eps)
}

impl WaveSolver for Wave2D {
    type Field = LowRankMatrix;

    fn num_blocks(&self) -> usize {
        self.domain.num_blocks()
    }

    fn h(&self) -> f64 {
        self.domain.h
    }

    fn omega(&self) -> f64 {
        self.omega
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn zero_state(&self) -> Vec<LowRankMatrix> {
        vec![LowRankMatrix::zeros(self.domain.n, self.domain.n); self.num_blocks()]
    }

    fn step(&self, prev: &[LowRankMatrix], curr: &[LowRankMatrix], t: f64, eps: &[f64]) -> Result<Vec<LowRankMatrix>> {
        check_eps(eps, self.num_blocks())?;
        (0..self.num_blocks())
            .into_par_iter()
            .map(|id| self.step_block(id, prev, curr, t, eps[id]))
            .collect()
    }

    fn backstep(&self, w0: &[LowRankMatrix], v0: &[LowRankMatrix], eps: &[f64]) -> Result<Vec<LowRankMatrix>> {
        check_eps(eps, self.num_blocks())?;
        (0..self.num_blocks())
            .into_par_iter()
            .map(|id| self.backstep_initialize(id, w0, &v0[id], eps[id]))
            .collect()
    }
}

pub(crate) fn check_eps(eps: &[f64], nb: usize) -> Result<()> {
    if eps.len() != nb {
        return Err(crate::error::mismatch(nb, eps.len()));
    }
    if eps.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::InvalidArgument("truncation tolerances must be nonnegative".into()));
    }
    Ok(())
}
