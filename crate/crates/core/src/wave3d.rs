//! Tensor-train multiblock leapfrog for the damped 3D wave equation.
//!
//! Each block value is a [`TensorTrain`] over `(x, y, z)`. The update
//!
//! ```text
//! W+ = 2W - W- + dt^2 (L W - f cos(omega t)) - dt kappa (W - W-)
//! ```
//!
//! uses an explicit backward difference for the damping term so the step
//! stays a sum of mode products. The damping `kappa = k1(x) + k2(y) + k3(z)`
//! is a Kronecker sum, so with `N_a = (2/3) I + dt^2 M_a - dt diag(k_a)` and
//! `N'_a = -(1/3) I + dt diag(k_a)` the own-block part is
//! `sum_a N_a x_a W + sum_a N'_a x_a W-` and costs no rank beyond the
//! mode sums. Interfaces reuse the 2D SAT coefficients through rank-two
//! mode operators acting on the neighbour's tensor; Dirichlet data is a
//! face function extended by the SAT vector along the normal.

use faer::Mat;
use rayon::prelude::*;

use crate::domain::{gaussian_source_tt, greens_value, FaceTag, MultiblockDomain, SourceKind, SourceSpec};
use crate::error::{Error, Result};
use crate::lowrank::LowRankMatrix;
use crate::sbp::{build_sbp, BandedOp, SbpOperatorSet};
use crate::tt::{tt_apply_mode, tt_mode_sum, tt_round_abs, tt_sum, TensorTrain};
use crate::wave2d::{assemble_laplacian, check_eps, period_steps, DiscreteLaplacian, FaceSat, WaveOptions};
use crate::waveholtz::{lrwh_iteration, WaveHoltzParams, WaveHoltzState, WaveSolver};

/// Peak damping `kappa_a` at a damped face.
pub const DAMPING_STRENGTH: f64 = 50.0;
/// Decay rate of the damping Gaussian, `exp(-decay (s - face)^2)`.
pub const DAMPING_DECAY: f64 = 100.0;
/// Relative tolerance for compressing Dirichlet face data.
const FACE_DATA_EPS: f64 = 1e-12;

/// Standard outer-face configurations of a damped box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingPreset {
    /// Damping layers on all six outer faces.
    FreeSpace,
    /// Reflecting top (`y = hi`) face, damping elsewhere.
    HalfSpace,
}

impl DampingPreset {
    /// Outer face tags in face order `2 * axis + side`.
    pub fn outer_tags(self) -> Vec<FaceTag> {
        let mut tags = vec![FaceTag::Damped; 6];
        if self == DampingPreset::HalfSpace {
            tags[3] = FaceTag::Neumann;
        }
        tags
    }
}

/// Damping factors `(k1, k2, k3)` of block `id`: on each axis, a Gaussian
/// of height [`DAMPING_STRENGTH`] centred on every damped outer face.
pub fn damping_profile(domain: &MultiblockDomain, id: usize) -> [Vec<f64>; 3] {
    std::array::from_fn(|axis| {
        let s = domain.coords(id, axis);
        let mut k = vec![0.0; s.len()];
        if axis < domain.dim {
            for side in 0..2 {
                if domain.outer.get(2 * axis + side) == Some(&FaceTag::Damped) {
                    let face = if side == 0 { domain.lo[axis] } else { domain.hi[axis] };
                    for (kv, x) in k.iter_mut().zip(&s) {
                        *kv += DAMPING_STRENGTH * (-DAMPING_DECAY * (x - face).powi(2)).exp();
                    }
                }
            }
        }
        k
    })
}

/// Face coupling of one block: `P x_axis V` with `P = sum_k x_k w_k^T`.
#[derive(Debug, Clone)]
struct FaceCoupling {
    neighbor: usize,
    axis: usize,
    op: Mat<f64>,
}

/// Time-harmonic Dirichlet contribution `cos(omega t) A + sin(omega t) B`.
#[derive(Debug, Clone)]
struct FaceForcing {
    cos: TensorTrain,
    sin: TensorTrain,
}

/// Block levels `k - 1` and `k` of a 3D run.
#[derive(Debug, Clone)]
pub struct WaveState3D {
    pub prev: Vec<TensorTrain>,
    pub curr: Vec<TensorTrain>,
    pub level: usize,
    pub dt: f64,
}

/// Tensor-train 3D multiblock integrator.
#[derive(Debug, Clone)]
pub struct Wave3D {
    pub domain: MultiblockDomain,
    pub sbp: SbpOperatorSet,
    pub laps: Vec<DiscreteLaplacian>,
    /// Damping factors per block and axis.
    pub kappa: Vec<[Vec<f64>; 3]>,
    /// Source `f` per block; the equation carries `-f cos(omega t)`.
    pub forcing: Vec<TensorTrain>,
    pub source: Option<SourceSpec>,
    pub omega: f64,
    dt: f64,
    n_steps: usize,
    /// `N_a` and `N'_a` per block.
    ops: Vec<([BandedOp; 3], [BandedOp; 3])>,
    couplings: Vec<Vec<FaceCoupling>>,
    data: Vec<Vec<FaceForcing>>,
}

/// Tensor `x (x)_axis g`: vector `x` along `axis`, face function `g` over the
/// remaining axes in increasing order.
fn face_extension(x: &[f64], g: &LowRankMatrix, axis: usize) -> Result<TensorTrain> {
    let n = x.len();
    let r = g.rank();
    if r == 0 || x.iter().all(|&v| v == 0.0) {
        return Ok(TensorTrain::zeros([n; 3]));
    }
    let us = g.us();
    let v = g.v();
    let col = |m: &Mat<f64>| -> Vec<f64> { (0..m.ncols()).flat_map(|j| (0..m.nrows()).map(move |i| m[(i, j)])).collect() };
    let vt = |v: faer::MatRef<'_, f64>| -> Vec<f64> { (0..v.nrows()).flat_map(|i| (0..r).map(move |a| v[(i, a)])).collect() };
    match axis {
        0 => {
            // core0 = x; core1[0, j, a] = us(j, a); core2[a, k] = v(k, a)
            TensorTrain::from_cores([n; 3], [1, 1, r, 1], [x.to_vec(), col(&us), vt(v)])
        }
        1 => {
            let mut c1 = vec![0.0; r * n * r];
            for a in 0..r {
                for (j, &xv) in x.iter().enumerate() {
                    c1[a + r * (j + n * a)] = xv;
                }
            }
            TensorTrain::from_cores([n; 3], [1, r, r, 1], [col(&us), c1, vt(v)])
        }
        2 => {
            // core0 = us; core1[a, j, 0] = v(j, a); core2 = x
            TensorTrain::from_cores([n; 3], [1, r, 1, 1], [col(&us), vt(v), x.to_vec()])
        }
        _ => Err(Error::InvalidArgument(format!("axis {axis} out of range"))),
    }
}

impl Wave3D {
    /// Assemble all blocks. A Gaussian source becomes forcing; a Green's
    /// function source becomes data on the Dirichlet faces.
    pub fn new(domain: MultiblockDomain, opts: WaveOptions, source: Option<SourceSpec>, omega: f64) -> Result<Self> {
        if domain.dim != 3 {
            return Err(Error::Domain("Wave3D needs a 3D domain".into()));
        }
        domain.validate()?;
        if domain.blocks.iter().any(|b| b.faces.contains(&FaceTag::Nonreflecting)) {
            return Err(Error::Domain("3D outer faces must be damped, Neumann or Dirichlet".into()));
        }
        let sbp = build_sbp(opts.order, domain.n, domain.h)?;
        let nb = domain.num_blocks();
        let n = domain.n;
        let laps = (0..nb)
            .map(|id| assemble_laplacian(&domain, id, &sbp, opts.tau))
            .collect::<Result<Vec<_>>>()?;
        let kappa: Vec<[Vec<f64>; 3]> = (0..nb).map(|id| damping_profile(&domain, id)).collect();
        let mut forcing = vec![TensorTrain::zeros([n; 3]); nb];
        let mut data = vec![Vec::new(); nb];
        let couplings = laps
            .iter()
            .map(|lap| {
                lap.faces
                    .iter()
                    .enumerate()
                    .filter_map(|(f, face)| match face {
                        FaceSat::Interface { neighbor, x, w } => {
                            let mut op = Mat::zeros(n, n);
                            for k in 0..2 {
                                for j in 0..n {
                                    for i in 0..n {
                                        op[(i, j)] += x[k][i] * w[k][j];
                                    }
                                }
                            }
                            Some(FaceCoupling { neighbor: *neighbor, axis: f / 2, op })
                        }
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        match source {
            Some(s) if s.kind == SourceKind::GaussianPoint => {
                for (id, f) in forcing.iter_mut().enumerate() {
                    *f = gaussian_source_tt(&s, &domain, id);
                }
            }
            Some(s) => {
                for id in 0..nb {
                    for (f, face) in laps[id].faces.iter().enumerate() {
                        if let FaceSat::Dirichlet { x } = face {
                            let (axis, side) = (f / 2, f % 2);
                            let (re, im) = face_greens(&domain, id, axis, side, &s)?;
                            let cre = LowRankMatrix::from_dense(re.as_ref(), FACE_DATA_EPS * re.norm_l2());
                            let cim = LowRankMatrix::from_dense(im.as_ref(), FACE_DATA_EPS * im.norm_l2());
                            data[id].push(FaceForcing {
                                cos: face_extension(x, &cre, axis)?,
                                sin: face_extension(x, &cim, axis)?,
                            });
                        }
                    }
                }
            }
            None => {}
        }
        let (dt, n_steps) = period_steps(omega, domain.h, opts.cfl)?;
        let mut out = Self { domain, sbp, laps, kappa, forcing, source, omega, dt, n_steps, ops: Vec::new(), couplings, data };
        out.build_ops();
        Ok(out)
    }

    fn build_ops(&mut self) {
        let dt = self.dt;
        self.ops = self
            .laps
            .iter()
            .zip(&self.kappa)
            .map(|(lap, kappa)| {
                let own = std::array::from_fn(|a| {
                    let mut m = lap.axis[a].to_dense() * (dt * dt);
                    for i in 0..m.nrows() {
                        m[(i, i)] += 2.0 / 3.0 - dt * kappa[a][i];
                    }
                    BandedOp::from_dense(m.as_ref())
                });
                let back = std::array::from_fn(|a| {
                    BandedOp::diagonal(&kappa[a].iter().map(|k| -1.0 / 3.0 + dt * k).collect::<Vec<_>>())
                });
                (own, back)
            })
            .collect();
    }

    /// Override the time step (the step count keeps one period when possible).
    pub fn set_time_step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        self.dt = dt;
        let period = 2.0 * std::f64::consts::PI / self.omega;
        self.n_steps = ((period / dt).round() as usize).max(1);
        self.build_ops();
        Ok(())
    }

    /// Neighbour couplings, boundary data and forcing at time `t`, unrounded,
    /// each with its coefficient.
    fn coupling_terms(&self, id: usize, w: &[TensorTrain], t: f64) -> Result<Vec<(f64, TensorTrain)>> {
        let mut terms = Vec::new();
        for c in &self.couplings[id] {
            let v = w.get(c.neighbor).ok_or_else(|| Error::Domain(format!("missing state of block {}", c.neighbor)))?;
            if !v.is_zero() {
                terms.push((1.0, tt_apply_mode(&c.op, v, c.axis)?));
            }
        }
        let (ct, st) = ((self.omega * t).cos(), (self.omega * t).sin());
        for d in &self.data[id] {
            terms.push((ct, d.cos.clone()));
            terms.push((st, d.sin.clone()));
        }
        terms.push((-ct, self.forcing[id].clone()));
        Ok(terms)
    }

    /// `round[L(W)_id - f cos(omega t)]` (no damping).
    pub fn laplacian_apply(&self, id: usize, w: &[TensorTrain], t: f64, eps: f64) -> Result<TensorTrain> {
        let lap = &self.laps[id];
        let own = tt_mode_sum(&w[id], [&lap.axis[0], &lap.axis[1], &lap.axis[2]])?;
        let mut terms = self.coupling_terms(id, w, t)?;
        terms.push((1.0, own));
        let refs: Vec<(f64, &TensorTrain)> = terms.iter().map(|(c, t)| (*c, t)).collect();
        Ok(tt_round_abs(&tt_sum(&refs)?, eps))
    }

    /// `kappa (.) A` (Kronecker-sum damping), exact.
    pub fn damp(&self, id: usize, a: &TensorTrain) -> Result<TensorTrain> {
        let k = &self.kappa[id];
        let ops = [BandedOp::diagonal(&k[0]), BandedOp::diagonal(&k[1]), BandedOp::diagonal(&k[2])];
        tt_mode_sum(a, [&ops[0], &ops[1], &ops[2]])
    }

    fn step_block(&self, id: usize, prev: &[TensorTrain], curr: &[TensorTrain], t: f64, eps: f64) -> Result<TensorTrain> {
        let dt2 = self.dt * self.dt;
        let (own, back) = &self.ops[id];
        let mut terms: Vec<(f64, TensorTrain)> = self
            .coupling_terms(id, curr, t)?
            .into_iter()
            .map(|(c, x)| (c * dt2, x))
            .collect();
        terms.push((1.0, tt_mode_sum(&curr[id], [&own[0], &own[1], &own[2]])?));
        terms.push((1.0, tt_mode_sum(&prev[id], [&back[0], &back[1], &back[2]])?));
        let refs: Vec<(f64, &TensorTrain)> = terms.iter().map(|(c, t)| (*c, t)).collect();
        Ok(tt_round_abs(&tt_sum(&refs)?, eps))
    }

    /// Advance a state by one step with per-block tolerances.
    pub fn tt_leapfrog_step(&self, state: &WaveState3D, eps: &[f64]) -> Result<WaveState3D> {
        let t = state.level as f64 * self.dt;
        let next = WaveSolver::step(self, &state.prev, &state.curr, t, eps)?;
        Ok(WaveState3D { prev: state.curr.clone(), curr: next, level: state.level + 1, dt: self.dt })
    }

    /// `W^{-1} = round[W0 - dt V0 + dt^2/2 (L(W0) - f - kappa V0)]` for one block.
    pub fn backstep_initialize(&self, id: usize, w0: &[TensorTrain], v0: &TensorTrain, eps: f64) -> Result<TensorTrain> {
        let dt = self.dt;
        let half = 0.5 * dt * dt;
        let lap = &self.laps[id];
        let mut terms: Vec<(f64, TensorTrain)> =
            self.coupling_terms(id, w0, 0.0)?.into_iter().map(|(c, x)| (c * half, x)).collect();
        terms.push((half, tt_mode_sum(&w0[id], [&lap.axis[0], &lap.axis[1], &lap.axis[2]])?));
        terms.push((-half, self.damp(id, v0)?));
        terms.push((1.0, w0[id].clone()));
        terms.push((-dt, v0.clone()));
        let refs: Vec<(f64, &TensorTrain)> = terms.iter().map(|(c, t)| (*c, t)).collect();
        Ok(tt_round_abs(&tt_sum(&refs)?, eps))
    }
}

/// Green's function on face `(axis, side)` of block `id`, indexed by the two
/// tangential axes in increasing order.
pub(crate) fn face_greens(d: &MultiblockDomain, id: usize, axis: usize, side: usize, s: &SourceSpec) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = d.n;
    let tang: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let normal = d.coords(id, axis);
    let xn = if side == 0 { normal[0] } else { normal[n - 1] };
    let (ca, cb) = (d.coords(id, tang[0]), d.coords(id, tang[1]));
    let mut re = Mat::zeros(n, n);
    let mut im = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut p = [0.0; 3];
            p[axis] = xn;
            p[tang[0]] = ca[i];
            p[tang[1]] = cb[j];
            let (a, b) = greens_value(s, &p)?;
            re[(i, j)] = a;
            im[(i, j)] = b;
        }
    }
    Ok((re, im))
}

impl WaveSolver for Wave3D {
    type Field = TensorTrain;

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

    fn zero_state(&self) -> Vec<TensorTrain> {
        vec![TensorTrain::zeros([self.domain.n; 3]); self.num_blocks()]
    }

    fn step(&self, prev: &[TensorTrain], curr: &[TensorTrain], t: f64, eps: &[f64]) -> Result<Vec<TensorTrain>> {
        check_eps(eps, self.num_blocks())?;
        (0..self.num_blocks())
            .into_par_iter()
            .map(|id| self.step_block(id, prev, curr, t, eps[id]))
            .collect()
    }

    fn backstep(&self, w0: &[TensorTrain], v0: &[TensorTrain], eps: &[f64]) -> Result<Vec<TensorTrain>> {
        check_eps(eps, self.num_blocks())?;
        (0..self.num_blocks())
            .into_par_iter()
            .map(|id| self.backstep_initialize(id, w0, &v0[id], eps[id]))
            .collect()
    }
}

/// One TTWH iteration (plain WaveHoltz with the tensor-train schedule).
pub fn ttwh_iterate(solver: &Wave3D, state: &mut WaveHoltzState<TensorTrain>, params: &WaveHoltzParams) -> Result<()> {
    lrwh_iteration(solver, state, params)
}
