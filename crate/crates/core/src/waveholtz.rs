//! The WaveHoltz fixed-point iteration in low-rank arithmetic.
//!
//! One iteration propagates the current iterate over a period `T = 2 pi / omega`
//! of the forced wave equation and filters the trajectory with
//! `(2/T)(cos(omega t) - 1/4)`. The fixed point is the Helmholtz solution of
//! the same discretization. Everything here is generic over the field format
//! ([`WaveField`]) and the time stepper ([`WaveSolver`]), so the same driver
//! runs low-rank 2D, tensor-train 3D and the dense reference solvers.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lowrank::{self, LowRankMatrix};
use crate::tt::{self, TensorTrain};

/// Grid-function storage with truncating linear combinations.
pub trait WaveField: Clone + Send + Sync {
    /// `sum_k c_k A_k`, compressed at absolute tolerance `eps`.
    fn combine(terms: &[(f64, &Self)], eps: f64) -> Result<Self>;
    fn norm(&self) -> f64;
    fn inner(&self, other: &Self) -> Result<f64>;
    /// `||self - other||`.
    fn dist(&self, other: &Self) -> Result<f64>;
    /// Representation rank (maximal TT-rank in 3D, 0 for dense storage).
    fn rank(&self) -> usize;
    fn zeros_like(&self) -> Self;
}

impl WaveField for LowRankMatrix {
    fn combine(terms: &[(f64, &Self)], eps: f64) -> Result<Self> {
        lowrank::lr_sum(terms, eps)
    }

    fn norm(&self) -> f64 {
        lowrank::norm(self)
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        lowrank::inner(self, other)
    }

    fn dist(&self, other: &Self) -> Result<f64> {
        Ok(lowrank::norm(&lowrank::lr_sum(&[(1.0, self), (-1.0, other)], 0.0)?))
    }

    fn rank(&self) -> usize {
        LowRankMatrix::rank(self)
    }

    fn zeros_like(&self) -> Self {
        LowRankMatrix::zeros(self.nrows(), self.ncols())
    }
}

impl WaveField for TensorTrain {
    fn combine(terms: &[(f64, &Self)], eps: f64) -> Result<Self> {
        Ok(tt::tt_round_abs(&tt::tt_sum(terms)?, eps))
    }

    fn norm(&self) -> f64 {
        tt::tt_norm(self)
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        tt::tt_inner(self, other)
    }

    fn dist(&self, other: &Self) -> Result<f64> {
        tt::tt_dist(self, other)
    }

    fn rank(&self) -> usize {
        self.max_rank()
    }

    fn zeros_like(&self) -> Self {
        TensorTrain::zeros(self.dims())
    }
}

/// A multiblock leapfrog integrator for `w_tt = L w - f cos(omega t)`.
pub trait WaveSolver: Sync {
    type Field: WaveField;

    fn num_blocks(&self) -> usize;
    /// Grid spacing.
    fn h(&self) -> f64;
    fn omega(&self) -> f64;
    /// Time step; `n_steps() * dt()` equals one period.
    fn dt(&self) -> f64;
    fn n_steps(&self) -> usize;
    /// Zero state, one field per block.
    fn zero_state(&self) -> Vec<Self::Field>;
    /// Level `k + 1` from levels `k - 1` and `k` (`t` is the time of level `k`),
    /// truncating block `b` at `eps[b]`.
    fn step(&self, prev: &[Self::Field], curr: &[Self::Field], t: f64, eps: &[f64]) -> Result<Vec<Self::Field>>;
    /// Level `-1` from displacement and velocity at `t = 0`.
    fn backstep(&self, w0: &[Self::Field], v0: &[Self::Field], eps: &[f64]) -> Result<Vec<Self::Field>>;
}

/// Default scheduling floor in 2D.
pub const DEFAULT_K_2D: f64 = 1e-5;
/// Default scheduling floor in 3D.
pub const DEFAULT_K_3D: f64 = 1e-4;

/// Filter kernel `(2/T)(cos(omega t) - 1/4)`, `T = 2 pi / omega`.
pub fn filter_weight(t: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument("omega must be positive".into()));
    }
    let period = 2.0 * PI / omega;
    Ok(2.0 / period * ((omega * t).cos() - 0.25))
}

/// How the truncation tolerance follows the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `eps = max(K, theta h rho)` (2D, absolute SVD truncation).
    Absolute,
    /// `eps = max(K, sqrt(2) theta h rho) / sqrt(2)` (3D, absolute TT rounding).
    TensorTrain,
}

/// Scheduled tolerance `max(K, theta h rho)`.
pub fn schedule_tolerance(rho_block: f64, theta: f64, k_floor: f64, h: f64) -> f64 {
    k_floor.max(theta * h * rho_block)
}

/// Scheduled absolute tolerance for TT rounding.
pub fn schedule_tolerance_3d(rho_block: f64, theta: f64, k_floor: f64, h: f64) -> f64 {
    k_floor.max(SQRT_2 * theta * h * rho_block) / SQRT_2
}

/// Outer-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveHoltzParams {
    pub theta: f64,
    pub k_floor: f64,
    /// Stopping tolerance on the residual.
    pub tol: f64,
    pub max_iters: usize,
    pub schedule: ScheduleKind,
    /// Weight the `t = 0` sample with `3 dt / (4T)` (trapezoid) instead of `3 dt / (2T)`.
    pub trapezoid_start: bool,
}

impl WaveHoltzParams {
    pub fn two_d() -> Self {
        Self {
            theta: 1.0,
            k_floor: DEFAULT_K_2D,
            tol: 1e-3,
            max_iters: 500,
            schedule: ScheduleKind::Absolute,
            trapezoid_start: false,
        }
    }

    pub fn three_d() -> Self {
        Self { theta: 0.5, k_floor: DEFAULT_K_3D, schedule: ScheduleKind::TensorTrain, ..Self::two_d() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument("theta must lie in (0, 1]".into()));
        }
        if !(self.k_floor > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("K and the stopping tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Block tolerance for residual `rho`.
    pub fn schedule(&self, rho: f64, h: f64) -> f64 {
        match self.schedule {
            ScheduleKind::Absolute => schedule_tolerance(rho, self.theta, self.k_floor, h),
            ScheduleKind::TensorTrain => schedule_tolerance_3d(rho, self.theta, self.k_floor, h),
        }
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Residual used for stopping.
    pub rho: f64,
    /// `||X^k - G(X^k)||` (equals `rho` without acceleration).
    pub rho_g: f64,
    /// `||X^{k+1} - X^k||`.
    pub rho_x: f64,
    /// Pressure rank per block after the iteration.
    pub ranks: Vec<usize>,
    /// Tolerance per block used during the iteration.
    pub eps: Vec<f64>,
}

/// Iterate and schedule of the outer iteration.
#[derive(Debug, Clone)]
pub struct WaveHoltzState<F: WaveField> {
    /// Filtered pressure per block.
    pub w: Vec<F>,
    /// Filtered velocity per block.
    pub v: Vec<F>,
    pub rho: f64,
    pub rho_blocks: Vec<f64>,
    /// Truncation tolerance per block.
    pub eps: Vec<f64>,
    /// Wave-solver tolerance per block, `eps / (2 N_t)`.
    pub eps_wave: Vec<f64>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

impl<F: WaveField> WaveHoltzState<F> {
    /// Zero initial data with `rho^0 = 1`.
    pub fn new<S: WaveSolver<Field = F>>(solver: &S, params: &WaveHoltzParams) -> Result<Self> {
        params.validate()?;
        let nb = solver.num_blocks();
        let mut st = Self {
            w: solver.zero_state(),
            v: solver.zero_state(),
            rho: 1.0,
            rho_blocks: vec![1.0; nb],
            eps: Vec::new(),
            eps_wave: Vec::new(),
            iteration: 0,
            history: Vec::new(),
        };
        st.set_tolerances(solver, params, &vec![1.0; nb]);
        Ok(st)
    }

    /// Schedule all block tolerances from per-block residuals.
    pub fn set_tolerances<S: WaveSolver<Field = F>>(&mut self, solver: &S, params: &WaveHoltzParams, rho: &[f64]) {
        let two_nt = 2.0 * solver.n_steps() as f64;
        self.eps = rho.iter().map(|&r| params.schedule(r, solver.h())).collect();
        self.eps_wave = self.eps.iter().map(|e| e / two_nt).collect();
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.w.iter().map(WaveField::rank).collect()
    }
}

/// One application of the WaveHoltz operator: propagate `(w0, v0)` over a
/// period and return the filtered pressure and velocity.
pub fn apply_filter<S: WaveSolver>(
    solver: &S,
    w0: &[S::Field],
    v0: &[S::Field],
    eps: &[f64],
    eps_wave: &[f64],
    trapezoid_start: bool,
) -> Result<(Vec<S::Field>, Vec<S::Field>)> {
    let (dt, nt, omega) = (solver.dt(), solver.n_steps(), solver.omega());
    let period = nt as f64 * dt;
    let beta = |t: f64| (omega * t).cos() - 0.25;
    let c0 = if trapezoid_start { 0.75 * dt / period } else { 1.5 * dt / period };
    let mut acc_w: Vec<S::Field> = w0.iter().map(|w| S::Field::combine(&[(c0, w)], 0.0)).collect::<Result<_>>()?;
    let mut acc_v: Vec<S::Field> = solver.zero_state();
    let mut prev = solver.backstep(w0, v0, eps_wave)?;
    let mut curr = w0.to_vec();
    for l in 0..=nt {
        let t = l as f64 * dt;
        let next = solver.step(&prev, &curr, t, eps_wave)?;
        let eta = if l + 1 < nt {
            1.0
        } else if l + 1 == nt {
            0.5
        } else {
            0.0
        };
        let eta_v = if l == 0 || l == nt { 0.5 } else { 1.0 };
        let cw = 2.0 * dt / period * eta * beta(t + dt);
        let cv = 2.0 * dt / period * eta_v / (2.0 * dt) * beta(t);
        acc_w = acc_w
            .par_iter()
            .zip(next.par_iter())
            .zip(eps_wave.par_iter())
            .map(|((a, x), &e)| if cw == 0.0 { Ok(a.clone()) } else { S::Field::combine(&[(1.0, a), (cw, x)], e) })
            .collect::<Result<_>>()?;
        acc_v = acc_v
            .par_iter()
            .zip(next.par_iter().zip(prev.par_iter()))
            .zip(eps_wave.par_iter())
            .map(|((a, (x, y)), &e)| S::Field::combine(&[(1.0, a), (cv, x), (-cv, y)], e))
            .collect::<Result<_>>()?;
        prev = std::mem::replace(&mut curr, next);
    }
    let round = |acc: Vec<S::Field>| -> Result<Vec<S::Field>> {
        acc.par_iter().zip(eps.par_iter()).map(|(a, &e)| S::Field::combine(&[(1.0, a)], e)).collect()
    };
    Ok((round(acc_w)?, round(acc_v)?))
}

/// One plain outer iteration; updates the iterate, residuals and schedule.
pub fn lrwh_iteration<S: WaveSolver>(
    solver: &S,
    state: &mut WaveHoltzState<S::Field>,
    params: &WaveHoltzParams,
) -> Result<()> {
    let (w, v) = apply_filter(solver, &state.w, &state.v, &state.eps, &state.eps_wave, params.trapezoid_start)?;
    let rho_blocks: Vec<f64> = w.par_iter().zip(state.w.par_iter()).map(|(a, b)| a.dist(b)).collect::<Result<_>>()?;
    let rho = rho_blocks.iter().map(|r| r * r).sum::<f64>().sqrt();
    let used = state.eps.clone();
    state.w = w;
    state.v = v;
    state.iteration += 1;
    state.rho = rho;
    state.history.push(IterationRecord {
        iteration: state.iteration,
        rho,
        rho_g: rho,
        rho_x: rho,
        ranks: state.ranks(),
        eps: used,
    });
    state.set_tolerances(solver, params, &rho_blocks);
    state.rho_blocks = rho_blocks;
    Ok(())
}

/// Whether the residual dropped below the stopping tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub converged: bool,
    pub iterations: usize,
}

/// Iterate until `rho <= tol` or `max_iters`.
pub fn run_to_convergence<S: WaveSolver>(
    solver: &S,
    state: &mut WaveHoltzState<S::Field>,
    params: &WaveHoltzParams,
) -> Result<Outcome> {
    params.validate()?;
    let start = state.iteration;
    while state.iteration - start < params.max_iters {
        lrwh_iteration(solver, state, params)?;
        if !state.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("residual diverged at iteration {}", state.iteration)));
        }
        if state.rho <= params.tol {
            return Ok(Outcome { converged: true, iterations: state.iteration - start });
        }
    }
    Ok(Outcome { converged: false, iterations: state.iteration - start })
}

/// Helmholtz solution `u = W + i W' / omega` as `(real, imaginary)` per block.
pub fn assemble_helmholtz_solution<F: WaveField>(w: &[F], v: &[F], omega: f64) -> Result<(Vec<F>, Vec<F>)> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument("omega must be positive".into()));
    }
    let im = v.iter().map(|x| F::combine(&[(1.0 / omega, x)], 0.0)).collect::<Result<_>>()?;
    Ok((w.to_vec(), im))
}
