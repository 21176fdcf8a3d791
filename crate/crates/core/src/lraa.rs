//! Anderson acceleration of the WaveHoltz fixed point in compressed form.
//!
//! With `F_i = G(X^i) - X^i` and `dF_i = F_{i+1} - F_i`, the weights
//! `gamma = argmin_u sum_l ||sum_j u_j dF_j^l - F_k^l||` over blocks `l` are
//! shared by all blocks and come from an `m_k x m_k` normal-equation system
//! assembled with factor-only inner products. The new iterate
//! `X^{k+1} = G_k - sum_i gamma_i (G_{i+1} - G_i)` is a truncated weighted sum
//! of the stored filter outputs. Only the pressure enters the weight solve;
//! pressure and velocity are recombined with the same weights.

use std::collections::VecDeque;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::waveholtz::{apply_filter, IterationRecord, WaveField, WaveHoltzParams, WaveHoltzState, WaveSolver};

/// Normal matrices with `lambda_min / lambda_max` below this fall back to Picard.
pub const CONDITION_LIMIT: f64 = 1e-14;

/// Windowed history of filter outputs and residual differences.
#[derive(Debug, Clone)]
pub struct AccelerationWindow<F: WaveField> {
    memory: usize,
    /// `(G_w, G_v)` per block for the last `m_k + 1` iterations, oldest first.
    g: VecDeque<(Vec<F>, Vec<F>)>,
    /// Newest residual `F_k` per block.
    f: Option<Vec<F>>,
    /// `dF` per block for the last `m_k` differences, oldest first.
    df: VecDeque<Vec<F>>,
    /// Block-summed Gram matrix of `df`.
    gram: VecDeque<VecDeque<f64>>,
}

/// Result of the weight solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub gamma: Vec<f64>,
    /// The normal matrix was singular or ill-conditioned and `gamma = 0` was used.
    pub fallback: bool,
}

fn block_inner<F: WaveField>(a: &[F], b: &[F]) -> Result<f64> {
    let parts: Vec<f64> = a.par_iter().zip(b.par_iter()).map(|(x, y)| x.inner(y)).collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

impl<F: WaveField> AccelerationWindow<F> {
    pub fn new(memory: usize) -> Self {
        Self { memory, g: VecDeque::new(), f: None, df: VecDeque::new(), gram: VecDeque::new() }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Number of stored differences `m_k`.
    pub fn depth(&self) -> usize {
        self.df.len()
    }

    /// Record `G(X^k)` and `F_k`; differences are truncated at `eps` per block.
    pub fn push(&mut self, g_w: Vec<F>, g_v: Vec<F>, f: Vec<F>, eps: &[f64]) -> Result<()> {
        if g_w.len() != f.len() || g_v.len() != f.len() || eps.len() != f.len() {
            return Err(Error::InvalidArgument("window entries must cover every block".into()));
        }
        if let Some(prev) = self.f.as_ref().filter(|_| self.memory > 0) {
            let d: Vec<F> = f
                .par_iter()
                .zip(prev.par_iter())
                .zip(eps.par_iter())
                .map(|((a, b), &e)| F::combine(&[(1.0, a), (-1.0, b)], e))
                .collect::<Result<_>>()?;
            if self.df.len() == self.memory {
                self.df.pop_front();
                self.gram.pop_front();
                for row in &mut self.gram {
                    row.pop_front();
                }
            }
            let mut row: VecDeque<f64> = self.df.iter().map(|x| block_inner(x, &d)).collect::<Result<_>>()?;
            for (r, &v) in self.gram.iter_mut().zip(&row) {
                r.push_back(v);
            }
            row.push_back(block_inner(&d, &d)?);
            self.gram.push_back(row);
            self.df.push_back(d);
        }
        self.f = Some(f);
        self.g.push_back((g_w, g_v));
        while self.g.len() > self.df.len() + 1 {
            self.g.pop_front();
        }
        Ok(())
    }

    /// Weights minimizing the block-summed residual over the window.
    pub fn compute_weights(&self) -> Result<Weights> {
        let m = self.df.len();
        let Some(fk) = self.f.as_ref() else {
            return Err(Error::InvalidArgument("empty acceleration window".into()));
        };
        if m == 0 {
            return Ok(Weights { gamma: Vec::new(), fallback: false });
        }
        let b: Vec<f64> = self.df.iter().map(|d| block_inner(d, fk)).collect::<Result<_>>()?;
        let a = Mat::from_fn(m, m, |i, j| self.gram[i][j]);
        Ok(match solve_normal(&a, &b) {
            Some(gamma) => Weights { gamma, fallback: false },
            None => Weights { gamma: vec![0.0; m], fallback: true },
        })
    }

    /// Coefficients of the stored `G` values, oldest first.
    pub fn coefficients(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        let m = self.df.len();
        if gamma.len() != m {
            return Err(Error::InvalidArgument(format!("expected {m} weights, got {}", gamma.len())));
        }
        if m == 0 {
            return Ok(vec![1.0]);
        }
        let mut c = Vec::with_capacity(m + 1);
        c.push(gamma[0]);
        c.extend((1..m).map(|i| gamma[i] - gamma[i - 1]));
        c.push(1.0 - gamma[m - 1]);
        Ok(c)
    }

    /// Accelerated iterate per block as `(pressure, velocity)`, truncated at `eps`.
    pub fn aa_update(&self, gamma: &[f64], eps: &[f64]) -> Result<(Vec<F>, Vec<F>)> {
        let c = self.coefficients(gamma)?;
        let newest = self.g.back().ok_or_else(|| Error::InvalidArgument("empty acceleration window".into()))?;
        if c[..c.len() - 1].iter().all(|&x| x == 0.0) && c[c.len() - 1] == 1.0 {
            return Ok(newest.clone());
        }
        let nb = newest.0.len();
        let mix = |pick: &(dyn Fn(&(Vec<F>, Vec<F>)) -> &Vec<F> + Sync)| -> Result<Vec<F>> {
            (0..nb)
                .into_par_iter()
                .map(|b| {
                    let terms: Vec<(f64, &F)> =
                        c.iter().zip(&self.g).filter(|(&x, _)| x != 0.0).map(|(&x, g)| (x, &pick(g)[b])).collect();
                    F::combine(&terms, eps[b])
                })
                .collect()
        };
        Ok((mix(&|g| &g.0)?, mix(&|g| &g.1)?))
    }
}

/// Solve the symmetric positive semidefinite system `A x = b` after diagonal
/// scaling; `None` when it is singular to working precision.
fn solve_normal(a: &Mat<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let m = a.nrows();
    let d: Vec<f64> = (0..m).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = Mat::from_fn(m, m, |i, j| s[i] * a[(i, j)] * s[j]);
    let eig = scaled.self_adjoint_eigen(faer::Side::Lower).ok()?;
    let lam: Vec<f64> = (0..m).map(|i| eig.S()[i]).collect();
    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    if !(lmax > 0.0) || lam.iter().any(|&l| !(l > CONDITION_LIMIT * lmax)) {
        return None;
    }
    let u = eig.U();
    let sb: Vec<f64> = (0..m).map(|i| s[i] * b[i]).collect();
    let mut y = vec![0.0; m];
    for k in 0..m {
        let proj: f64 = (0..m).map(|i| u[(i, k)] * sb[i]).sum::<f64>() / lam[k];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += u[(i, k)] * proj;
        }
    }
    let x: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a * b).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Outcome of an accelerated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AaOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Iterations where the weight solve fell back to a plain step.
    pub fallbacks: usize,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Anderson-accelerated WaveHoltz with memory `m` (`m = 0` is the plain iteration).
///
/// Tracks `rho_G = ||X^k - G(X^k)||` and `rho_X = ||X^{k+1} - X^k||`; the
/// schedule and the stopping test use `min(rho_G, rho_X)`.
pub fn accelerated_solve<S: WaveSolver>(
    solver: &S,
    state: &mut WaveHoltzState<S::Field>,
    params: &WaveHoltzParams,
    memory: usize,
) -> Result<AaOutcome> {
    let mut window = AccelerationWindow::new(memory);
    let start = state.iteration;
    let mut fallbacks = 0;
    while state.iteration - start < params.max_iters {
        let (gw, gv) = apply_filter(solver, &state.w, &state.v, &state.eps, &state.eps_wave, params.trapezoid_start)?;
        let rho_g_blocks: Vec<f64> = gw.par_iter().zip(state.w.par_iter()).map(|(a, b)| a.dist(b)).collect::<Result<_>>()?;
        let f: Vec<S::Field> = gw
            .par_iter()
            .zip(state.w.par_iter())
            .zip(state.eps.par_iter())
            .map(|((a, b), &e)| S::Field::combine(&[(1.0, a), (-1.0, b)], e))
            .collect::<Result<_>>()?;
        window.push(gw, gv, f, &state.eps)?;
        let weights = window.compute_weights()?;
        fallbacks += weights.fallback as usize;
        let (w, v) = window.aa_update(&weights.gamma, &state.eps)?;
        let rho_x_blocks: Vec<f64> = w.par_iter().zip(state.w.par_iter()).map(|(a, b)| a.dist(b)).collect::<Result<_>>()?;
        let (rho_g, rho_x) = (l2(&rho_g_blocks), l2(&rho_x_blocks));
        let rho = rho_g.min(rho_x);
        if !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("residual diverged at iteration {}", state.iteration + 1)));
        }
        let used = state.eps.clone();
        state.w = w;
        state.v = v;
        state.iteration += 1;
        state.rho = rho;
        state.history.push(IterationRecord { iteration: state.iteration, rho, rho_g, rho_x, ranks: state.ranks(), eps: used });
        let sched: Vec<f64> = rho_g_blocks.iter().zip(&rho_x_blocks).map(|(a, b)| a.min(*b)).collect();
        state.set_tolerances(solver, params, &sched);
        state.rho_blocks = sched;
        if rho <= params.tol {
            return Ok(AaOutcome { converged: true, iterations: state.iteration - start, fallbacks });
        }
    }
    Ok(AaOutcome { converged: false, iterations: state.iteration - start, fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::LowRankMatrix;
    use crate::oracle::dense_aa_weights;
    use crate::testutil::{random_lowrank, rng};
    use proptest::prelude::*;

    fn push_all<F: WaveField>(w: &mut AccelerationWindow<F>, fs: &[Vec<F>]) {
        for f in fs {
            let eps = vec![0.0; f.len()];
            w.push(f.clone(), f.clone(), f.clone(), &eps).unwrap();
        }
    }

    fn random_history(seed: u64, iters: usize, blocks: usize, n: usize) -> Vec<Vec<LowRankMatrix>> {
        let mut r = rng(seed);
        (0..iters)
            .map(|_| (0..blocks).map(|_| random_lowrank(&mut r, n, n, &[1.0, 0.4, 0.1])).collect())
            .collect()
    }

    fn dense_diffs(fs: &[Vec<LowRankMatrix>]) -> (Vec<Vec<Mat<f64>>>, Vec<Mat<f64>>) {
        let d: Vec<Vec<Mat<f64>>> = fs.iter().map(|f| f.iter().map(LowRankMatrix::to_dense).collect()).collect();
        let df = d.windows(2).map(|p| p[1].iter().zip(&p[0]).map(|(a, b)| a - b).collect()).collect();
        (df, d.last().unwrap().clone())
    }

    #[test]
    fn single_difference_is_a_scalar_projection() {
        let a = Mat::from_fn(3, 3, |i, j| (i + 2 * j) as f64);
        let b = Mat::from_fn(3, 3, |i, j| ((i * j) % 3) as f64 - 0.5);
        let mut w = AccelerationWindow::new(3);
        push_all(&mut w, &[vec![a.clone()], vec![b.clone()]]);
        let d = &b - &a;
        let expect = d.inner(&b).unwrap() / d.inner(&d).unwrap();
        let g = w.compute_weights().unwrap();
        assert!(!g.fallback);
        assert!((g.gamma[0] - expect).abs() < 1e-14 * expect.abs().max(1.0));
    }

    #[test]
    fn zero_residual_gives_zero_weights() {
        let a = Mat::from_fn(4, 4, |i, j| (i as f64 - j as f64).sin());
        let z = Mat::<f64>::zeros(4, 4);
        let mut w = AccelerationWindow::new(2);
        push_all(&mut w, &[vec![a], vec![z]]);
        assert_eq!(w.compute_weights().unwrap().gamma, vec![0.0]);
    }

    #[test]
    fn window_keeps_at_most_m_differences() {
        let fs = random_history(3, 7, 2, 6);
        let mut w = AccelerationWindow::new(3);
        for (k, f) in fs.iter().enumerate() {
            push_all(&mut w, std::slice::from_ref(f));
            assert_eq!(w.depth(), k.min(3));
            assert_eq!(w.g.len(), k.min(3) + 1);
        }
        let mut w0 = AccelerationWindow::new(0);
        push_all(&mut w0, &fs);
        assert_eq!((w0.depth(), w0.g.len()), (0, 1));
        assert!(w0.compute_weights().unwrap().gamma.is_empty());
    }

    #[test]
    fn repeated_difference_falls_back() {
        let a = Mat::from_fn(3, 3, |i, j| (i + j) as f64);
        let z = Mat::<f64>::zeros(3, 3);
        let mut w = AccelerationWindow::new(2);
        push_all(&mut w, &[vec![z.clone()], vec![a.clone()], vec![z]]);
        let a2 = Mat::from_fn(3, 3, |i, j| 2.0 * (i + j) as f64);
        push_all(&mut w, &[vec![a2]]);
        // differences a, -a: collinear
        let g = w.compute_weights().unwrap();
        assert!(g.fallback);
        assert_eq!(g.gamma, vec![0.0, 0.0]);
    }

    #[test]
    fn update_coefficients() {
        let fs = random_history(5, 3, 1, 5);
        let mut w = AccelerationWindow::new(2);
        push_all(&mut w, &fs);
        assert_eq!(w.coefficients(&[0.3, 0.5]).unwrap(), vec![0.3, 0.2, 0.5]);
        let eps = [0.0];
        let (p, _) = w.aa_update(&[0.0, 0.0], &eps).unwrap();
        assert_eq!(p[0].to_dense(), fs[2][0].to_dense());
        let mut w1 = AccelerationWindow::new(1);
        push_all(&mut w1, &fs[..2]);
        let (p, v) = w1.aa_update(&[1.0], &eps).unwrap();
        assert!((p[0].to_dense() - fs[0][0].to_dense()).norm_max() < 1e-14);
        assert!((v[0].to_dense() - fs[0][0].to_dense()).norm_max() < 1e-14);
        assert!(w1.aa_update(&[1.0, 2.0], &eps).is_err());
    }

    #[test]
    fn multiblock_weights_match_dense_least_squares() {
        let fs = random_history(11, 4, 4, 20);
        let mut w = AccelerationWindow::new(3);
        push_all(&mut w, &fs);
        let (df, f) = dense_diffs(&fs);
        let dense = dense_aa_weights(&df, &f).unwrap();
        let g = w.compute_weights().unwrap();
        assert_eq!(g.gamma.len(), 3);
        for (a, b) in g.gamma.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn single_block_reduces_to_vector_problem() {
        let fs = random_history(12, 3, 1, 9);
        let mut w = AccelerationWindow::new(4);
        push_all(&mut w, &fs);
        let (df, f) = dense_diffs(&fs);
        let dense = dense_aa_weights(&df, &f).unwrap();
        for (a, b) in w.compute_weights().unwrap().gamma.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn small_problem() -> crate::wave2d::Wave2D {
        use crate::domain::{build_domain, DomainConfig, FaceTag, SourceKind, SourceSpec, Speeds};
        use crate::wave2d::{Wave2D, WaveOptions};
        let omega = 2.0 * std::f64::consts::PI;
        let d = build_domain(&DomainConfig {
            dim: 2,
            extents: vec![(0.0, 1.0), (0.0, 1.0)],
            partition: vec![2, 2],
            n: 13,
            speeds: Speeds::Uniform(1.0),
            outer: vec![FaceTag::Nonreflecting, FaceTag::Neumann, FaceTag::Nonreflecting, FaceTag::Nonreflecting],
        })
        .unwrap();
        let src = SourceSpec { kind: SourceKind::GaussianPoint, center: [0.4, 0.55, 0.0], omega };
        Wave2D::new(d, WaveOptions::default(), Some(src), omega).unwrap()
    }

    #[test]
    fn memory_zero_reproduces_plain_iteration() {
        use crate::waveholtz::{run_to_convergence, WaveHoltzParams, WaveHoltzState};
        let s = small_problem();
        let params = WaveHoltzParams { tol: 1e-3, max_iters: 12, ..WaveHoltzParams::two_d() };
        let mut plain = WaveHoltzState::new(&s, &params).unwrap();
        run_to_convergence(&s, &mut plain, &params).unwrap();
        let mut aa = WaveHoltzState::new(&s, &params).unwrap();
        let out = accelerated_solve(&s, &mut aa, &params, 0).unwrap();
        assert_eq!(out.fallbacks, 0);
        assert_eq!(plain.history.len(), aa.history.len());
        for (p, a) in plain.history.iter().zip(&aa.history) {
            let tol = 5.0 * p.eps.iter().cloned().fold(0.0, f64::max);
            assert!((p.rho - a.rho).abs() <= tol, "{} {}", p.rho, a.rho);
            assert_eq!(a.rho_g, a.rho_x);
        }
    }

    #[test]
    fn accelerated_run_converges() {
        use crate::waveholtz::{WaveHoltzParams, WaveHoltzState};
        let s = small_problem();
        let params = WaveHoltzParams { tol: 1e-4, max_iters: 200, ..WaveHoltzParams::two_d() };
        let mut st = WaveHoltzState::new(&s, &params).unwrap();
        let out = accelerated_solve(&s, &mut st, &params, 3).unwrap();
        assert!(out.converged, "{:?}", st.history.last());
        let last = st.history.last().unwrap();
        assert_eq!(last.rho, last.rho_g.min(last.rho_x));
        assert!(st.eps.iter().all(|&e| e >= params.k_floor));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_satisfy_normal_equations(seed in 0u64..10_000, m in 1usize..5, blocks in 1usize..4) {
            let fs = random_history(seed, m + 1, blocks, 12);
            let mut w = AccelerationWindow::new(m);
            push_all(&mut w, &fs);
            let (df, f) = dense_diffs(&fs);
            let g = w.compute_weights().unwrap();
            prop_assume!(!g.fallback);
            let ip = |a: &[Mat<f64>], b: &[Mat<f64>]| a.iter().zip(b).map(|(x, y)| x.inner(y).unwrap()).sum::<f64>();
            let b: Vec<f64> = df.iter().map(|d| ip(d, &f)).collect();
            let grad: f64 = (0..m)
                .map(|i| ((0..m).map(|j| ip(&df[i], &df[j]) * g.gamma[j]).sum::<f64>() - b[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(grad <= 1e-8 * bn.max(1e-300), "{grad} {bn}");
            let dense = dense_aa_weights(&df, &f).unwrap();
            for (a, b) in g.gamma.iter().zip(&dense) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn update_matches_dense_combination(seed in 0u64..10_000, eps in 1e-6f64..1e-2) {
            let fs = random_history(seed, 4, 2, 10);
            let mut w = AccelerationWindow::new(3);
            push_all(&mut w, &fs);
            let gamma = [0.4, -0.3, 1.2];
            let c = w.coefficients(&gamma).unwrap();
            let (p, _) = w.aa_update(&gamma, &[eps, eps]).unwrap();
            for b in 0..2 {
                let mut dense = Mat::<f64>::zeros(10, 10);
                for (ci, f) in c.iter().zip(&fs) {
                    dense += f[b].to_dense() * *ci;
                }
                prop_assert!((p[b].to_dense() - dense).norm_l2() <= 2.0 * eps);
            }
        }
    }
}
