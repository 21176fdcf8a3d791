//! Timing study: one truncated step `T_eps(G + dt^2 L(G))` on the Green's
//! function, low-rank versus dense, median over repeated runs on one thread.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lrwh::domain::greens_function_2d;
use lrwh::lowrank::{lr_sum, LowRankMatrix};
use lrwh::oracle::DenseWave2D;
use lrwh::wave2d::Wave2D;
use lrwh::waveholtz::WaveSolver;

use crate::config::ScenarioConfig;
use crate::report::TimingRow;

/// Points per block and axis giving (at least) `ppw` points per wavelength
/// for the slowest block.
pub fn points_for_ppw(cfg: &ScenarioConfig, ppw: f64) -> Result<usize> {
    let d = cfg.domain()?;
    let c = d.blocks.iter().map(|b| b.c).fold(f64::INFINITY, f64::min);
    let h = 2.0 * PI * c / (cfg.omega() * ppw);
    let edge = (0..d.dim).map(|a| d.block_edge(a)).fold(f64::INFINITY, f64::min);
    Ok((edge / h).round() as usize + 1)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Low-rank step on block `id`.
pub fn lowrank_step(solver: &Wave2D, g: &[LowRankMatrix], id: usize, eps: f64) -> Result<LowRankMatrix> {
    let dt = solver.dt();
    let lap = solver.laplacian_apply(id, g, 0.0, eps)?;
    Ok(lr_sum(&[(1.0, &g[id]), (dt * dt, &lap)], eps)?)
}

/// Timing rows for every block, resolution and tolerance of the scenario.
pub fn run_timing_study(cfg: &ScenarioConfig) -> Result<Vec<TimingRow>> {
    if cfg.dimension != 2 {
        bail!("the timing study is available in 2D only");
    }
    if cfg.timing_ppw.is_empty() || cfg.eps_times_h.is_empty() {
        bail!("the timing study needs timing_ppw and eps_times_h");
    }
    let reps = cfg.timing_repetitions.max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().context("building timing pool")?;
    pool.install(|| {
        let mut rows = Vec::new();
        for &ppw in &cfg.timing_ppw {
            let n = points_for_ppw(cfg, ppw)?;
            let solver = Wave2D::new(cfg.domain_with(n)?, cfg.wave_options(), Some(cfg.source()), cfg.omega())?;
            let dense = DenseWave2D::new(&solver);
            let d = &solver.domain;
            let dt = solver.dt();
            let green = (0..d.num_blocks())
                .map(|id| Ok(greens_function_2d(&cfg.source(), d, id)?.0))
                .collect::<Result<Vec<_>>>()?;
            for &c in &cfg.eps_times_h {
                let eps = c / d.h;
                let g: Vec<LowRankMatrix> = green.iter().map(|a| LowRankMatrix::from_dense(a.as_ref(), eps)).collect();
                let gd: Vec<_> = g.iter().map(LowRankMatrix::to_dense).collect();
                for id in 0..d.num_blocks() {
                    let mut t_lr = Vec::with_capacity(reps);
                    let mut t_dense = Vec::with_capacity(reps);
                    let mut out_lr = None;
                    let mut out_dense = None;
                    for _ in 0..reps {
                        let t = Instant::now();
                        out_lr = Some(lowrank_step(&solver, &g, id, eps)?);
                        t_lr.push(t.elapsed().as_secs_f64());
                        let t = Instant::now();
                        out_dense = Some(&gd[id] + dense.laplacian(id, &gd, 0.0) * (dt * dt));
                        t_dense.push(t.elapsed().as_secs_f64());
                    }
                    let (a, b) = (out_lr.unwrap().to_dense(), out_dense.unwrap());
                    let mut max_diff = 0.0f64;
                    for j in 0..n {
                        for i in 0..n {
                            max_diff = max_diff.max((a[(i, j)] - b[(i, j)]).abs());
                        }
                    }
                    rows.push(TimingRow {
                        block: id,
                        ppw: d.ppw(id, cfg.omega()),
                        n,
                        eps,
                        rank: g[id].rank(),
                        t_lowrank: median(t_lr),
                        t_dense: median(t_dense),
                        repetitions: reps,
                        max_diff,
                    });
                }
            }
        }
        Ok(rows)
    })
}
