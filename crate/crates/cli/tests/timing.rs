use lrwh_cli::config::ScenarioConfig;
use lrwh_cli::run_timing_study;

/// Dense step cost grows like the number of grid points, `n^2` per block.
#[test]
fn dense_step_time_is_quadratic_in_n() {
    let cfg = ScenarioConfig::parse(
        r#"
name = "timing-exponent"
dimension = 2
extents = [[0.0, 1.0], [0.0, 1.0]]
partition = [1, 1]
n_per_block = 11
faces = ["dirichlet", "dirichlet", "dirichlet", "dirichlet"]
source_kind = "greens"
source_center = [-0.1, 0.5]
omega_over_pi = 5.0
eps_times_h = [1e-3]
timing_ppw = [40.0, 80.0, 160.0]
timing_repetitions = 30
"#,
    )
    .unwrap();
    let rows = run_timing_study(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| ((r.n as f64).ln(), r.t_dense.ln())).unzip();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!((1.7..=2.3).contains(&slope), "fitted exponent {slope:.2}");
}
