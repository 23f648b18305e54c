//! Sweep-level checks: the free-potential quadrature oracle against closed
//! forms and the spectral solver, rate fits on measured error series, the
//! logarithmic envelope verdict, and report determinism.

use hjhomog::harness::{
    emit_report, envelope_check, rate_sweep, read_report, semianalytic_oracle_v0, DataSpec,
    ExperimentConfig, HarnessError, PotentialSpec, ReportFormat, SolverSpec,
};
use hjhomog::torus::{ScalarField, TorusGrid};
use hjhomog::viscous::{solve_eps, EpsProblem};

fn quadrature_config(data: DataSpec, epsilons: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        potential: PotentialSpec::Zero,
        data,
        dimension: 1,
        epsilons,
        eval_points: vec![vec![0.0]],
        times: vec![1.0],
        cell_resolution: 32,
        solver: SolverSpec::Quadrature,
        seed: 0,
        output_dir: None,
    }
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 0.5f64.powi(k)).collect()
}

#[test]
fn oracle_reproduces_closed_forms() {
    let zero = DataSpec::Constant { value: 0.0 }.realize();
    for &(eps, x, t) in &[(0.5, 0.0, 1.0), (0.03125, 0.7, 0.5), (0.25, -1.2, 2.0)] {
        let u = semianalytic_oracle_v0(&zero, eps, x, t).unwrap();
        println!("zero data: u^{eps}({x}, {t}) = {u:e}");
        assert!(u.abs() < 1e-9);
    }

    let slope = 0.4;
    let affine = DataSpec::AffineCapped { slope }.realize();
    for &(eps, x, t) in &[(0.5, 0.0, 1.0), (0.015625, 0.3, 0.5), (0.125, -0.8, 1.0)] {
        let u = semianalytic_oracle_v0(&affine, eps, x, t).unwrap();
        let exact = slope * x - slope * slope * t / 2.0;
        println!("affine data: u^{eps}({x}, {t}) = {u}, exact {exact}");
        assert!((u - exact).abs() < 1e-8);
    }
}

#[test]
fn oracle_agrees_with_the_spectral_solver() {
    let eps = 0.015625;
    let potential = hjhomog::cell::Potential::new(ScalarField::constant(TorusGrid::new(1, 32), 0.0));
    let data = DataSpec::CappedNorm.realize();
    let problem = EpsProblem::new(potential, data.clone(), eps, 1.0, 0.25).unwrap();
    let points = vec![vec![0.0], vec![0.25]];
    let solved = solve_eps(&problem, &points).unwrap();
    for (point, u_pde) in points.iter().zip(&solved) {
        let u_ref = semianalytic_oracle_v0(&data, eps, point[0], 1.0).unwrap();
        println!("capped norm at x = {}: solver {u_pde}, oracle {u_ref}", point[0]);
        assert!((u_pde - u_ref).abs() < 1e-3);
    }
}

#[test]
fn capped_norm_rate_slope_matches_the_half_log_law() {
    let config = quadrature_config(DataSpec::CappedNorm, dyadic(4, 10));
    let report = rate_sweep(&config).unwrap();
    let fit = report.fit.unwrap();
    println!("fit: a = {}, b = {}, residual = {}", fit.a, fit.b, fit.residual);
    assert!(fit.b > 0.45 && fit.b < 0.55);

    for &(eps, err) in &report.errors {
        let sharp = err / (eps * (1.0 / eps).ln());
        println!("ε = {eps}: e = {err}, e/(ε·log(1/ε)) = {sharp}");
        assert!(sharp > 0.2 && sharp < 1.2);
    }

    let trimmed = hjhomog::harness::fit_rate_model(&report.errors[1..]).unwrap();
    println!("slope without the coarsest ε: {}", trimmed.b);
    assert!((trimmed.b - fit.b).abs() < 0.03);
}

#[test]
fn envelope_clears_zero_data_within_roundoff() {
    let mut config = quadrature_config(DataSpec::Constant { value: 0.0 }, dyadic(3, 6));
    config.times = vec![0.01, 1.0];
    let verdict = envelope_check(&config).unwrap();
    println!(
        "trivial envelope: c_hat = {:e}, margin = {:e}",
        verdict.c_hat, verdict.margin
    );
    assert!(verdict.c_hat.abs() < 1e-9);
    assert!(verdict.margin > -1e-9);
}

#[test]
fn envelope_margin_stays_positive_for_the_kinked_example() {
    let mut config = quadrature_config(DataSpec::CappedNorm, dyadic(3, 8));
    config.times = vec![0.05, 0.4, 1.0];
    let verdict = envelope_check(&config).unwrap();
    println!("envelope: c_hat = {}, margin = {}", verdict.c_hat, verdict.margin);
    for record in &verdict.records {
        println!(
            "  ε = {:.6}, t = {:.2}: error {:.6e}, bound {:.6e}, slack {:.3e}, trained {}",
            record.epsilon, record.time, record.error, record.bound, record.slack, record.trained
        );
        if record.epsilon > record.time {
            assert!(record.error <= 1.5 * (record.time + record.epsilon));
        }
    }
    assert!(verdict.passed);
    assert!(verdict.margin > 0.0);
}

#[test]
fn small_times_stay_attached_to_the_data() {
    let potential = hjhomog::cell::Potential::new(ScalarField::from_fn(
        TorusGrid::new(1, 32),
        |x| (2.0 * std::f64::consts::PI * x[0]).cos(),
    ));
    let data = DataSpec::CappedNorm.realize();
    let x = 0.3;
    for k in [4, 5, 6] {
        let eps = 0.5f64.powi(k);
        let t = eps / 2.0;
        let problem =
            EpsProblem::new(potential.clone(), data.clone(), eps, t, x).unwrap();
        let u = solve_eps(&problem, &[vec![x]]).unwrap()[0];
        let ratio = (u - data.eval(&[x])).abs() / (t + eps);
        println!("ε = {eps}: |u^ε(x, ε/2) − g(x)| / (t + ε) = {ratio}");
        assert!(ratio <= 2.0);
    }
}

#[test]
fn identical_configs_reproduce_reports_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quadrature_config(DataSpec::CappedNorm, dyadic(4, 6));
    config.eval_points = vec![vec![0.0], vec![0.2]];
    config.seed = 11;
    config.output_dir = Some(dir.path().to_path_buf());

    let first = rate_sweep(&config).unwrap();
    let csv_first = std::fs::read(dir.path().join("rate_report.csv")).unwrap();
    let json_first = std::fs::read(dir.path().join("rate_report.json")).unwrap();

    let second = rate_sweep(&config).unwrap();
    let csv_second = std::fs::read(dir.path().join("rate_report.csv")).unwrap();
    let json_second = std::fs::read(dir.path().join("rate_report.json")).unwrap();

    assert_eq!(first, second);
    assert_eq!(csv_first, csv_second);
    assert_eq!(json_first, json_second);
    println!("reports agree over {} bytes of JSON", json_first.len());

    let parsed = read_report(&dir.path().join("rate_report.json")).unwrap();
    assert_eq!(parsed, first);

    let elsewhere = tempfile::tempdir().unwrap();
    let path = emit_report(&first, ReportFormat::Json, elsewhere.path()).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), json_first);
}

#[test]
fn aborted_sweeps_keep_partial_results() {
    let mut config = quadrature_config(DataSpec::CappedNorm, vec![1.0, 0.5]);
    config.solver = SolverSpec::Spectral;
    config.times = vec![1.0, 1e12];
    match rate_sweep(&config) {
        Err(HarnessError::Aborted {
            epsilon,
            message,
            partial,
        }) => {
            println!("aborted at ε = {epsilon}: {message}");
            println!("partial records: {}", partial.len());
            assert_eq!(epsilon, 1.0);
            assert_eq!(partial.len(), 2);
            assert!(partial.iter().all(|r| r.time == 1.0 && r.error < 1.0));
        }
        other => panic!("expected an aborted sweep, got {other:?}"),
    }
}
