use hjhomog::cell::Potential;
use hjhomog::hopflax::{dyadic_radii, quad_growth_diag, small_time_check, solve, LipschitzData};
use hjhomog::legendre::{legendre, HamiltonianModel};
use hjhomog::torus::{ScalarField, TorusGrid};
use proptest::prelude::*;

fn free_model(dim: usize) -> HamiltonianModel {
    let grid = TorusGrid::new(dim, 32);
    HamiltonianModel::with_resolution(Potential::new(ScalarField::constant(grid, 0.0)), 32)
}

fn cosine_model() -> HamiltonianModel {
    let grid = TorusGrid::new(1, 32);
    let v = Potential::new(ScalarField::from_fn(grid, |x| {
        (2.0 * std::f64::consts::PI * x[0]).cos()
    }));
    HamiltonianModel::with_resolution(v, 32)
}

fn capped_norm() -> LipschitzData {
    LipschitzData::new(1.0, |y: &[f64]| {
        y.iter().map(|c| c * c).sum::<f64>().sqrt().min(10.0)
    })
}

fn h_direct(g: &LipschitzData, model: &HamiltonianModel, x: &[f64], t: f64, y: &[f64]) -> f64 {
    let q: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (xi - yi) / t).collect();
    g.eval(y) + t * legendre(model, &q).unwrap().lbar
}

#[test]
fn capped_norm_free_solution_is_half_x_squared() {
    let model = free_model(1);
    let g = capped_norm();
    for &x in &[0.0, 0.4, -0.9] {
        let sol = solve(&g, &model, &[x], 1.0).unwrap();
        println!("x = {x}: value = {}, minimizer = {}", sol.value, sol.minimizer[0]);
        assert!((sol.value - 0.5 * x * x).abs() < 1e-9);
        assert!(sol.minimizer[0].abs() < 1e-8);
        let replay = h_direct(&g, &model, &[x], 1.0, &sol.minimizer);
        assert!((sol.value - replay).abs() < 1e-12);
        let profile = sol.h_profile.expect("1D solves sample the local profile");
        assert_eq!(profile.len(), 65);
        for &(_, hv) in &profile {
            assert!(sol.value <= hv + 1e-9);
        }
    }
}

#[test]
fn constant_data_ride_the_hamiltonian_minimum() {
    let model = cosine_model();
    let c = 0.7;
    let g = LipschitzData::new(0.0, move |_: &[f64]| c);
    let t = 0.8;
    let x = 0.3;
    let sol = solve(&g, &model, &[x], t).unwrap();
    let expected = c - t * model.hbar(&[0.0]).unwrap();
    println!("value = {}, expected = {expected}", sol.value);
    assert!((sol.value - expected).abs() < 1e-9);
    assert!((sol.minimizer[0] - x).abs() < 1e-5);
}

#[test]
fn affine_data_reproduce_the_hopf_formula() {
    let model = cosine_model();
    let a = 0.6;
    let g = LipschitzData::new(a, move |y: &[f64]| a * y[0].clamp(-8.0, 8.0));
    let x = 0.2;
    let sol = solve(&g, &model, &[x], 1.0).unwrap();
    let expected = a * x - model.hbar(&[a]).unwrap();
    let expected_min = x - model.grad(&[a]).unwrap()[0];
    println!(
        "value = {} (expected {expected}), minimizer = {} (expected {expected_min})",
        sol.value, sol.minimizer[0]
    );
    assert!((sol.value - expected).abs() < 1e-7);
    assert!((sol.minimizer[0] - expected_min).abs() < 1e-5);
}

#[test]
fn small_time_ratio_for_constant_data_is_the_hamiltonian_offset() {
    let model = cosine_model();
    let g = LipschitzData::new(0.0, |_: &[f64]| -0.4);
    let offset = model.hbar(&[0.0]).unwrap().abs();
    for &t in &[0.5, 0.25, 0.1] {
        let ratio = small_time_check(&g, &model, &[0.1], t).unwrap();
        println!("t = {t}: ratio = {ratio}, |hbar(0)| = {offset}");
        assert!((ratio - offset).abs() < 1e-6);
    }
}

#[test]
fn small_time_ratio_for_capped_norm_data_stays_bounded() {
    let model = cosine_model();
    let g = capped_norm();
    let mut ratios = Vec::new();
    for &t in &[0.1, 0.05, 0.025] {
        let ratio = small_time_check(&g, &model, &[0.0], t).unwrap();
        println!("t = {t}: ratio = {ratio}");
        assert!(ratio <= 5.0);
        ratios.push(ratio);
    }
    for pair in ratios.windows(2) {
        assert!((pair[0] - pair[1]).abs() < 1e-6);
    }
}

#[test]
fn profile_grows_quadratically_for_smooth_quadratic_data() {
    let model = free_model(1);
    let g = LipschitzData::new(2.0, |y: &[f64]| {
        let s = y[0].abs();
        if s <= 2.0 {
            0.5 * y[0] * y[0]
        } else {
            2.0 * s - 2.0
        }
    })
    .semiconcave(Some(1.0));
    let x = 0.5;
    let sol = solve(&g, &model, &[x], 1.0).unwrap();
    println!("value = {}, minimizer = {}", sol.value, sol.minimizer[0]);
    assert!((sol.value - x * x / 4.0).abs() < 1e-10);
    assert!((sol.minimizer[0] - x / 2.0).abs() < 1e-8);
    let growth = quad_growth_diag(&g, &model, &[x], 1.0, &dyadic_radii(1.0, 3)).unwrap();
    println!("delta = {}, r = {}", growth.delta, growth.r);
    assert!((growth.delta - 1.0).abs() < 1e-6);
    assert!((growth.r - 1.0).abs() < 1e-12);
}

#[test]
fn capped_norm_profile_reports_inverse_radius_growth() {
    let model = free_model(1);
    let g = capped_norm().semiconcave(None);
    let radii = dyadic_radii(0.8, 3);
    let growth = quad_growth_diag(&g, &model, &[0.0], 1.0, &radii).unwrap();
    println!("delta = {}, r = {}", growth.delta, growth.r);
    assert!((growth.r - 0.8).abs() < 1e-12);
    assert!((growth.delta - (1.0 / 0.8 + 0.5)).abs() < 1e-6);
}

#[test]
fn quadratic_growth_constant_matches_taylor_oracle() {
    let model = cosine_model();
    let g = LipschitzData::new(0.6, |y: &[f64]| 0.3 * (2.0 * y[0]).sin()).semiconcave(Some(1.2));
    let x = [0.25];
    let t = 1.0;
    let sol = solve(&g, &model, &x, t).unwrap();
    let ybar = sol.minimizer[0];
    let eta = 1e-3;
    let m = (h_direct(&g, &model, &x, t, &[ybar + eta]) - 2.0 * sol.value
        + h_direct(&g, &model, &x, t, &[ybar - eta]))
        / (eta * eta);
    println!("minimizer = {ybar}, profile curvature m = {m}");
    assert!(m > 0.0);
    let growth = quad_growth_diag(&g, &model, &x, t, &[0.02, 0.01, 0.005]).unwrap();
    println!("delta = {}, m/2 = {}", growth.delta, 0.5 * m);
    assert!((growth.delta - 0.5 * m).abs() < 0.1 * 0.5 * m);
}

#[test]
fn minimizer_obeys_the_gradient_relation() {
    let model = cosine_model();
    let g = LipschitzData::new(0.6, |y: &[f64]| 0.3 * (2.0 * y[0]).sin());
    let x = 0.25;
    let t = 1.0;
    let step = 1e-4;
    let sol = solve(&g, &model, &[x], t).unwrap();
    let up = solve(&g, &model, &[x + step], t).unwrap().value;
    let down = solve(&g, &model, &[x - step], t).unwrap().value;
    let du = (up - down) / (2.0 * step);
    let predicted = x - t * model.grad(&[du]).unwrap()[0];
    println!("minimizer = {}, predicted from Du = {predicted}", sol.minimizer[0]);
    assert!((sol.minimizer[0] - predicted).abs() < 1e-3);
}

#[test]
fn scaling_reduces_evaluation_to_unit_time() {
    let model = cosine_model();
    let g = capped_norm();
    let (x0, t0) = (0.3, 0.5);
    let (x, t) = (0.2, 1.0);
    let lhs = solve(&g, &model, &[x0 + x * t0], t * t0).unwrap();
    let scaled = LipschitzData::new(1.0, move |y: &[f64]| {
        (x0 + y[0] * t0).abs().min(10.0) / t0
    });
    let rhs = solve(&scaled, &model, &[x], t).unwrap();
    println!(
        "direct = {}, rescaled = {}",
        lhs.value,
        t0 * rhs.value
    );
    assert!((lhs.value - t0 * rhs.value).abs() < 1e-6);
    assert!((lhs.minimizer[0] - (x0 + t0 * rhs.minimizer[0])).abs() < 1e-6);
}

#[test]
fn refined_value_never_exceeds_sampled_profile() {
    let model = cosine_model();
    let g = capped_norm();
    let (x, t) = (0.3, 0.7);
    let sol = solve(&g, &model, &[x], t).unwrap();
    let replay = h_direct(&g, &model, &[x], t, &sol.minimizer);
    assert!((sol.value - replay).abs() < 1e-10);
    for k in 0..41 {
        let y = x - 1.5 + 3.0 * k as f64 / 40.0;
        assert!(sol.value <= h_direct(&g, &model, &[x], t, &[y]) + 1e-10);
    }
    let mut reach = 0.0f64;
    for &frac in &[0.25, 0.5, 0.75, 1.0] {
        reach = reach.max(model.grad(&[frac * g.lipschitz_bound()]).unwrap()[0].abs());
    }
    let radius = t * reach * 1.5 + t;
    println!("|minimizer - x| = {}, ball radius = {radius}", (sol.minimizer[0] - x).abs());
    assert!((sol.minimizer[0] - x).abs() <= radius + 1e-9);
}

#[test]
fn two_dimensional_free_solution_matches_the_radial_formula() {
    let model = free_model(2);
    let g = LipschitzData::new(0.25, |y: &[f64]| {
        0.25 * (y[0] * y[0] + y[1] * y[1]).sqrt().min(10.0)
    });
    let x = [0.1, -0.15];
    let sol = solve(&g, &model, &x, 1.0).unwrap();
    let expected = 0.5 * (x[0] * x[0] + x[1] * x[1]);
    println!(
        "value = {} (expected {expected}), minimizer = ({}, {})",
        sol.value, sol.minimizer[0], sol.minimizer[1]
    );
    assert!((sol.value - expected).abs() < 1e-8);
    assert!(sol.minimizer[0].abs() < 1e-6 && sol.minimizer[1].abs() < 1e-6);
    assert!(sol.h_profile.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn free_capped_norm_solves_follow_the_parabolic_formula(
        x in -0.25f64..0.25,
        t in 0.3f64..2.0,
    ) {
        let model = free_model(1);
        let g = capped_norm();
        let sol = solve(&g, &model, &[x], t).unwrap();
        prop_assert!((sol.value - x * x / (2.0 * t)).abs() < 1e-8);
        prop_assert!(sol.minimizer[0].abs() < 1e-7);
        let replay = h_direct(&g, &model, &[x], t, &sol.minimizer);
        prop_assert!((sol.value - replay).abs() < 1e-10);
        prop_assert!((sol.minimizer[0] - x).abs() <= 2.5 * t + 1e-9);
    }
}
