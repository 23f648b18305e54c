use hjhomog::bloch::{
    bloch_fiber, correctors, effective_diffusion, gaussian_main_term, invariant_density,
    remainder_scan, sharp_ballistic_amplitude, BlochError, DriftSpec,
};
use hjhomog::cell::{grad_hbar, hess_hbar, solve_cell, solve_cell_pair, Potential};
use hjhomog::torus::{ScalarField, TorusGrid, VectorField};
use std::f64::consts::PI;

fn sine_drift(n: usize) -> DriftSpec {
    let grid = TorusGrid::new(1, n);
    DriftSpec::explicit(VectorField::from_components(vec![ScalarField::from_fn(
        grid,
        |x| (2.0 * PI * x[0]).sin(),
    )]))
    .unwrap()
}

fn still_drift(dim: usize) -> DriftSpec {
    let grid = TorusGrid::new(dim, 32);
    let comps = (0..dim).map(|_| ScalarField::constant(grid, 0.0)).collect();
    DriftSpec::explicit(VectorField::from_components(comps)).unwrap()
}

fn cosine_potential() -> Potential {
    Potential::new(ScalarField::from_fn(TorusGrid::new(1, 32), |x| {
        (2.0 * PI * x[0]).cos()
    }))
}

/// Potential well W with b = −W′ = sin(2πx).
fn gibbs_weight(x: f64, sign: f64) -> f64 {
    (sign * 2.0 * (2.0 * PI * x).cos() / (2.0 * PI)).exp()
}

fn gibbs_mean(sign: f64) -> f64 {
    let n = 4096;
    (0..n).map(|j| gibbs_weight(j as f64 / n as f64, sign)).sum::<f64>() / n as f64
}

#[test]
fn sine_drift_density_matches_the_gibbs_formula() {
    let b = sine_drift(32);
    let m = invariant_density(&b, 128).unwrap();
    let z = gibbs_mean(-1.0);
    let grid = m.grid();
    let mut worst = 0.0f64;
    for (j, &v) in m.values().iter().enumerate() {
        let x = grid.node(j)[0];
        let exact = gibbs_weight(x, -1.0) / z;
        worst = worst.max((v - exact).abs() / exact);
    }
    println!("worst relative density error = {worst:e}");
    assert!(worst < 1e-8);
    assert!(m.values().iter().all(|&v| v > 0.0));
    assert!((m.mean() - 1.0).abs() < 1e-13);
}

#[test]
fn sine_drift_correctors_solve_their_equation() {
    let b = sine_drift(32);
    let m = invariant_density(&b, 128).unwrap();
    let b_bar = vec![b.b().component(0).resample(128).zip_with(&m, |v, w| v * w).mean()];
    let (chi, residuals) = correctors(&b, &m, &b_bar, 128).unwrap();
    println!("corrector residual = {:e}", residuals[0]);
    assert!(residuals[0] < 1e-8);
    let weighted_mean = chi[0].zip_with(&m, |c, w| c * w).mean();
    println!("m-weighted mean = {weighted_mean:e}");
    assert!(weighted_mean.abs() < 1e-12);
}

#[test]
fn sine_drift_diffusion_matches_the_two_integral_formula() {
    let b = sine_drift(32);
    let ed = effective_diffusion(&b, 128).unwrap();
    let oracle = 1.0 / (gibbs_mean(1.0) * gibbs_mean(-1.0));
    let q = ed.q[(0, 0)];
    println!("q = {q}, oracle = {oracle}, rel = {:e}", (q - oracle).abs() / oracle);
    assert!((q - oracle).abs() / oracle < 1e-6);
    assert!(ed.b_bar[0].abs() < 1e-10);
    assert!(ed.density_residual < 1e-8);
}

#[test]
fn transformed_drift_reproduces_cell_objects() {
    let v = cosine_potential();
    let (sol_p, sol_mp) = solve_cell_pair(&v, &[1.0], 128).unwrap();
    let b = DriftSpec::doob(&sol_p);

    let manual = sol_p.v.gradient();
    let mut worst = 0.0f64;
    for (bj, gj) in b.b().component(0).values().iter().zip(manual.component(0).values()) {
        worst = worst.max((bj - (-1.0 - gj)).abs());
    }
    println!("drift assembly deviation = {worst:e}");
    assert!(worst < 1e-10);

    let m = invariant_density(&b, 128).unwrap();
    let mut density_gap = 0.0f64;
    for (a, b_) in m.values().iter().zip(sol_p.pi.values()) {
        density_gap = density_gap.max((a - b_).abs());
    }
    println!("invariant density vs cell density: {density_gap:e}");
    assert!(density_gap < 1e-8);

    let ed = effective_diffusion(&b, 128).unwrap();
    let grad = grad_hbar(&sol_p, &sol_mp).unwrap();
    println!("b_bar = {}, -DH̄(p) = {}", ed.b_bar[0], -grad[0]);
    assert!((ed.b_bar[0] + grad[0]).abs() < 1e-6);
}

#[test]
fn transformed_drift_diffusion_matches_the_hamiltonian_hessian() {
    let v = cosine_potential();
    let cell = solve_cell(&v, &[1.0], 128).unwrap();
    let ed = effective_diffusion(&DriftSpec::doob(&cell), 128).unwrap();
    let hess = hess_hbar(&v, &[1.0], 1e-3).unwrap();
    let rel = (ed.q[(0, 0)] - hess[(0, 0)]).abs() / hess[(0, 0)];
    println!("q = {}, hessian = {}, rel = {rel:e}", ed.q[(0, 0)], hess[(0, 0)]);
    assert!(rel < 1e-3);
}

#[test]
fn fiber_expansion_recovers_drift_and_diffusion() {
    let h = 0.05;
    for (label, b) in [
        ("sine", sine_drift(32)),
        ("doob", DriftSpec::doob(&solve_cell(&cosine_potential(), &[1.0], 64).unwrap())),
    ] {
        let ed = effective_diffusion(&b, 64).unwrap();
        let lam: Vec<_> = [-2.0 * h, -h, 0.0, h, 2.0 * h]
            .iter()
            .map(|&xi| bloch_fiber(&b, &[xi], 64).unwrap())
            .collect();
        assert!(lam[2].norm() < 1e-10);
        let first = (lam[0] - lam[1] * 8.0 + lam[3] * 8.0 - lam[4]) / (12.0 * h);
        let second = (-lam[4] + lam[3] * 16.0 - lam[2] * 30.0 + lam[1] * 16.0 - lam[0])
            / (12.0 * h * h);
        println!(
            "{label}: Im λ' = {} vs b̄ = {}; -Re λ'' = {} vs q = {}",
            first.im,
            ed.b_bar[0],
            -second.re,
            ed.q[(0, 0)]
        );
        assert!((first.im - ed.b_bar[0]).abs() < 1e-4);
        assert!((-second.re - ed.q[(0, 0)]).abs() < 1e-4);
    }

    let plane = still_drift(2);
    let lambda = bloch_fiber(&plane, &[0.3, -0.2], 32).unwrap();
    let expected = -0.5 * (0.3f64 * 0.3 + 0.2 * 0.2);
    println!("free plane fiber = {lambda}, expected = {expected}");
    assert!((lambda - expected).norm() < 1e-10);
}

#[test]
fn main_term_composes_its_factors() {
    let still = effective_diffusion(&still_drift(1), 32).unwrap();
    let t = 10.0;
    let free = gaussian_main_term(&still, t, &[0.0], &[1.7]);
    let heat = (-1.7f64 * 1.7 / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    println!("free main term = {free}, heat kernel = {heat}");
    assert!((free - heat).abs() < 1e-12);

    let ed = effective_diffusion(&sine_drift(32), 128).unwrap();
    let y = ed.b_bar[0] * t;
    let value = gaussian_main_term(&ed, t, &[0.0], &[y]);
    let assembled =
        ed.m.interpolate(&[y]) / ((2.0 * PI * t).sqrt() * ed.q[(0, 0)].sqrt());
    println!("peak main term = {value}, assembled = {assembled}");
    assert!((value - assembled).abs() < 1e-12);
}

#[test]
fn remainder_scan_vanishes_for_exactly_gaussian_flows() {
    let still = still_drift(1);
    let ed = effective_diffusion(&still, 32).unwrap();
    let series = remainder_scan(&still, &ed, &[5.0, 10.0], 16).unwrap();
    println!("still series = {series:?}");
    for s in &series {
        assert!(*s <= 1e-8);
    }

    let grid = TorusGrid::new(1, 32);
    let sliding = DriftSpec::explicit(VectorField::from_components(vec![
        ScalarField::constant(grid, 0.4),
    ]))
    .unwrap();
    let ed = effective_diffusion(&sliding, 32).unwrap();
    let series = remainder_scan(&sliding, &ed, &[5.0, 10.0], 16).unwrap();
    println!("sliding series = {series:?}");
    for s in &series {
        assert!(*s <= 1e-8);
    }
}

#[test]
fn sine_drift_remainder_band_is_bounded() {
    let b = sine_drift(32);
    let ed = effective_diffusion(&b, 128).unwrap();
    let series = remainder_scan(&b, &ed, &[5.0, 10.0, 20.0], 16).unwrap();
    println!("series = {series:?}");
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(0.0f64, f64::max);
    assert!(lo > 0.0);
    assert!(hi / lo <= 4.0);
}

#[test]
fn band_constants_are_stable_across_the_momentum_family() {
    let v = cosine_potential();
    let mut bands = Vec::new();
    for p in [0.6, 1.0] {
        let cell = solve_cell(&v, &[p], 64).unwrap();
        let b = DriftSpec::doob(&cell);
        let ed = effective_diffusion(&b, 64).unwrap();
        let series = remainder_scan(&b, &ed, &[5.0, 10.0], 16).unwrap();
        let band = series.iter().cloned().fold(0.0f64, f64::max);
        println!("p = {p}: series = {series:?}, band = {band}");
        bands.push(band);
    }
    let ratio = bands[0].max(bands[1]) / bands[0].min(bands[1]);
    println!("band ratio = {ratio}");
    assert!(ratio <= 2.0);
}

#[test]
fn ballistic_amplitude_is_flat_and_periodic() {
    let free = Potential::new(ScalarField::constant(TorusGrid::new(1, 32), 0.0));
    let cell = solve_cell(&free, &[0.5], 32).unwrap();
    let ed = effective_diffusion(&DriftSpec::doob(&cell), 32).unwrap();
    let flat = (2.0 * PI).sqrt().recip();
    for y in [-3.2, 0.0, 0.7, 11.0] {
        let a = sharp_ballistic_amplitude(&cell, &ed, &[y]);
        assert!((a - flat).abs() < 1e-10, "amplitude {a} at y = {y}");
    }

    let cell = solve_cell(&cosine_potential(), &[1.0], 64).unwrap();
    let ed = effective_diffusion(&DriftSpec::doob(&cell), 64).unwrap();
    let a0 = sharp_ballistic_amplitude(&cell, &ed, &[0.3]);
    let a1 = sharp_ballistic_amplitude(&cell, &ed, &[1.3]);
    let a2 = sharp_ballistic_amplitude(&cell, &ed, &[-0.7]);
    println!("a(0.3) = {a0}, a(1.3) = {a1}, a(-0.7) = {a2}");
    assert!((a0 - a1).abs() < 1e-10);
    assert!((a0 - a2).abs() < 1e-10);
}

#[test]
fn scan_preconditions_are_enforced() {
    let b = still_drift(1);
    let ed = effective_diffusion(&b, 32).unwrap();
    assert!(matches!(
        remainder_scan(&b, &ed, &[50.0], 16),
        Err(BlochError::InvalidInput(_))
    ));
    assert!(matches!(
        remainder_scan(&b, &ed, &[5.0], 20),
        Err(BlochError::InvalidInput(_))
    ));
    let plane = still_drift(2);
    let ed2 = effective_diffusion(&plane, 32).unwrap();
    assert!(matches!(
        remainder_scan(&plane, &ed2, &[5.0], 16),
        Err(BlochError::InvalidInput(_))
    ));
}
