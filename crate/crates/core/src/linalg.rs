//! Dense eigenvalue and linear solves behind the collocation solvers:
//! shift-and-invert power iteration for principal eigenpairs (with a
//! Schur-based fallback) and bordered solves for singular stationarity
//! systems with a mass constraint.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

/// Principal eigenpair of a real matrix whose spectrum lies in
/// {Re λ ≤ λ₁ < shift} with λ₁ real, simple, and the closest eigenvalue to
/// `shift`. Inverse power iteration on (shift·I − A), started from the
/// constant vector; falls back to a Schur eigenvalue sweep plus targeted
/// inverse iteration when the iteration stalls.
pub(crate) fn principal_eig_real(
    a: &DMatrix<f64>,
    shift: f64,
) -> Result<(f64, DVector<f64>), String> {
    match shift_invert_iterate(a, shift) {
        Ok(pair) => Ok(pair),
        Err(primary) => {
            schur_fallback(a).map_err(|fb| format!("{primary}; fallback: {fb}"))
        }
    }
}

fn shift_invert_iterate(a: &DMatrix<f64>, shift: f64) -> Result<(f64, DVector<f64>), String> {
    let n = a.nrows();
    let mut shifted = -a.clone();
    for i in 0..n {
        shifted[(i, i)] += shift;
    }
    let lu = shifted.lu();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let scale = 1.0 + a.amax();
    // The Rayleigh quotient carries roundoff of order ‖A‖·ε, so stabilization
    // is judged relative to the matrix norm, not the eigenvalue.
    let lambda_tol = 8.0 * f64::EPSILON * scale;
    let mut lambda_prev = f64::INFINITY;
    let mut stable = 0usize;
    let mut converged = false;
    for _ in 0..500 {
        let mut y = lu
            .solve(&x)
            .ok_or_else(|| "shifted collocation matrix is singular".to_string())?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err("inverse iteration degenerated".into());
        }
        y /= norm;
        let ay = a * &y;
        let lambda = y.dot(&ay);
        x = y;
        if (lambda - lambda_prev).abs() <= lambda_tol {
            stable += 1;
            if stable >= 2 {
                converged = true;
                break;
            }
        } else {
            stable = 0;
        }
        lambda_prev = lambda;
    }
    if !converged {
        return Err("inverse power iteration did not stabilize in 500 iterations".into());
    }
    // A few more contractions once the eigenvalue has stagnated squeeze the
    // remaining non-eigen components out of the vector.
    for _ in 0..3 {
        let mut y = lu
            .solve(&x)
            .ok_or_else(|| "shifted collocation matrix is singular".to_string())?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err("inverse iteration degenerated".into());
        }
        y /= norm;
        x = y;
    }
    let ay = a * &x;
    let lambda = x.dot(&ay);
    let resid = (&ay - lambda * &x).amax();
    if resid <= 1e-9 * scale {
        Ok((lambda, x))
    } else {
        Err(format!(
            "eigenpair residual {resid:.3e} exceeds tolerance at stagnation"
        ))
    }
}

fn schur_fallback(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>), String> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-12, 100_000)
        .ok_or_else(|| "Schur decomposition did not converge".to_string())?;
    let eigs = schur.complex_eigenvalues();
    let scale = 1.0 + a.amax();
    let lambda = eigs
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * scale)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !lambda.is_finite() {
        return Err("no real eigenvalue found in Schur sweep".into());
    }
    // Targeted inverse iteration just above the located eigenvalue.
    let offset = 1e-8 * scale;
    let (refined, vec) = shift_invert_iterate(a, lambda + offset)?;
    Ok((refined, vec))
}

/// Principal eigenpair of a complex matrix: the eigenvalue closest to
/// `shift`, assumed simple and well separated from the rest of the spectrum.
/// Re-shifts at the running estimate when convergence is slow.
pub(crate) fn principal_eig_complex(
    a: &DMatrix<Complex64>,
    shift: Complex64,
) -> Result<(Complex64, DVector<Complex64>), String> {
    let n = a.nrows();
    let scale = 1.0 + a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lambda_tol = 8.0 * f64::EPSILON * scale;
    let mut sigma = shift;
    let mut x = DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    for round in 0..4 {
        let mut shifted = -a.clone();
        for i in 0..n {
            shifted[(i, i)] += sigma;
        }
        let lu = shifted.lu();
        let mut lambda_prev = Complex64::new(f64::INFINITY, 0.0);
        let mut stable = 0usize;
        for _ in 0..120 {
            let mut y = match lu.solve(&x) {
                Some(y) => y,
                None => {
                    sigma += Complex64::new(1e-6 * scale, 1e-6 * scale);
                    break;
                }
            };
            let norm = y.norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err("complex inverse iteration degenerated".into());
            }
            y /= Complex64::new(norm, 0.0);
            let ay = a * &y;
            let lambda = y.dotc(&ay);
            x = y;
            if (lambda - lambda_prev).norm() <= lambda_tol {
                stable += 1;
                if stable >= 2 {
                    let resid = (&ay - x.clone() * lambda).norm();
                    if resid <= 1e-9 * scale {
                        return Ok((lambda, x));
                    }
                    return Err(format!(
                        "complex eigenpair residual {resid:.3e} exceeds tolerance"
                    ));
                }
            } else {
                stable = 0;
            }
            lambda_prev = lambda;
        }
        // Slow linear convergence: re-center the shift at the estimate,
        // keeping a small offset so the shifted matrix stays regular.
        if round < 3 && lambda_prev.re.is_finite() {
            sigma = lambda_prev + Complex64::new(2e-3 * (1.0 + lambda_prev.norm()), 0.0);
        }
    }
    Err("complex shift-invert iteration did not converge after re-shifting".into())
}

/// Solves the bordered system [A c; wᵀ 0]·[x; μ] = [f; s]. Used to pin the
/// one-dimensional nullspace of stationarity operators with a mass or
/// weighted-mean constraint.
pub(crate) fn bordered_solve(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    w: &DVector<f64>,
    f: &DVector<f64>,
    s: f64,
) -> Result<(DVector<f64>, f64), String> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        big[(i, n)] = c[i];
        big[(n, i)] = w[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(f);
    rhs[n] = s;
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| "bordered stationarity system is singular".to_string())?;
    let x = sol.rows(0, n).into_owned();
    Ok((x, sol[n]))
}
