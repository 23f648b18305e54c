//! Cell problems for the quadratic Hamiltonian ½|p|² + V(y).
//!
//! The effective Hamiltonian H̄(p) is computed as the principal eigenvalue of
//! the tilted operator 𝓛_p = ½Δ − p·D + (½|p|² + V) on the torus, with
//! positive eigenfunction r_p. The corrector v_p = −log r_p solves
//! −½Δv_p + ½|p + Dv_p|² + V = H̄(p), and π_p ∝ r_p·r_{−p} is the invariant
//! density of the associated drift diffusion.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::spectral;
use crate::torus::{ScalarField, TorusGrid, VectorField};

/// Largest |p| accepted by the solvers; beyond it the resolution requirements
/// grow and the tool refuses rather than silently degrading.
pub const MAX_P_NORM: f64 = 20.0;

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("principal eigenvector is not positive: {0}")]
    NoPositiveEigenvector(String),
    #[error("eigenvalue iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("cell solutions are incompatible: {0}")]
    MismatchedSolutions(String),
    #[error("Hessian is not positive definite at p = {0:?}")]
    NotPositiveDefinite(Vec<f64>),
}

/// Periodic potential with a Lipschitz bound on its gradient.
#[derive(Debug, Clone)]
pub struct Potential {
    field: ScalarField,
    lipschitz_bound: f64,
    fingerprint: u64,
}

impl Potential {
    /// Wraps a field, taking the max node value of |∇V| as the Lipschitz
    /// bound.
    pub fn new(field: ScalarField) -> Self {
        let lipschitz_bound = field.gradient().max_norm();
        let fingerprint = hash_potential(&field, lipschitz_bound);
        Potential {
            field,
            lipschitz_bound,
            fingerprint,
        }
    }

    /// Wraps a field with an externally supplied Lipschitz bound, which must
    /// dominate the max node value of |∇V| up to 1% slack.
    pub fn with_lipschitz_bound(field: ScalarField, lipschitz_bound: f64) -> Self {
        let observed = field.gradient().max_norm();
        assert!(
            lipschitz_bound >= 0.0 && 1.01 * lipschitz_bound >= observed,
            "Lipschitz bound {lipschitz_bound} below observed gradient norm {observed}"
        );
        let fingerprint = hash_potential(&field, lipschitz_bound);
        Potential {
            field,
            lipschitz_bound,
            fingerprint,
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn min_value(&self) -> f64 {
        self.field.min_value()
    }

    pub fn max_value(&self) -> f64 {
        self.field.max_value()
    }

    /// Oscillation max V − min V; zero exactly for constant potentials.
    pub fn oscillation(&self) -> f64 {
        self.field.max_value() - self.field.min_value()
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

fn hash_potential(field: &ScalarField, lipschitz_bound: f64) -> u64 {
    let mut h = DefaultHasher::new();
    field.grid().dim().hash(&mut h);
    field.grid().n().hash(&mut h);
    for &v in field.values() {
        v.to_bits().hash(&mut h);
    }
    lipschitz_bound.to_bits().hash(&mut h);
    h.finish()
}

/// Output of one cell-problem solve at momentum p.
#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Momentum at which the cell problem was solved.
    pub p: Vec<f64>,
    /// Effective Hamiltonian H̄(p), the principal eigenvalue of 𝓛_p.
    pub hbar: f64,
    /// E_p = ½|p|² − H̄(p).
    pub e_p: f64,
    /// Corrector v_p, normalized so v_p(0) = 0.
    pub v: ScalarField,
    /// Ground state r_p = e^{−v_p}.
    pub r: ScalarField,
    /// Invariant density π_p = C·r_p·r_{−p} with mean 1.
    pub pi: ScalarField,
    /// Grid points per axis used for the solve.
    pub resolution: usize,
    /// Sup norm of −½Δv + ½|p+Dv|² + V − hbar on the grid.
    pub cell_residual: f64,
    /// Sup norm of −½Δπ − div((p+Dv)π) on the grid.
    pub stationarity_residual: f64,
    potential_on_grid: ScalarField,
    potential_id: u64,
}

impl CellSolution {
    /// Drift of the transformed diffusion, b_p = −p − Dv_p.
    pub fn drift(&self) -> VectorField {
        let grad = self.v.gradient();
        let comps = (0..self.v.grid().dim())
            .map(|a| grad.component(a).map(|g| -self.p[a] - g))
            .collect();
        VectorField::from_components(comps)
    }

}

/// Residual sup norms of a cell solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub cell_residual: f64,
    pub stationarity_residual: f64,
}

/// Solves the cell problem at momentum `p` on an `n`-per-axis grid.
pub fn solve_cell(potential: &Potential, p: &[f64], n: usize) -> Result<CellSolution, CellError> {
    Ok(solve_cell_pair(potential, p, n)?.0)
}

/// Solves the cell problems at `p` and `−p` together. The two share one
/// collocation matrix (the tilted operators are mutual transposes) and the
/// same invariant density.
pub fn solve_cell_pair(
    potential: &Potential,
    p: &[f64],
    n: usize,
) -> Result<(CellSolution, CellSolution), CellError> {
    let dim = potential.field.grid().dim();
    if p.len() != dim {
        return Err(CellError::InvalidInput(format!(
            "momentum has {} components but the potential lives on a {dim}-dimensional torus",
            p.len()
        )));
    }
    let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if p_norm > MAX_P_NORM {
        return Err(CellError::InvalidInput(format!(
            "|p| = {p_norm:.3} exceeds the supported range |p| <= {MAX_P_NORM}"
        )));
    }
    if n < 32 || !n.is_power_of_two() {
        return Err(CellError::InvalidInput(format!(
            "resolution {n} must be a power of two with n >= 32"
        )));
    }
    if n < potential.field.grid().n() {
        return Err(CellError::InvalidInput(format!(
            "resolution {n} is below the potential's sample resolution {}",
            potential.field.grid().n()
        )));
    }

    let v_grid = potential.field.resample(n);
    if potential.oscillation() == 0.0 {
        // Constants solve the cell problem: v ≡ 0, π ≡ 1, H̄ = ½|p|² + V.
        return Ok(constant_potential_pair(potential, p, n, &v_grid));
    }
    let matrix = tilted_operator_matrix(&v_grid, p);
    let sigma = 0.5 * p_norm * p_norm + potential.max_value() + 1.0;

    let (lam_fwd, r_fwd) =
        linalg::principal_eig_real(&matrix, sigma).map_err(CellError::NonConvergence)?;
    let transposed = matrix.transpose();
    let (lam_rev, r_rev) =
        linalg::principal_eig_real(&transposed, sigma).map_err(CellError::NonConvergence)?;
    if (lam_fwd - lam_rev).abs() > 1e-9 * (1.0 + lam_fwd.abs()) {
        return Err(CellError::NonConvergence(format!(
            "paired eigenvalues disagree: {lam_fwd} vs {lam_rev}"
        )));
    }
    let hbar = 0.5 * (lam_fwd + lam_rev);

    let grid = v_grid.grid();
    let r_p = positive_eigenfield(grid, &r_fwd)?;
    let r_mp = positive_eigenfield(grid, &r_rev)?;

    let pi = {
        let product = r_p.zip_with(&r_mp, |a, b| a * b);
        let mean = product.mean();
        product.map(|x| x / mean)
    };

    let potential_id = potential.fingerprint();
    let build = |p_vec: Vec<f64>, r: &ScalarField| -> CellSolution {
        let v = r.map(|x| -x.ln());
        let p_sq = p_vec.iter().map(|x| x * x).sum::<f64>();
        let (cell_residual, stationarity_residual) =
            residual_norms(&p_vec, hbar, &v, &pi, &v_grid);
        CellSolution {
            p: p_vec,
            hbar,
            e_p: 0.5 * p_sq - hbar,
            v,
            r: r.clone(),
            pi: pi.clone(),
            resolution: n,
            cell_residual,
            stationarity_residual,
            potential_on_grid: v_grid.clone(),
            potential_id,
        }
    };

    let sol_p = build(p.to_vec(), &r_p);
    let sol_mp = build(p.iter().map(|x| -x).collect(), &r_mp);
    Ok((sol_p, sol_mp))
}

/// Gradient DH̄(p) = ∫(p + Dv_p)π_p dx, computed from a solve at p together
/// with its partner at −p (which pins down π_p).
pub fn grad_hbar(
    sol_p: &CellSolution,
    sol_minus_p: &CellSolution,
) -> Result<Vec<f64>, CellError> {
    let dim = sol_p.p.len();
    if sol_minus_p.p.len() != dim
        || sol_p
            .p
            .iter()
            .zip(&sol_minus_p.p)
            .any(|(a, b)| (a + b).abs() > 1e-12)
    {
        return Err(CellError::MismatchedSolutions(format!(
            "momenta {:?} and {:?} are not opposite",
            sol_p.p, sol_minus_p.p
        )));
    }
    if sol_p.resolution != sol_minus_p.resolution {
        return Err(CellError::MismatchedSolutions(format!(
            "resolutions differ: {} vs {}",
            sol_p.resolution, sol_minus_p.resolution
        )));
    }
    if sol_p.potential_id != sol_minus_p.potential_id {
        return Err(CellError::MismatchedSolutions(
            "solutions come from different potentials".into(),
        ));
    }
    let grad_v = sol_p.v.gradient();
    Ok((0..dim)
        .map(|a| {
            sol_p.p[a]
                + grad_v
                    .component(a)
                    .zip_with(&sol_p.pi, |g, w| g * w)
                    .mean()
        })
        .collect())
}

/// Hessian D²H̄(p) by central differences of grad_hbar with step `h`,
/// symmetrized. Fails if the result is not positive definite.
pub fn hess_hbar(potential: &Potential, p: &[f64], h: f64) -> Result<DMatrix<f64>, CellError> {
    let n = default_resolution(potential);
    hess_hbar_at_resolution(potential, p, h, n)
}

/// As [`hess_hbar`] with an explicit grid resolution.
pub fn hess_hbar_at_resolution(
    potential: &Potential,
    p: &[f64],
    h: f64,
    n: usize,
) -> Result<DMatrix<f64>, CellError> {
    if !(1e-4..=1e-2).contains(&h) {
        return Err(CellError::InvalidInput(format!(
            "difference step {h} outside [1e-4, 1e-2]"
        )));
    }
    let dim = p.len();
    let mut m = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let mut p_plus = p.to_vec();
        p_plus[a] += h;
        let mut p_minus = p.to_vec();
        p_minus[a] -= h;
        let (sp, smp) = solve_cell_pair(potential, &p_plus, n)?;
        let g_plus = grad_hbar(&sp, &smp)?;
        let (sp, smp) = solve_cell_pair(potential, &p_minus, n)?;
        let g_minus = grad_hbar(&sp, &smp)?;
        for b in 0..dim {
            m[(b, a)] = (g_plus[b] - g_minus[b]) / (2.0 * h);
        }
    }
    let sym = (&m + m.transpose()) * 0.5;
    let min_eig = sym
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e));
    if min_eig <= 0.0 {
        return Err(CellError::NotPositiveDefinite(p.to_vec()));
    }
    Ok(sym)
}

/// Recomputes the residual sup norms of a solution from its stored fields.
pub fn residuals(sol: &CellSolution) -> Residuals {
    let (cell_residual, stationarity_residual) = residual_norms(
        &sol.p,
        sol.hbar,
        &sol.v,
        &sol.pi,
        &sol.potential_on_grid,
    );
    Residuals {
        cell_residual,
        stationarity_residual,
    }
}

/// Default solve resolution: fine enough for spectral accuracy on smooth
/// potentials while keeping the dense collocation matrices desk-sized.
pub fn default_resolution(potential: &Potential) -> usize {
    let floor = match potential.field.grid().dim() {
        1 => 128,
        _ => 32,
    };
    floor.max(potential.field.grid().n())
}

fn constant_potential_pair(
    potential: &Potential,
    p: &[f64],
    n: usize,
    v_grid: &ScalarField,
) -> (CellSolution, CellSolution) {
    let grid = v_grid.grid();
    let p_sq = p.iter().map(|x| x * x).sum::<f64>();
    let hbar = 0.5 * p_sq + potential.min_value();
    let potential_id = potential.fingerprint();
    let build = |p_vec: Vec<f64>| CellSolution {
        p: p_vec,
        hbar,
        e_p: 0.5 * p_sq - hbar,
        v: ScalarField::constant(grid, 0.0),
        r: ScalarField::constant(grid, 1.0),
        pi: ScalarField::constant(grid, 1.0),
        resolution: n,
        cell_residual: 0.0,
        stationarity_residual: 0.0,
        potential_on_grid: v_grid.clone(),
        potential_id,
    };
    (build(p.to_vec()), build(p.iter().map(|x| -x).collect()))
}

fn residual_norms(
    p: &[f64],
    hbar: f64,
    v: &ScalarField,
    pi: &ScalarField,
    potential: &ScalarField,
) -> (f64, f64) {
    let grad_v = v.gradient();
    let lap_v = v.laplacian();
    let dim = p.len();
    let mut cell = 0.0f64;
    for j in 0..v.grid().len() {
        let mut kinetic = 0.0;
        for (a, &pa) in p.iter().enumerate().take(dim) {
            let s = pa + grad_v.component(a).values()[j];
            kinetic += s * s;
        }
        let res = -0.5 * lap_v.values()[j] + 0.5 * kinetic + potential.values()[j] - hbar;
        cell = cell.max(res.abs());
    }

    let flux = VectorField::from_components(
        (0..dim)
            .map(|a| {
                grad_v
                    .component(a)
                    .zip_with(pi, |g, w| (p[a] + g) * w)
            })
            .collect(),
    );
    let lap_pi = pi.laplacian();
    let div_flux = flux.divergence();
    let stationarity = lap_pi
        .zip_with(&div_flux, |l, d| -0.5 * l - d)
        .max_abs();
    (cell, stationarity)
}

/// Dense collocation matrix of 𝓛_p = ½Δ − p·D + (½|p|² + V) acting on grid
/// values, built from the circulant spectral differentiation stencils.
fn tilted_operator_matrix(v_grid: &ScalarField, p: &[f64]) -> DMatrix<f64> {
    let grid = v_grid.grid();
    let n = grid.n();
    let d1 = spectral::circulant_column(n, 1);
    let d2 = spectral::circulant_column(n, 2);
    let len = grid.len();
    let p_sq = p.iter().map(|x| x * x).sum::<f64>();
    let mut m = DMatrix::zeros(len, len);
    match grid.dim() {
        1 => {
            for row in 0..n {
                for col in 0..n {
                    let s = (n + row - col) % n;
                    m[(row, col)] = 0.5 * d2[s] - p[0] * d1[s];
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let row = i * n + j;
                    for k in 0..n {
                        let s0 = (n + i - k) % n;
                        m[(row, k * n + j)] += 0.5 * d2[s0] - p[0] * d1[s0];
                        let s1 = (n + j - k) % n;
                        m[(row, i * n + k)] += 0.5 * d2[s1] - p[1] * d1[s1];
                    }
                }
            }
        }
    }
    for (j, &vj) in v_grid.values().iter().enumerate() {
        m[(j, j)] += 0.5 * p_sq + vj;
    }
    m
}

/// Sign-fixes an eigenvector by its maximum-magnitude entry and checks strict
/// positivity; the true ground state is positive, so a sign change or a
/// min/max ratio below 1e−10 flags discretization failure. The result is
/// normalized to value 1 at the origin node.
fn positive_eigenfield(grid: TorusGrid, vec: &DVector<f64>) -> Result<ScalarField, CellError> {
    let mut sign = 1.0;
    let mut max_abs = 0.0;
    for &x in vec.iter() {
        if x.abs() > max_abs {
            max_abs = x.abs();
            sign = x.signum();
        }
    }
    let values: Vec<f64> = vec.iter().map(|&x| x * sign).collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 || min / max < 1e-10 {
        return Err(CellError::NoPositiveEigenvector(format!(
            "min/max entry ratio {:.3e}",
            min / max
        )));
    }
    let origin = values[0];
    Ok(ScalarField::from_values(
        grid,
        values.into_iter().map(|x| x / origin).collect(),
    ))
}
