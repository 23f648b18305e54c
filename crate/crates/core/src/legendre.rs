//! Legendre transform of the effective Hamiltonian: L̄(q) = sup_p {q·p − H̄(p)}
//! together with DL̄(q) = p(q) and D²L̄(q) = (D²H̄(p(q)))⁻¹. The supremum is
//! attained at the unique p with DH̄(p) = q, found by damped Newton.

use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::{DMatrix, DVector};

use crate::cell::{
    self, grad_hbar, solve_cell_pair, CellError, CellSolution, Potential, MAX_P_NORM,
};

/// Largest |q| accepted; keeps the maximizer p(q) = q + O(‖DV‖) inside the
/// cell solver's |p| ≤ 20 operating range.
pub const MAX_Q_NORM: f64 = 18.0;

#[derive(Debug, thiserror::Error)]
pub enum LegendreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Newton iteration diverged for q = {0:?}")]
    NewtonDiverged(Vec<f64>),
    #[error(transparent)]
    Cell(#[from] CellError),
}

/// H̄ as a function object: solves cell problems on demand and caches them,
/// keyed by p rounded to 1e−12. A solve at p also populates −p, so evenness
/// is served from cache.
pub struct HamiltonianModel {
    potential: Potential,
    resolution: usize,
    hess_step: f64,
    cache: DashMap<Vec<i64>, Arc<(CellSolution, CellSolution)>>,
}

impl HamiltonianModel {
    pub fn new(potential: Potential) -> Self {
        let resolution = cell::default_resolution(&potential);
        Self::with_resolution(potential, resolution)
    }

    pub fn with_resolution(potential: Potential, resolution: usize) -> Self {
        HamiltonianModel {
            potential,
            resolution,
            hess_step: 1e-3,
            cache: DashMap::new(),
        }
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Cell solutions at (p, −p), from cache or a fresh paired solve.
    pub fn solutions(&self, p: &[f64]) -> Result<Arc<(CellSolution, CellSolution)>, CellError> {
        let key = cache_key(p);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        // Sweeps over many distinct momenta (Hopf-Lax scans) would otherwise
        // grow the cache without bound; flush once the held fields reach a
        // few hundred megabytes.
        let dim = self.potential.field().grid().dim();
        let entry_len = self.resolution.pow(dim as u32);
        let cap = (5_000_000 / entry_len).max(64);
        if self.cache.len() >= cap {
            self.cache.clear();
        }
        let (sol_p, sol_mp) = solve_cell_pair(&self.potential, p, self.resolution)?;
        let mirrored = Arc::new((sol_mp.clone(), sol_p.clone()));
        let entry = Arc::new((sol_p, sol_mp));
        let mirror_key = cache_key(&entry.1.p);
        self.cache.insert(key, entry.clone());
        self.cache.insert(mirror_key, mirrored);
        Ok(entry)
    }

    pub fn hbar(&self, p: &[f64]) -> Result<f64, CellError> {
        Ok(self.solutions(p)?.0.hbar)
    }

    pub fn grad(&self, p: &[f64]) -> Result<Vec<f64>, CellError> {
        let pair = self.solutions(p)?;
        grad_hbar(&pair.0, &pair.1)
    }

    /// D²H̄(p) by central differences of the gradient (step 1e−3),
    /// symmetrized and checked positive definite.
    pub fn hess(&self, p: &[f64]) -> Result<DMatrix<f64>, CellError> {
        let dim = p.len();
        let h = self.hess_step;
        let mut m = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let mut p_plus = p.to_vec();
            p_plus[a] += h;
            let mut p_minus = p.to_vec();
            p_minus[a] -= h;
            let g_plus = self.grad(&p_plus)?;
            let g_minus = self.grad(&p_minus)?;
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
}

fn cache_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|&x| (x * 1e12).round() as i64).collect()
}

/// One point of the effective Lagrangian: the value, the maximizer, and the
/// dual residual |DH̄(p_of_q) − q| actually achieved.
#[derive(Debug, Clone)]
pub struct LagrangianValue {
    pub q: Vec<f64>,
    pub lbar: f64,
    pub p_of_q: Vec<f64>,
    pub dual_gap: f64,
}

/// Computes L̄(q) by solving DH̄(p) = q with damped Newton from p₀ = q; falls
/// back to a grid search over |p − q| ≤ 2(1 + osc V) before giving up.
pub fn legendre(model: &HamiltonianModel, q: &[f64]) -> Result<LagrangianValue, LegendreError> {
    let q_norm = norm(q);
    if q_norm > MAX_Q_NORM {
        return Err(LegendreError::InvalidInput(format!(
            "|q| = {q_norm:.3} exceeds the supported range |q| <= {MAX_Q_NORM}"
        )));
    }
    if let Some(val) = newton_from(model, q, q)? {
        return Ok(val);
    }
    // Grid-search fallback: scan a box around q for the best dual residual,
    // then polish with Newton from there.
    let radius = 2.0 * (1.0 + model.potential().oscillation());
    let dim = q.len();
    let steps = 24usize;
    let mut best_p = q.to_vec();
    let mut best_resid = f64::INFINITY;
    let mut scan = |p: &[f64]| -> Result<(), LegendreError> {
        if norm(p) > MAX_P_NORM {
            return Ok(());
        }
        let g = model.grad(p)?;
        let r = norm(&sub(&g, q));
        if r < best_resid {
            best_resid = r;
            best_p = p.to_vec();
        }
        Ok(())
    };
    match dim {
        1 => {
            for i in 0..=steps {
                let p = [q[0] - radius + 2.0 * radius * i as f64 / steps as f64];
                scan(&p)?;
            }
        }
        _ => {
            for i in 0..=steps {
                for j in 0..=steps {
                    let p = [
                        q[0] - radius + 2.0 * radius * i as f64 / steps as f64,
                        q[1] - radius + 2.0 * radius * j as f64 / steps as f64,
                    ];
                    scan(&p)?;
                }
            }
        }
    }
    match newton_from(model, q, &best_p)? {
        Some(val) => Ok(val),
        None => Err(LegendreError::NewtonDiverged(q.to_vec())),
    }
}

/// Envelope theorem: DL̄(q) = p(q).
pub fn dl(value: &LagrangianValue) -> Vec<f64> {
    value.p_of_q.clone()
}

/// D²L̄(q) = (D²H̄(p(q)))⁻¹, symmetric positive definite.
pub fn d2l(model: &HamiltonianModel, q: &[f64]) -> Result<DMatrix<f64>, LegendreError> {
    let value = legendre(model, q)?;
    let hess = model.hess(&value.p_of_q)?;
    let inv = hess.clone().try_inverse().ok_or_else(|| {
        LegendreError::InvalidInput(format!("Hessian at p = {:?} is singular", value.p_of_q))
    })?;
    Ok((&inv + inv.transpose()) * 0.5)
}

fn newton_from(
    model: &HamiltonianModel,
    q: &[f64],
    start: &[f64],
) -> Result<Option<LagrangianValue>, LegendreError> {
    let mut p = start.to_vec();
    let mut grad = model.grad(&p)?;
    let mut resid = norm(&sub(&grad, q));
    for _ in 0..50 {
        if resid < 1e-9 {
            let hbar = model.hbar(&p)?;
            let lbar = dot(q, &p) - hbar;
            return Ok(Some(LagrangianValue {
                q: q.to_vec(),
                lbar,
                p_of_q: p,
                dual_gap: resid,
            }));
        }
        let hess = model.hess(&p)?;
        let rhs = DVector::from_vec(sub(&grad, q));
        let step = match hess.lu().solve(&rhs) {
            Some(s) => s,
            None => return Ok(None),
        };
        // Armijo damping: halve the step until the dual residual decreases.
        let mut alpha = 1.0;
        let mut advanced = false;
        while alpha >= 1e-6 {
            let trial: Vec<f64> = p
                .iter()
                .zip(step.iter())
                .map(|(pi, si)| pi - alpha * si)
                .collect();
            if norm(&trial) <= MAX_P_NORM {
                let trial_grad = model.grad(&trial)?;
                let trial_resid = norm(&sub(&trial_grad, q));
                if trial_resid < resid {
                    p = trial;
                    grad = trial_grad;
                    resid = trial_resid;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return Ok(None);
        }
    }
    if resid < 1e-9 {
        let hbar = model.hbar(&p)?;
        let lbar = dot(q, &p) - hbar;
        return Ok(Some(LagrangianValue {
            q: q.to_vec(),
            lbar,
            p_of_q: p,
            dual_gap: resid,
        }));
    }
    Ok(None)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
