//! Hopf-Lax evaluation of the homogenized solution
//! u(x,t) = min_y { g(y) + t·L̄((x−y)/t) }, minimizer location, and the
//! quadratic-growth diagnostic for the profile h(y) = g(y) + t·L̄((x−y)/t)
//! around its minimum.

use std::sync::Arc;

use crate::legendre::{legendre, HamiltonianModel, LegendreError};

#[derive(Debug, thiserror::Error)]
pub enum HopfLaxError {
    #[error("no quadratic growth detected at any trial radius")]
    NoQuadraticGrowth,
    #[error(transparent)]
    Legendre(#[from] LegendreError),
}

/// Lipschitz initial data g with its global gradient bound and an optional
/// semiconcavity declaration.
#[derive(Clone)]
pub struct LipschitzData {
    evaluator: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    lipschitz_bound: f64,
    semiconcave: bool,
    semiconcavity_constant: Option<f64>,
}

impl LipschitzData {
    pub fn new(
        lipschitz_bound: f64,
        evaluator: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(
            lipschitz_bound.is_finite() && lipschitz_bound >= 0.0,
            "Lipschitz bound must be finite and nonnegative"
        );
        LipschitzData {
            evaluator: Arc::new(evaluator),
            lipschitz_bound,
            semiconcave: false,
            semiconcavity_constant: None,
        }
    }

    /// Declares the data semiconcave, optionally with a known constant.
    pub fn semiconcave(mut self, constant: Option<f64>) -> Self {
        self.semiconcave = true;
        self.semiconcavity_constant = constant;
        self
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.evaluator)(y)
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn is_semiconcave(&self) -> bool {
        self.semiconcave
    }

    pub fn semiconcavity_constant(&self) -> Option<f64> {
        self.semiconcavity_constant
    }

    /// Largest sampled difference quotient |g(a)−g(b)|/|a−b| over pairs drawn
    /// from a centered box; tests use it to validate the declared bound.
    pub fn max_difference_quotient(&self, center: &[f64], radius: f64, samples: usize) -> f64 {
        let dim = center.len();
        let mut max_q = 0.0f64;
        let mut prev: Option<(Vec<f64>, f64)> = None;
        for k in 0..samples {
            let s = -radius + 2.0 * radius * k as f64 / (samples - 1) as f64;
            let y: Vec<f64> = match dim {
                1 => vec![center[0] + s],
                _ => (0..dim).map(|a| center[a] + s * ((a + 1) as f64).sqrt() / 2.0).collect(),
            };
            let val = self.eval(&y);
            if let Some((py, pv)) = &prev {
                let dist = y
                    .iter()
                    .zip(py)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist > 0.0 {
                    max_q = max_q.max((val - pv).abs() / dist);
                }
            }
            prev = Some((y, val));
        }
        max_q
    }
}

/// One Hopf-Lax evaluation: value, minimizer, and (in 1D) a local sample of
/// the profile h around the minimizer.
#[derive(Debug, Clone)]
pub struct HopfLaxSolution {
    pub x: Vec<f64>,
    pub t: f64,
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub h_profile: Option<Vec<(f64, f64)>>,
}

/// Result of the quadratic-growth diagnostic: the largest trial radius with a
/// positive growth constant, and that constant.
#[derive(Debug, Clone, Copy)]
pub struct QuadGrowth {
    pub delta: f64,
    pub r: f64,
}

/// Minimizes y ↦ g(y) + t·L̄((x−y)/t) over the ball |y−x| ≤ R with
/// R = t·sup{|DH̄(p)| : |p| ≤ ‖Dg‖∞}·1.5 + t: coarse grid of step t/200,
/// then golden-section (1D) or shrinking coordinate descent (2D) to 1e−10.
pub fn solve(
    g: &LipschitzData,
    model: &HamiltonianModel,
    x: &[f64],
    t: f64,
) -> Result<HopfLaxSolution, HopfLaxError> {
    assert!(t > 0.0, "time must be positive");
    let dim = x.len();
    assert_eq!(
        dim,
        model.potential().field().grid().dim(),
        "point dimension must match the model"
    );
    let reach = sup_grad_norm(model, g.lipschitz_bound())?;
    let radius = t * reach * 1.5 + t;
    let step = t / 200.0;
    let h = |y: &[f64]| -> Result<f64, HopfLaxError> {
        let q: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (xi - yi) / t).collect();
        Ok(g.eval(y) + t * legendre(model, &q)?.lbar)
    };

    let per_axis = (2.0 * radius / step).ceil() as usize + 1;
    let mut best_y = x.to_vec();
    let mut best_h = h(&best_y)?;
    match dim {
        1 => {
            for i in 0..per_axis {
                let y = [x[0] - radius + step * i as f64];
                let val = h(&y)?;
                if val < best_h {
                    best_h = val;
                    best_y = y.to_vec();
                }
            }
        }
        _ => {
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let y = [x[0] - radius + step * i as f64, x[1] - radius + step * j as f64];
                    let val = h(&y)?;
                    if val < best_h {
                        best_h = val;
                        best_y = y.to_vec();
                    }
                }
            }
        }
    }

    let (minimizer, value) = match dim {
        1 => {
            let (y, v) = golden_section(&h, best_y[0] - step, best_y[0] + step)?;
            if v < best_h {
                (vec![y], v)
            } else {
                (best_y.clone(), best_h)
            }
        }
        _ => coordinate_descent(&h, best_y, best_h, step)?,
    };

    let h_profile = if dim == 1 {
        let mut profile = Vec::with_capacity(65);
        for k in 0..65 {
            let y = minimizer[0] - step + 2.0 * step * k as f64 / 64.0;
            profile.push((y, h(&[y])?));
        }
        Some(profile)
    } else {
        None
    };

    Ok(HopfLaxSolution {
        x: x.to_vec(),
        t,
        value,
        minimizer,
        h_profile,
    })
}

/// Small-time attachment ratio |u(x,t) − g(x)| / t.
pub fn small_time_check(
    g: &LipschitzData,
    model: &HamiltonianModel,
    x: &[f64],
    t: f64,
) -> Result<f64, HopfLaxError> {
    assert!(t > 0.0 && t <= 1.0, "time must lie in (0, 1]");
    let sol = solve(g, model, x, t)?;
    Ok((sol.value - g.eval(x)).abs() / t)
}

/// Measures quadratic growth of h(y) above its minimum: for each trial radius
/// r, δ(r) = min over sampled y ∈ B(ȳ,r)\{ȳ} of (h(y) − h(ȳ))/|y−ȳ|², with 64
/// samples per shell. Returns the largest radius with δ(r) > 0.
pub fn quad_growth_diag(
    g: &LipschitzData,
    model: &HamiltonianModel,
    x: &[f64],
    t: f64,
    radius_grid: &[f64],
) -> Result<QuadGrowth, HopfLaxError> {
    assert!(
        g.is_semiconcave(),
        "quadratic-growth diagnostic expects semiconcave data"
    );
    assert!(!radius_grid.is_empty(), "need at least one trial radius");
    let sol = solve(g, model, x, t)?;
    let ybar = sol.minimizer.clone();
    let h_min = sol.value;
    let dim = x.len();
    let h = |y: &[f64]| -> Result<f64, HopfLaxError> {
        let q: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (xi - yi) / t).collect();
        Ok(g.eval(y) + t * legendre(model, &q)?.lbar)
    };

    let mut radii: Vec<f64> = radius_grid.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut running_min = f64::INFINITY;
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in &radii {
        assert!(r > 0.0, "trial radii must be positive");
        for k in 0..64usize {
            let y: Vec<f64> = match dim {
                1 => {
                    let offset = r * (2.0 * k as f64 - 63.0) / 63.0;
                    vec![ybar[0] + offset]
                }
                _ => {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                    vec![ybar[0] + r * theta.cos(), ybar[1] + r * theta.sin()]
                }
            };
            let dist_sq: f64 = y
                .iter()
                .zip(&ybar)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist_sq < 1e-24 {
                continue;
            }
            let quotient = (h(&y)? - h_min) / dist_sq;
            running_min = running_min.min(quotient);
        }
        per_radius.push((r, running_min));
    }
    per_radius
        .into_iter()
        .rev()
        .find(|&(_, delta)| delta > 0.0)
        .map(|(r, delta)| QuadGrowth { delta, r })
        .ok_or(HopfLaxError::NoQuadraticGrowth)
}

/// Dyadic radius grid r₀/2^k for k = 0..levels, largest first.
pub fn dyadic_radii(r0: f64, levels: usize) -> Vec<f64> {
    (0..=levels).map(|k| r0 / (1u64 << k) as f64).collect()
}

/// Upper bound for |DH̄| over the ball |p| ≤ radius, by sampling; |DH̄| is
/// largest on the boundary for the even convex H̄, interior samples are
/// insurance.
fn sup_grad_norm(model: &HamiltonianModel, radius: f64) -> Result<f64, LegendreError> {
    let dim = model.potential().field().grid().dim();
    let mut sup = 0.0f64;
    match dim {
        1 => {
            for &frac in &[0.25, 0.5, 0.75, 1.0] {
                let g = model.grad(&[radius * frac])?;
                sup = sup.max(g[0].abs());
            }
        }
        _ => {
            for k in 0..16 {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                let g = model.grad(&[radius * theta.cos(), radius * theta.sin()])?;
                sup = sup.max((g[0] * g[0] + g[1] * g[1]).sqrt());
            }
        }
    }
    Ok(sup)
}

fn golden_section(
    h: &dyn Fn(&[f64]) -> Result<f64, HopfLaxError>,
    mut a: f64,
    mut b: f64,
) -> Result<(f64, f64), HopfLaxError> {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = h(&[c])?;
    let mut fd = h(&[d])?;
    for _ in 0..200 {
        if b - a <= 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = h(&[c])?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = h(&[d])?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, h(&[mid])?))
}

fn coordinate_descent(
    h: &dyn Fn(&[f64]) -> Result<f64, HopfLaxError>,
    mut y: Vec<f64>,
    mut best: f64,
    initial_step: f64,
) -> Result<(Vec<f64>, f64), HopfLaxError> {
    let mut step = initial_step;
    while step > 1e-10 {
        let mut improved = false;
        for axis in 0..y.len() {
            loop {
                let mut trial = y.clone();
                trial[axis] += step;
                let up = h(&trial)?;
                if up < best {
                    y = trial;
                    best = up;
                    improved = true;
                    continue;
                }
                let mut trial = y.clone();
                trial[axis] -= step;
                let down = h(&trial)?;
                if down < best {
                    y = trial;
                    best = down;
                    improved = true;
                    continue;
                }
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((y, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_radii_halve() {
        let r = dyadic_radii(0.8, 3);
        assert_eq!(r, vec![0.8, 0.4, 0.2, 0.1]);
    }

    #[test]
    fn lipschitz_quotients_respect_declared_bound() {
        let g = LipschitzData::new(1.0, |y: &[f64]| y[0].abs().min(10.0));
        let q = g.max_difference_quotient(&[0.0], 2.0, 101);
        println!("max quotient = {q}");
        assert!(q <= 1.01);
    }

    #[test]
    #[should_panic(expected = "semiconcave")]
    fn diagnostic_requires_semiconcave_declaration() {
        let grid = crate::torus::TorusGrid::new(1, 32);
        let v = crate::cell::Potential::new(crate::torus::ScalarField::constant(grid, 0.0));
        let model = HamiltonianModel::new(v);
        let g = LipschitzData::new(1.0, |y: &[f64]| y[0].abs().min(10.0));
        let _ = quad_growth_diag(&g, &model, &[0.0], 1.0, &[0.5]);
    }
}
