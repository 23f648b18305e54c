//! Oscillatory-problem solvers built on the Hopf-Cole transform. The
//! ε-problem
//!
//! ```text
//!     uᵗ + ½|Du|² + V(x/ε) = (ε/2)Δu,    u(·,0) = g,
//! ```
//!
//! becomes linear in w = e^{−u/ε}: after rescaling y = x/ε, s = t/ε,
//!
//! ```text
//!     w_s = ½Δw + V(y)w,
//! ```
//!
//! which is advanced by Strang splitting with exact Fourier heat substeps on
//! a truncated periodized box. Fields are stored with a running log gauge so
//! their huge magnitudes never leave double range; problems whose data spans
//! many factors of e^{1/ε} are assembled per evaluation point from an
//! exponentially tilted point-source evolution summed in log space. The same
//! tilted engine yields the Schrödinger kernel K(t,x,y) at ballistic
//! evaluation points; a drift-diffusion variant evolves the Doob-transformed
//! kernel; a Brownian bridge Monte Carlo serves as an independent oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;

use crate::cell::{CellError, CellSolution, Potential};
use crate::hopflax::{self, LipschitzData};
use crate::legendre::{legendre, HamiltonianModel, LegendreError};
use crate::spectral;

#[derive(Debug, thiserror::Error)]
pub enum ViscousError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resolution refused: {0}")]
    ResolutionRefused(String),
    #[error("gauged field underflowed: {0}")]
    Underflow(String),
    #[error("time step violates the CFL bound: {0}")]
    CflViolation(String),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Legendre(#[from] LegendreError),
    #[error(transparent)]
    HopfLax(#[from] crate::hopflax::HopfLaxError),
}

/// Points per unit period of V(x/ε) on the rescaled grid.
const SOLVE_POINTS_PER_PERIOD: f64 = 16.0;
/// Points per unit length for kernel evolutions (δ-extrapolation leaves an
/// O(δ⁴) bias, so kernels run on a finer grid than the ε-solves).
const KERNEL_POINTS_PER_PERIOD: usize = 64;
/// Relative Gaussian-tail mass admitted at the truncation boundary.
const TAIL_TOLERANCE: f64 = 1e-3;
/// Largest log-range (in units of ε) the direct data evolution may span.
/// Spectral roundoff leaves absolute noise ~1e−13 of the field maximum, so
/// values more than ~27 e-folds below the maximum are unreadable; past this
/// limit the solver switches to per-point tilted source assembly.
const DIRECT_LOG_RANGE_LIMIT: f64 = 20.0;
/// Log-depth relative to the field maximum below which stored values are
/// spectral roundoff noise; log-space assemblies skip nodes under the floor.
const TRUST_FLOOR_LOG: f64 = -27.0;

/// One ε-problem instance: the potential, initial data, ε, and the truncated
/// computational geometry (half-width R in x, M grid points per axis).
///
/// Invariants: M·ε/(2R) ≥ 16 so the grid resolves V(x/ε); 2R/ε is an integer
/// so the periodized box carries a periodic potential; the Gaussian tail
/// budget e^{t·maxV}·e^{−(R−|x|)²/(2t)} < 1e−3·ε at every evaluation point.
#[derive(Clone)]
pub struct EpsProblem {
    potential: Potential,
    data: LipschitzData,
    epsilon: f64,
    half_width: f64,
    grid_points: usize,
    time: f64,
    renorm_per_substep: bool,
}

impl EpsProblem {
    /// Auto-sizes the box: R = M·ε/32 for the smallest power-of-two M whose
    /// half-width covers `eval_reach` plus the Gaussian tail budget.
    pub fn new(
        potential: Potential,
        data: LipschitzData,
        epsilon: f64,
        time: f64,
        eval_reach: f64,
    ) -> Result<Self, ViscousError> {
        validate_scalars(epsilon, time)?;
        let max_v_pos = potential.max_value().max(0.0);
        let needed = eval_reach.abs()
            + (2.0 * time * (time * max_v_pos + (1000.0 / epsilon).ln())).sqrt() * 1.05
            + 0.5;
        let dim = potential.field().grid().dim();
        let cap = if dim == 1 { 1 << 22 } else { 1 << 11 };
        let mut m = 32usize;
        while (m as f64) * epsilon / 32.0 < needed {
            m *= 2;
            if m > cap {
                return Err(ViscousError::ResolutionRefused(format!(
                    "auto-sized grid exceeds {cap} points per axis at epsilon = {epsilon}"
                )));
            }
        }
        let half_width = m as f64 * epsilon / 32.0;
        Self::with_geometry(potential, data, epsilon, time, half_width, m)
    }

    /// Builds a problem with explicit truncation geometry, checking the
    /// resolution and periodicity invariants.
    pub fn with_geometry(
        potential: Potential,
        data: LipschitzData,
        epsilon: f64,
        time: f64,
        half_width: f64,
        grid_points: usize,
    ) -> Result<Self, ViscousError> {
        validate_scalars(epsilon, time)?;
        if !grid_points.is_power_of_two() || grid_points < 32 {
            return Err(ViscousError::ResolutionRefused(format!(
                "grid_points must be a power of two at least 32, got {grid_points}"
            )));
        }
        if !(half_width > 0.0) {
            return Err(ViscousError::InvalidInput(
                "half_width must be positive".into(),
            ));
        }
        let per_period = grid_points as f64 * epsilon / (2.0 * half_width);
        if per_period < SOLVE_POINTS_PER_PERIOD - 1e-9 {
            return Err(ViscousError::ResolutionRefused(format!(
                "{per_period:.2} grid points per potential period, need at least 16"
            )));
        }
        let periods = 2.0 * half_width / epsilon;
        if (periods - periods.round()).abs() > 1e-9 * periods {
            return Err(ViscousError::ResolutionRefused(format!(
                "box spans {periods} potential periods; an integer count is required \
                 for the periodized evolution"
            )));
        }
        Ok(EpsProblem {
            potential,
            data,
            epsilon,
            half_width,
            grid_points,
            time,
            renorm_per_substep: false,
        })
    }

    /// Renormalizes after every substep instead of once per Strang step;
    /// output must agree to roundoff, which tests assert.
    pub fn with_renorm_per_substep(mut self, on: bool) -> Self {
        self.renorm_per_substep = on;
        self
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn data(&self) -> &LipschitzData {
        &self.data
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn check_tail_budget(&self, point: &[f64]) -> Result<(), ViscousError> {
        let reach = point.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if reach >= self.half_width {
            return Err(ViscousError::ResolutionRefused(format!(
                "evaluation point at |x| = {reach} lies outside the box of half-width {}",
                self.half_width
            )));
        }
        let margin = self.half_width - reach;
        let budget = (self.time * self.potential.max_value().max(0.0)
            - margin * margin / (2.0 * self.time))
            .exp();
        if budget >= TAIL_TOLERANCE * self.epsilon {
            return Err(ViscousError::ResolutionRefused(format!(
                "Gaussian tail budget {budget:.3e} exceeds {:.3e} at |x| = {reach}; \
                 enlarge the half-width",
                TAIL_TOLERANCE * self.epsilon
            )));
        }
        Ok(())
    }
}

fn validate_scalars(epsilon: f64, time: f64) -> Result<(), ViscousError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(ViscousError::InvalidInput(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    if !(time > 0.0) {
        return Err(ViscousError::InvalidInput(format!(
            "time must be positive, got {time}"
        )));
    }
    Ok(())
}

/// A nonnegative field stored as w·e^{log_gauge}; renormalization keeps
/// max w = 1 so the evolution never overflows while the gauge tracks the
/// (possibly enormous) true magnitude.
#[derive(Debug, Clone)]
pub struct GaugedState {
    pub w: Vec<f64>,
    pub log_gauge: f64,
}

impl GaugedState {
    pub fn new(w: Vec<f64>) -> Self {
        GaugedState { w, log_gauge: 0.0 }
    }

    pub fn renormalize(&mut self) -> Result<(), ViscousError> {
        let max = self.w.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if !(max > 0.0) || !max.is_finite() {
            return Err(ViscousError::Underflow(format!(
                "field maximum {max} after renormalization"
            )));
        }
        let inv = 1.0 / max;
        for v in &mut self.w {
            *v *= inv;
        }
        self.log_gauge += max.ln();
        Ok(())
    }
}

/// Kernel values on a caller-chosen target grid. `bump_width` is the Dirac
/// approximation width δ before extrapolation; `richardson_order` counts the
/// extrapolation passes applied (δ → 0, and step → 0 when V oscillates).
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    pub profile: Vec<f64>,
    pub bump_width: f64,
    pub richardson_order: usize,
}

/// Monte Carlo kernel estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

// ---------------------------------------------------------------------------
// Strang evolution engines on a periodized box [−L/2, L/2)
// ---------------------------------------------------------------------------

pub(crate) fn box_node(length: f64, m: usize, j: usize) -> f64 {
    -0.5 * length + j as f64 * length / m as f64
}

pub(crate) fn wrap_into(y: f64, length: f64) -> f64 {
    y - length * (y / length).round()
}

/// One Strang pass w ← e^{Δs/2·V}·heat(Δs)·e^{Δs/2·V}·w on a line of length
/// `length`, repeated `steps` times. The heat multiplier may carry a tilt
/// e^{Δs·ipκ}; the Nyquist bin is forced real so the spectrum stays conjugate
/// symmetric.
fn evolve_line(
    length: f64,
    v_samples: &[f64],
    tilt: f64,
    total_time: f64,
    steps: usize,
    renorm_per_substep: bool,
    state: &mut GaugedState,
) -> Result<(), ViscousError> {
    let m = v_samples.len();
    assert_eq!(state.w.len(), m);
    let ds = total_time / steps as f64;
    let pot_half: Vec<f64> = v_samples.iter().map(|&v| (0.5 * ds * v).exp()).collect();
    let half = m / 2 + 1;
    let mut heat = Vec::with_capacity(half);
    for k in 0..half {
        let kappa = 2.0 * std::f64::consts::PI * k as f64 / length;
        let decay = (-0.5 * ds * kappa * kappa).exp();
        if k == m / 2 {
            heat.push(Complex64::new(decay * (tilt * kappa * ds).cos(), 0.0));
        } else {
            heat.push(Complex64::from_polar(decay, tilt * kappa * ds));
        }
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut spectrum = fwd.make_output_vec();
    let mut fwd_scratch = fwd.make_scratch_vec();
    let mut inv_scratch = inv.make_scratch_vec();
    let scale = 1.0 / m as f64;

    for _ in 0..steps {
        for (w, p) in state.w.iter_mut().zip(&pot_half) {
            *w *= p;
        }
        if renorm_per_substep {
            state.renormalize()?;
        }
        fwd.process_with_scratch(&mut state.w, &mut spectrum, &mut fwd_scratch)
            .map_err(|e| ViscousError::Underflow(format!("forward transform failed: {e}")))?;
        for (s, hmul) in spectrum.iter_mut().zip(&heat) {
            *s *= hmul;
        }
        spectrum[0].im = 0.0;
        spectrum[half - 1].im = 0.0;
        inv.process_with_scratch(&mut spectrum, &mut state.w, &mut inv_scratch)
            .map_err(|e| ViscousError::Underflow(format!("inverse transform failed: {e}")))?;
        for w in &mut state.w {
            *w *= scale;
        }
        if renorm_per_substep {
            state.renormalize()?;
        }
        for (w, p) in state.w.iter_mut().zip(&pot_half) {
            *w *= p;
        }
        state.renormalize()?;
    }
    Ok(())
}

/// Two-dimensional variant on an m×m box, complex transforms throughout.
/// `tilt` is a per-axis advection velocity, Nyquist rows projected onto their
/// real part so the multiplier stays conjugate symmetric.
fn evolve_plane(
    length: f64,
    m: usize,
    v_samples: &[f64],
    tilt: [f64; 2],
    total_time: f64,
    steps: usize,
    state: &mut GaugedState,
) -> Result<(), ViscousError> {
    assert_eq!(v_samples.len(), m * m);
    assert_eq!(state.w.len(), m * m);
    let ds = total_time / steps as f64;
    let pot_half: Vec<f64> = v_samples.iter().map(|&v| (0.5 * ds * v).exp()).collect();
    let mut heat = Vec::with_capacity(m * m);
    let two_pi = 2.0 * std::f64::consts::PI;
    for flat in 0..m * m {
        let idx = [flat / m, flat % m];
        let mut decay = 1.0;
        let mut phase = 0.0;
        for axis in 0..2 {
            let kappa = two_pi * spectral::wavenumber(idx[axis], m) as f64 / length;
            decay *= (-0.5 * ds * kappa * kappa).exp();
            if spectral::is_nyquist(idx[axis], m) {
                decay *= (ds * tilt[axis] * kappa).cos();
            } else {
                phase += ds * tilt[axis] * kappa;
            }
        }
        heat.push(Complex64::from_polar(decay, phase));
    }
    let mut buf: Vec<Complex64> = state.w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let scale = 1.0 / (m * m) as f64;
    for _ in 0..steps {
        for (b, p) in buf.iter_mut().zip(&pot_half) {
            *b *= p;
        }
        spectral::fft_nd(2, m, &mut buf, true);
        for (b, hmul) in buf.iter_mut().zip(&heat) {
            *b *= hmul;
        }
        spectral::fft_nd(2, m, &mut buf, false);
        for b in &mut buf {
            *b *= scale;
        }
        for (b, p) in buf.iter_mut().zip(&pot_half) {
            *b *= p;
        }
        for (w, b) in state.w.iter_mut().zip(&buf) {
            *w = b.re;
        }
        state.renormalize()?;
        for (b, w) in buf.iter_mut().zip(&state.w) {
            *b = Complex64::new(*w, 0.0);
        }
    }
    Ok(())
}

/// Drift-diffusion step for densities: ∂f = ½Δf − ∂(b f), advanced by Strang
/// heat half-steps around an RK4 substep for the conservative drift term.
/// Shared by the Doob kernel and the drift-generator asymptotics.
pub(crate) fn evolve_drift_line(
    length: f64,
    b_samples: &[f64],
    total_time: f64,
    steps: usize,
    state: &mut GaugedState,
) -> Result<(), ViscousError> {
    let m = b_samples.len();
    assert_eq!(state.w.len(), m);
    let ds = total_time / steps as f64;
    let half = m / 2 + 1;
    let heat_half: Vec<f64> = (0..half)
        .map(|k| {
            let kappa = 2.0 * std::f64::consts::PI * k as f64 / length;
            (-0.25 * ds * kappa * kappa).exp()
        })
        .collect();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut spectrum = fwd.make_output_vec();
    let mut fwd_scratch = fwd.make_scratch_vec();
    let mut inv_scratch = inv.make_scratch_vec();
    let scale = 1.0 / m as f64;

    let mut flux = vec![0.0; m];
    let mut stage = vec![0.0; m];
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];

    macro_rules! heat_half_step {
        ($w:expr) => {{
            fwd.process_with_scratch($w, &mut spectrum, &mut fwd_scratch)
                .map_err(|e| ViscousError::Underflow(format!("forward transform failed: {e}")))?;
            for (s, hmul) in spectrum.iter_mut().zip(&heat_half) {
                *s *= hmul;
            }
            inv.process_with_scratch(&mut spectrum, $w, &mut inv_scratch)
                .map_err(|e| ViscousError::Underflow(format!("inverse transform failed: {e}")))?;
            for v in $w.iter_mut() {
                *v *= scale;
            }
        }};
    }

    macro_rules! minus_div {
        ($f:expr, $out:expr) => {{
            for ((fl, v), b) in flux.iter_mut().zip($f.iter()).zip(b_samples) {
                *fl = v * b;
            }
            fwd.process_with_scratch(&mut flux, &mut spectrum, &mut fwd_scratch)
                .map_err(|e| ViscousError::Underflow(format!("forward transform failed: {e}")))?;
            for (k, s) in spectrum.iter_mut().enumerate() {
                if k == m / 2 {
                    *s = Complex64::new(0.0, 0.0);
                } else {
                    let kappa = 2.0 * std::f64::consts::PI * k as f64 / length;
                    *s *= Complex64::new(0.0, -kappa);
                }
            }
            inv.process_with_scratch(&mut spectrum, $out, &mut inv_scratch)
                .map_err(|e| ViscousError::Underflow(format!("inverse transform failed: {e}")))?;
            for v in $out.iter_mut() {
                *v *= scale;
            }
        }};
    }

    for _ in 0..steps {
        heat_half_step!(&mut state.w);
        minus_div!(state.w, &mut k1);
        for i in 0..m {
            stage[i] = state.w[i] + 0.5 * ds * k1[i];
        }
        minus_div!(stage, &mut k2);
        for i in 0..m {
            stage[i] = state.w[i] + 0.5 * ds * k2[i];
        }
        minus_div!(stage, &mut k3);
        for i in 0..m {
            stage[i] = state.w[i] + ds * k3[i];
        }
        minus_div!(stage, &mut k4);
        for i in 0..m {
            state.w[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        heat_half_step!(&mut state.w);
        state.renormalize()?;
    }
    Ok(())
}

/// Cubic Lagrange interpolation on a periodic uniform grid at fractional
/// index position `fx` (in grid units).
pub(crate) fn cubic_periodic(values: &[f64], fx: f64) -> f64 {
    let m = values.len();
    let j = fx.floor() as i64;
    let s = fx - j as f64;
    let idx = |k: i64| -> f64 {
        let i = (j + k).rem_euclid(m as i64) as usize;
        values[i]
    };
    let (f_1, f0, f1, f2) = (idx(-1), idx(0), idx(1), idx(2));
    let c_1 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let c0 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let c1 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let c2 = (s + 1.0) * s * (s - 1.0) / 6.0;
    c_1 * f_1 + c0 * f0 + c1 * f1 + c2 * f2
}

fn log_interp_line(state: &GaugedState, length: f64, y: f64) -> Result<f64, ViscousError> {
    let m = state.w.len();
    let h = length / m as f64;
    let fx = (wrap_into(y, length) + 0.5 * length) / h;
    let j = fx.floor() as i64;
    let mut logs = [0.0f64; 4];
    for (slot, k) in logs.iter_mut().zip(-1i64..=2) {
        let v = state.w[(j + k).rem_euclid(m as i64) as usize];
        if !(v > 0.0) {
            return Err(ViscousError::Underflow(format!(
                "field vanished near evaluation point y = {y}"
            )));
        }
        *slot = v.ln();
    }
    let s = fx - j as f64;
    let c = [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ];
    Ok(state.log_gauge + logs.iter().zip(&c).map(|(l, w)| l * w).sum::<f64>())
}

// ---------------------------------------------------------------------------
// solve_eps
// ---------------------------------------------------------------------------

/// Per-point window for the tilted source assembly: the tilt that keeps the
/// kernel representable around the minimizing region, and the expected
/// location of that region on the rescaled grid.
struct LaplaceWindow {
    tilt: Vec<f64>,
    center: Vec<f64>,
}

enum Route {
    Direct,
    Laplace(Vec<LaplaceWindow>),
}

struct SolvePlan {
    v_samples: Vec<f64>,
    g_samples: Vec<f64>,
    g_min: f64,
    route: Route,
}

/// Solves the ε-problem at `eval_points` and time `problem.time()`.
///
/// Shallow problems evolve the data w(·,0) = e^{−g(ε·)/ε} directly and read
/// the evaluation points. Deep problems (data range ≫ ε) are assembled per
/// point as u^ε(x) = −ε log Σ_z K(t/ε, x/ε, z)e^{−g(εz)/ε}h: a point source
/// at x/ε is evolved in an exponentially tilted frame so the kernel window
/// around the minimizing region stays inside the trusted dynamic range, and
/// the sum runs in log space over trusted nodes. When V oscillates the
/// splitting bias is removed by Richardson extrapolation in the step size.
pub fn solve_eps(
    problem: &EpsProblem,
    eval_points: &[Vec<f64>],
) -> Result<Vec<f64>, ViscousError> {
    let dim = problem.potential.field().grid().dim();
    for p in eval_points {
        if p.len() != dim {
            return Err(ViscousError::InvalidInput(format!(
                "evaluation point of dimension {} in a {dim}-dimensional problem",
                p.len()
            )));
        }
        problem.check_tail_budget(p)?;
    }
    let plan = plan_solve(problem, eval_points)?;
    if problem.potential.oscillation() == 0.0 {
        return run_plan(problem, eval_points, 1, &plan);
    }
    let steps = base_steps(problem);
    let coarse = run_plan(problem, eval_points, steps, &plan)?;
    let fine = run_plan(problem, eval_points, 2 * steps, &plan)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect())
}

fn base_steps(problem: &EpsProblem) -> usize {
    let s_total = problem.time / problem.epsilon;
    let h = 2.0 * problem.half_width / (problem.epsilon * problem.grid_points as f64);
    let ds = (0.1 / problem.potential.field().max_abs().max(1e-12)).min(4.0 * h * h);
    (s_total / ds).ceil() as usize
}

fn sample_box(problem: &EpsProblem) -> (Vec<f64>, Vec<f64>) {
    let dim = problem.potential.field().grid().dim();
    let eps = problem.epsilon;
    let m = problem.grid_points;
    let length = 2.0 * problem.half_width / eps;
    let interp = problem.potential.field().interpolator();
    let oscillates = problem.potential.oscillation() > 0.0;
    let total = m.pow(dim as u32);
    let mut v_samples = vec![0.0; total];
    let mut g_samples = vec![0.0; total];
    for flat in 0..total {
        let y: Vec<f64> = match dim {
            1 => vec![box_node(length, m, flat)],
            _ => vec![
                box_node(length, m, flat / m),
                box_node(length, m, flat % m),
            ],
        };
        v_samples[flat] = if oscillates { interp.eval(&y) } else { 0.0 };
        let x: Vec<f64> = y.iter().map(|c| c * eps).collect();
        g_samples[flat] = problem.data.eval(&x);
    }
    (v_samples, g_samples)
}

fn plan_solve(
    problem: &EpsProblem,
    eval_points: &[Vec<f64>],
) -> Result<SolvePlan, ViscousError> {
    let eps = problem.epsilon;
    let (v_samples, g_samples) = sample_box(problem);
    let g_min = g_samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_max = g_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_range =
        (g_max - g_min + 2.0 * problem.time * problem.potential.field().max_abs()) / eps;
    let route = if log_range <= DIRECT_LOG_RANGE_LIMIT {
        Route::Direct
    } else {
        let model = HamiltonianModel::new(problem.potential.clone());
        let mut windows = Vec::with_capacity(eval_points.len());
        for x in eval_points {
            windows.push(laplace_window(problem, &model, x)?);
        }
        Route::Laplace(windows)
    };
    Ok(SolvePlan {
        v_samples,
        g_samples,
        g_min,
        route,
    })
}

/// Places the assembly window for one evaluation point: the minimizer ȳ of
/// the limit problem predicts where the integrand mass sits, and the dual
/// momentum p((x−ȳ)/t) gives the tilt −p that transports the kernel there.
fn laplace_window(
    problem: &EpsProblem,
    model: &HamiltonianModel,
    x: &[f64],
) -> Result<LaplaceWindow, ViscousError> {
    let t = problem.time;
    let limit = hopflax::solve(&problem.data, model, x, t)?;
    let q: Vec<f64> = x
        .iter()
        .zip(&limit.minimizer)
        .map(|(xi, yi)| (xi - yi) / t)
        .collect();
    let momentum = legendre(model, &q)?.p_of_q;
    Ok(LaplaceWindow {
        tilt: momentum.iter().map(|p| -p).collect(),
        center: limit.minimizer.iter().map(|y| y / problem.epsilon).collect(),
    })
}

fn run_plan(
    problem: &EpsProblem,
    eval_points: &[Vec<f64>],
    steps: usize,
    plan: &SolvePlan,
) -> Result<Vec<f64>, ViscousError> {
    let dim = problem.potential.field().grid().dim();
    let eps = problem.epsilon;
    let m = problem.grid_points;
    let length = 2.0 * problem.half_width / eps;
    let s_total = problem.time / eps;
    let oscillates = problem.potential.oscillation() > 0.0;
    let constant_gauge = if oscillates {
        0.0
    } else {
        s_total * problem.potential.min_value()
    };

    match &plan.route {
        Route::Direct => {
            let w: Vec<f64> = plan
                .g_samples
                .iter()
                .map(|&g| (-(g - plan.g_min) / eps).exp())
                .collect();
            let mut state = GaugedState::new(w);
            state.log_gauge = -plan.g_min / eps;
            match dim {
                1 => evolve_line(
                    length,
                    &plan.v_samples,
                    0.0,
                    s_total,
                    steps,
                    problem.renorm_per_substep,
                    &mut state,
                )?,
                _ => evolve_plane(
                    length,
                    m,
                    &plan.v_samples,
                    [0.0; 2],
                    s_total,
                    steps,
                    &mut state,
                )?,
            }
            state.log_gauge += constant_gauge;
            eval_points
                .iter()
                .map(|x| {
                    let logw = match dim {
                        1 => log_interp_line(&state, length, x[0] / eps)?,
                        _ => log_interp_plane(&state, length, m, &[x[0] / eps, x[1] / eps])?,
                    };
                    Ok(-eps * logw)
                })
                .collect()
        }
        Route::Laplace(windows) => eval_points
            .iter()
            .zip(windows)
            .map(|(x, window)| {
                laplace_point(problem, plan, window, x, steps, constant_gauge)
            })
            .collect(),
    }
}

fn laplace_point(
    problem: &EpsProblem,
    plan: &SolvePlan,
    window: &LaplaceWindow,
    x: &[f64],
    steps: usize,
    constant_gauge: f64,
) -> Result<f64, ViscousError> {
    let dim = x.len();
    let eps = problem.epsilon;
    let m = problem.grid_points;
    let length = 2.0 * problem.half_width / eps;
    let s_total = problem.time / eps;
    let h = length / m as f64;
    let a = &window.tilt;

    let mut state = delta_state(dim, length, m, x, eps);
    match dim {
        1 => evolve_line(
            length,
            &plan.v_samples,
            -a[0],
            s_total,
            steps,
            problem.renorm_per_substep,
            &mut state,
        )?,
        _ => evolve_plane(
            length,
            m,
            &plan.v_samples,
            [-a[0], -a[1]],
            s_total,
            steps,
            &mut state,
        )?,
    }
    let tilt_energy: f64 = a.iter().map(|c| 0.5 * c * c).sum();
    state.log_gauge += constant_gauge + s_total * tilt_energy;

    let trust = TRUST_FLOOR_LOG.exp();
    let y0: Vec<f64> = x.iter().map(|c| c / eps).collect();
    let term = |flat: usize, w: f64| -> f64 {
        let z: [f64; 2] = match dim {
            1 => [box_node(length, m, flat), 0.0],
            _ => [box_node(length, m, flat / m), box_node(length, m, flat % m)],
        };
        let mut val = w.ln() - plan.g_samples[flat] / eps;
        for axis in 0..dim {
            val -= a[axis] * (z[axis] - y0[axis]);
        }
        val
    };

    let mut peak = f64::NEG_INFINITY;
    let mut peak_flat = 0usize;
    let mut peak_logw = f64::NEG_INFINITY;
    for (flat, &w) in state.w.iter().enumerate() {
        if w >= trust {
            let val = term(flat, w);
            if val > peak {
                peak = val;
                peak_flat = flat;
                peak_logw = w.ln();
            }
        }
    }
    if !peak.is_finite() {
        return Err(ViscousError::Underflow(
            "no trusted kernel mass in the assembly window".into(),
        ));
    }
    if peak_logw < TRUST_FLOOR_LOG + 2.0 {
        return Err(ViscousError::Underflow(format!(
            "assembly peak sits at the trust floor (log depth {peak_logw:.1}); \
             the kernel window missed the minimizing region"
        )));
    }
    let allow = 2.0 * (60.0 * s_total).sqrt() + 10.0 * h;
    let peak_z = match dim {
        1 => vec![box_node(length, m, peak_flat)],
        _ => vec![
            box_node(length, m, peak_flat / m),
            box_node(length, m, peak_flat % m),
        ],
    };
    for axis in 0..dim {
        if (peak_z[axis] - window.center[axis]).abs() > allow {
            return Err(ViscousError::Underflow(format!(
                "assembly peak at y = {:.2} but the minimizing region was predicted \
                 at y = {:.2}; the tilted window is misplaced",
                peak_z[axis], window.center[axis]
            )));
        }
    }

    let mut sum = 0.0;
    for (flat, &w) in state.w.iter().enumerate() {
        if w >= trust {
            sum += (term(flat, w) - peak).exp();
        }
    }
    let lse = peak + sum.ln() + dim as f64 * h.ln();
    Ok(-eps * (state.log_gauge + lse))
}

fn delta_state(dim: usize, length: f64, m: usize, x: &[f64], eps: f64) -> GaugedState {
    let h = length / m as f64;
    let mut w = vec![0.0; m.pow(dim as u32)];
    match dim {
        1 => {
            let fx = (wrap_into(x[0] / eps, length) + 0.5 * length) / h;
            let j = fx.floor() as i64;
            let s = fx - j as f64;
            w[j.rem_euclid(m as i64) as usize] = (1.0 - s) / h;
            w[(j + 1).rem_euclid(m as i64) as usize] = s / h;
        }
        _ => {
            let fx0 = (wrap_into(x[0] / eps, length) + 0.5 * length) / h;
            let fx1 = (wrap_into(x[1] / eps, length) + 0.5 * length) / h;
            let (j0, j1) = (fx0.floor() as i64, fx1.floor() as i64);
            let (s0, s1) = (fx0 - j0 as f64, fx1 - j1 as f64);
            for (d0, w0) in [(0i64, 1.0 - s0), (1, s0)] {
                for (d1, w1) in [(0i64, 1.0 - s1), (1, s1)] {
                    let i0 = (j0 + d0).rem_euclid(m as i64) as usize;
                    let i1 = (j1 + d1).rem_euclid(m as i64) as usize;
                    w[i0 * m + i1] = w0 * w1 / (h * h);
                }
            }
        }
    }
    GaugedState::new(w)
}

fn log_interp_plane(
    state: &GaugedState,
    length: f64,
    m: usize,
    y: &[f64],
) -> Result<f64, ViscousError> {
    let h = length / m as f64;
    let fx0 = (wrap_into(y[0], length) + 0.5 * length) / h;
    let fx1 = (wrap_into(y[1], length) + 0.5 * length) / h;
    let j0 = fx0.floor() as i64;
    let mut rows = [0.0f64; 4];
    for (slot, k0) in rows.iter_mut().zip(-1i64..=2) {
        let i0 = (j0 + k0).rem_euclid(m as i64) as usize;
        let j1 = fx1.floor() as i64;
        let mut logs = [0.0f64; 4];
        for (ls, k1) in logs.iter_mut().zip(-1i64..=2) {
            let i1 = (j1 + k1).rem_euclid(m as i64) as usize;
            let v = state.w[i0 * m + i1];
            if !(v > 0.0) {
                return Err(ViscousError::Underflow(format!(
                    "field vanished near evaluation point y = ({}, {})",
                    y[0], y[1]
                )));
            }
            *ls = v.ln();
        }
        let s = fx1 - j1 as f64;
        let c = cubic_weights(s);
        *slot = logs.iter().zip(&c).map(|(l, w)| l * w).sum();
    }
    let s = fx0 - j0 as f64;
    let c = cubic_weights(s);
    Ok(state.log_gauge + rows.iter().zip(&c).map(|(l, w)| l * w).sum::<f64>())
}

fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

// ---------------------------------------------------------------------------
// solve_eps_fd
// ---------------------------------------------------------------------------

/// Direct monotone scheme for the ε-problem: Godunov upwinding for ½|Du|²,
/// centered differences for the diffusion, boundary values frozen at g.
/// Serves as an independent cross-check of the Hopf-Cole route.
pub fn solve_eps_fd(
    problem: &EpsProblem,
    eval_points: &[Vec<f64>],
) -> Result<Vec<f64>, ViscousError> {
    let dim = problem.potential.field().grid().dim();
    if dim != 1 {
        return Err(ViscousError::InvalidInput(
            "the direct scheme is one-dimensional".into(),
        ));
    }
    for p in eval_points {
        problem.check_tail_budget(p)?;
    }
    let eps = problem.epsilon;
    let r = problem.half_width;
    let n = ((2.0 * r) / (eps / 32.0)).ceil() as usize;
    let dx = 2.0 * r / n as f64;
    let interp = problem.potential.field().interpolator();
    let xs: Vec<f64> = (0..=n).map(|i| -r + i as f64 * dx).collect();
    let v: Vec<f64> = xs.iter().map(|&x| interp.eval(&[x / eps])).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| problem.data.eval(&[x])).collect();

    let du_bound = problem.data.lipschitz_bound()
        + problem.time * problem.potential.lipschitz_bound()
        + 1.0;
    let dt_limit = (dx * dx / (2.0 * eps)).min(dx / (2.0 * du_bound));
    let steps = (problem.time / dt_limit).ceil() as usize;
    let dt = problem.time / steps as f64;

    let mut next = u.clone();
    for step in 0..steps {
        for i in 1..n {
            let back = (u[i] - u[i - 1]) / dx;
            let fwd = (u[i + 1] - u[i]) / dx;
            let ham = 0.5 * back.max(0.0).powi(2).max(fwd.min(0.0).powi(2));
            let lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
            next[i] = u[i] + dt * (-ham - v[i] + 0.5 * eps * lap);
        }
        std::mem::swap(&mut u, &mut next);
        if step % 256 == 0 {
            let mut slope = 0.0f64;
            for i in 1..=n {
                slope = slope.max(((u[i] - u[i - 1]) / dx).abs());
            }
            if dt > dx / (2.0 * slope.max(1e-12)) {
                return Err(ViscousError::CflViolation(format!(
                    "observed gradient {slope} exceeds the bound assumed by dt = {dt}"
                )));
            }
        }
    }

    Ok(eval_points
        .iter()
        .map(|p| {
            let fx = (p[0] + r) / dx;
            let j = (fx.floor() as i64).clamp(1, n as i64 - 3) as usize;
            let s = fx - j as f64;
            let c = cubic_weights(s);
            c[0] * u[j - 1] + c[1] * u[j] + c[2] * u[j + 1] + c[3] * u[j + 2]
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

fn kernel_box(reach: f64, t: f64, max_v: f64) -> (f64, usize) {
    let tail = (2.0 * t * ((1e12f64).ln() + 2.0 * t * max_v.max(0.0))).sqrt();
    let mut length = 2.0f64;
    while length < 2.0 * (reach + 1.05 * tail + 1.0) {
        length *= 2.0;
    }
    (length, KERNEL_POINTS_PER_PERIOD * length as usize)
}

/// Unit-mass Gaussian bump of width `delta` at `center`, assembled
/// band-limited in Fourier space: w(y_j) = (1/L)·Σ_κ e^{−κ²δ²/2}e^{iκ(y_j−c)}
/// over the box modes. Sampling e^{−d²/2δ²} pointwise instead would alias an
/// e^{−2π²(δ/h)²} error into the low modes, which the width extrapolations
/// cannot remove; built spectrally the only width bias is the honest δ²
/// smoothing that they are designed to cancel.
pub(crate) fn gaussian_bump(length: f64, m: usize, center: f64, delta: f64) -> Vec<f64> {
    let mut planner = RealFftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(m);
    let mut spectrum = inv.make_input_vec();
    let base = 2.0 * std::f64::consts::PI / length;
    let half = spectrum.len();
    for (k, slot) in spectrum.iter_mut().enumerate() {
        let kappa = base * k as f64;
        let mag = (m as f64 / length) * (-0.5 * kappa * kappa * delta * delta).exp();
        let phase = -kappa * (center + 0.5 * length);
        *slot = if k == half - 1 {
            Complex64::new(mag * phase.cos(), 0.0)
        } else {
            Complex64::from_polar(mag, phase)
        };
    }
    let mut values = inv.make_output_vec();
    let mut scratch = inv.make_scratch_vec();
    inv.process_with_scratch(&mut spectrum, &mut values, &mut scratch)
        .expect("bump synthesis is a plain inverse FFT");
    for v in values.iter_mut() {
        *v /= m as f64;
    }
    values
}

fn kernel_profile_run(
    v_samples: &[f64],
    length: f64,
    m: usize,
    t: f64,
    x: f64,
    delta: f64,
    steps: usize,
    targets: &[f64],
) -> Result<Vec<f64>, ViscousError> {
    let mut state = GaugedState::new(gaussian_bump(length, m, x, delta));
    evolve_line(length, v_samples, 0.0, t, steps, false, &mut state)?;
    let h = length / m as f64;
    let gauge = state.log_gauge;
    Ok(targets
        .iter()
        .map(|&y| {
            let fx = (wrap_into(y, length) + 0.5 * length) / h;
            let w = cubic_periodic(&state.w, fx);
            if w > 0.0 {
                (w.ln() + gauge).exp()
            } else {
                0.0
            }
        })
        .collect())
}

fn kernel_steps(t: f64, max_abs_v: f64, h: f64) -> usize {
    let ds = (0.1 / max_abs_v.max(1e-12)).min(4.0 * h * h);
    (t / ds).ceil() as usize
}

/// Fundamental solution K(t,x,·) of ∂_t − ½Δ − V, approximated by evolving a
/// normalized Gaussian bump of width δ and Richardson-extrapolating δ → 0
/// from the pair (δ, δ/2). One-dimensional.
pub fn schrodinger_kernel(
    potential: &Potential,
    t: f64,
    x: f64,
    target_grid: &[f64],
    delta: f64,
) -> Result<KernelEstimate, ViscousError> {
    if potential.field().grid().dim() != 1 {
        return Err(ViscousError::InvalidInput(
            "kernel evolutions are one-dimensional".into(),
        ));
    }
    if !(t >= 0.5) {
        return Err(ViscousError::InvalidInput(format!(
            "kernel times below 0.5 are out of scope, got {t}"
        )));
    }
    let reach = target_grid
        .iter()
        .fold(x.abs(), |a, &y| a.max(y.abs()));
    let (length, m) = kernel_box(reach, t, potential.max_value());
    let h = length / m as f64;
    if !(delta > 0.0 && delta <= 4.0 * h + 1e-12) {
        return Err(ViscousError::InvalidInput(format!(
            "bump width {delta} must lie in (0, {}]",
            4.0 * h
        )));
    }
    let interp = potential.field().interpolator();
    let oscillates = potential.oscillation() > 0.0;
    let v_samples: Vec<f64> = (0..m)
        .map(|j| {
            if oscillates {
                interp.eval(&[box_node(length, m, j)])
            } else {
                potential.min_value()
            }
        })
        .collect();
    let max_abs = potential.field().max_abs();

    let mut richardson_order = 1;
    let mut per_width = Vec::with_capacity(2);
    for width in [delta, 0.5 * delta] {
        let profile = if oscillates {
            let steps = kernel_steps(t, max_abs, h);
            let coarse =
                kernel_profile_run(&v_samples, length, m, t, x, width, steps, target_grid)?;
            let fine =
                kernel_profile_run(&v_samples, length, m, t, x, width, 2 * steps, target_grid)?;
            richardson_order = 2;
            coarse
                .iter()
                .zip(&fine)
                .map(|(c, f)| (4.0 * f - c) / 3.0)
                .collect()
        } else {
            kernel_profile_run(&v_samples, length, m, t, x, width, 1, target_grid)?
        };
        per_width.push(profile);
    }
    let profile: Vec<f64> = per_width[0]
        .iter()
        .zip(&per_width[1])
        .map(|(c, f)| ((4.0 * f - c) / 3.0).max(0.0))
        .collect();
    Ok(KernelEstimate {
        t,
        x: vec![x],
        profile,
        bump_width: delta,
        richardson_order,
    })
}

/// Fundamental solution p̃_p(t,x,·) of the Doob-transformed generator
/// ½Δ + b_p·D with b_p = −p − Dv_p, evolved as a density (conservative
/// drift), Richardson-extrapolated in δ. One-dimensional.
pub fn doob_kernel(
    cell: &CellSolution,
    t: f64,
    x: f64,
    target_grid: &[f64],
    delta: f64,
) -> Result<KernelEstimate, ViscousError> {
    let drift = cell.drift();
    if drift.dim() != 1 {
        return Err(ViscousError::InvalidInput(
            "kernel evolutions are one-dimensional".into(),
        ));
    }
    if !(t >= 0.5) {
        return Err(ViscousError::InvalidInput(format!(
            "kernel times below 0.5 are out of scope, got {t}"
        )));
    }
    let b_interp = drift.component(0).interpolator();
    let b_max = drift.max_norm();
    let reach = target_grid.iter().fold(x.abs(), |a, &y| a.max(y.abs())) + b_max * t;
    let (length, m) = kernel_box(reach, t, 0.0);
    let h = length / m as f64;
    if !(delta > 0.0 && delta <= 4.0 * h + 1e-12) {
        return Err(ViscousError::InvalidInput(format!(
            "bump width {delta} must lie in (0, {}]",
            4.0 * h
        )));
    }
    let b_samples: Vec<f64> = (0..m).map(|j| b_interp.eval(&[box_node(length, m, j)])).collect();
    let steps = {
        let ds = (0.05 / b_max.max(1e-12)).min(4.0 * h * h);
        (t / ds).ceil() as usize
    };

    let run = |width: f64, steps: usize| -> Result<Vec<f64>, ViscousError> {
        let mut state = GaugedState::new(gaussian_bump(length, m, x, width));
        evolve_drift_line(length, &b_samples, t, steps, &mut state)?;
        let gauge = state.log_gauge;
        Ok(target_grid
            .iter()
            .map(|&y| {
                let fx = (wrap_into(y, length) + 0.5 * length) / h;
                let w = cubic_periodic(&state.w, fx);
                if w > 0.0 {
                    (w.ln() + gauge).exp()
                } else {
                    0.0
                }
            })
            .collect())
    };

    let still = b_max == 0.0;
    let mut per_width = Vec::with_capacity(2);
    for width in [delta, 0.5 * delta] {
        let profile = if still {
            run(width, steps)?
        } else {
            let coarse = run(width, steps)?;
            let fine = run(width, 2 * steps)?;
            coarse
                .iter()
                .zip(&fine)
                .map(|(c, f)| (4.0 * f - c) / 3.0)
                .collect()
        };
        per_width.push(profile);
    }
    let profile: Vec<f64> = per_width[0]
        .iter()
        .zip(&per_width[1])
        .map(|(c, f)| ((4.0 * f - c) / 3.0).max(0.0))
        .collect();
    Ok(KernelEstimate {
        t,
        x: vec![x],
        profile,
        bump_width: delta,
        richardson_order: if still { 1 } else { 2 },
    })
}

/// Brownian-bridge Feynman-Kac estimate of K(t,x,y):
/// p_t(x−y)·E[exp ∫₀ᵗ V(B_s)ds], 256 time slices, midpoint rule, one RNG
/// stream per path so the estimate is reproducible and order-independent.
pub fn feynman_kac_mc(
    potential: &Potential,
    t: f64,
    x: f64,
    y: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate, ViscousError> {
    if potential.field().grid().dim() != 1 {
        return Err(ViscousError::InvalidInput(
            "the Monte Carlo oracle is one-dimensional".into(),
        ));
    }
    if n_paths < 10_000 {
        return Err(ViscousError::InvalidInput(format!(
            "need at least 10000 paths for a stable standard error, got {n_paths}"
        )));
    }
    let slices = 256usize;
    let dt = t / slices as f64;
    let interp = potential.field().interpolator();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + path as u64);
        let mut b = x;
        let mut integral = 0.0;
        for k in 0..slices {
            let remaining = t - k as f64 * dt;
            let mean = b + (y - b) * dt / remaining;
            let var = dt * (remaining - dt) / remaining;
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = mean + var.max(0.0).sqrt() * z;
            let zm: f64 = StandardNormal.sample(&mut rng);
            let mid = 0.5 * (b + next) + (0.25 * dt).sqrt() * zm;
            integral += interp.eval(&[mid]) * dt;
            b = next;
        }
        let weight = integral.exp();
        sum += weight;
        sum_sq += weight * weight;
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let p_t = (-(x - y) * (x - y) / (2.0 * t)).exp()
        / (2.0 * std::f64::consts::PI * t).sqrt();
    Ok(McEstimate {
        estimate: p_t * mean,
        std_error: p_t * (var / n).sqrt(),
    })
}

/// Normalized ballistic series t^{1/2}·e^{t·L̄(q)}·K(t,0,−qt) for each t in
/// `t_list`. The kernel is computed in the exponentially tilted frame
/// K̃ = e^{−p(q)·y}K(t,0,y), whose evolution keeps O(1) dynamic range around
/// the transported Gaussian, and is untilted analytically.
pub fn ballistic_band(
    potential: &Potential,
    model: &HamiltonianModel,
    q: f64,
    t_list: &[f64],
) -> Result<Vec<f64>, ViscousError> {
    if potential.field().grid().dim() != 1 {
        return Err(ViscousError::InvalidInput(
            "the ballistic diagnostic is one-dimensional".into(),
        ));
    }
    if potential.fingerprint() != model.potential().fingerprint() {
        return Err(ViscousError::InvalidInput(
            "potential does not match the transform model".into(),
        ));
    }
    for &t in t_list {
        if !(1.0..=50.0).contains(&t) {
            return Err(ViscousError::InvalidInput(format!(
                "ballistic times must lie in [1, 50], got {t}"
            )));
        }
    }
    let lag = legendre(model, &[q])?;
    let p = lag.p_of_q[0];
    let t_max = t_list.iter().cloned().fold(1.0f64, f64::max);
    let spread_rate = model.hess(&[p])?[(0, 0)].abs().max(1.0) * 1.3;
    let tail = (2.0 * spread_rate * t_max * (1e12f64).ln()).sqrt();
    let mut length = 4.0f64;
    while length < 2.0 * (1.05 * tail + 2.0) {
        length *= 2.0;
    }
    let m = (16.0 * length) as usize;
    let h = length / m as f64;
    let interp = potential.field().interpolator();
    let oscillates = potential.oscillation() > 0.0;
    let v_samples: Vec<f64> = (0..m)
        .map(|j| {
            if oscillates {
                interp.eval(&[box_node(length, m, j)])
            } else {
                potential.min_value()
            }
        })
        .collect();
    let pot_scale = potential.field().max_abs() + 0.5 * p * p;

    let tilted_value = |t: f64, width: f64, steps: usize| -> Result<f64, ViscousError> {
        let mut state = GaugedState::new(gaussian_bump(length, m, 0.0, width));
        evolve_line(length, &v_samples, p, t, steps, false, &mut state)?;
        state.log_gauge += 0.5 * p * p * t;
        log_interp_line(&state, length, wrap_into(-q * t, length))
    };

    t_list
        .iter()
        .map(|&t| {
            let base = {
                let ds = (0.1 / pot_scale.max(1e-12)).min(4.0 * h * h);
                (t / ds).ceil() as usize
            };
            let mut per_width = Vec::with_capacity(2);
            for width in [4.0 * h, 2.0 * h] {
                let value = if oscillates {
                    let coarse = tilted_value(t, width, base)?;
                    let fine = tilted_value(t, width, 2 * base)?;
                    (4.0 * fine.exp() - coarse.exp()) / 3.0
                } else {
                    tilted_value(t, width, 1)?.exp()
                };
                per_width.push(value);
            }
            let tilted = (4.0 * per_width[1] - per_width[0]) / 3.0;
            if !(tilted > 0.0) {
                return Err(ViscousError::Underflow(format!(
                    "extrapolated tilted kernel nonpositive at t = {t}"
                )));
            }
            Ok((0.5 * t.ln() + t * (lag.lbar - p * q) + tilted.ln()).exp())
        })
        .collect()
}
