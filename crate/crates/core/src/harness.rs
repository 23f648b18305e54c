//! ε-sweep harness: measures e(ε) = |u^ε − u| against the macroscopic
//! Hopf-Lax limit, fits the rate model e(ε) ≈ ε(a + b·log(1/ε)), checks the
//! logarithmic error envelope, provides a semianalytic quadrature oracle for
//! the free potential, and emits deterministic CSV/JSON reports.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cell::Potential;
use crate::hopflax::{self, HopfLaxError, LipschitzData};
use crate::legendre::HamiltonianModel;
use crate::torus::{ScalarField, TorusGrid};
use crate::viscous::{solve_eps, solve_eps_fd, EpsProblem, ViscousError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("sweep aborted at ε = {epsilon}: {message}")]
    Aborted {
        epsilon: f64,
        message: String,
        /// Measurements that finished before the abort, sorted like a report.
        partial: Vec<SweepRecord>,
    },
    #[error("report io failed: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("report parse failed: {0}")]
    ParseFailure(String),
    #[error(transparent)]
    HopfLax(#[from] HopfLaxError),
    #[error(transparent)]
    Viscous(#[from] ViscousError),
}

/// Periodic potential selector. The trigonometric variants are sampled
/// band-limited, so realizing them at any admissible resolution is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// V ≡ 0 in any dimension.
    Zero,
    /// V(x) = amplitude·cos(2πx), one dimensional.
    Cosine { amplitude: f64 },
    /// V(x) = Σ_k cosine[k−1]·cos(2πkx) + sine[k−1]·sin(2πkx), one
    /// dimensional; the two coefficient lists may have different lengths.
    Harmonics { cosine: Vec<f64>, sine: Vec<f64> },
}

impl PotentialSpec {
    pub fn realize(&self, dimension: usize) -> Result<Potential, HarnessError> {
        match self {
            PotentialSpec::Zero => {
                let grid = TorusGrid::new(dimension, 32);
                Ok(Potential::new(ScalarField::constant(grid, 0.0)))
            }
            PotentialSpec::Cosine { amplitude } => {
                require(dimension == 1, "cosine potentials are one dimensional")?;
                require(amplitude.is_finite(), "cosine amplitude must be finite")?;
                let amplitude = *amplitude;
                let grid = TorusGrid::new(1, 32);
                let field = ScalarField::from_fn(grid, |x| {
                    amplitude * (2.0 * std::f64::consts::PI * x[0]).cos()
                });
                Ok(Potential::new(field))
            }
            PotentialSpec::Harmonics { cosine, sine } => {
                require(dimension == 1, "harmonic potentials are one dimensional")?;
                let harmonics = cosine.len().max(sine.len());
                require(harmonics > 0, "harmonic potentials need coefficients")?;
                require(
                    cosine.iter().chain(sine).all(|c| c.is_finite()),
                    "harmonic coefficients must be finite",
                )?;
                let n = (4 * harmonics).next_power_of_two().max(32);
                let grid = TorusGrid::new(1, n);
                let (cosine, sine) = (cosine.clone(), sine.clone());
                let field = ScalarField::from_fn(grid, |x| {
                    let mut v = 0.0;
                    for (k, c) in cosine.iter().enumerate() {
                        v += c * (2.0 * std::f64::consts::PI * (k + 1) as f64 * x[0]).cos();
                    }
                    for (k, s) in sine.iter().enumerate() {
                        v += s * (2.0 * std::f64::consts::PI * (k + 1) as f64 * x[0]).sin();
                    }
                    v
                });
                Ok(Potential::new(field))
            }
        }
    }
}

/// Builtin initial-data catalog. The evaluators are fixed formulas so that
/// experiment numbers stay comparable across runs and versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    /// g(x) = min{|x|, 10}: Lipschitz 1, kinked at the origin.
    CappedNorm,
    /// g ≡ value.
    Constant { value: f64 },
    /// g(x) = slope·x₁ clamped to [−10, 10]: Lipschitz |slope|.
    AffineCapped { slope: f64 },
    /// g(x) = −½|x|² for |x| ≤ 1 and −(|x|−½) beyond: C¹, Lipschitz 1,
    /// semiconcave, with strictly quadratic structure near its kink-free
    /// maximum at the origin.
    SmoothSemiconcave,
}

impl DataSpec {
    pub fn realize(&self) -> LipschitzData {
        match self {
            DataSpec::CappedNorm => {
                LipschitzData::new(1.0, |y: &[f64]| norm(y).min(10.0))
            }
            DataSpec::Constant { value } => {
                let value = *value;
                LipschitzData::new(0.0, move |_: &[f64]| value)
            }
            DataSpec::AffineCapped { slope } => {
                let slope = *slope;
                LipschitzData::new(slope.abs(), move |y: &[f64]| {
                    (slope * y[0]).clamp(-10.0, 10.0)
                })
            }
            DataSpec::SmoothSemiconcave => LipschitzData::new(1.0, |y: &[f64]| {
                let r = norm(y);
                if r <= 1.0 {
                    -0.5 * r * r
                } else {
                    -(r - 0.5)
                }
            })
            .semiconcave(Some(1.0)),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            DataSpec::Constant { value } => value.is_finite(),
            DataSpec::AffineCapped { slope } => slope.is_finite(),
            _ => true,
        }
    }
}

/// Route used for the small-ε values u^ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverSpec {
    /// Hopf-Cole spectral solver.
    #[default]
    Spectral,
    /// Godunov upwind finite differences, one dimensional.
    Upwind,
    /// Semianalytic quadrature of the explicit free-potential formula;
    /// requires V ≡ 0 in one dimension.
    Quadrature,
}

/// One ε-sweep experiment: which problem to solve, where and when to compare
/// u^ε with the Hopf-Lax limit, and how to label the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub data: DataSpec,
    pub dimension: usize,
    /// Strictly decreasing list in (0, 1].
    pub epsilons: Vec<f64>,
    pub eval_points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// Resolution for the cell solves behind H̄ and L̄.
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub seed: u64,
    /// When set, `rate_sweep` writes CSV and JSON reports here.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_cell_resolution() -> usize {
    64
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        require(
            self.dimension == 1 || self.dimension == 2,
            "dimension must be 1 or 2",
        )?;
        require(!self.epsilons.is_empty(), "ε list must be nonempty")?;
        require(
            self.epsilons.iter().all(|e| e.is_finite() && *e > 0.0 && *e <= 1.0),
            "every ε must lie in (0, 1]",
        )?;
        require(
            self.epsilons.windows(2).all(|w| w[0] > w[1]),
            "ε list must be strictly decreasing",
        )?;
        require(!self.eval_points.is_empty(), "evaluation points must be nonempty")?;
        require(
            self.eval_points
                .iter()
                .all(|x| x.len() == self.dimension && x.iter().all(|c| c.is_finite())),
            "evaluation points must be finite and match the dimension",
        )?;
        require(!self.times.is_empty(), "time list must be nonempty")?;
        require(
            self.times.iter().all(|t| t.is_finite() && *t > 0.0),
            "times must be positive and finite",
        )?;
        require(
            self.cell_resolution.is_power_of_two() && self.cell_resolution >= 32,
            "cell resolution must be a power of two with n >= 32",
        )?;
        require(self.data.is_valid(), "data coefficients must be finite")?;
        match self.solver {
            SolverSpec::Quadrature => require(
                self.potential == PotentialSpec::Zero && self.dimension == 1,
                "the quadrature solver requires V ≡ 0 in one dimension",
            )?,
            SolverSpec::Upwind => {
                require(self.dimension == 1, "the upwind solver is one dimensional")?
            }
            SolverSpec::Spectral => {}
        }
        let potential = self.potential.realize(self.dimension)?;
        require(
            self.cell_resolution >= potential.field().grid().n(),
            "cell resolution must be at least the potential sample resolution",
        )?;
        Ok(())
    }

    /// Stable digest of the configuration for the report manifest.
    pub fn digest(&self) -> String {
        let encoded = serde_json::to_string(self).expect("config serializes");
        let mut h = DefaultHasher::new();
        encoded.hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// One (ε, x, t) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub point: Vec<f64>,
    pub time: f64,
    pub u_eps: f64,
    pub u_limit: f64,
    pub error: f64,
}

/// Least-squares fit of e(ε) = ε(a + b·log(1/ε)) with weights 1/ε², i.e.
/// ordinary least squares of e/ε against log(1/ε). `residual` is the root
/// mean square misfit in the scaled variable e/ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
}

/// Error series of one evaluation point over the ε list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSeries {
    pub point: Vec<f64>,
    pub time: f64,
    /// (ε, sup over nothing: the single-point error) pairs, ε decreasing.
    pub errors: Vec<(f64, f64)>,
}

/// Reproducibility stamp carried by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub package_version: String,
    pub seed: u64,
}

/// Full outcome of a rate sweep: per-ε sup errors, the fitted rate model,
/// per-point series for pointwise boundedness checks, and the raw records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    /// (ε, sup error over the evaluation set), ε decreasing.
    pub errors: Vec<(f64, f64)>,
    /// Absent when the sweep has fewer than two ε values.
    pub fit: Option<RateFit>,
    pub per_point: Vec<PointSeries>,
    pub records: Vec<SweepRecord>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Runs the ε sweep described by `config`: u^ε along the configured solver
/// route, u by Hopf-Lax, errors aggregated as sup over the evaluation set,
/// the rate model fitted, and reports written when an output directory is
/// configured. Independent (ε, t) solves run on a bounded worker pool;
/// assembly is single-threaded with results ordered by ε then point index.
pub fn rate_sweep(config: &ExperimentConfig) -> Result<RateReport, HarnessError> {
    config.validate()?;
    let potential = config.potential.realize(config.dimension)?;
    let data = config.data.realize();
    let model = HamiltonianModel::with_resolution(potential.clone(), config.cell_resolution);

    let mut tasks = Vec::new();
    for &epsilon in &config.epsilons {
        for &time in &config.times {
            tasks.push((epsilon, time));
        }
    }
    let reach = config
        .eval_points
        .iter()
        .flat_map(|x| x.iter().map(|c| c.abs()))
        .fold(0.0f64, f64::max);

    let run_one = |&(epsilon, time): &(f64, f64)| -> Result<Vec<SweepRecord>, HarnessError> {
        let u_eps = match config.solver {
            SolverSpec::Quadrature => config
                .eval_points
                .iter()
                .map(|x| semianalytic_oracle_v0(&data, epsilon, x[0], time))
                .collect::<Result<Vec<f64>, HarnessError>>()?,
            SolverSpec::Spectral => {
                let problem =
                    EpsProblem::new(potential.clone(), data.clone(), epsilon, time, reach)?;
                solve_eps(&problem, &config.eval_points)?
            }
            SolverSpec::Upwind => {
                let problem =
                    EpsProblem::new(potential.clone(), data.clone(), epsilon, time, reach)?;
                solve_eps_fd(&problem, &config.eval_points)?
            }
        };
        config
            .eval_points
            .iter()
            .zip(&u_eps)
            .map(|(point, &u_eps)| {
                let u_limit = hopflax::solve(&data, &model, point, time)?.value;
                Ok(SweepRecord {
                    epsilon,
                    point: point.clone(),
                    time,
                    u_eps,
                    u_limit,
                    error: (u_eps - u_limit).abs(),
                })
            })
            .collect()
    };

    let outcomes = run_pool(&tasks, run_one);

    let mut records = Vec::new();
    let mut failure: Option<(f64, String)> = None;
    for (task, outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Some(Ok(batch)) => records.extend(batch),
            Some(Err(err)) if failure.is_none() => failure = Some((task.0, err.to_string())),
            _ => {}
        }
    }
    if let Some((epsilon, message)) = failure {
        return Err(HarnessError::Aborted {
            epsilon,
            message,
            partial: records,
        });
    }

    let errors: Vec<(f64, f64)> = config
        .epsilons
        .iter()
        .map(|&eps| {
            let sup = records
                .iter()
                .filter(|r| r.epsilon == eps)
                .map(|r| r.error)
                .fold(0.0f64, f64::max);
            (eps, sup)
        })
        .collect();
    let fit = if errors.len() >= 2 {
        Some(fit_rate_model(&errors)?)
    } else {
        None
    };
    let mut per_point = Vec::new();
    for &time in &config.times {
        for point in &config.eval_points {
            let series = config
                .epsilons
                .iter()
                .map(|&eps| {
                    let err = records
                        .iter()
                        .find(|r| r.epsilon == eps && r.time == time && r.point == *point)
                        .map(|r| r.error)
                        .unwrap_or(f64::NAN);
                    (eps, err)
                })
                .collect();
            per_point.push(PointSeries {
                point: point.clone(),
                time,
                errors: series,
            });
        }
    }

    let report = RateReport {
        config: config.clone(),
        errors,
        fit,
        per_point,
        records,
        manifest: Manifest {
            config_digest: config.digest(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
        },
    };
    if let Some(dir) = &config.output_dir {
        emit_report(&report, ReportFormat::Csv, dir)?;
        emit_report(&report, ReportFormat::Json, dir)?;
    }
    Ok(report)
}

/// Fits e(ε) = ε(a + b·log(1/ε)) by least squares with weights 1/ε².
pub fn fit_rate_model(errors: &[(f64, f64)]) -> Result<RateFit, HarnessError> {
    require(errors.len() >= 2, "rate fits need at least two ε values")?;
    require(
        errors.iter().all(|&(e, v)| e > 0.0 && e <= 1.0 && v >= 0.0 && v.is_finite()),
        "rate fits need ε in (0, 1] and finite nonnegative errors",
    )?;
    let points: Vec<(f64, f64)> = errors
        .iter()
        .map(|&(eps, err)| ((1.0 / eps).ln(), err / eps))
        .collect();
    let n = points.len() as f64;
    let mean_l = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var_l = points.iter().map(|p| (p.0 - mean_l).powi(2)).sum::<f64>();
    require(var_l > 1e-12, "rate fits need at least two distinct ε values")?;
    let cov = points
        .iter()
        .map(|p| (p.0 - mean_l) * (p.1 - mean_y))
        .sum::<f64>();
    let b = cov / var_l;
    let a = mean_y - b * mean_l;
    let residual = (points
        .iter()
        .map(|p| (p.1 - a - b * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit { a, b, residual })
}

/// Envelope verdict: the constant Ĉ fitted on the coarsest half of the ε
/// list, the minimal slack of e(ε,t) ≤ ε(Ĉ + (n/2)·log(max{t,ε}/ε)) over
/// the finest half, and the per-(ε,t) slack table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub passed: bool,
    pub c_hat: f64,
    pub margin: f64,
    pub records: Vec<EnvelopeRecord>,
}

/// One (ε, t) envelope measurement; `trained` marks the fitting half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRecord {
    pub epsilon: f64,
    pub time: f64,
    pub error: f64,
    pub bound: f64,
    pub slack: f64,
    pub trained: bool,
}

/// Tests the logarithmic envelope e(ε,t) ≤ ε(Ĉ + (n/2)·log(max{t,ε}/ε)).
/// Ĉ is the smallest nonnegative constant making the bound hold on the
/// coarsest half of the ε list; the bound is then scored on the finest half
/// and the minimal slack returned.
pub fn envelope_check(config: &ExperimentConfig) -> Result<EnvelopeReport, HarnessError> {
    require(
        config.epsilons.len() >= 2,
        "envelope checks need at least two ε values",
    )?;
    let report = rate_sweep(config)?;
    let half = config.dimension as f64 / 2.0;
    let train_len = config.epsilons.len().div_ceil(2);
    let train: Vec<f64> = config.epsilons[..train_len].to_vec();

    let sup_error = |eps: f64, time: f64| {
        report
            .records
            .iter()
            .filter(|r| r.epsilon == eps && r.time == time)
            .map(|r| r.error)
            .fold(0.0f64, f64::max)
    };
    let log_factor = |eps: f64, time: f64| half * (time.max(eps) / eps).ln();

    let mut c_hat = 0.0f64;
    for &eps in &train {
        for &time in &config.times {
            c_hat = c_hat.max(sup_error(eps, time) / eps - log_factor(eps, time));
        }
    }

    let mut records = Vec::new();
    let mut margin = f64::INFINITY;
    for (i, &eps) in config.epsilons.iter().enumerate() {
        for &time in &config.times {
            let error = sup_error(eps, time);
            let bound = eps * (c_hat + log_factor(eps, time));
            let slack = bound - error;
            let trained = i < train_len;
            if !trained {
                margin = margin.min(slack);
            }
            records.push(EnvelopeRecord {
                epsilon: eps,
                time,
                error,
                bound,
                slack,
                trained,
            });
        }
    }
    Ok(EnvelopeReport {
        passed: margin >= 0.0,
        c_hat,
        margin,
        records,
    })
}

/// Ground-truth u^ε(x,t) for V ≡ 0 in one dimension, by log-sum-exp Simpson
/// quadrature of
///
/// ```text
///     u^ε(x,t) = −ε·ln ∫ (2πεt)^{−1/2} e^{−[g(y) + (x−y)²/(2t)]/ε} dy,
/// ```
///
/// with the panel count doubled until two successive values agree to 1e−10.
pub fn semianalytic_oracle_v0(
    g: &LipschitzData,
    epsilon: f64,
    x: f64,
    t: f64,
) -> Result<f64, HarnessError> {
    require(
        epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0,
        "ε must lie in (0, 1]",
    )?;
    require(t.is_finite() && t > 0.0, "time must be positive")?;
    require(x.is_finite(), "the evaluation point must be finite")?;
    let lip = g.lipschitz_bound();
    let radius = lip * t + (lip * lip * t * t + 2.0 * t * (80.0 * epsilon + 1.0)).sqrt();

    let value_at = |panels: usize| -> f64 {
        let h = 2.0 * radius / panels as f64;
        let mut exponents = Vec::with_capacity(panels + 1);
        let mut peak = f64::NEG_INFINITY;
        for i in 0..=panels {
            let y = x - radius + h * i as f64;
            let f = -(g.eval(&[y]) + (x - y) * (x - y) / (2.0 * t)) / epsilon;
            peak = peak.max(f);
            exponents.push(f);
        }
        let mut sum = 0.0;
        for (i, f) in exponents.iter().enumerate() {
            let weight = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += weight * (f - peak).exp();
        }
        let integral_log = peak + (h / 3.0 * sum).ln();
        -epsilon * (integral_log - 0.5 * (2.0 * std::f64::consts::PI * epsilon * t).ln())
    };

    let sharp_scale = epsilon.min((epsilon * t).sqrt());
    let mut panels = ((32.0 * radius / sharp_scale) as usize)
        .next_power_of_two()
        .clamp(2048, 1 << 20);
    let mut previous = value_at(panels);
    while panels <= (1 << 22) {
        panels *= 2;
        let refined = value_at(panels);
        if (refined - previous).abs() <= 1e-10 * (1.0 + refined.abs()) {
            return Ok(refined);
        }
        previous = refined;
    }
    Err(HarnessError::QuadratureFailure(format!(
        "no convergence at x = {x}, t = {t}, ε = {epsilon} after {panels} panels"
    )))
}

/// Writes a report into `dir` as `rate_report.csv` (columns epsilon, error,
/// model_value, residual) or `rate_report.json` (the full report with its
/// manifest). Output is byte-deterministic for a fixed report.
pub fn emit_report(
    report: &RateReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Csv => {
            let path = dir.join("rate_report.csv");
            let mut out = Vec::new();
            writeln!(out, "epsilon,error,model_value,residual")?;
            for &(eps, err) in &report.errors {
                let model = report
                    .fit
                    .map(|fit| eps * (fit.a + fit.b * (1.0 / eps).ln()));
                let (model_text, residual_text) = match model {
                    Some(m) => (format!("{m}"), format!("{}", err - m)),
                    None => (String::new(), String::new()),
                };
                writeln!(out, "{eps},{err},{model_text},{residual_text}")?;
            }
            std::fs::write(&path, out)?;
            Ok(path)
        }
        ReportFormat::Json => {
            let path = dir.join("rate_report.json");
            let encoded =
                serde_json::to_string_pretty(report).expect("reports serialize");
            std::fs::write(&path, encoded + "\n")?;
            Ok(path)
        }
    }
}

/// Reads back a JSON report written by `emit_report`.
pub fn read_report(path: &Path) -> Result<RateReport, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::ParseFailure(e.to_string()))
}

/// Runs `work` over the tasks on min(available parallelism, task count)
/// workers; slot i always holds task i's outcome, so assembly order never
/// depends on scheduling.
fn run_pool<T, R, F>(tasks: &[T], work: F) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let slots: Vec<Mutex<Option<R>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let outcome = work(&tasks[i]);
                *slots[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot"))
        .collect()
}

fn require(condition: bool, message: &str) -> Result<(), HarnessError> {
    if condition {
        Ok(())
    } else {
        Err(HarnessError::InvalidConfig(message.to_string()))
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            potential: PotentialSpec::Zero,
            data: DataSpec::CappedNorm,
            dimension: 1,
            epsilons: vec![0.25, 0.125],
            eval_points: vec![vec![0.0]],
            times: vec![1.0],
            cell_resolution: 32,
            solver: SolverSpec::Quadrature,
            seed: 0,
            output_dir: None,
        }
    }

    #[test]
    fn synthetic_errors_recover_the_exact_rate_model() {
        let errors: Vec<(f64, f64)> = (4..=10)
            .map(|k| {
                let eps = 0.5f64.powi(k);
                (eps, eps * (2.0 + 0.5 * (1.0 / eps).ln()))
            })
            .collect();
        let fit = fit_rate_model(&errors).unwrap();
        println!("fit a = {}, b = {}, residual = {}", fit.a, fit.b, fit.residual);
        assert!((fit.a - 2.0).abs() < 1e-9);
        assert!((fit.b - 0.5).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn config_validation_catches_bad_sweeps() {
        let mut increasing = base_config();
        increasing.epsilons = vec![0.125, 0.25];
        assert!(matches!(
            increasing.validate(),
            Err(HarnessError::InvalidConfig(_))
        ));

        let mut out_of_range = base_config();
        out_of_range.epsilons = vec![1.5, 0.25];
        assert!(out_of_range.validate().is_err());

        let mut wrong_dim_point = base_config();
        wrong_dim_point.eval_points = vec![vec![0.0, 0.0]];
        assert!(wrong_dim_point.validate().is_err());

        let mut quadrature_with_potential = base_config();
        quadrature_with_potential.potential = PotentialSpec::Cosine { amplitude: 1.0 };
        assert!(quadrature_with_potential.validate().is_err());

        let mut coarse_cells = base_config();
        coarse_cells.cell_resolution = 16;
        assert!(coarse_cells.validate().is_err());

        assert!(base_config().validate().is_ok());
    }

    #[test]
    fn data_catalog_matches_its_formulas() {
        let capped = DataSpec::CappedNorm.realize();
        assert_eq!(capped.eval(&[3.0, 4.0]), 5.0);
        assert_eq!(capped.eval(&[-30.0]), 10.0);

        let affine = DataSpec::AffineCapped { slope: -2.0 }.realize();
        assert_eq!(affine.eval(&[1.5]), -3.0);
        assert_eq!(affine.eval(&[-800.0]), 10.0);
        assert_eq!(affine.lipschitz_bound(), 2.0);

        let smooth = DataSpec::SmoothSemiconcave.realize();
        assert!(smooth.is_semiconcave());
        assert_eq!(smooth.eval(&[0.6]), -0.18);
        assert_eq!(smooth.eval(&[2.0]), -1.5);
        let left = smooth.eval(&[1.0 - 1e-7]);
        let right = smooth.eval(&[1.0 + 1e-7]);
        println!("smooth data across the matching radius: {left} vs {right}");
        assert!((left - right).abs() < 1e-6);
    }

    #[test]
    fn reports_with_no_measurements_still_emit() {
        let mut config = base_config();
        config.epsilons = vec![0.25];
        let report = RateReport {
            manifest: Manifest {
                config_digest: config.digest(),
                package_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: 0,
            },
            config,
            errors: Vec::new(),
            fit: None,
            per_point: Vec::new(),
            records: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let csv_path = emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
        let csv = std::fs::read_to_string(csv_path).unwrap();
        println!("empty report CSV: {csv:?}");
        assert_eq!(csv, "epsilon,error,model_value,residual\n");
        let json_path = emit_report(&report, ReportFormat::Json, dir.path()).unwrap();
        assert_eq!(read_report(&json_path).unwrap(), report);
    }

    #[test]
    fn worker_pool_preserves_task_order() {
        let tasks: Vec<usize> = (0..37).collect();
        let outcomes = run_pool(&tasks, |&i| i * i);
        for (i, out) in outcomes.iter().enumerate() {
            assert_eq!(*out, Some(i * i));
        }
    }
}
