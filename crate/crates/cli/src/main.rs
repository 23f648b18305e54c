//! Command line front end for the homogenization laboratory: cell solves,
//! effective Lagrangian tables, Hopf-Lax values, ε-scale solves, kernel
//! estimates, ballistic bands, effective drift-diffusion summaries, and rate
//! sweeps.
//!
//! Exit codes: 0 on success, 2 on solver failures, 3 on invariant violations
//! (bad arguments, refused preconditions, malformed input files).

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use hjhomog::bloch::{self, BlochError, DriftSpec};
use hjhomog::cell::{solve_cell, CellError, Potential};
use hjhomog::harness::{self, DataSpec, ExperimentConfig, HarnessError, PotentialSpec};
use hjhomog::hopflax::{self, HopfLaxError};
use hjhomog::legendre::{legendre, HamiltonianModel, LegendreError};
use hjhomog::torus;
use hjhomog::viscous::{
    ballistic_band, doob_kernel, schrodinger_kernel, solve_eps, solve_eps_fd, EpsProblem,
    ViscousError,
};

#[derive(Parser)]
#[command(
    name = "hjhomog",
    version,
    about = "Numerical laboratory for periodic homogenization of viscous Hamilton-Jacobi equations"
)]
struct Cli {
    /// Output directory for file-producing commands. An explicit flag wins
    /// over the HJHOMOG_OUTDIR environment variable; the default is the
    /// current directory (for `rate`, the config file's output_dir).
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Potential spec grammar shared by most commands:
/// `zero` | `zero2` | `cos:<amplitude>` | `harmonics:<c1,c2,..>[;<s1,s2,..>]`
/// or a path to a scalar field file in the shared on-disk layout.
#[derive(Subcommand)]
enum Command {
    /// Solve the cell problem at momentum p; writes cell.json plus the
    /// corrector, ground-state, and invariant-density field files.
    Cell {
        #[arg(long)]
        potential: String,
        /// Momentum components, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Vec<f64>,
        /// Collocation resolution per axis.
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Tabulate the effective Lagrangian: CSV columns (q…, lbar, p_of_q…,
    /// dual_gap) on stdout, with q running along the first axis.
    Lagrangian {
        #[arg(long)]
        potential: String,
        /// Either `start:stop:count` or an explicit comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        q_grid: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Evaluate the Hopf-Lax solution at (x, t); prints JSON
    /// {value, minimizer, delta, r} with the quadratic-growth diagnostic
    /// (null unless the data is semiconcave).
    Hopflax {
        #[arg(long)]
        potential: String,
        /// Initial data: capped_norm | const:<v> | affine:<slope> |
        /// smooth_semiconcave | @<file> holding a JSON data spec.
        #[arg(long)]
        g: String,
        /// Evaluation point components, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Solve the ε-scale problem and print JSON {epsilon, time, points,
    /// values}.
    SolveEps {
        #[arg(long)]
        potential: String,
        /// Initial data spec (see `hopflax --help`).
        #[arg(long)]
        g: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        t: f64,
        /// Evaluation point; repeat the flag for several, components comma
        /// separated.
        #[arg(long = "x", required = true, allow_hyphen_values = true)]
        x: Vec<String>,
        /// Use the upwind finite-difference solver instead of the spectral
        /// one (one dimensional).
        #[arg(long)]
        upwind: bool,
    },
    /// Estimate a kernel profile: writes kernel_profile.csv (target, value)
    /// and kernel_meta.json {t, x, delta, richardson_order}.
    Kernel {
        #[arg(long)]
        potential: String,
        #[arg(long)]
        t: f64,
        /// Source point.
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Bump width for the point-source approximation.
        #[arg(long)]
        delta: f64,
        /// Target grid, `start:stop:count` or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        targets: String,
        /// Estimate the Doob-transformed drift kernel at this momentum
        /// instead of the Schrödinger kernel.
        #[arg(long)]
        doob_p: Option<f64>,
        /// Cell resolution backing --doob-p.
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Ballistic band series t^{1/2}·e^{t·L̄(q)}·K(t, 0, −qt); prints JSON
    /// {q, times, series}.
    Ballistic {
        #[arg(long)]
        potential: String,
        #[arg(long, allow_hyphen_values = true)]
        q: f64,
        /// Comma-separated time list.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Effective drift and diffusion of a periodic drift field: prints JSON
    /// {b_bar, q, corrector_residuals, density_residual} and writes the
    /// invariant density and corrector field files.
    Bloch {
        /// Either a vector field file or `doob:<p components>` (requires
        /// --potential).
        #[arg(long)]
        drift: String,
        #[arg(long)]
        potential: Option<String>,
        #[arg(long, default_value_t = 64)]
        n: usize,
    },
    /// Run an ε-sweep rate experiment from a JSON config file and print a
    /// summary; reports are written when an output directory is configured.
    #[command(after_help = "Example config:\n  {\n    \"potential\": {\"kind\": \"zero\"},\n    \"data\": {\"kind\": \"capped_norm\"},\n    \"dimension\": 1,\n    \"epsilons\": [0.0625, 0.03125, 0.015625],\n    \"eval_points\": [[0.0]],\n    \"times\": [1.0],\n    \"cell_resolution\": 64,\n    \"solver\": \"quadrature\",\n    \"seed\": 7\n  }")]
    Rate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Invariant(String),
    Solver(String),
}

fn invariant_cell(e: &CellError) -> bool {
    matches!(e, CellError::InvalidInput(_))
}

fn invariant_legendre(e: &LegendreError) -> bool {
    match e {
        LegendreError::InvalidInput(_) => true,
        LegendreError::Cell(inner) => invariant_cell(inner),
        LegendreError::NewtonDiverged(_) => false,
    }
}

fn invariant_hopflax(e: &HopfLaxError) -> bool {
    match e {
        HopfLaxError::Legendre(inner) => invariant_legendre(inner),
        HopfLaxError::NoQuadraticGrowth => false,
    }
}

fn invariant_viscous(e: &ViscousError) -> bool {
    match e {
        ViscousError::InvalidInput(_) | ViscousError::ResolutionRefused(_) => true,
        ViscousError::Cell(inner) => invariant_cell(inner),
        ViscousError::Legendre(inner) => invariant_legendre(inner),
        ViscousError::HopfLax(inner) => invariant_hopflax(inner),
        _ => false,
    }
}

fn invariant_bloch(e: &BlochError) -> bool {
    match e {
        BlochError::InvalidInput(_) => true,
        BlochError::Viscous(inner) => invariant_viscous(inner),
        _ => false,
    }
}

fn invariant_harness(e: &HarnessError) -> bool {
    match e {
        HarnessError::InvalidConfig(_) | HarnessError::ParseFailure(_) => true,
        HarnessError::HopfLax(inner) => invariant_hopflax(inner),
        HarnessError::Viscous(inner) => invariant_viscous(inner),
        _ => false,
    }
}

macro_rules! classify {
    ($ty:ty, $pred:ident) => {
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                if $pred(&e) {
                    Failure::Invariant(e.to_string())
                } else {
                    Failure::Solver(e.to_string())
                }
            }
        }
    };
}

classify!(CellError, invariant_cell);
classify!(LegendreError, invariant_legendre);
classify!(HopfLaxError, invariant_hopflax);
classify!(ViscousError, invariant_viscous);
classify!(BlochError, invariant_bloch);
classify!(HarnessError, invariant_harness);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 3 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(message)) => {
            eprintln!("solver failure: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(message)) => {
            eprintln!("invariant violation: {message}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Cell { potential, p, n } => {
            let potential = parse_potential(&potential)?;
            let solution = solve_cell(&potential, &p, n)?;
            let dir = resolve_outdir(&cli.outdir, None);
            std::fs::create_dir_all(&dir)?;
            let manifest = json!({
                "p": solution.p,
                "hbar": solution.hbar,
                "e_p": solution.e_p,
                "n": solution.resolution,
                "residuals": {
                    "cell": solution.cell_residual,
                    "stationarity": solution.stationarity_residual,
                },
            });
            std::fs::write(
                dir.join("cell.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            )?;
            torus::write_scalar(&dir.join("corrector.field"), &solution.v)?;
            torus::write_scalar(&dir.join("ground_state.field"), &solution.r)?;
            torus::write_scalar(&dir.join("invariant_density.field"), &solution.pi)?;
            println!(
                "hbar = {:.12}, bundle written to {}",
                solution.hbar,
                dir.display()
            );
            Ok(())
        }
        Command::Lagrangian { potential, q_grid, n } => {
            let potential = parse_potential(&potential)?;
            let dim = potential.field().grid().dim();
            let model = HamiltonianModel::with_resolution(potential, n);
            let grid = parse_grid(&q_grid)?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            // Rows stream to stdout; a closed pipe (e.g. `| head`) just ends
            // the table early.
            let mut emit = |line: String| -> Result<bool, Failure> {
                match writeln!(out, "{line}") {
                    Ok(()) => Ok(true),
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(false),
                    Err(e) => Err(Failure::from(e)),
                }
            };
            let q_header: Vec<String> = (1..=dim).map(|a| format!("q{a}")).collect();
            let p_header: Vec<String> = (1..=dim).map(|a| format!("p_of_q{a}")).collect();
            if !emit(format!("{},lbar,{},dual_gap", q_header.join(","), p_header.join(",")))? {
                return Ok(());
            }
            for q1 in grid {
                let mut q = vec![0.0; dim];
                q[0] = q1;
                let value = legendre(&model, &q)?;
                let q_text: Vec<String> = value.q.iter().map(f64::to_string).collect();
                let p_text: Vec<String> = value.p_of_q.iter().map(f64::to_string).collect();
                let row = format!(
                    "{},{},{},{}",
                    q_text.join(","),
                    value.lbar,
                    p_text.join(","),
                    value.dual_gap
                );
                if !emit(row)? {
                    return Ok(());
                }
            }
            Ok(())
        }
        Command::Hopflax { potential, g, x, t, n } => {
            let potential = parse_potential(&potential)?;
            let data = parse_data(&g)?.realize();
            let model = HamiltonianModel::with_resolution(potential, n);
            let solution = hopflax::solve(&data, &model, &x, t)?;
            let growth = if data.is_semiconcave() {
                hopflax::quad_growth_diag(&data, &model, &x, t, &hopflax::dyadic_radii(0.5, 8))
                    .ok()
            } else {
                None
            };
            let payload = json!({
                "value": solution.value,
                "minimizer": solution.minimizer,
                "delta": growth.map(|g| g.delta),
                "r": growth.map(|g| g.r),
            });
            println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            Ok(())
        }
        Command::SolveEps { potential, g, eps, t, x, upwind } => {
            let potential = parse_potential(&potential)?;
            let data = parse_data(&g)?.realize();
            let points: Vec<Vec<f64>> =
                x.iter().map(|s| parse_f64_list(s)).collect::<Result<_, _>>()?;
            let reach = points
                .iter()
                .flat_map(|p| p.iter().map(|c| c.abs()))
                .fold(0.0f64, f64::max);
            let problem = EpsProblem::new(potential, data, eps, t, reach)?;
            let values = if upwind {
                solve_eps_fd(&problem, &points)?
            } else {
                solve_eps(&problem, &points)?
            };
            let payload = json!({
                "epsilon": eps,
                "time": t,
                "points": points,
                "values": values,
            });
            println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            Ok(())
        }
        Command::Kernel { potential, t, x, delta, targets, doob_p, n } => {
            let potential = parse_potential(&potential)?;
            let targets = parse_grid(&targets)?;
            let estimate = match doob_p {
                Some(p) => {
                    let cell = solve_cell(&potential, &[p], n)?;
                    doob_kernel(&cell, t, x, &targets, delta)?
                }
                None => schrodinger_kernel(&potential, t, x, &targets, delta)?,
            };
            let dir = resolve_outdir(&cli.outdir, None);
            std::fs::create_dir_all(&dir)?;
            let mut rows = String::from("target,value\n");
            for (y, k) in targets.iter().zip(&estimate.profile) {
                rows.push_str(&format!("{y},{k}\n"));
            }
            std::fs::write(dir.join("kernel_profile.csv"), rows)?;
            let meta = json!({
                "t": estimate.t,
                "x": x,
                "delta": estimate.bump_width,
                "richardson_order": estimate.richardson_order,
            });
            std::fs::write(
                dir.join("kernel_meta.json"),
                serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n",
            )?;
            println!("kernel profile written to {}", dir.display());
            Ok(())
        }
        Command::Ballistic { potential, q, times, n } => {
            let potential = parse_potential(&potential)?;
            let model = HamiltonianModel::with_resolution(potential.clone(), n);
            let times = parse_f64_list(&times)?;
            let series = ballistic_band(&potential, &model, q, &times)?;
            let payload = json!({ "q": q, "times": times, "series": series });
            println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            Ok(())
        }
        Command::Bloch { drift, potential, n } => {
            let spec = if let Some(momentum) = drift.strip_prefix("doob:") {
                let potential_spec = potential.ok_or_else(|| {
                    Failure::Invariant("doob drifts need --potential".to_string())
                })?;
                let potential = parse_potential(&potential_spec)?;
                let p = parse_f64_list(momentum)?;
                let cell = solve_cell(&potential, &p, n)?;
                DriftSpec::doob(&cell)
            } else {
                let field = torus::read_vector(Path::new(&drift))
                    .map_err(|e| Failure::Invariant(format!("drift file {drift}: {e}")))?;
                DriftSpec::explicit(field)?
            };
            let ed = bloch::effective_diffusion(&spec, n)?;
            let dim = ed.b_bar.len();
            let q_rows: Vec<Vec<f64>> = (0..dim)
                .map(|i| (0..dim).map(|j| ed.q[(i, j)]).collect())
                .collect();
            let payload = json!({
                "b_bar": ed.b_bar,
                "q": q_rows,
                "corrector_residuals": ed.corrector_residuals,
                "density_residual": ed.density_residual,
            });
            let dir = resolve_outdir(&cli.outdir, None);
            std::fs::create_dir_all(&dir)?;
            torus::write_scalar(&dir.join("invariant_density.field"), &ed.m)?;
            for (axis, chi) in ed.chi.iter().enumerate() {
                torus::write_scalar(&dir.join(format!("corrector_{}.field", axis + 1)), chi)?;
            }
            println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            Ok(())
        }
        Command::Rate { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Invariant(format!("config {}: {e}", config.display())))?;
            let mut config: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Invariant(format!("config parse: {e}")))?;
            if let Some(dir) = cli
                .outdir
                .clone()
                .or_else(|| std::env::var("HJHOMOG_OUTDIR").ok().filter(|s| !s.is_empty()).map(PathBuf::from))
            {
                config.output_dir = Some(dir);
            }
            let report = harness::rate_sweep(&config)?;
            let payload = json!({
                "errors": report.errors,
                "fit": report.fit,
                "manifest": report.manifest,
                "output_dir": report.config.output_dir,
            });
            println!("{}", serde_json::to_string_pretty(&payload).expect("payload serializes"));
            Ok(())
        }
    }
}

fn resolve_outdir(flag: &Option<PathBuf>, fallback: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("HJHOMOG_OUTDIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    fallback
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_potential(spec: &str) -> Result<Potential, Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let field = torus::read_scalar(path)
            .map_err(|e| Failure::Invariant(format!("potential file {spec}: {e}")))?;
        return Ok(Potential::new(field));
    }
    let realized = if spec == "zero" {
        PotentialSpec::Zero.realize(1)
    } else if spec == "zero2" {
        PotentialSpec::Zero.realize(2)
    } else if let Some(rest) = spec.strip_prefix("cos:") {
        PotentialSpec::Cosine { amplitude: parse_f64(rest)? }.realize(1)
    } else if let Some(rest) = spec.strip_prefix("harmonics:") {
        let mut parts = rest.splitn(2, ';');
        let cosine = parse_f64_list(parts.next().unwrap_or(""))?;
        let sine = match parts.next() {
            Some(tail) => parse_f64_list(tail)?,
            None => Vec::new(),
        };
        PotentialSpec::Harmonics { cosine, sine }.realize(1)
    } else {
        return Err(Failure::Invariant(format!(
            "unrecognized potential spec '{spec}' (expected zero | zero2 | cos:<amp> | \
             harmonics:<c,..>[;<s,..>] | a field file path)"
        )));
    };
    realized.map_err(Failure::from)
}

fn parse_data(spec: &str) -> Result<DataSpec, Failure> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Invariant(format!("data file {path}: {e}")))?;
        return serde_json::from_str(&text)
            .map_err(|e| Failure::Invariant(format!("data spec {path}: {e}")));
    }
    if spec == "capped_norm" {
        Ok(DataSpec::CappedNorm)
    } else if spec == "smooth_semiconcave" {
        Ok(DataSpec::SmoothSemiconcave)
    } else if let Some(rest) = spec.strip_prefix("const:") {
        Ok(DataSpec::Constant { value: parse_f64(rest)? })
    } else if let Some(rest) = spec.strip_prefix("affine:") {
        Ok(DataSpec::AffineCapped { slope: parse_f64(rest)? })
    } else {
        Err(Failure::Invariant(format!(
            "unrecognized data spec '{spec}' (expected capped_norm | const:<v> | \
             affine:<slope> | smooth_semiconcave | @<json file>)"
        )))
    }
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let start = parse_f64(parts[0])?;
        let stop = parse_f64(parts[1])?;
        let count: usize = parts[2]
            .parse()
            .map_err(|e| Failure::Invariant(format!("grid count '{}': {e}", parts[2])))?;
        if count < 2 {
            return Err(Failure::Invariant("grid specs need at least 2 points".into()));
        }
        return Ok((0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect());
    }
    parse_f64_list(spec)
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',').map(|part| parse_f64(part.trim())).collect()
}

fn parse_f64(text: &str) -> Result<f64, Failure> {
    text.parse::<f64>()
        .map_err(|e| Failure::Invariant(format!("number '{text}': {e}")))
}
