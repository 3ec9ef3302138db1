//! `ising-lsi`: command-line front end for the log-Sobolev laboratory.
//!
//! Exit codes: 0 success, 1 invalid input, 2 verification violation,
//! 3 numerical non-convergence.

mod model_file;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use ising_lsi::exact::{spin, susceptibility, susceptibility_rows, MATRIX_CAP};
use ising_lsi::flow::{
    criterion_batch, lsi_bound, lsi_bound_with, meanfield_corollary, verify_convolution,
    verify_decomposition, verify_entropy_decomposition, BoundReport, BoundSettings,
    CovarianceSchedule, QuadratureConfig, TwoPointRadiusChi,
};
use ising_lsi::glauber::{
    build_generator, entropy_decay_trace, estimate_inverse_lsi, spectral_gap_with_vector,
    DecaySettings, OptimizerSettings,
};
use ising_lsi::inequalities::{
    check_field_monotonicity, check_fkg, check_pf_chain, check_theorem, FieldSampler,
    ViolationReport,
};
use ising_lsi::mcmc::{estimate_susceptibility, scaling_study, ChainConfig, ScalingRow};
use ising_lsi::report::Csv;
use ising_lsi::{rng, DensityFunction, ExactEnsemble, Lattice};

use model_file::Model;
use output::Output;

/// Residual above which a decomposition check counts as violated.
const DECOMPOSITION_TOL: f64 = 1e-7;
/// Slack below which the quadratic-form criterion counts as violated.
const CRITERION_TOL: f64 = 1e-9;
/// Slack tolerance for ratios and entropies compared with the bound.
const BOUND_TOL: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(ising_lsi::Error),
    Io(String),
    Violation(String),
    NonConvergence(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 1,
            CliError::Violation(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Violation(m) => write!(f, "verification failed: {m}"),
            CliError::NonConvergence(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<ising_lsi::Error> for CliError {
    fn from(e: ising_lsi::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "ising-lsi", version, about = "Log-Sobolev bounds for ferromagnetic Ising models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model file (JSON: kind, params, J, beta, h, alpha).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Inverse temperature; overrides the model file.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Flow parameter alpha > beta; overrides the model file.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Target width of the bound enclosure.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Initial number of intervals of the bound grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Certified enclosure of the bound on the inverse log-Sobolev constant.
    Bound {
        #[arg(long, value_enum, default_value = "exact")]
        chi: ChiKind,
    },
    /// Partition function, magnetisations, susceptibility and correlations.
    Exact,
    /// Spectral gap of the Glauber generator.
    Gap,
    /// Optimised lower estimate of the inverse log-Sobolev constant.
    Lsi {
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 300)]
        iters: usize,
    },
    /// Numerical verification batteries.
    Verify {
        #[command(subcommand)]
        check: VerifyCommand,
    },
    /// Entropy decay along the dynamics against the bound's envelope.
    Decay {
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        #[arg(long, value_enum, default_value = "random")]
        density: FunctionKind,
    },
    /// Closed-form mean-field corollary (uses --beta).
    Corollary {
        #[arg(long = "D", alias = "d")]
        d: f64,
        #[arg(long)]
        beta_c: f64,
        /// Side length L for the finite-volume form.
        #[arg(long)]
        side: Option<f64>,
    },
    /// Heat-bath Monte Carlo.
    Mcmc {
        #[command(subcommand)]
        run: McmcCommand,
    },
    /// Bundle the reports in --out into report.json.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChiKind {
    Exact,
    TwoPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionKind {
    /// sigma_0
    Spin0,
    /// sigma_0 sigma_{n-1}
    Pair,
    /// Independent uniform values on each configuration.
    Random,
    /// exp(sigma_0)
    ExpSpin0,
}

#[derive(Args)]
struct SampleArgs {
    /// Random fields on top of the deterministic extremes.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Flow time (defaults to beta).
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Nonnegative entries of the truncated correlation matrix.
    Fkg(SampleArgs),
    /// Entrywise decrease of correlations in the field.
    Monotone(SampleArgs),
    /// Spectral-norm chain and Perron vector sign.
    Pf(SampleArgs),
    /// Measure decomposition and Gaussian convolution identity.
    Decomposition {
        /// Flow time (defaults to beta / 2).
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_enum, default_value = "spin0")]
        function: FunctionKind,
    },
    /// Entropy decomposition at t = 0.
    EntropyDecomp {
        #[arg(long, value_enum, default_value = "exp-spin0")]
        function: FunctionKind,
    },
    /// Quadratic-form criterion over random (t, h, phi).
    Criterion {
        #[arg(long, default_value_t = 1_000)]
        samples: usize,
    },
    /// Optimised ratios against the bound for random fields.
    Theorem {
        #[arg(long, default_value_t = 10)]
        fields: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
    },
}

#[derive(Args, Clone)]
struct ChainArgs {
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 50)]
    batches: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Grid,
    Torus,
    Cycle,
    Complete,
}

#[derive(Subcommand)]
enum McmcCommand {
    /// Susceptibility of the model at zero field.
    Susceptibility(ChainArgs),
    /// Measured susceptibility and bounds over a lattice family.
    Scaling {
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, value_enum, default_value = "grid")]
        family: Family,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[arg(long = "D", alias = "d", default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        beta_c: f64,
    },
}

struct Context {
    global: Global,
    out: Output,
}

impl Context {
    fn model(&self) -> Result<Model, CliError> {
        let path = self
            .global
            .model
            .as_ref()
            .ok_or_else(|| CliError::Input("--model is required".into()))?;
        model_file::load(path, self.global.beta, self.global.alpha)
    }

    fn bound_settings(&self) -> Result<BoundSettings, CliError> {
        let mut s = BoundSettings::default();
        if let Some(tol) = self.global.tol {
            if !(tol > 0.0) {
                return Err(CliError::Input("--tol must be positive".into()));
            }
            s.tolerance = tol;
        }
        if let Some(grid) = self.global.grid {
            if grid == 0 {
                return Err(CliError::Input("--grid must be positive".into()));
            }
            s.initial_grid = grid;
            s.max_grid = s.max_grid.max(grid);
        }
        Ok(s)
    }

    fn beta(&self) -> Result<f64, CliError> {
        self.global
            .beta
            .ok_or_else(|| CliError::Input("--beta is required".into()))
    }
}

fn function_values(kind: FunctionKind, n: usize, seed: u64) -> Vec<f64> {
    let states = 1usize << n;
    match kind {
        FunctionKind::Spin0 => (0..states).map(|s| spin(s, 0)).collect(),
        FunctionKind::Pair => (0..states).map(|s| spin(s, 0) * spin(s, n - 1)).collect(),
        FunctionKind::ExpSpin0 => (0..states).map(|s| spin(s, 0).exp()).collect(),
        FunctionKind::Random => {
            let mut r = rng::stream(seed, 0);
            (0..states).map(|_| r.random::<f64>()).collect()
        }
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn chi_csv(report: &BoundReport) -> Csv {
    let mut csv = Csv::new(&["t", "chi"]);
    for c in &report.chi {
        csv.row(&[c.t, c.chi]);
    }
    csv
}

fn cmd_bound(ctx: &Context, chi: ChiKind) -> Result<(), CliError> {
    let m = ctx.model()?;
    let settings = ctx.bound_settings()?;
    let beta = m.spec.beta;
    let mut report = match chi {
        ChiKind::Exact => lsi_bound(&m.coupling, beta, &settings)?,
        ChiKind::TwoPoint => {
            let src = TwoPointRadiusChi {
                coupling: m.coupling.clone(),
            };
            let mut r = lsi_bound_with(&src, beta, &settings)?;
            r.normalization = Some(m.coupling.normalization());
            r
        }
    };
    let schedule = CovarianceSchedule::new(&m.coupling, m.spec.alpha, beta)?;
    report = report.with_criterion(&schedule)?;
    ctx.out.csv("chi", &chi_csv(&report))?;
    ctx.out.json("bound", &report)
}

#[derive(Serialize)]
struct ExactReport {
    model: String,
    beta: f64,
    /// Inverse temperature with respect to the raw coupling strength.
    raw_beta: f64,
    normalization: ising_lsi::Normalization,
    field: Vec<f64>,
    log_partition: f64,
    magnetizations: Vec<f64>,
    /// Zero-field susceptibility at `beta`.
    chi: f64,
    chi_site: usize,
    row_sums: Vec<f64>,
    two_point: Option<Vec<Vec<f64>>>,
    truncated_correlation: Option<Vec<Vec<f64>>>,
    two_point_spectral_radius: Option<f64>,
}

fn cmd_exact(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.model()?;
    let beta = m.spec.beta;
    let ens = ExactEnsemble::new(&m.coupling, beta, &m.spec.field)?;
    let rows = susceptibility_rows(&m.coupling, beta)?;
    let (two_point, truncated, radius) = if m.sites() <= MATRIX_CAP {
        let zero = ExactEnsemble::new(&m.coupling, beta, &vec![0.0; m.sites()])?.two_point()?;
        let radius = ising_lsi::linalg::spectral_radius(&zero)?;
        let trunc = ens.truncated_correlation()?.into_inner();
        (Some(matrix_rows(&ens.two_point()?)), Some(matrix_rows(&trunc)), Some(radius))
    } else {
        (None, None, None)
    };
    ctx.out.json(
        "exact",
        &ExactReport {
            model: m.label(),
            beta,
            raw_beta: m.coupling.raw_beta(beta),
            normalization: m.coupling.normalization(),
            field: m.spec.field.clone(),
            log_partition: ens.log_partition(),
            magnetizations: ens.magnetizations(),
            chi: rows.value,
            chi_site: rows.worst_site,
            row_sums: rows.row_sums,
            two_point,
            truncated_correlation: truncated,
            two_point_spectral_radius: radius,
        },
    )
}

#[derive(Serialize)]
struct GapReport {
    model: String,
    beta: f64,
    gap: f64,
    inverse_gap: f64,
    method: ising_lsi::glauber::GapMethod,
    eigenfunction: Vec<f64>,
}

fn cmd_gap(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.model()?;
    let g = build_generator(&m.coupling, m.spec.beta, &m.spec.field)?;
    let sg = spectral_gap_with_vector(&g)?;
    ctx.out.json(
        "gap",
        &GapReport {
            model: m.label(),
            beta: m.spec.beta,
            gap: sg.gap,
            inverse_gap: 1.0 / sg.gap,
            method: sg.method,
            eigenfunction: sg.eigenfunction,
        },
    )
}

#[derive(Serialize)]
struct LsiReport {
    model: String,
    beta: f64,
    estimate: ising_lsi::LsiEstimate,
    bound_upper: f64,
    within_bound: bool,
}

fn cmd_lsi(ctx: &Context, restarts: usize, iters: usize) -> Result<(), CliError> {
    let m = ctx.model()?;
    let g = build_generator(&m.coupling, m.spec.beta, &m.spec.field)?;
    let settings = OptimizerSettings {
        restarts,
        iters,
        seed: ctx.global.seed,
        ..OptimizerSettings::default()
    };
    let estimate = estimate_inverse_lsi(&g, &settings)?;
    let bound_upper = lsi_bound(&m.coupling, m.spec.beta, &ctx.bound_settings()?)?.bound_upper;
    let within_bound = estimate.best_ratio <= bound_upper + BOUND_TOL;
    let mut csv = Csv::new(&["iteration", "ratio"]);
    for &(i, r) in &estimate.trajectory {
        csv.row(&[i as f64, r]);
    }
    ctx.out.csv("lsi_trajectory", &csv)?;
    let ratio = estimate.best_ratio;
    ctx.out.json(
        "lsi",
        &LsiReport {
            model: m.label(),
            beta: m.spec.beta,
            estimate,
            bound_upper,
            within_bound,
        },
    )?;
    if within_bound {
        Ok(())
    } else {
        Err(CliError::Violation(format!("ratio {ratio} exceeds bound {bound_upper}")))
    }
}

fn violation_result(name: &str, report: &ViolationReport) -> Result<(), CliError> {
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "{name}: {} violations, worst slack {:e}",
            report.violations, report.worst_slack
        )))
    }
}

#[derive(Serialize)]
struct DecompositionReport {
    model: String,
    measure: ising_lsi::flow::DecompositionCheck,
    convolution: Option<ising_lsi::flow::ConvolutionCheck>,
    tolerance: f64,
}

fn cmd_verify(ctx: &Context, check: &VerifyCommand) -> Result<(), CliError> {
    let m = ctx.model()?;
    let beta = m.spec.beta;
    let sampler = FieldSampler::default();
    let seed = ctx.global.seed;
    match check {
        VerifyCommand::Fkg(a) | VerifyCommand::Monotone(a) | VerifyCommand::Pf(a) => {
            let t = a.t.unwrap_or(beta);
            let (name, report) = match check {
                VerifyCommand::Fkg(_) => ("fkg", check_fkg(&m.coupling, t, &sampler, a.samples, seed)?),
                VerifyCommand::Monotone(_) => (
                    "monotone",
                    check_field_monotonicity(&m.coupling, t, &sampler, a.samples, seed)?,
                ),
                _ => ("pf", check_pf_chain(&m.coupling, t, &sampler, a.samples, seed)?),
            };
            let report = report.with_model(m.label());
            ctx.out.json(&format!("verify-{name}"), &report)?;
            violation_result(name, &report)
        }
        VerifyCommand::Decomposition { t, function } => {
            let schedule = CovarianceSchedule::new(&m.coupling, m.spec.alpha, beta)?;
            let t = t.unwrap_or(beta / 2.0);
            let f = function_values(*function, m.sites(), seed);
            let config = QuadratureConfig {
                seed,
                ..QuadratureConfig::default()
            };
            let measure = verify_decomposition(&schedule, t, &m.spec.field, &f, &config)?;
            let convolution = if beta > 0.0 {
                Some(verify_convolution(&schedule, 100, &config)?)
            } else {
                None
            };
            let worst = measure
                .residual
                .max(convolution.as_ref().map_or(0.0, |c| c.max_residual));
            ctx.out.json(
                "verify-decomposition",
                &DecompositionReport {
                    model: m.label(),
                    measure,
                    convolution,
                    tolerance: DECOMPOSITION_TOL,
                },
            )?;
            if worst <= DECOMPOSITION_TOL {
                Ok(())
            } else {
                Err(CliError::Violation(format!("decomposition residual {worst:e}")))
            }
        }
        VerifyCommand::EntropyDecomp { function } => {
            let schedule = CovarianceSchedule::new(&m.coupling, m.spec.alpha, beta)?;
            let f = function_values(*function, m.sites(), seed);
            let config = QuadratureConfig {
                seed,
                ..QuadratureConfig::default()
            };
            let check = verify_entropy_decomposition(&schedule, &m.spec.field, &f, &config)?;
            let residual = check.residual;
            ctx.out.json("verify-entropy-decomp", &check)?;
            if residual <= DECOMPOSITION_TOL {
                Ok(())
            } else {
                Err(CliError::Violation(format!("entropy decomposition residual {residual:e}")))
            }
        }
        VerifyCommand::Criterion { samples } => {
            let schedule = CovarianceSchedule::new(&m.coupling, m.spec.alpha, beta)?;
            let batch = criterion_batch(&schedule, *samples, seed)?;
            let slack = batch.min_slack;
            ctx.out.json("verify-criterion", &batch)?;
            if slack >= -CRITERION_TOL {
                Ok(())
            } else {
                Err(CliError::Violation(format!("criterion slack {slack:e}")))
            }
        }
        VerifyCommand::Theorem { fields, restarts } => {
            let optimizer = OptimizerSettings {
                restarts: *restarts,
                seed,
                ..OptimizerSettings::default()
            };
            let mut report = check_theorem(
                &m.coupling,
                &[beta],
                &sampler,
                *fields,
                &optimizer,
                &ctx.bound_settings()?,
                seed,
            )?;
            report.model = m.label();
            ctx.out.json("verify-theorem", &report)?;
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Violation(format!(
                    "theorem: {} violations, worst slack {:e}",
                    report.violations, report.worst_slack
                )))
            }
        }
    }
}

#[derive(Serialize)]
struct DecayReport {
    model: String,
    beta: f64,
    bound_upper: f64,
    initial_entropy: f64,
    points: usize,
    worst_slack: f64,
    violations: usize,
}

fn cmd_decay(ctx: &Context, t_max: f64, points: usize, density: FunctionKind) -> Result<(), CliError> {
    if !(t_max > 0.0) || points < 2 {
        return Err(CliError::Input("need t_max > 0 and at least two points".into()));
    }
    let m = ctx.model()?;
    let beta = m.spec.beta;
    let g = build_generator(&m.coupling, beta, &m.spec.field)?;
    let upper = lsi_bound(&m.coupling, beta, &ctx.bound_settings()?)?.bound_upper;
    let f = DensityFunction::new(function_values(density, m.sites(), ctx.global.seed))?;
    let times: Vec<f64> = (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect();
    let trace = entropy_decay_trace(&g, &f, &times, DecaySettings::default())?;
    let ent0 = trace[0].1;
    let mut csv = Csv::new(&["t", "entropy", "envelope"]);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for &(t, e) in &trace {
        let envelope = (-2.0 * t / upper).exp() * ent0;
        let slack = envelope + 1e-9 - e;
        worst = worst.min(slack);
        violations += (slack < 0.0) as usize;
        csv.row(&[t, e, envelope]);
    }
    ctx.out.csv("decay", &csv)?;
    ctx.out.json(
        "decay",
        &DecayReport {
            model: m.label(),
            beta,
            bound_upper: upper,
            initial_entropy: ent0,
            points,
            worst_slack: worst,
            violations,
        },
    )?;
    if violations == 0 {
        Ok(())
    } else {
        Err(CliError::Violation(format!("{violations} trace points above the envelope")))
    }
}

#[derive(Serialize)]
struct CorollaryReport {
    #[serde(rename = "D")]
    d: f64,
    beta_c: f64,
    beta: f64,
    side: Option<f64>,
    value: f64,
}

fn cmd_corollary(ctx: &Context, d: f64, beta_c: f64, side: Option<f64>) -> Result<(), CliError> {
    let beta = ctx.beta()?;
    let value = meanfield_corollary(d, beta_c, beta, side)?;
    ctx.out.json("corollary", &CorollaryReport { d, beta_c, beta, side, value })
}

fn chain_config(args: &ChainArgs, lattice: Lattice, coupling: f64, beta: f64, seed: u64) -> ChainConfig {
    let n = lattice.sites();
    ChainConfig {
        lattice,
        coupling,
        beta,
        field: vec![0.0; n],
        sweeps: args.sweeps,
        burn_in: args.burn_in,
        thin: args.thin,
        chains: args.chains,
        batches: args.batches,
        seed,
    }
}

#[derive(Serialize)]
struct McmcReport {
    model: String,
    beta: f64,
    estimate: ising_lsi::SusceptibilityEstimate,
    /// Enumerated value, when the lattice is small enough.
    exact: Option<f64>,
}

#[derive(Serialize)]
struct ScalingReport {
    #[serde(rename = "D")]
    d: f64,
    beta_c: f64,
    rows: Vec<ScalingRow>,
}

fn cmd_mcmc(ctx: &Context, run: &McmcCommand) -> Result<(), CliError> {
    let seed = ctx.global.seed;
    match run {
        McmcCommand::Susceptibility(args) => {
            let m = ctx.model()?;
            if m.spec.field.iter().any(|&h| h != 0.0) {
                return Err(CliError::Input("susceptibility needs a zero field".into()));
            }
            let config = chain_config(args, m.spec.lattice.clone(), m.spec.coupling, m.spec.beta, seed);
            let estimate = estimate_susceptibility(&config)?;
            let exact = if m.sites() <= ising_lsi::exact::SCALAR_CAP {
                Some(susceptibility(&m.coupling, m.spec.beta)?)
            } else {
                None
            };
            let flagged = estimate.flagged;
            ctx.out.json(
                "mcmc-susceptibility",
                &McmcReport {
                    model: m.label(),
                    beta: m.spec.beta,
                    estimate,
                    exact,
                },
            )?;
            if flagged {
                Err(CliError::NonConvergence("chains disagree beyond five standard errors".into()))
            } else {
                Ok(())
            }
        }
        McmcCommand::Scaling {
            chain,
            family,
            sizes,
            betas,
            d,
            beta_c,
        } => {
            let family: Vec<Lattice> = sizes
                .iter()
                .map(|&l| match family {
                    Family::Grid => Lattice::grid(l, l),
                    Family::Torus => Lattice::periodic_grid(l, l),
                    Family::Cycle => Lattice::cycle(l),
                    Family::Complete => Lattice::complete(l),
                })
                .collect();
            let template = chain_config(chain, Lattice::path(1), 1.0, 0.0, seed);
            let rows = scaling_study(&family, betas, *d, *beta_c, &template)?;
            let mut csv = Csv::new(&[ScalingRow::CSV_HEADER]);
            for r in &rows {
                csv.raw_row(r.csv_record());
            }
            ctx.out.csv("scaling", &csv)?;
            ctx.out.json(
                "mcmc-scaling",
                &ScalingReport {
                    d: *d,
                    beta_c: *beta_c,
                    rows,
                },
            )
        }
    }
}

fn cmd_report(ctx: &Context) -> Result<(), CliError> {
    let dir = ctx
        .out
        .dir()
        .ok_or_else(|| CliError::Input("report needs --out".into()))?
        .to_path_buf();
    let bundle = output::bundle(&dir)?;
    ctx.out.json("report", &bundle)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let ctx = Context {
        out: Output::new(cli.global.out.clone()),
        global: cli.global,
    };
    match &cli.command {
        Command::Bound { chi } => cmd_bound(&ctx, *chi),
        Command::Exact => cmd_exact(&ctx),
        Command::Gap => cmd_gap(&ctx),
        Command::Lsi { restarts, iters } => cmd_lsi(&ctx, *restarts, *iters),
        Command::Verify { check } => cmd_verify(&ctx, check),
        Command::Decay { t_max, points, density } => cmd_decay(&ctx, *t_max, *points, *density),
        Command::Corollary { d, beta_c, side } => cmd_corollary(&ctx, *d, *beta_c, *side),
        Command::Mcmc { run } => cmd_mcmc(&ctx, run),
        Command::Report => cmd_report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
