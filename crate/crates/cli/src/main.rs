//! Command-line front end: estimation on CSV matrices, risk-difference
//! reports, minimaxity checks, Monte Carlo risk tables, and convergence
//! sweeps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! numeric error.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use matshrink::estimators::{estimate_a_single, estimate_b_double, EstimatorId, Weights};
use matshrink::matmodel::{
    center_and_whiten, read_matrix_csv, read_sigma_csv, write_matrix_csv, DataMatrix, RidgeConfig,
    RidgeMode, Sigma, Spectrum,
};
use matshrink::rmt::{run_sweep, sweep_to_csv};
use matshrink::simlab::{
    limit_blas_threads, run_experiment, ExperimentConfig, MeanProfile, NoiseKind, ProfileKind,
};
use matshrink::sure::{minimax_estimated, minimax_known, sure_delta, MinimaxStatus};
use matshrink::{Result, ShrinkError};

/// Ridge-type linear shrinkage estimation of a normal mean matrix.
#[derive(Parser)]
#[command(name = "matshrink", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shrink a data matrix toward its row means and write the estimate
    Estimate(EstimateArgs),
    /// Report the unbiased risk-difference estimate for a data matrix
    Sure(SureArgs),
    /// Check minimaxity coverage for given dimensions, ridge, and weights
    MinimaxCheck(MinimaxArgs),
    /// Monte Carlo risk tables over configurable sizes and noise
    Simulate(SimulateArgs),
    /// Convergence sweep of estimated weights toward known-prior weights
    RmtSweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RidgeModeArg {
    /// Fixed ridge level `alpha = c`
    Const,
    /// Data-proportional level `alpha = c * tr W`
    Trace,
}

#[derive(Args)]
struct RidgeFlags {
    /// How the ridge level is tied to the data
    #[arg(long = "ridge-mode", value_enum, default_value_t = RidgeModeArg::Trace)]
    ridge_mode: RidgeModeArg,
    /// Ridge constant; defaults to 1/min(n-1, p) in trace mode, 1 in const mode
    #[arg(long)]
    c: Option<f64>,
}

impl RidgeFlags {
    fn build(&self, q: usize) -> Result<RidgeConfig> {
        let (mode, default_c) = match self.ridge_mode {
            RidgeModeArg::Const => (RidgeMode::Constant, 1.0),
            RidgeModeArg::Trace => (RidgeMode::TraceProportional, 1.0 / q as f64),
        };
        RidgeConfig::new(mode, self.c.unwrap_or(default_c))
            .map_err(|e| ShrinkError::Config(e.to_string()))
    }
}

fn mode_name(mode: RidgeMode) -> &'static str {
    match mode {
        RidgeMode::Constant => "const",
        RidgeMode::TraceProportional => "trace",
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV: p rows (variables) by n columns (observations), no header
    matrix: PathBuf,
    /// Estimator ID: S1, S2, D1, D2, S2plus, D2plus, em, em2, emplus,
    /// em2plus, js, jsplus, gd, identity
    #[arg(long, default_value = "S2plus")]
    estimator: String,
    /// Ridge constant override; the mode is fixed by the estimator ID
    #[arg(long)]
    c: Option<f64>,
    /// Covariance CSV: p x p matrix, or one row/column of diagonal entries
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Output prefix; writes <prefix>.theta.csv and <prefix>.json
    #[arg(long, default_value = "estimate")]
    out: String,
}

#[derive(Args)]
struct SureArgs {
    /// Input CSV: p rows by n columns, no header
    matrix: PathBuf,
    /// Covariance CSV: p x p matrix, or one row/column of diagonal entries
    #[arg(long)]
    sigma: Option<PathBuf>,
    #[command(flatten)]
    ridge: RidgeFlags,
    /// Evaluate this fixed spectral weight instead of the estimated one
    #[arg(long, requires = "b")]
    a: Option<f64>,
    /// Evaluate this fixed mean-shrinkage weight instead of the estimated one
    #[arg(long, requires = "a")]
    b: Option<f64>,
    /// Optional JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MinimaxArgs {
    /// Number of observations
    #[arg(long)]
    n: usize,
    /// Number of variables
    #[arg(long)]
    p: usize,
    #[command(flatten)]
    ridge: RidgeFlags,
    /// Check the two-weight estimated family instead of the single-weight one
    #[arg(long, conflicts_with_all = ["a", "b"])]
    double: bool,
    /// Check these fixed weights against the known sufficient bounds
    #[arg(long, requires = "b")]
    a: Option<f64>,
    /// Fixed mean-shrinkage weight, together with --a
    #[arg(long, requires = "a")]
    b: Option<f64>,
    /// Optional JSON verdict path (otherwise printed)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config JSON; omitted = the built-in seven-size table setup
    config: Option<PathBuf>,
    /// Override the replication count
    #[arg(long)]
    reps: Option<usize>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these estimator IDs (repeatable)
    #[arg(long = "estimator")]
    estimators: Vec<String>,
    /// Worker threads; results are identical for any worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Output prefix; writes <prefix>.csv and <prefix>.txt
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Size pair as NxP, repeatable; default 200x100 400x200 800x400
    #[arg(long = "size", value_parser = parse_size)]
    sizes: Vec<(usize, usize)>,
    /// Trace-proportional ridge constant; default 1/min(n-1, p) per size
    #[arg(long)]
    c: Option<f64>,
    /// Lower end of the prior eigenvalue range (at least 1)
    #[arg(long, default_value_t = 1.0)]
    prior_lo: f64,
    /// Upper end of the prior eigenvalue range
    #[arg(long, default_value_t = 3.0)]
    prior_hi: f64,
    /// Independent trials per size
    #[arg(long, default_value_t = 20)]
    reps: u64,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; results are identical for any worker count
    #[arg(long)]
    workers: Option<usize>,
    /// CSV output path; omitted = stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (n, p) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxP, got {s:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad n in {s:?}: {e}"))?;
    let p = p.trim().parse().map_err(|e| format!("bad p in {s:?}: {e}"))?;
    Ok((n, p))
}

fn main() {
    limit_blas_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            ShrinkError::Config(_) => 1,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sure(a) => cmd_sure(a),
        Command::MinimaxCheck(a) => cmd_minimax(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RmtSweep(a) => cmd_sweep(a),
    }
}

/// Run `f` on a dedicated pool when a worker count is given. All library
/// entry points order their reductions deterministically, so the result
/// does not depend on the pool size.
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(ShrinkError::Config("--workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| ShrinkError::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn load_data(matrix: &PathBuf, sigma: &Option<PathBuf>) -> Result<DataMatrix> {
    let x = read_matrix_csv(matrix)?;
    let sigma = match sigma {
        Some(path) => read_sigma_csv(path, x.dim().0)?,
        None => Sigma::Identity,
    };
    DataMatrix::new(x, sigma)
}

#[derive(Serialize)]
struct WeightsJson {
    a: f64,
    b: f64,
}

#[derive(Serialize)]
struct EstimateSidecar {
    estimator: String,
    n: usize,
    p: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<WeightsJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_hat: Option<f64>,
    /// Multipliers applied per singular value of the centered data.
    factors: Vec<f64>,
    /// Estimated risk change versus the raw matrix; negative = improvement.
    #[serde(skip_serializing_if = "Option::is_none")]
    sure_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn instability_warning(id: EstimatorId, spec: &Spectrum) -> Option<String> {
    let em_family = matches!(
        id,
        EstimatorId::Em | EstimatorId::Em2 | EstimatorId::Emplus | EstimatorId::Em2plus
    );
    (em_family && spec.a0 < 2.0).then(|| {
        format!(
            "|n - p - 1| = {} < 2: this estimator scales by 1/l_i and is unstable \
             when the smallest sample eigenvalue is near zero",
            spec.a0
        )
    })
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let id: EstimatorId = args.estimator.parse()?;
    if let Some(c) = args.c {
        if !c.is_finite() || c <= 0.0 {
            return Err(ShrinkError::Config(format!(
                "--c must be finite and positive, got {c}"
            )));
        }
    }
    let data = load_data(&args.matrix, &args.sigma)?;
    let spec = center_and_whiten(&data)?;
    let report = id.apply(&spec, args.c)?;

    let theta_path = PathBuf::from(format!("{}.theta.csv", args.out));
    let json_path = PathBuf::from(format!("{}.json", args.out));
    write_matrix_csv(&theta_path, &report.theta_hat.view())?;
    let sidecar = EstimateSidecar {
        estimator: report.estimator_id.clone(),
        n: spec.n,
        p: spec.p,
        weights: report.weights.map(|w| WeightsJson { a: w.a, b: w.b }),
        alpha_hat: report.alpha_hat,
        factors: report.factors.to_vec(),
        sure_delta: report.sure_delta,
        warning: instability_warning(id, &spec),
    };
    fs::write(&json_path, pretty_json(&sidecar))?;
    if let Some(w) = &sidecar.warning {
        eprintln!("warning: {w}");
    }
    println!("wrote {} and {}", theta_path.display(), json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct SureReport {
    n: usize,
    p: usize,
    ridge_mode: &'static str,
    c: f64,
    alpha_hat: f64,
    weights_origin: &'static str,
    a: f64,
    b: f64,
    /// Negative = the shrink is estimated to improve on the raw matrix.
    sure_delta: f64,
}

fn cmd_sure(args: SureArgs) -> Result<()> {
    let data = load_data(&args.matrix, &args.sigma)?;
    let spec = center_and_whiten(&data)?;
    let ridge = args.ridge.build(spec.m)?;
    let (w, origin) = match (args.a, args.b) {
        (Some(a), Some(b)) => (Weights::new(a, b), "fixed"),
        _ => {
            let a = estimate_a_single(&spec, &ridge)?;
            let b = estimate_b_double(&spec, &ridge, a)?;
            (Weights::new(a, b), "estimated")
        }
    };
    let delta = sure_delta(&spec, &ridge, w)?;
    let report = SureReport {
        n: spec.n,
        p: spec.p,
        ridge_mode: mode_name(ridge.mode),
        c: ridge.c,
        alpha_hat: ridge.alpha_hat(spec.tr_w),
        weights_origin: origin,
        a: w.a,
        b: w.b,
        sure_delta: delta,
    };
    println!("n = {}, p = {}", report.n, report.p);
    println!(
        "ridge: {} (c = {}), alpha-hat = {:.6}",
        report.ridge_mode, report.c, report.alpha_hat
    );
    println!("weights ({origin}): a = {:.6}, b = {:.6}", w.a, w.b);
    println!("risk-difference estimate: {delta:.6}");
    println!("negative values estimate an improvement over the unshrunk matrix");
    if let Some(out) = &args.out {
        fs::write(out, pretty_json(&report))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_minimax(args: MinimaxArgs) -> Result<()> {
    if args.n < 2 || args.p < 1 {
        return Err(ShrinkError::Config(format!(
            "need n >= 2 and p >= 1, got n = {}, p = {}",
            args.n, args.p
        )));
    }
    let q = args.p.min(args.n - 1);
    let ridge = args.ridge.build(q)?;
    let verdict = match (args.a, args.b) {
        (Some(a), Some(b)) => minimax_known(args.n, args.p, &ridge, Weights::new(a, b)),
        _ => minimax_estimated(args.n, args.p, &ridge, args.double),
    };
    let status = match verdict.status {
        MinimaxStatus::Minimax => "minimax",
        MinimaxStatus::NotCovered => "not-covered",
        MinimaxStatus::ViolatesKnownBound => "violates-known-bound",
    };
    println!("clause: {}", verdict.condition_id);
    match verdict.margin {
        Some(m) => println!("margin: {m:.6}"),
        None => println!("margin: n/a"),
    }
    println!("verdict: {status}");
    let json = pretty_json(&verdict);
    match &args.out {
        Some(out) => {
            fs::write(out, &json)?;
            println!("wrote {}", out.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn default_experiment() -> ExperimentConfig {
    ExperimentConfig {
        sizes: vec![
            (100, 10),
            (100, 30),
            (100, 80),
            (101, 100),
            (10, 100),
            (30, 100),
            (80, 100),
        ],
        profile: MeanProfile::new(ProfileKind::LinearRamp5, -1.0),
        noise: NoiseKind::Gaussian,
        reps: 1000,
        seed: 2024,
        estimators: EstimatorId::TABLE_SIX.to_vec(),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| ShrinkError::Config(format!("config {}: {e}", path.display())))?
        }
        None => default_experiment(),
    };
    if let Some(reps) = args.reps {
        cfg.reps = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.estimators.is_empty() {
        cfg.estimators = args
            .estimators
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<_>>>()?;
    }
    let started = Instant::now();
    let table = with_workers(args.workers, || run_experiment(&cfg))??;
    let elapsed = started.elapsed().as_secs_f64();
    print!("{}", table.render_text());
    println!(
        "{} replications ({} sizes x {} reps) in {elapsed:.1} s",
        cfg.sizes.len() * cfg.reps,
        cfg.sizes.len(),
        cfg.reps
    );
    if let Some(prefix) = &args.out {
        let csv_path = PathBuf::from(format!("{prefix}.csv"));
        let txt_path = PathBuf::from(format!("{prefix}.txt"));
        table.write_csv(&csv_path)?;
        fs::write(&txt_path, table.render_text())?;
        println!("wrote {} and {}", csv_path.display(), txt_path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let sizes = if args.sizes.is_empty() {
        vec![(200, 100), (400, 200), (800, 400)]
    } else {
        args.sizes.clone()
    };
    let records = with_workers(args.workers, || {
        run_sweep(
            &sizes,
            args.prior_lo,
            args.prior_hi,
            args.c,
            args.reps,
            args.seed,
        )
    })??;
    let csv = sweep_to_csv(&records);
    match &args.out {
        Some(path) => {
            fs::write(path, &csv)?;
            println!("wrote {} ({} records)", path.display(), records.len());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
