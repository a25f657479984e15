//! Command-line front end: simulate a run, sweep a privacy grid, evaluate
//! the closed-form bounds, run the Monte-Carlo validators, or fit the
//! one-shot estimator.
//!
//! Exit codes: 0 success, 1 runtime/validation failure, 2 configuration
//! error, 3 data error, 4 accounting violation.

mod config;
mod csv_io;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use modfl::accounting::{clip_features, scale_features, Accountant, ClipMode};
use modfl::bounds::{
    convergence_bound, crb_conditional, crb_phase_averaged, gradient_variance, modulation_curvature,
    uniform_variance_bound, BoundConstants, ReconstructionContext, VarianceInputs,
};
use modfl::error::Error as LibError;
use modfl::estimators::{least_squares_objective, one_shot_estimate, r_squared};
use modfl::model::{Dataset, OrthonormalSet};
use modfl::modulation::lipschitz_constant;
use modfl::protocol::{simulate_client_payloads, FederatedRun};
use modfl::report::vector_hash;
use modfl::rng::{Purpose, RngStream};
use modfl::simulator::{
    crossover_report, generate_synthetic, prepare_splits, run_sweep, DataSplits, LedgerSummary, Method,
};
use modfl::validate::run_standard_validators;

use config::{
    BoundsConfig, DataSource, OneshotConfig, PreprocessSpec, SimulateConfig, SplitSpec, SweepFileConfig,
    ValidateConfig,
};
use output::{write_plot_data, ResultsWriter};

#[derive(Parser)]
#[command(name = "modfl", version, about = "Differentially private federated linear regression simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $MODFL_OUT_DIR, then ./modfl-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the CSV dataset path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the CSV target column.
    #[arg(long)]
    target: Option<String>,
    /// Worker threads for sweep cells (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the iterative protocol for the configured number of rounds.
    Simulate(CommonArgs),
    /// Sweep the privacy grid for the configured methods.
    Sweep(CommonArgs),
    /// Evaluate the closed-form variance, convergence, and reconstruction bounds.
    Bounds(CommonArgs),
    /// Run the Monte-Carlo validators.
    Validate(CommonArgs),
    /// Fit the one-shot estimator from a single private release.
    Oneshot(CommonArgs),
}

/// A failure carrying its process exit code.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn runtime(err: LibError) -> Self {
        match err {
            LibError::BudgetExceeded { .. } => Self { code: 4, message: err.to_string() },
            other => Self { code: 1, message: other.to_string() },
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Validate(args) => cmd_validate(&args),
        Command::Oneshot(args) => cmd_oneshot(&args),
    };
    if let Err(failure) = result {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("MODFL_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("modfl-out"))
}

fn resolve_data(source: &DataSource, args: &CommonArgs, seed: u64) -> Result<Dataset, Failure> {
    match source {
        DataSource::Synthetic { clients, dim, beta_norm, noise_sd, conditioning } => {
            let task = generate_synthetic(*clients, *dim, *beta_norm, *noise_sd, *conditioning, seed)
                .map_err(|e| Failure::config(e.to_string()))?;
            Ok(task.data)
        }
        DataSource::Csv { path, target } => {
            let path = args.data.as_deref().unwrap_or(path);
            let target = args.target.as_deref().unwrap_or(target);
            csv_io::load_csv(path, target)
        }
    }
}

fn preprocess_whole(data: &Dataset, spec: &PreprocessSpec) -> Result<Dataset, Failure> {
    let standardized = if spec.standardize {
        data.standardize().map_err(|e| Failure::data(e.to_string()))?
    } else {
        data.clone()
    };
    clip_features(&standardized, spec.clip).map_err(|e| Failure::data(e.to_string()))
}

fn build_splits(data: &Dataset, split: SplitSpec, spec: &PreprocessSpec, seed: u64) -> Result<DataSplits, Failure> {
    if spec.standardize {
        prepare_splits(data, split.fractions(), seed, spec.clip).map_err(|e| Failure::data(e.to_string()))
    } else {
        let (train_raw, val, test) =
            data.split(split.fractions(), seed).map_err(|e| Failure::data(e.to_string()))?;
        match spec.clip {
            ClipMode::None => Ok(DataSplits { train: train_raw, val, test }),
            ClipMode::PerRow => Ok(DataSplits {
                train: clip_features(&train_raw, ClipMode::PerRow).map_err(|e| Failure::data(e.to_string()))?,
                val,
                test,
            }),
            ClipMode::GlobalMaxNorm => {
                let train =
                    clip_features(&train_raw, ClipMode::GlobalMaxNorm).map_err(|e| Failure::data(e.to_string()))?;
                let s = train.clip_scale.unwrap_or(1.0);
                Ok(DataSplits {
                    train,
                    val: scale_features(&val, s).map_err(|e| Failure::data(e.to_string()))?,
                    test: scale_features(&test, s).map_err(|e| Failure::data(e.to_string()))?,
                })
            }
        }
    }
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), Failure> {
    let cfg: SimulateConfig = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let params = cfg.protocol.to_params(cfg.rounds).map_err(|e| Failure::config(e.to_string()))?;

    let data = resolve_data(&cfg.data, args, seed)?;
    let (train, test) = match cfg.split {
        Some(split) => {
            let splits = build_splits(&data, split, &cfg.preprocess, seed)?;
            (splits.train, Some(splits.test))
        }
        None => (preprocess_whole(&data, &cfg.preprocess)?, None),
    };

    let sensitivity = lipschitz_constant(&params);
    let budget = cfg.budget.calibrate(cfg.rounds, sensitivity).map_err(|e| Failure::config(e.to_string()))?;
    let accountant = match cfg.budget.declared_eps() {
        Some(eps) => Accountant::with_declared_eps(cfg.budget.delta(), eps),
        None => Accountant::new(cfg.budget.delta()),
    };

    let mut writer = ResultsWriter::new(&out_dir(args))?;
    writer.push(
        "run_meta",
        json!({
            "subcommand": "simulate",
            "seed": seed,
            "rounds": cfg.rounds,
            "clients": train.n_clients(),
            "dim": train.dim(),
            "sensitivity": sensitivity,
            "sigma_dp": budget.sigma_dp,
            "declared_eps": cfg.budget.declared_eps(),
            "delta": cfg.budget.delta(),
        }),
    )?;

    let mut run = FederatedRun::new(&train, params, budget, RngStream::new(seed))
        .map_err(|e| Failure::config(e.to_string()))?
        .with_accountant(accountant);
    for _ in 0..cfg.rounds {
        run.step_round().map_err(Failure::runtime)?;
        let record = run.records.last().expect("round just recorded");
        writer.push(
            "round",
            json!({
                "round": record.round,
                "step_size": record.step_size,
                "grad_norm": record.grad_norm,
                "beta_hash": vector_hash(&record.beta),
                "rho_spent": record.rho_spent,
                "rho_cumulative": run.accountant().total_rho(),
                "eps_converted": run.accountant().converted_eps(),
            }),
        )?;
    }

    let test_r2 = match &test {
        Some(t) => Some(r_squared(&run.state.beta, t).map_err(Failure::runtime)?),
        None => None,
    };
    let final_beta = run.state.beta.clone();
    writer.push(
        "final",
        json!({
            "beta": final_beta.as_slice(),
            "beta_hash": vector_hash(&final_beta),
            "train_objective": least_squares_objective(&final_beta, &train),
            "test_r2": test_r2,
            "ledger": LedgerSummary::from_accountant(run.accountant()),
        }),
    )?;
    let path = writer.finish()?;
    println!(
        "simulate: {} rounds on {} clients (dim {}); final gradient norm {:.6}; {}results: {}",
        cfg.rounds,
        train.n_clients(),
        train.dim(),
        run.records.last().map_or(f64::NAN, |r| r.grad_norm),
        test_r2.map_or(String::new(), |r| format!("test R^2 {r:.4}; ")),
        path.display()
    );
    Ok(())
}

fn cmd_oneshot(args: &CommonArgs) -> Result<(), Failure> {
    let cfg: OneshotConfig = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let params = cfg.protocol.to_params(1).map_err(|e| Failure::config(e.to_string()))?;
    if cfg.ridge_gamma < 0.0 {
        return Err(Failure::config(format!("ridge_gamma must be >= 0, got {}", cfg.ridge_gamma)));
    }

    let data = resolve_data(&cfg.data, args, seed)?;
    let (train, test) = match cfg.split {
        Some(split) => {
            let splits = build_splits(&data, split, &cfg.preprocess, seed)?;
            (splits.train, Some(splits.test))
        }
        None => (preprocess_whole(&data, &cfg.preprocess)?, None),
    };

    let sensitivity = lipschitz_constant(&params);
    let budget = cfg.budget.calibrate(1, sensitivity).map_err(|e| Failure::config(e.to_string()))?;
    let mut accountant = match cfg.budget.declared_eps() {
        Some(eps) => Accountant::with_declared_eps(cfg.budget.delta(), eps),
        None => Accountant::new(cfg.budget.delta()),
    };

    let streams = RngStream::new(seed);
    let mut dir_rng = streams.derive(Purpose::Direction, 0, 0);
    let set = OrthonormalSet::generate(train.dim(), params.vectors, None, &mut dir_rng)
        .map_err(|e| Failure::config(e.to_string()))?;
    let payloads = simulate_client_payloads(&train, &set, &params, budget.sigma_dp, &streams, 0)
        .map_err(Failure::runtime)?;
    accountant.record(budget.rho_per_round);
    accountant.check().map_err(Failure::runtime)?;

    let estimate =
        one_shot_estimate(&payloads, &set, &params, budget.sigma_dp, cfg.ridge_gamma).map_err(Failure::runtime)?;
    let test_r2 = match &test {
        Some(t) => Some(r_squared(&estimate.beta_hat, t).map_err(Failure::runtime)?),
        None => None,
    };

    let mut writer = ResultsWriter::new(&out_dir(args))?;
    writer.push(
        "run_meta",
        json!({
            "subcommand": "oneshot",
            "seed": seed,
            "clients": train.n_clients(),
            "dim": train.dim(),
            "sensitivity": sensitivity,
            "sigma_dp": budget.sigma_dp,
            "declared_eps": cfg.budget.declared_eps(),
            "delta": cfg.budget.delta(),
        }),
    )?;
    writer.push(
        "oneshot",
        json!({
            "beta_hat": estimate.beta_hat.as_slice(),
            "beta_hash": vector_hash(&estimate.beta_hat),
            "ridge_gamma": estimate.ridge_gamma,
            "used_least_squares": estimate.used_least_squares,
            "underdetermined": estimate.underdetermined,
            "test_r2": test_r2,
            "ledger": LedgerSummary::from_accountant(&accountant),
        }),
    )?;
    let path = writer.finish()?;
    println!(
        "oneshot: {} clients (dim {}); ridge {}; {}results: {}",
        train.n_clients(),
        train.dim(),
        estimate.ridge_gamma,
        test_r2.map_or(String::new(), |r| format!("test R^2 {r:.4}; ")),
        path.display()
    );
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), Failure> {
    let cfg: SweepFileConfig = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let sweep_cfg = cfg.sweep.clone().into_config();
    sweep_cfg.validate().map_err(|e| Failure::config(e.to_string()))?;

    let data = resolve_data(&cfg.data, args, seed)?;
    let splits = build_splits(&data, cfg.split, &cfg.preprocess, seed)?;

    let result = match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Failure::config(format!("cannot build worker pool: {e}")))?;
            pool.install(|| run_sweep(&sweep_cfg, &splits))
        }
        None => run_sweep(&sweep_cfg, &splits),
    }
    .map_err(Failure::runtime)?;

    let dir = out_dir(args);
    let mut writer = ResultsWriter::new(&dir)?;
    writer.push(
        "run_meta",
        json!({
            "subcommand": "sweep",
            "seed": seed,
            "clients": splits.train.n_clients(),
            "dim": splits.train.dim(),
            "eps_grid": sweep_cfg.eps_grid,
            "rounds": sweep_cfg.rounds,
            "methods": sweep_cfg.methods,
            "replicates": sweep_cfg.seeds,
        }),
    )?;
    for row in &result.rows {
        writer.push("sweep_row", row)?;
    }
    writer.push("sweep_summary", json!({ "ols_r2": result.ols_r2, "selected": result.selected }))?;
    let both_modulated = [Method::ModulatedIterative, Method::ModulatedOneshot]
        .iter()
        .all(|m| sweep_cfg.methods.contains(m));
    if both_modulated {
        let cross = crossover_report(&result).map_err(Failure::runtime)?;
        writer.push("crossover", &cross)?;
        println!("crossover: {}", cross.note);
    }
    let path = writer.finish()?;
    let plots = write_plot_data(&dir, &result)?;

    println!("sweep: OLS reference R^2 {:.4}", result.ols_r2);
    for (method, hyper) in &result.selected {
        println!("  {}: selected {:?}", method.name(), hyper);
    }
    println!(
        "  {} rows in {:.1}s; results: {}; plots: {}",
        result.rows.len(),
        result.wall_time.as_secs_f64(),
        path.display(),
        plots.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn cmd_bounds(args: &CommonArgs) -> Result<(), Failure> {
    let cfg: BoundsConfig = load_config(&args.config)?;
    let inputs = VarianceInputs {
        residual_ms: cfg.variance.residual_ms,
        beta_sigma_rx: cfg.variance.beta_sigma_rx,
        trace_sigma_x: cfg.variance.trace_sigma_x,
        beta_norm_sq: cfg.variance.beta_norm_sq,
        clients: cfg.clients,
        dim: cfg.dim,
        alpha: cfg.alpha,
        lambda: cfg.lambda,
        sigma_dp: cfg.sigma_dp,
    };
    let variance = gradient_variance(&inputs);

    let consts = BoundConstants {
        beta_bound: cfg.envelope.beta_bound,
        feature_bound: cfg.envelope.feature_bound,
        response_bound: cfg.envelope.response_bound,
    };
    let params = modfl::model::ProtocolParams::new(
        cfg.alpha,
        cfg.lambda,
        cfg.omega,
        1,
        f64::INFINITY,
        modfl::model::StepRule::Fixed(1.0),
        1,
    )
    .map_err(|e| Failure::config(e.to_string()))?;
    let uniform = uniform_variance_bound(&consts, &params, cfg.sigma_dp, cfg.clients, cfg.dim)
        .map_err(|e| Failure::config(e.to_string()))?;
    let convergence = convergence_bound(
        cfg.convergence.l_dp,
        cfg.convergence.beta0_dist_sq,
        cfg.convergence.rounds,
        uniform,
        cfg.clients,
    )
    .map_err(|e| Failure::config(e.to_string()))?;

    // Scalar reconstruction bounds depend only on theta and the model norm;
    // evaluate them on a canonical axis-aligned configuration.
    let mut beta_star = nalgebra::DVector::zeros(cfg.dim);
    beta_star[0] = cfg.reconstruction.beta_star_norm;
    let ctx = ReconstructionContext {
        alpha: cfg.alpha,
        lambda: cfg.lambda,
        omega: cfg.omega,
        sigma_dp: cfg.sigma_dp,
        sigma_y: cfg.reconstruction.sigma_y,
        beta_star,
    };
    let x = nalgebra::DVector::zeros(cfg.dim);
    let mut v = nalgebra::DVector::zeros(cfg.dim);
    v[0] = 1.0;
    let c1 = modulation_curvature(cfg.reconstruction.theta, cfg.alpha, cfg.lambda, cfg.omega);
    let crb_cond =
        crb_conditional(&ctx, &x, &v, cfg.reconstruction.theta).map_err(|e| Failure::config(e.to_string()))?;
    let crb_avg = crb_phase_averaged(&ctx, cfg.dim).map_err(|e| Failure::config(e.to_string()))?;

    let mut rows: Vec<(String, f64)> = vec![
        ("gradient_variance".into(), variance),
        ("uniform_variance_bound".into(), uniform),
        ("convergence_bound".into(), convergence),
        ("modulation_curvature_c1".into(), c1),
        ("crb_conditional".into(), crb_cond),
        ("crb_phase_averaged".into(), crb_avg),
    ];
    for &alpha_t1 in &cfg.tradeoff.alphas {
        let value = modfl::accounting::tradeoff_curve(cfg.tradeoff.eps, cfg.tradeoff.delta, alpha_t1)
            .map_err(|e| Failure::config(e.to_string()))?;
        rows.push((format!("tradeoff_type2_at_{alpha_t1}"), value));
    }

    let mut writer = ResultsWriter::new(&out_dir(args))?;
    println!("{:<32} {:>16}", "bound", "value");
    for (name, value) in &rows {
        println!("{name:<32} {value:>16.8e}");
        writer.push("bound", json!({ "name": name, "value": value }))?;
    }
    let path = writer.finish()?;
    println!("results: {}", path.display());
    Ok(())
}

fn cmd_validate(args: &CommonArgs) -> Result<(), Failure> {
    let cfg: ValidateConfig = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    if cfg.replicates == 0 {
        return Err(Failure::config("replicates must be at least 1"));
    }

    let reports = run_standard_validators(seed, cfg.replicates).map_err(Failure::runtime)?;
    let selected: Vec<_> = match &cfg.only {
        Some(names) => reports
            .into_iter()
            .filter(|r| names.iter().any(|n| r.name.starts_with(n.as_str())))
            .collect(),
        None => reports,
    };
    if selected.is_empty() {
        return Err(Failure::config("no validator matches the requested names"));
    }

    let mut writer = ResultsWriter::new(&out_dir(args))?;
    let mut failures = 0;
    for report in &selected {
        println!("{report}");
        writer.push("validation", report)?;
        if !report.pass {
            failures += 1;
        }
    }
    let path = writer.finish()?;
    println!("{} validators, {} failed; results: {}", selected.len(), failures, path.display());
    if failures > 0 {
        return Err(Failure::other(format!("{failures} validator(s) failed")));
    }
    Ok(())
}
