use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zeroinfl::copula::{fit_tlnpn_with, sample_tlnpn, LatentCopulaModel};
use zeroinfl::count_models::Flavor;
use zeroinfl::data::{load_counts_csv, write_counts_csv, Dataset};
use zeroinfl::eval::{wasserstein_1d, wasserstein_pd};
use zeroinfl::mle::{fit_intercept_only, simulate_intercept_only, RegressionFit};
use zeroinfl::par::{set_threads, ExecMode};
use zeroinfl::rng::substream;
use zeroinfl::runner::{run_experiment, Experiment, ExperimentConfig, ReportFormat, RunOptions};

#[derive(Parser)]
#[command(name = "zeroinfl", version, about = "Zero-inflated count models, latent copula fits and simulation benchmarks")]
struct Cli {
    /// Worker threads (0 = all cores; 1 runs sequentially).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Univariate ZINB vs HNB by AIC across zero levels.
    SettingOne(RunArgs),
    /// ZINB vs HNB AIC across hurdle zero probabilities (zero deflation).
    SettingOneDeflation(RunArgs),
    /// TLNPN vs HNB on HNB populations with correlated covariates.
    SettingTwo(RunArgs),
    /// TLNPN vs HNB on latent copula populations built from a count table.
    SettingThree(RunArgs),
    /// Repeated random-split comparison on a count table.
    RealData(RunArgs),
    /// Fit a model to a count table and write it as JSON.
    Fit(FitArgs),
    /// Draw a sample from a fitted model.
    Simulate(SimulateArgs),
    /// Wasserstein distance between two count tables with equal shape.
    Distance(DistanceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults to the built-in grid for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recompute even when an identical completed run exists.
    #[arg(long)]
    force: bool,
    /// Exit successfully even when some cells failed.
    #[arg(long)]
    allow_partial: bool,
    /// Replications (overrides the config).
    #[arg(long)]
    replications: Option<usize>,
    /// Report formats to write.
    #[arg(long, value_enum, default_values_t = [FormatArg::Csv, FormatArg::Json])]
    format: Vec<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModelArg {
    Tlnpn,
    Hnb,
    Zinb,
    Nb,
}

#[derive(Args)]
struct FitArgs {
    /// Count table (CSV with header).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "tlnpn")]
    model: ModelArg,
    /// Where to write the fitted model (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Fitted model written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=2))]
    order: u32,
    /// Also print per-variable 1-D distances.
    #[arg(long)]
    marginal: bool,
}

/// A fitted model as persisted by `fit`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FittedModel {
    Tlnpn { variable_names: Vec<String>, model: LatentCopulaModel },
    Marginal { variable_names: Vec<String>, fits: Vec<RegressionFit> },
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

fn run(experiment: Experiment, args: RunArgs, exec: ExecMode) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::new(experiment),
    };
    if config.experiment != experiment {
        bail!("config is for {}, not {}", config.experiment.name(), experiment.name());
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    config.validate()?;
    let out = args.out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));
    let mut opts = RunOptions::new(&out);
    opts.force = args.force;
    opts.exec = exec;
    opts.formats = args
        .format
        .iter()
        .map(|f| match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        })
        .collect();
    let summary = run_experiment(&config, &opts)?;
    let m = &summary.manifest;
    if summary.skipped {
        println!("{}: up to date (config {}), nothing to do; use --force to rerun", out.display(), &m.config_hash[..12]);
    } else {
        println!("{}: {} cells over {} grid points, {} failed", out.display(), m.cells, m.grid_points, m.failed.len());
    }
    for f in &m.failed {
        eprintln!("failed: {} rep {}: {}", f.point, f.replication, f.error);
    }
    if !m.failed.is_empty() && !args.allow_partial {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs, exec: ExecMode) -> Result<()> {
    refuse_overwrite(&args.out, args.force)?;
    let data = load_counts_csv(&args.input)?;
    let fitted = match args.model {
        ModelArg::Tlnpn => FittedModel::Tlnpn { variable_names: data.variable_names.clone(), model: fit_tlnpn_with(&data.values, exec)? },
        m => {
            let flavor = match m {
                ModelArg::Hnb => Flavor::HNB,
                ModelArg::Zinb => Flavor::ZINB,
                _ => Flavor::NB,
            };
            let fits = (0..data.p())
                .map(|j| {
                    let y: Vec<u64> = data.values.column(j).iter().map(|&v| v as u64).collect();
                    fit_intercept_only(&y, flavor).with_context(|| format!("variable {}", data.variable_names[j]))
                })
                .collect::<Result<Vec<_>>>()?;
            FittedModel::Marginal { variable_names: data.variable_names.clone(), fits }
        }
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&fitted)? + "\n").with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    refuse_overwrite(&args.out, args.force)?;
    let text = std::fs::read_to_string(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let fitted: FittedModel = serde_json::from_str(&text).context("parsing model")?;
    let (names, values) = match fitted {
        FittedModel::Tlnpn { variable_names, model } => (variable_names, sample_tlnpn(&model, args.n, args.seed)?),
        FittedModel::Marginal { variable_names, fits } => {
            let mut m = DMatrix::zeros(args.n, fits.len());
            for (j, f) in fits.iter().enumerate() {
                let draws = simulate_intercept_only(f, args.n, &mut substream(args.seed, &[j as u64]))?;
                for (i, v) in draws.into_iter().enumerate() {
                    m[(i, j)] = v as f64;
                }
            }
            (variable_names, m)
        }
    };
    let ds = Dataset::new(values, names, format!("simulated from {}", args.model.display()))?;
    write_counts_csv(&ds, &args.out)?;
    println!("wrote {} rows to {}", args.n, args.out.display());
    Ok(())
}

fn distance(args: DistanceArgs) -> Result<()> {
    let a = load_counts_csv(&args.a)?;
    let b = load_counts_csv(&args.b)?;
    let d = wasserstein_pd(&a.values, &b.values, args.order)?;
    println!("W{} = {d}", args.order);
    if args.marginal {
        for j in 0..a.p() {
            let x: Vec<f64> = a.values.column(j).iter().copied().collect();
            let y: Vec<f64> = b.values.column(j).iter().copied().collect();
            println!("{}\t{}", a.variable_names[j], wasserstein_1d(&x, &y, args.order)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.threads == 1 { ExecMode::Sequential } else { ExecMode::Parallel };
    if cli.threads > 1 {
        set_threads(cli.threads);
    }
    let res = match cli.command {
        Command::SettingOne(a) => run(Experiment::SettingOne, a, exec),
        Command::SettingOneDeflation(a) => run(Experiment::SettingOneDeflation, a, exec),
        Command::SettingTwo(a) => run(Experiment::SettingTwo, a, exec),
        Command::SettingThree(a) => run(Experiment::SettingThree, a, exec),
        Command::RealData(a) => run(Experiment::RealData, a, exec),
        Command::Fit(a) => fit(a, exec).map(|_| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Distance(a) => distance(a).map(|_| ExitCode::SUCCESS),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
