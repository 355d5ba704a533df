use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod table;

use config::{read_config_file, resolve, RunConfig, SEED_ENV};
use error::Result;

/// Localized conformal prediction intervals, bandwidth tuning and coverage
/// simulations.
#[derive(Debug, Parser)]
#[command(name = "lcp", version)]
struct Cli {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo coverage table for a synthetic generator.
    Simulate(SimulateArgs),
    /// Prediction intervals for the rows of a test file.
    Predict(PredictArgs),
    /// Bandwidth selection on an independent sample.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Nominal level; simulate accepts a comma list.
    #[arg(long)]
    alpha: Option<String>,
    /// RNG seed (falls back to the LCP_SEED environment variable, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when absent or `-`.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// example1a, example1b, example1c, counterexample2, shift, highdim_a, highdim_b
    #[arg(long = "gen", alias = "generator")]
    generator: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma list such as `cb,lcb-box:1,rand-knn:40,lcb-auto-knn`.
    #[arg(long)]
    method: Option<String>,
    /// mean, ols or ridge[:lambda], fitted on the auxiliary sample.
    #[arg(long)]
    learner: Option<String>,
    /// Bandwidth grid for auto-tuned methods.
    #[arg(long)]
    h_grid: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Comma list of feature columns; defaults to every non-reserved column.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    score_col: Option<String>,
    #[arg(long)]
    y_col: Option<String>,
    /// `linear:b0,b1,...`, `zero`, or a learner fitted on `--train`.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    train: Option<String>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    calib: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// A localizer such as `box:0.5`, `knn:40`, or `auto[:kind]`.
    #[arg(long)]
    localizer: Option<String>,
    /// Localizer family, paired with `--h`, when `--localizer` is absent.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Test column holding the interval centre when no predictor is given.
    #[arg(long)]
    pred_col: Option<String>,
    /// Importance-weight column, required in both files when set.
    #[arg(long)]
    weight_col: Option<String>,
    /// Grid for `auto` localizers.
    #[arg(long)]
    h_grid: Option<String>,
    #[arg(long)]
    axis: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    data: Option<String>,
    /// Localizer family to tune (default knn).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    h_grid: Option<String>,
    /// Projection axis: an index, `auto` or `none`.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[command(flatten)]
    columns: DataArgs,
    #[command(flatten)]
    common: Common,
}

type Flags = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn common_flags(c: &Common) -> Flags {
    vec![("alpha", c.alpha.clone()), ("seed", s(&c.seed)), ("out", c.out.clone())]
}

fn data_flags(d: &DataArgs) -> Flags {
    vec![
        ("features", d.features.clone()),
        ("score_col", d.score_col.clone()),
        ("y_col", d.y_col.clone()),
        ("predictor", d.predictor.clone()),
        ("train", d.train.clone()),
    ]
}

fn flags(command: &Command) -> Flags {
    match command {
        Command::Simulate(a) => {
            let mut f = vec![
                ("generator", a.generator.clone()),
                ("n", s(&a.n)),
                ("reps", s(&a.reps)),
                ("method", a.method.clone()),
                ("learner", a.learner.clone()),
                ("h_grid", a.h_grid.clone()),
            ];
            f.extend(common_flags(&a.common));
            f
        }
        Command::Predict(a) => {
            let mut f = vec![
                ("calib", a.calib.clone()),
                ("test", a.test.clone()),
                ("localizer", a.localizer.clone()),
                ("kind", a.kind.clone()),
                ("h", a.h.clone()),
                ("grid_size", s(&a.grid_size)),
                ("pred_col", a.pred_col.clone()),
                ("weight_col", a.weight_col.clone()),
                ("h_grid", a.h_grid.clone()),
                ("axis", a.axis.clone()),
            ];
            f.extend(data_flags(&a.data));
            f.extend(common_flags(&a.common));
            f
        }
        Command::Tune(a) => {
            let mut f = vec![
                ("data", a.data.clone()),
                ("kind", a.kind.clone()),
                ("h_grid", a.h_grid.clone()),
                ("axis", a.axis.clone()),
                ("omega", s(&a.omega)),
                ("bootstrap", s(&a.bootstrap)),
            ];
            f.extend(data_flags(&a.columns));
            f.extend(common_flags(&a.common));
            f
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let cfg: RunConfig = resolve(file, flags(&cli.command), std::env::var(SEED_ENV).ok())?;
    let output = match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg)?,
        Command::Predict(_) => commands::predict(&cfg)?,
        Command::Tune(_) => commands::tune(&cfg)?,
    };
    table::write_output(cfg.out.as_deref(), &output.csv)?;
    for line in &output.messages {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lcp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
