use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rsvd::completion::{InitFill, InnerSolver};

#[derive(Debug, Parser)]
#[command(name = "rsvd", version, about = "Regularized SVD factorization and Top-N recommender evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a dense CSV matrix with ALS or the closed form.
    #[command(args_override_self = true)]
    Factorize(FactorizeArgs),
    /// Mask out ratings, complete the matrix, and score Top-N recommendations.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Run `evaluate` over a grid of ranks and regularization weights.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Closed,
    Als,
}

impl From<SolverArg> for InnerSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Closed => InnerSolver::ClosedForm,
            SolverArg::Als => InnerSolver::Als,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// Whitespace-separated `user item rating [timestamp]`, 1-based ids.
    Movielens,
    /// Comma-separated `user,item,rating`.
    Triples,
    /// One user per row, one item per column.
    Grid,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Plain-text `key=value` file; flags on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverArg::Closed)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ALS stopping tolerance.
    #[arg(long, default_value_t = rsvd::RsvdConfig::DEFAULT_TOL, value_parser = positive)]
    pub tol: f64,
    /// ALS sweep budget.
    #[arg(long, default_value_t = rsvd::RsvdConfig::DEFAULT_MAX_ITER, value_parser = at_least_one)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct FactorizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = at_least_one)]
    pub k: usize,
    /// One value, or a comma-separated list giving one output subdirectory each.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, required = true, value_parser = nonnegative)]
    pub lambda: Vec<f64>,
}

/// Dataset, masking and EM settings.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Movielens)]
    pub format: FormatArg,
    /// Users need more than this many ratings to have some masked out.
    #[arg(long, default_value_t = 100)]
    pub mask_t: usize,
    /// Ratings hidden per selected user.
    #[arg(long, default_value_t = 90, value_parser = at_least_one)]
    pub n_mask: usize,
    /// Independent mask-outs with seeds `seed, seed+1, ...`, averaged.
    #[arg(long, default_value_t = 1, value_parser = at_least_one)]
    pub runs: usize,
    #[arg(long, default_value_t = rsvd::completion::CompletionConfig::DEFAULT_EM_MAX_ITER, value_parser = at_least_one)]
    pub em_max_iter: usize,
    #[arg(long, default_value_t = rsvd::completion::CompletionConfig::DEFAULT_EM_TOL, value_parser = positive)]
    pub em_tol: f64,
    /// Initial value of unobserved cells. On binarized data `column-mean` is
    /// the constant 1, which is already an EM fixed point at λ = 0.
    #[arg(long, default_value = "column-implicit", value_parser = parse_fill)]
    pub init_fill: InitFill,
    /// Drop users with fewer ratings before masking.
    #[arg(long)]
    pub min_ratings: Option<usize>,
    /// Drop users with more ratings before masking.
    #[arg(long)]
    pub max_ratings: Option<usize>,
    /// Index base of user and item ids in `triples` files.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub index_base: u8,
    /// Cell value marking an unrated item in `grid` files.
    #[arg(long, default_value_t = rsvd::datasets::CsvLayout::JESTER_SENTINEL)]
    pub sentinel: f64,
    /// Leading columns of `grid` rows to ignore.
    #[arg(long, default_value_t = 0)]
    pub skip_cols: usize,
    /// Drop each user's training items from their ranking candidates.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub exclude_training_items: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = at_least_one)]
    pub k: usize,
    #[arg(long, value_parser = nonnegative)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated ranks.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, required = true, value_parser = at_least_one)]
    pub k: Vec<usize>,
    /// Comma-separated regularization weights.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, required = true, value_parser = nonnegative)]
    pub lambda: Vec<f64>,
}

fn parse_fill(s: &str) -> Result<InitFill, String> {
    s.parse().map_err(|e: rsvd::Error| e.to_string())
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a positive finite number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite nonnegative number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Splices `key=value` lines from the `--config` file into `argv` right after
/// the subcommand, so that later command-line flags override them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(sub) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(argv);
    };
    let injected = read_config(&path)?;
    let mut out = argv[..=sub + 1].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[sub + 2..]);
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().map(|a| a.to_string_lossy());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(|p| PathBuf::from(p.as_ref()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn read_config(path: &Path) -> Result<Vec<OsString>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut args = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected key=value", path.display(), no + 1));
        };
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(format!("{}:{}: config files cannot nest", path.display(), no + 1));
        }
        args.push(OsString::from(format!("--{key}={}", value.trim())));
    }
    Ok(args)
}
