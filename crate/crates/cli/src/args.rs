//! Command-line grammar. Every long flag doubles as a config key.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpedge::ensemble::EntryDist;
use mpedge::extremal::Mode;

#[derive(Debug, Parser)]
#[command(name = "mpedge", version, about = "Edge of deformed Marchenko-Pastur laws and extremal eigenvalue statistics")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file (or an earlier output file) supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for Monte-Carlo trials [default: logical cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the edge record {d, d_plus, tau, L_plus, regime, C_d}.
    Edge(EdgeArgs),
    /// Write the limiting density as `E,rho` CSV.
    Density(DensityArgs),
    /// Evaluate the good-configuration diagnostic on sampled spectra.
    Omega(OmegaArgs),
    /// Monte-Carlo sampling of the top eigenvalues.
    Simulate(SimulateArgs),
    /// Goodness of fit of simulated eigenvalues against the limit laws.
    Extremal(ExtremalArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Edge(_) => "edge",
            Command::Density(_) => "density",
            Command::Omega(_) => "omega",
            Command::Simulate(_) => "simulate",
            Command::Extremal(_) => "extremal",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// `f1`, `f2`, or a file with `beta`, `l`, `profile`, `quad_order` keys.
    #[arg(long, conflicts_with_all = ["beta", "l", "profile"])]
    pub measure: Option<String>,

    /// Edge exponent of a custom measure.
    #[arg(long, requires_all = ["l", "profile"], allow_negative_numbers = true)]
    pub beta: Option<f64>,

    /// Left end of the support of a custom measure.
    #[arg(long = "l")]
    pub l: Option<f64>,

    /// `const`, `exp`, or `poly:c0,c1,...`.
    #[arg(long)]
    pub profile: Option<String>,

    /// Quadrature nodes.
    #[arg(long)]
    pub quad_order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DimArgs {
    /// Population dimension.
    #[arg(long = "M")]
    pub m: usize,

    /// Sample count.
    #[arg(long = "N", conflicts_with = "d")]
    pub n: Option<usize>,

    /// Ratio N/M; N is rounded to the nearest integer.
    #[arg(long = "d")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct EdgeArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,

    #[arg(long = "d")]
    pub d: f64,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct DensityArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,

    #[arg(long = "d")]
    pub d: f64,

    /// Lower energy [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub emin: Option<f64>,

    /// Upper energy [default: 1.1 L_plus].
    #[arg(long)]
    pub emax: Option<f64>,

    #[arg(long, default_value_t = 200)]
    pub points: usize,

    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct OmegaArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,

    #[command(flatten)]
    pub dims: DimArgs,

    /// First seed; required unless --sigma-file is given.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of consecutive seeds to evaluate.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,

    /// `auto` (b/8) or a value.
    #[arg(long, default_value = "auto")]
    pub phi: String,

    #[arg(long)]
    pub n0: Option<usize>,

    #[arg(long)]
    pub c_threshold: Option<f64>,

    /// Population eigenvalues, one per line, instead of sampling.
    #[arg(long, conflicts_with = "seeds")]
    pub sigma_file: Option<PathBuf>,

    /// Per-seed CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,

    #[command(flatten)]
    pub dims: DimArgs,

    #[arg(long, default_value_t = 200)]
    pub trials: usize,

    #[arg(long, default_value_t = EntryDist::Gaussian)]
    pub entry_dist: EntryDist,

    #[arg(long)]
    pub seed: u64,

    #[arg(long, default_value = "trials.csv")]
    pub out: PathBuf,

    /// `bins=200[,lo=..,hi=..]`; pooled eigenvalue histogram.
    #[arg(long)]
    pub hist: Option<String>,

    /// Histogram output [default: hist.csv next to --out].
    #[arg(long)]
    pub hist_out: Option<PathBuf>,

    #[arg(long, default_value_t = 3)]
    pub top_k: usize,

    /// Reuse trial 0's population for every trial.
    #[arg(long)]
    pub freeze_sigma: bool,

    /// Population O D Oᵀ with Haar O.
    #[arg(long)]
    pub rotated: bool,

    /// Record the local-law deviation of every trial.
    #[arg(long)]
    pub local_law: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Centering {
    /// Deterministic L_plus.
    Fixed,
    /// Per-trial empirical edge from the `L_plus_pred` column.
    Empirical,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct ExtremalArgs {
    #[arg(long)]
    pub mode: Mode,

    /// Trial table written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,

    #[command(flatten)]
    pub measure: MeasureArgs,

    /// Ratio N/M [default: from the input header].
    #[arg(long = "d")]
    pub d: Option<f64>,

    /// Population dimension [default: from the input header].
    #[arg(long = "M")]
    pub m: Option<usize>,

    /// Order statistics `a..b` or a single index.
    #[arg(long, default_value = "1")]
    pub gamma: String,

    #[arg(long, value_enum, default_value_t = Centering::Fixed)]
    pub centering: Centering,

    #[arg(long, default_value_t = 0.20)]
    pub ks_max: f64,

    /// Two-sample KS bound between rescaled λ₁ and the rescaled σ₁.
    #[arg(long, default_value_t = 0.10)]
    pub coupling_max: f64,

    /// Location error bound in units of M^{-1/2}.
    #[arg(long, default_value_t = 5.0)]
    pub loc_factor: f64,

    /// Bound on |mean| in standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub mean_se: f64,

    /// Relative variance tolerance.
    #[arg(long, default_value_t = 0.30)]
    pub var_tol: f64,

    #[arg(long, default_value = "ecdf.csv")]
    pub ecdf_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Edge,
    Weibull,
    Gaussian,
    LocalLaw,
    Omega,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Smoke,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,

    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    pub scale: ScaleArg,
}

/// Flag ids never echoed into output headers: output locations and the
/// worker count do not change any result.
pub const NOT_ECHOED: &[&str] = &["out", "hist_out", "ecdf_out", "threads", "config", "help", "version"];

/// Flags that replace each other when one comes from a config file and the
/// other from the command line.
pub const EXCLUSIVE: &[(&[&str], &[&str])] = &[(&["N"], &["d"]), (&["measure"], &["beta", "l", "profile"])];
