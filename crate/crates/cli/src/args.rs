use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "g0test", version, about = "Two-sample tests for G0 speckle data")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "G0TEST_THREADS")]
    pub threads: Option<usize>,

    /// Require explicit seeds for every randomized command.
    #[arg(long, global = true)]
    pub ci: bool,

    /// Output encoding; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Manifest location; defaults to `<output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Alpha,
    Gamma,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationArg {
    Chi2,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FailurePolicyArg {
    Skip,
    Retry,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricAlphaArg {
    PooledMean,
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieBreakArg {
    SmallestK,
    LargestStatistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// Rejection rates of the composite statistics (2 textures x 2 looks x 3 sizes).
    Table1,
    /// Two-parameter estimator densities.
    Estimators,
    /// Texture estimator with known scale.
    EstimatorsAlpha,
    /// Scale estimator with known texture.
    EstimatorsGamma,
    /// Empirical size of the texture test.
    SizesAlpha,
    /// Empirical size of the scale test.
    SizesGamma,
    /// Joint dependence of the two-parameter estimates.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Full,
    Quick,
}

/// Acceptance box for two-parameter fits.
#[derive(Debug, Clone, Args)]
pub struct BoxArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_hi: Option<f64>,
    #[arg(long)]
    pub gamma_lo: Option<f64>,
    #[arg(long)]
    pub gamma_hi: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a G0 sample.
    Sample {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Maximum-likelihood fit of a sample file.
    Fit {
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
        #[arg(long, value_enum, default_value = "both")]
        regime: RegimeArg,
        #[arg(long)]
        gamma_known: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha_known: Option<f64>,
        #[command(flatten)]
        bounds: BoxArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Geodesic distance between two textures, or two scales at a fixed texture.
    Distance {
        #[arg(long, allow_hyphen_values = true)]
        alpha1: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha2: Option<f64>,
        #[arg(long)]
        gamma1: Option<f64>,
        #[arg(long)]
        gamma2: Option<f64>,
        /// Texture for the scale distance.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Two-sample test.
    Test {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value = "T1")]
        stat: String,
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
        #[arg(long)]
        gamma_known: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha_known: Option<f64>,
        /// Defaults to chi2 for Talpha/Tgamma, permutation otherwise.
        #[arg(long, value_enum)]
        calibration: Option<CalibrationArg>,
        #[arg(long, default_value_t = 1000)]
        perm: usize,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "skip")]
        on_fit_failure: FailurePolicyArg,
        #[arg(long, value_enum, default_value = "pooled-mean")]
        metric_alpha: MetricAlphaArg,
        #[command(flatten)]
        bounds: BoxArgs,
        /// CSV dump of the permuted statistics.
        #[arg(long)]
        dump_permuted: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo experiment from a plan file or a preset.
    Mc {
        #[arg(long, conflicts_with = "preset")]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, required_unless_present = "plan")]
        preset: Option<PresetArg>,
        #[arg(long, value_enum, default_value = "quick")]
        scale: ScaleArg,
        /// Overrides the plan seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan-line edge detection on an image strip.
    Edges {
        #[arg(long)]
        image: PathBuf,
        /// Looks for PGM input; raw rasters take it from the sidecar.
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
        #[arg(long, default_value = "T1")]
        stat: String,
        #[arg(long, default_value_t = 1000)]
        perm: usize,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "smallest-k")]
        tie_break: TieBreakArg,
        #[command(flatten)]
        bounds: BoxArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Long-format p-value profiles for every row.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
}
