//! The `ceiq` command-line tool: feature extraction, training, prediction,
//! evaluation protocols, benchmarks and scatter-data export.
//!
//! Exit codes: 0 success, 2 usage or invalid argument, 3 I/O or image
//! decoding, 4 parse, 5 numeric (degenerate data, solver failure).

pub mod bench;
pub mod cache;
pub mod commands;
pub mod error;

use std::io::Write;
use std::path::{Path, PathBuf};

use ceiq::eval::LogisticKind;
use ceiq::features::FeatureConfig;
use ceiq::ssim::SsimParams;
use ceiq::svr::SvrParams;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{exit, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ceiq", version, about = "No-reference quality assessment of contrast-distorted images")]
pub struct Cli {
    /// Worker threads for batch work (default: all cores)
    #[arg(long, global = true, env = "CEIQ_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the five features of each image as CSV
    Extract {
        images: Vec<PathBuf>,
        /// Take image paths from a manifest instead of (or besides) arguments
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Train a model on every entry of a manifest
    Train {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        svr: SvrArgs,
        /// Solver seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Print `path<TAB>score` for each image
    Predict {
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Repeated reference-disjoint train/test evaluation
    Evaluate {
        manifest: PathBuf,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        svr: SvrArgs,
        /// JSON report destination (default: stdout)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-split CSV (default: next to --output as <stem>.splits.csv)
        #[arg(long)]
        splits_csv: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Train on one manifest, test on another
    Crossdb {
        train_manifest: PathBuf,
        test_manifest: PathBuf,
        #[command(flatten)]
        svr: SvrArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Logistic::Five)]
        logistic: Logistic,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Time each pipeline stage on one image
    Bench {
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        /// CSV destination (default: stdout)
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Two-column CSV of subjective score against one feature
    Scatter {
        #[arg(required_unless_present = "synthesize", conflicts_with = "synthesize")]
        manifest: Option<PathBuf>,
        /// Generate the synthetic corpus into this directory and use it
        #[arg(long)]
        synthesize: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FeatureName::SGe)]
        feature: FeatureName,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Write the synthetic contrast-distortion corpus and its manifest
    Synthesize {
        dir: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Histogram bins for the entropy features
    #[arg(long, default_value_t = ceiq::features::DEFAULT_BINS)]
    pub bins: usize,
    /// Disable SSIM's automatic downsampling
    #[arg(long)]
    pub no_downsample: bool,
    #[arg(long, default_value_t = 0.01)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.03)]
    pub k2: f64,
    #[arg(long, default_value_t = 11)]
    pub window_size: usize,
    #[arg(long, default_value_t = 1.5)]
    pub window_sigma: f64,
}

impl FeatureArgs {
    pub fn config(&self) -> Result<FeatureConfig> {
        let ssim = SsimParams {
            k1: self.k1,
            k2: self.k2,
            window_size: self.window_size,
            window_sigma: self.window_sigma,
            auto_downsample: !self.no_downsample,
            ..SsimParams::default()
        };
        ssim.validate()?;
        if !(1..=256).contains(&self.bins) {
            return Err(CliError::Usage(format!("--bins must be in [1, 256], got {}", self.bins)));
        }
        Ok(FeatureConfig { bins: self.bins, ssim })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SvrArgs {
    /// Regularization trade-off
    #[arg(long = "c", default_value_t = 1.0)]
    pub c: f64,
    /// Width of the insensitive tube
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
}

impl SvrArgs {
    pub fn params(&self, seed: u64) -> Result<SvrParams> {
        let p = SvrParams {
            c: self.c,
            epsilon: self.epsilon,
            seed,
            ..SvrParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long, default_value_t = 1000)]
    pub repetitions: usize,
    /// Base seed; repetition r uses seed + r
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Logistic::Five)]
    pub logistic: Logistic,
}

#[derive(Debug, Clone, Args)]
pub struct CacheArgs {
    /// Do not read or write the feature cache next to the manifest
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub references: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 2018)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Logistic {
    #[value(name = "5")]
    Five,
    #[value(name = "4")]
    Four,
}

impl From<Logistic> for LogisticKind {
    fn from(l: Logistic) -> Self {
        match l {
            Logistic::Five => LogisticKind::FiveParameter,
            Logistic::Four => LogisticKind::FourParameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureName {
    #[value(name = "s_ge")]
    SGe,
    #[value(name = "e_g")]
    EG,
    #[value(name = "e_e")]
    EE,
    #[value(name = "e_ge")]
    EGe,
    #[value(name = "e_eg")]
    EEg,
}

impl FeatureName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureName::SGe => "s_ge",
            FeatureName::EG => "e_g",
            FeatureName::EE => "e_e",
            FeatureName::EGe => "e_ge",
            FeatureName::EEg => "e_eg",
        }
    }
}

/// Runs a parsed command. Primary output goes to `out`, warnings and
/// summaries to `diag`.
pub fn run(cli: Cli, out: &mut (dyn Write + Send), diag: &mut (dyn Write + Send)) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command, out, diag))
}

/// Writes `text` to `path`, or to `out` when no path is given.
pub(crate) fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(CliError::from),
    }
}

/// `x` with `digits` significant digits, without exponent notation for
/// ordinary magnitudes.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    // Round through scientific notation so the digit count is exact, then
    // re-expand.
    let sci = format!("{:.*e}", digits - 1, x);
    let (_, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..=15).contains(&exp) {
        return sci;
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().expect("float");
    format!("{rounded:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.8112781244591328, 9), "0.811278124");
        assert_eq!(format_significant(7.0, 9), "7.00000000");
        assert_eq!(format_significant(0.000123456789123, 9), "0.000123456789");
        assert_eq!(format_significant(-1.5, 3), "-1.50");
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(9.999999999, 9), "10.0000000");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
