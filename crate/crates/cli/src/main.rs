//! `pgnlm`: simulate, calibrate, estimate, analyse and classify PolSAR rasters.
//!
//! Errors go to stderr as one JSON object `{"error": {"category", "message"}}`
//! and map to a nonzero exit code per category.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "pgnlm",
    version,
    about = "Guided nonlocal covariance estimation for single-look PolSAR"
)]
struct Cli {
    /// Worker threads for the parallel loops (default: all cores).
    #[arg(long, global = true, env = "PGNLM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene: SLC, guide, class labels and truth metadata.
    Simulate(SimulateArgs),
    /// Compute percentile thresholds from diagonal reference windows.
    Calibrate(CalibrateArgs),
    /// Run the guided nonlocal estimator.
    Estimate(EstimateArgs),
    /// Square moving-average covariance estimate.
    Boxcar(BoxcarArgs),
    /// Extract C11, C22, C33, |C13|, arg C13 as a 5-band raster.
    Features(FeaturesArgs),
    /// ENL and matrix-error report as JSON.
    Metrics(MetricsArgs),
    /// Cross-validated pixel classification on a feature raster.
    Classify(ClassifyArgs),
    /// Compare two rasters of the same kind.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// homogeneous, edge2, checkerboard, point_target or canopy_mosaic.
    #[arg(long)]
    pub scene: String,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_slc: PathBuf,
    #[arg(long)]
    pub out_guide: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
    /// Group ids (mosaic cells) for grouped cross-validation.
    #[arg(long)]
    pub out_groups: Option<PathBuf>,
    /// Scene metadata with per-class truth covariances.
    #[arg(long)]
    pub out_meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub slc: PathBuf,
    #[arg(long)]
    pub guide: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub p_pol: f64,
    #[arg(long, default_value_t = 50.0)]
    pub p_opt: f64,
    /// Search window half-width.
    #[arg(long, default_value_t = 19)]
    pub search: usize,
    /// Patch half-width.
    #[arg(long, default_value_t = 2)]
    pub patch: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub slc: PathBuf,
    /// Required unless `--unguided`.
    #[arg(long)]
    pub guide: Option<PathBuf>,
    /// Calibration file written by `calibrate`.
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub smax: usize,
    /// Override the calibrated SAR percentile (recalibrates from the input).
    #[arg(long)]
    pub p_pol: Option<f64>,
    /// Override the calibrated optical percentile (recalibrates from the input).
    #[arg(long)]
    pub p_opt: Option<f64>,
    /// Ignore the guide: gamma = 1, predictors ranked by SAR dissimilarity.
    #[arg(long)]
    pub unguided: bool,
    /// Write `<PREFIX>_predictors.bin` and `<PREFIX>_weights.bin`.
    #[arg(long, value_name = "PREFIX")]
    pub diagnostics: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoxcarArgs {
    #[arg(long)]
    pub slc: PathBuf,
    /// Window half-width; the window is (2 half + 1)^2 pixels.
    #[arg(long, default_value_t = 2)]
    pub half: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Covariance raster; an SLC raster is accepted as its single-look covariance.
    #[arg(long)]
    pub cov: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub cov: PathBuf,
    /// Scene metadata from `simulate --out-meta`; needs `--labels`.
    #[arg(long, requires = "labels")]
    pub truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    pub labels: Option<PathBuf>,
    /// ENL region as `x,y,w,h` (default: whole raster).
    #[arg(long)]
    pub enl_region: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// 5-band feature raster from `features`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Group raster; enables grouped folds.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Number of folds.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use k-nearest-neighbours with this many neighbours instead of nearest centroid.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-fold accuracies as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Largest accepted difference (relative Frobenius for covariances, absolute otherwise).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&commands::CliError::Usage(e.to_string())),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&commands::CliError::Usage(format!(
                "cannot set thread count: {e}"
            )));
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Boxcar(a) => commands::boxcar(&a),
        Command::Features(a) => commands::features(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &commands::CliError) -> ExitCode {
    let body = serde_json::json!({
        "error": { "category": e.category(), "message": e.to_string() }
    });
    eprintln!("{body}");
    ExitCode::from(e.exit_code())
}
