use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Rejection Monte Carlo sampling and integration over boxes.
///
/// Set RMC_THREADS to cap the number of worker threads. Output files do not
/// depend on it.
#[derive(Debug, Parser)]
#[command(name = "rmc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples from a density on a box and write them as CSV.
    Sample(SampleArgs),
    /// Estimate the integral of a function over a region inside a box.
    Integrate(IntegrateArgs),
    /// Sample, then run a goodness-of-fit test against the target.
    Validate(ValidateArgs),
    /// Estimate an envelope constant by grid search.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Model {
    /// Comma-separated variable names, in coordinate order.
    #[arg(long)]
    pub vars: String,
    /// Per-axis bounds `lo:hi`, comma separated (e.g. "-5:5,-5:5").
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub bounds: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Seeding {
    /// Seed, decimal or 0x-prefixed hex.
    #[arg(long, default_value = "0", conflicts_with = "auto_seed")]
    pub seed: String,
    /// Pick a fresh seed; it is recorded in the metadata.
    #[arg(long)]
    #[serde(skip)]
    pub auto_seed: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Sampler {
    /// Envelope constant c with c >= max f on the box; estimated when omitted.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Per-axis bin counts for a piecewise-uniform proposal (e.g. "16,16").
    #[arg(long)]
    pub bins: Option<String>,
    /// Lowest acceptance rate assumed when sizing the proposal budget.
    #[arg(long, default_value_t = rmc_core::samplers::DEFAULT_RATE_FLOOR)]
    pub min_rate: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    /// Density, up to normalisation.
    #[arg(long, allow_hyphen_values = true)]
    pub density: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: Model,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seeding: Seeding,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: Sampler,
    /// Samples CSV path.
    #[arg(long, default_value = "samples.csv")]
    pub out: PathBuf,
    /// Metadata JSON path; defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// SVG scatter plot path (d <= 2).
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Also estimate the density mass lying outside the box.
    #[arg(long)]
    pub truncation_check: bool,
    /// Record wall time in the metadata (makes it run dependent).
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Screened,
    Direct,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IntegrateArgs {
    /// Integrand g.
    #[arg(long, allow_hyphen_values = true)]
    pub integrand: String,
    /// Region indicator, e.g. "y^2 <= x and y >= 0".
    #[arg(long, allow_hyphen_values = true)]
    pub region: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: Model,
    /// Points per replication.
    #[arg(long)]
    pub n: usize,
    /// Independent replications.
    #[arg(long, default_value_t = rmc_core::integrator::DEFAULT_REPLICATIONS)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = Method::Screened)]
    pub method: Method,
    #[command(flatten)]
    #[serde(flatten)]
    pub seeding: Seeding,
    /// Metadata JSON path.
    #[arg(long, default_value = "integrate.json")]
    pub meta: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    /// Density to sample from.
    #[arg(long, allow_hyphen_values = true)]
    pub density: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: Model,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seeding: Seeding,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: Sampler,
    /// CDF to test against (required for d = 1).
    #[arg(long, allow_hyphen_values = true)]
    pub cdf: Option<String>,
    /// Density to test against for d >= 2; defaults to --density.
    #[arg(long, allow_hyphen_values = true)]
    pub reference: Option<String>,
    /// Significance level, 0.05 or 0.01 (KS only; chi-square uses 0.001).
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Per-axis histogram bins for the chi-square test.
    #[arg(long = "gof-bins", default_value_t = 8)]
    pub gof_bins: usize,
    /// Optional metadata JSON path.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub density: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: Model,
    /// Grid points per axis; chosen from the dimension when omitted.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = rmc_core::samplers::DEFAULT_SAFETY)]
    pub safety: f64,
}
