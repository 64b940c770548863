use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specfilter_core::ScheduleVariant;

#[derive(Debug, Parser)]
#[command(name = "specfilter", version, about = "Spectral purification of cross-attention style embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// Log filter (e.g. `info`, `debug`); overrides SPECFILTER_LOG.
    #[arg(long, global = true)]
    pub log_level: Option<String>,

    /// Seed overriding every seed in a sampler config.
    #[arg(long = "seed", global = true)]
    pub deterministic_seed: Option<u64>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Sigmoid,
    Fixed,
    Linear,
    Exponential,
}

impl From<VariantArg> for ScheduleVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sigmoid => ScheduleVariant::Sigmoid,
            VariantArg::Fixed => ScheduleVariant::Fixed,
            VariantArg::Linear => ScheduleVariant::Linear,
            VariantArg::Exponential => ScheduleVariant::Exponential,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 0.01)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 40.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub c: f64,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    /// Decay rate of the exponential variant.
    #[arg(long, default_value_t = 3.0)]
    pub lambda: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thin SVD of a tensor; sigma is written as an r x 1 tensor.
    Svd {
        input: PathBuf,
        #[arg(long)]
        out_u: PathBuf,
        #[arg(long)]
        out_sigma: PathBuf,
        #[arg(long)]
        out_v: PathBuf,
    },
    /// Split a tensor into its top-k (main) and remaining (tail) parts.
    Decompose {
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long)]
        out_main: PathBuf,
        #[arg(long)]
        out_tail: PathBuf,
    },
    /// Suppress the tail of every layer's K and V at one step.
    Filter {
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long = "schedule", value_enum, default_value = "sigmoid")]
        variant: VariantArg,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Treat manifest tensors as pre-projection features and filter those.
        #[arg(long)]
        on_feature: bool,
        /// Key projection applied after filtering with --on-feature.
        #[arg(long, requires = "on_feature")]
        key_projection: Option<PathBuf>,
        /// Value projection applied after filtering with --on-feature.
        #[arg(long, requires = "on_feature")]
        value_projection: Option<PathBuf>,
    },
    /// Tabulate s(t) and alpha_t for t = 0..=T.
    Schedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, value_enum, default_value = "sigmoid")]
        variant: VariantArg,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Guidance combination of two noise predictions.
    Guide {
        #[arg(long)]
        cond: PathBuf,
        #[arg(long)]
        uncond: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        omega: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write conditional and unconditional K/V for every layer at one step.
    Branches {
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, value_enum, default_value = "sigmoid")]
        variant: VariantArg,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Apply the step's suppression to the negative tail as well.
        #[arg(long)]
        attenuated_negative: bool,
    },
    /// Run the synthetic sampler.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Energy of a tensor inside the span of an orthonormal basis.
    Leakage {
        input: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        /// Output JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
