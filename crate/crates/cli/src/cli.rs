use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Nighttime weather degradation synthesis, quality metrics and routing checks.
#[derive(Debug, Parser)]
#[command(name = "nightsynth", version)]
pub struct Cli {
    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an image into illumination and reflectance.
    Decompose(DecomposeArgs),
    /// Render one scene recipe onto a clean image.
    Synth(SynthArgs),
    /// Add lens flare around the brightest light sources.
    Flare(FlareArgs),
    /// Score candidate ground truths and write a ranked CSV.
    Curate(CurateArgs),
    /// Dataset generation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Image quality metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// NIQE model fitting.
    #[command(subcommand)]
    Niqe(NiqeCommand),
    /// Sparse routing checks.
    #[command(subcommand)]
    Routing(RoutingCommand),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Gaussian sigma applied to the max-channel map.
    #[arg(long, default_value_t = 5.0)]
    pub sigma: f64,
    /// Illumination floor.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    /// Scene recipe JSON.
    #[arg(long, value_name = "JSON")]
    pub recipe: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Overrides the seed stored in the recipe.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FlareArgs {
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Flare parameter JSON; defaults are used when omitted.
    #[arg(long, value_name = "JSON")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Directory of candidate PNGs.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Output CSV.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
    /// Threshold JSON; missing fields take defaults.
    #[arg(long, value_name = "JSON")]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Synthesize every planned sample for each ground truth.
    Build(DatasetBuildArgs),
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    /// Directory of ground-truth PNGs.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Plan JSON (samples per category).
    #[arg(long, value_name = "JSON")]
    pub plan: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Worker threads. Output is identical for any value.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    Psnr(PsnrArgs),
    Ssim(PairArgs),
    L1(PairArgs),
    Niqe(NiqeEvalArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long = "ref", value_name = "PNG")]
    pub reference: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct PsnrArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Signal peak; 255 evaluates on the 8-bit scale.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
}

#[derive(Debug, Args)]
pub struct NiqeEvalArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub test: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum NiqeCommand {
    /// Fit a pristine model to a directory of PNGs.
    Fit(NiqeFitArgs),
}

#[derive(Debug, Args)]
pub struct NiqeFitArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 96)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0.75)]
    pub sharpness_fraction: f64,
}

#[derive(Debug, Subcommand)]
pub enum RoutingCommand {
    /// Compare analytic and finite-difference gradients on a random instance.
    Gradcheck(GradcheckArgs),
    /// Train on synthetic weather clusters and print selection histograms.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GateModeArg {
    Literal,
    Renormalized,
}

#[derive(Debug, Args)]
pub struct RoutingShape {
    /// Candidate units.
    #[arg(long = "B", default_value_t = 25)]
    pub units: usize,
    /// Selected units per token.
    #[arg(long = "K", default_value_t = 10)]
    pub top_k: usize,
    /// Feature dimension.
    #[arg(long = "D", default_value_t = 16)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = GateModeArg::Literal)]
    pub gate_mode: GateModeArg,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: RoutingShape,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub shape: RoutingShape,
    /// SGD steps on the bce + load-balance objective.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
}
