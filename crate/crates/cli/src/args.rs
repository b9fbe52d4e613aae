//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdpoint::assignment::DEFAULT_TAU;
use crowdpoint::geometry::{DEFAULT_FALLBACK_RADIUS, DEFAULT_K};
use crowdpoint::metrics::{DEFAULT_COUNT_THRESHOLD, DEFAULT_DELTA, DEFAULT_DELTA_SWEEP};
use crowdpoint::proposal::{DEFAULT_GAMMA, DEFAULT_POINTS_PER_CELL, DEFAULT_STRIDE};

#[derive(Debug, Parser)]
#[command(
    name = "crowdpoint",
    version,
    about = "Point-based crowd localization: fixtures, nAP evaluation and matching demos",
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key = value` file of flag defaults; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded ground-truth scenes and, optionally, corrupted predictions.
    Gen(GenArgs),
    /// Evaluate a prediction file against ground truth.
    Eval(EvalArgs),
    /// Train on one synthetic scene with a chosen matching strategy and report counts.
    MatchDemo(MatchDemoArgs),
    /// Train on one scene and export the history, final points and an SVG scatter.
    TrainDemo(TrainDemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Uniform,
    Clusters,
    Gradient,
}

#[derive(Debug, Clone, Args)]
pub struct RecipeArgs {
    /// Spatial distribution of the heads.
    #[arg(long, value_enum, default_value_t = KindArg::Clusters)]
    pub kind: KindArg,
    /// Heads per scene.
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Image width (px).
    #[arg(long, default_value_t = 128.0)]
    pub width: f64,
    /// Image height (px).
    #[arg(long, default_value_t = 128.0)]
    pub height: f64,
    /// Cluster count for `--kind clusters`.
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    /// Cluster standard deviation (px) for `--kind clusters`.
    #[arg(long, default_value_t = 6.0)]
    pub spread: f64,
    /// Seed of the (first) scene.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub recipe: RecipeArgs,
    /// Number of scenes; scene `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Ground-truth JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Prediction JSONL output, derived from the ground truth by corruption.
    #[arg(long)]
    pub pred_out: Option<PathBuf>,
    /// Per-axis position noise of the predictions (px).
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Probability of dropping a head's prediction.
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
    /// Probability of emitting a duplicate prediction.
    #[arg(long, default_value_t = 0.0)]
    pub dup: f64,
    /// Seed of the corruption of the first scene; scene `i` uses `pred_seed + i`.
    #[arg(long, default_value_t = 1)]
    pub pred_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Ground-truth JSONL.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSONL.
    #[arg(long)]
    pub pred: PathBuf,
    /// Primary normalized-distance threshold.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Comma-separated thresholds averaged into the nAP mean.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DELTA_SWEEP.to_vec())]
    pub delta_sweep: Vec<f64>,
    /// Neighbors in the density scale.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Density scale of a lone head (px).
    #[arg(long, default_value_t = DEFAULT_FALLBACK_RADIUS)]
    pub fallback_radius: f64,
    /// Confidence above which a prediction is counted.
    #[arg(long, default_value_t = DEFAULT_COUNT_THRESHOLD)]
    pub threshold: f64,
    /// CSV of `delta,ap` over the sweep.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// CSV of `delta,recall,precision` curves over the sweep.
    #[arg(long)]
    pub pr_csv: Option<PathBuf>,
    /// CSV of `id,ground_truth,predicted` counts.
    #[arg(long)]
    pub counts_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    #[value(name = "one2one")]
    OneToOne,
    NearestGt,
    NearestProposal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Gd,
    GdBacktrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Grid,
    Center,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Target assignment used at every step.
    #[arg(long, value_enum, default_value_t = StrategyArg::OneToOne)]
    pub strategy: StrategyArg,
    /// Positive radius of the nearest-gt strategy (px); defaults to 1.5 strides.
    #[arg(long)]
    pub neg_threshold: Option<f64>,
    /// Feature-map stride (px).
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    pub stride: usize,
    /// Reference points per cell.
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_CELL)]
    pub points_per_cell: usize,
    /// Placement of the reference points inside a cell.
    #[arg(long, value_enum, default_value_t = LayoutArg::Grid)]
    pub layout: LayoutArg,
    /// Offset scale (px per unit offset).
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Confidence weight of the matching cost.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Weight of the background term of the classification loss.
    #[arg(long, default_value_t = 0.5)]
    pub lambda1: f64,
    /// Weight of the regression loss.
    #[arg(long, default_value_t = 2e-4)]
    pub lambda2: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Optimizer steps.
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Seed of the parameter initialization.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Standard deviation of the initial parameters.
    #[arg(long, default_value_t = 1e-3)]
    pub init_sigma: f64,
    /// Confidence above which a proposal is counted.
    #[arg(long, default_value_t = DEFAULT_COUNT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct MatchDemoArgs {
    #[command(flatten)]
    pub recipe: RecipeArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Per-step CSV of losses and counts.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainDemoArgs {
    #[command(flatten)]
    pub recipe: RecipeArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Train on a scene from this ground-truth JSONL instead of a generated one.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Scene id within `--gt`; defaults to the first scene.
    #[arg(long, requires = "gt")]
    pub scene: Option<String>,
    /// Per-step CSV of losses and counts.
    #[arg(long)]
    pub history_csv: Option<PathBuf>,
    /// Final decoded proposals above the threshold, as prediction JSONL.
    #[arg(long)]
    pub points_out: Option<PathBuf>,
    /// SVG scatter of ground truth (green) and counted predictions (red).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}
