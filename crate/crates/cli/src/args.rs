use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use motionflow::camera::PluckerConvention;
use motionflow::formats::DepthSpec;
use motionflow::metrics::TrajectoryMode;
use motionflow::spectral::SpectralFilter;
use motionflow::unify::CompositionMode;

#[derive(Debug, Parser)]
#[command(
    name = "motionflow",
    version,
    about = "Render, fuse, stabilize and evaluate motion-control optical flow"
)]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Defaults file (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flow induced by a camera trajectory over a depth proxy.
    CameraFlow(CameraFlowArgs),
    /// Dense flow from drag annotations.
    DragFlow(DragFlowArgs),
    /// Fuse every control in a bundle file.
    Unify(UnifyArgs),
    /// Temporal-frequency reweighting of a flow sequence.
    Stabilize(StabilizeArgs),
    /// Block-pooling flow codec.
    #[command(subcommand)]
    Codec(CodecCommand),
    /// Train the toy latent denoiser.
    ToyTrain(ToyTrainArgs),
    /// Draw latents from a trained denoiser.
    ToySample(ToySampleArgs),
    /// Translation and rotation error of predicted camera poses.
    EvalTraj(EvalTrajArgs),
    /// Color-code flow frames as PNG.
    Viz(VizArgs),
    /// Run the HTTP preview service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CameraFlowArgs {
    /// Camera trajectory JSON.
    #[arg(long, value_name = "FILE")]
    pub trajectory: PathBuf,
    /// `constant:D`, `ramp:NEAR:FAR` or a PFM file.
    #[arg(long, value_parser = parse_depth)]
    pub depth: DepthSpec,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Output directory for `.flo` frames.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Gaussian noise added to the flow, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Also write the Plücker embedding as JSON.
    #[arg(long, value_name = "FILE")]
    pub plucker: Option<PathBuf>,
    #[arg(long, value_parser = parse_convention, default_value = "literal")]
    pub plucker_convention: PluckerConvention,
}

#[derive(Debug, Args)]
pub struct DragFlowArgs {
    /// Annotation JSON.
    #[arg(long, value_name = "FILE")]
    pub annotation: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Densification kernel width in pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UnifyArgs {
    /// Bundle JSON.
    #[arg(long, value_name = "FILE")]
    pub bundle: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overrides the bundle's mode (`add` | `chain`).
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<CompositionMode>,
    /// Per-frame conflict CSV; needs two or more controls.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// A named filter or a JSON file of per-bin weights.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterArg {
    Named(SpectralFilter),
    File(PathBuf),
}

#[derive(Debug, Args)]
pub struct StabilizeArgs {
    /// Directory of `.flo` frames, or individual `.flo` files in order.
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    pub input: Vec<PathBuf>,
    /// `identity`, `dc-only`, `lowpass:K` or a weights JSON file.
    #[arg(long, value_parser = parse_filter)]
    pub filter: FilterArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CodecCommand {
    /// Pool a flow directory into a latent file.
    Encode {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Expand a latent file back into `.flo` frames.
    Decode {
        #[arg(long, value_name = "FILE")]
        latent: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    /// Checkpoint output.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Loss curve CSV.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
    /// Overrides the configured step count.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ToySampleArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Samples CSV, one row per sample.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalTrajArgs {
    /// Predicted trajectory JSON; repeat for several methods.
    #[arg(long, required = true, value_name = "FILE")]
    pub pred: Vec<PathBuf>,
    /// Ground-truth trajectory JSON.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Frames per evaluated clip.
    #[arg(long, default_value_t = 16)]
    pub clip_len: usize,
    /// Only this sampling mode; both by default.
    #[arg(long, value_parser = parse_traj_mode)]
    pub mode: Option<TrajectoryMode>,
    /// Report CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    /// Directory of `.flo` frames.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Saturation reference in pixels; the sequence maximum by default.
    #[arg(long)]
    pub max_magnitude: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "MOTIONFLOW_PORT")]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn parse_depth(s: &str) -> Result<DepthSpec, String> {
    DepthSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<CompositionMode, String> {
    s.parse().map_err(|e: motionflow::Error| e.to_string())
}

fn parse_traj_mode(s: &str) -> Result<TrajectoryMode, String> {
    s.parse().map_err(|e: motionflow::Error| e.to_string())
}

fn parse_convention(s: &str) -> Result<PluckerConvention, String> {
    match s {
        "literal" => Ok(PluckerConvention::Literal),
        "conventional" => Ok(PluckerConvention::Conventional),
        _ => Err(format!("unknown convention '{s}' (literal | conventional)")),
    }
}

fn parse_filter(s: &str) -> Result<FilterArg, String> {
    match SpectralFilter::parse(s) {
        Ok(f) => Ok(FilterArg::Named(f)),
        Err(_) if s.ends_with(".json") || std::path::Path::new(s).is_file() => Ok(FilterArg::File(s.into())),
        Err(e) => Err(e.to_string()),
    }
}
