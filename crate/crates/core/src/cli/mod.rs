//! The `lidar-enrich` command line.
//!
//! Every subcommand reads its parameters from flags, optionally seeded from a
//! `key = value` config file (`--config`). Keys are the long flag names of
//! the subcommand; keys under a `[name]` section apply only to that
//! subcommand. Flags given on the command line win over file values.
//! Verbosity is read from `LIDAR_ENRICH_LOG` (env_logger syntax, default
//! `info`); logs go to stderr.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::completion::Variant;
use crate::pointcloud_io::DownsampleMode;
use crate::registration::{Method, Pose6};

pub use config::{expand_config, parse_config};

pub const LOG_ENV: &str = "LIDAR_ENRICH_LOG";

#[derive(Debug, Parser)]
#[command(name = "lidar-enrich", version, about = "Sparse LiDAR depth enrichment and odometry")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` config file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// worker threads for per-frame work
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a LiDAR sequence (and camera frames) in a built-in or file scene
    Synth(SynthArgs),
    /// Project a scan onto a camera as a 16-bit depth PNG
    Project(ProjectArgs),
    /// Reduce the channel count of a scan
    Downsample(DownsampleArgs),
    /// DCT reconstruction error of a depth map over kept-coefficient rates
    Sparsity(SparsityArgs),
    /// Depth discontinuity or image edge map
    Edges(EdgesArgs),
    /// Train a completion model
    Train(TrainArgs),
    /// Complete sparse depth maps with a trained model
    Complete(CompleteArgs),
    /// Depth error of a prediction against ground truth
    EvalDepth(EvalDepthArgs),
    /// Register one scan onto another
    Register(RegisterArgs),
    /// Frame-to-frame odometry over a sequence directory
    Slam(SlamArgs),
    /// Translational error of a trajectory against ground truth
    EvalTraj(EvalTrajArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `street`, `courtyard` or a scene file
    #[arg(long, default_value = "courtyard")]
    pub scene: String,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// forward motion per frame, meters
    #[arg(long, default_value_t = 0.3)]
    pub step: f64,
    /// heading change per frame, degrees
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw_rate: f64,
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    pub start_x: f64,
    #[arg(long, default_value_t = 0.37, allow_negative_numbers = true)]
    pub start_y: f64,
    /// sensor height, meters
    #[arg(long, default_value_t = 1.73)]
    pub height: f64,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    /// range noise standard deviation, meters (overrides the scene's)
    #[arg(long)]
    pub range_noise: Option<f64>,
    /// per-firing azimuth jitter half-width, degrees (overrides the scene's)
    #[arg(long)]
    pub azimuth_jitter: Option<f64>,
    /// also render gray camera frames into `image/`
    #[arg(long)]
    pub images: bool,
    /// camera file for `--images`; default is the 128x64 desk camera
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// KITTI `.bin` scan
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DownsampleArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// keep one ring in `keep`
    #[arg(long, default_value_t = 4)]
    pub keep: usize,
    /// `drop` or `average`
    #[arg(long, default_value = "drop", value_parser = parse_mode)]
    pub mode: DownsampleMode,
    /// rings of the input sensor
    #[arg(long, default_value_t = 64)]
    pub rings: usize,
    #[arg(long, default_value_t = -24.8, allow_negative_numbers = true)]
    pub elevation_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub elevation_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SparsityArgs {
    #[arg(long)]
    pub depth: PathBuf,
    /// kept-coefficient rates, fractions like `1/16` or decimals
    #[arg(long, value_parser = parse_rates, default_value = "1/64,1/32,1/16,1/8,1/4,1/2,1")]
    pub rates: Rates,
    /// write each reconstruction as `recon_<rate>.png` here
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["depth", "gray"])))]
pub struct EdgesArgs {
    /// depth PNG; edges are depth jumps in meters
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// gray PNG; edges are Sobel magnitudes
    #[arg(long)]
    pub gray: Option<PathBuf>,
    /// default 1 m for depth, 0.5 for gray
    #[arg(long)]
    pub threshold: Option<f64>,
    /// binary edge map as an 8-bit PNG
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `l2l` or `f2l`
    #[arg(long, default_value = "f2l", value_parser = parse_variant)]
    pub variant: Variant,
    /// directory with `sparse/`, `gt/` and optional `gray/` PNGs of equal
    /// names; default is the simulated desk split's training part
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// weight of the L1 term
    #[arg(long, default_value_t = crate::micrograd::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// random crop per sample and step, `WxH`
    #[arg(long, value_parser = parse_crop)]
    pub crop: Option<(usize, usize)>,
    /// per-epoch loss as `epoch,loss` CSV
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// checkpoint path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// sparse depth PNG, or a directory of them
    #[arg(long)]
    pub sparse: PathBuf,
    /// gray PNG (or directory with the same file names) for the image branch
    #[arg(long)]
    pub gray: Option<PathBuf>,
    /// output PNG, or a directory when `--sparse` is one
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalDepthArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// scan to move
    #[arg(long)]
    pub input: PathBuf,
    /// fixed scan
    #[arg(long)]
    pub reference: PathBuf,
    /// `ndt` or `icp`
    #[arg(long, default_value = "ndt", value_parser = parse_method)]
    pub method: Method,
    /// initial pose `tx,ty,tz,roll,pitch,yaw` (meters, radians)
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub init: Option<Pose6>,
    /// NDT cell size, meters
    #[arg(long, default_value_t = 1.0)]
    pub cell_size: f64,
    /// coarse NDT pass cell size before the fine one; 0 disables
    #[arg(long, default_value_t = 0.0)]
    pub coarse_cell: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// also write the result line here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SlamArgs {
    /// sequence directory (`velodyne/`, optional `poses.txt`, `image/`)
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// `ndt` or `icp`
    #[arg(long, default_value = "ndt", value_parser = parse_method)]
    pub method: Method,
    /// completion checkpoint; densify every frame before registration
    #[arg(long, value_name = "CKPT")]
    pub enrich: Option<PathBuf>,
    /// camera file for enrichment; default is the desk camera
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// map voxel size, meters; 0 keeps every point
    #[arg(long, default_value_t = crate::slam::DEFAULT_VOXEL_SIZE)]
    pub voxel: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cell_size: f64,
    /// coarse NDT pass cell size; 0 disables
    #[arg(long, default_value_t = 2.0)]
    pub coarse_cell: f64,
    /// start every registration from the identity instead of the last motion
    #[arg(long)]
    pub no_velocity: bool,
    /// output directory for `poses.txt`, `map.ply` and `diagnostics.csv`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalTrajArgs {
    /// estimated KITTI poses
    #[arg(long)]
    pub est: PathBuf,
    /// ground-truth KITTI poses
    #[arg(long)]
    pub gt: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<DownsampleMode, String> {
    match s {
        "drop" => Ok(DownsampleMode::DropRings),
        "average" => Ok(DownsampleMode::AverageRings),
        _ => Err(format!("unknown mode {s:?} (drop, average)")),
    }
}

/// Comma-separated kept-coefficient rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates(pub Vec<f64>);

fn parse_rates(s: &str) -> Result<Rates, String> {
    s.split(',').map(parse_rate).collect::<Result<_, _>>().map(Rates)
}

fn parse_pose(s: &str) -> Result<Pose6, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<Result<_, _>>()?;
    let a: [f64; 6] = v.try_into().map_err(|v: Vec<f64>| format!("pose needs 6 values, got {}", v.len()))?;
    Ok(Pose6::from_array(a))
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let num: f64 = a.trim().parse().map_err(|_| format!("bad rate {s:?}"))?;
            let den: f64 = b.trim().parse().map_err(|_| format!("bad rate {s:?}"))?;
            num / den
        }
        None => s.trim().parse().map_err(|_| format!("bad rate {s:?}"))?,
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("rate {s} outside (0, 1]"))
    }
}

fn parse_crop(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("crop {s:?} is not WxH"))?;
    let w: usize = w.parse().map_err(|_| format!("bad crop width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad crop height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("crop sides must be positive".into());
    }
    Ok((w, h))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    // a second call in the same process keeps the first logger
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Run the CLI on `args` (program name first) and return the exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(&args) {
        Ok(a) => a,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    log::info!("resolved config: {cli:?}");
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
