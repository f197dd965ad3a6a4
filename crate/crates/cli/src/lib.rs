//! `difs` command line: signature extraction, evaluation and matching.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

mod commands;
pub mod images;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use difs::net::reference::{FIXTURE_SIDE, SEED};
use difs::{LayerId, Metric, NeighborCount, Scale};

pub use commands::{run_dump, run_evaluate, run_extract, run_gen_weights, run_match, run_render};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "difs", version, about = "Region-integrated feature signatures for vehicle re-identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract one labeled signature per annotation.
    Extract(ExtractArgs),
    /// Balanced, stratified k-fold KNN accuracy over a signature file.
    Evaluate(EvaluateArgs),
    /// Rank gallery signatures for each query signature.
    Match(MatchArgs),
    /// Run the detector over an image directory and save an activation dump.
    Dump(DumpArgs),
    /// Write the seeded reference detector weights.
    GenWeights(GenWeightsArgs),
    /// Render the synthetic vehicle scene as PNG frames plus annotations.csv.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").args(["dump", "weights"]).required(true)))]
#[command(group(ArgGroup::new("signature_layer").args(["layer", "scale_layer"]).required(true)))]
pub struct ExtractArgs {
    /// Activation dump holding the signature layers.
    #[arg(long, conflicts_with_all = ["weights", "images", "detector"])]
    pub dump: Option<PathBuf>,
    /// Detector weight file; requires --images.
    #[arg(long, requires = "images")]
    pub weights: Option<PathBuf>,
    /// Directory of frames named <frame:06>.png or .jpg.
    #[arg(long, requires = "weights")]
    pub images: Option<PathBuf>,
    /// KITTI tracking labels or frame,track,type,x1,y1,x2,y2 CSV.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Signature layer for every box.
    #[arg(long)]
    pub layer: Option<LayerId>,
    /// Per-head signature layer, e.g. `coarse=36`; repeat for each head.
    #[arg(long = "scale-layer", value_parser = parse_scale_layer)]
    pub scale_layer: Vec<(Scale, LayerId)>,
    /// Divide each signature by its region's cell count.
    #[arg(long)]
    pub area_normalize: bool,
    /// Integrate matched detector boxes instead of the annotated boxes.
    #[arg(long, requires = "weights")]
    pub detector: bool,
    #[arg(long, default_value_t = 0.25, requires = "detector")]
    pub conf_threshold: f32,
    #[arg(long, default_value_t = 0.45, requires = "detector")]
    pub nms_iou: f64,
    /// Minimum IoU between an annotation and its detection.
    #[arg(long, default_value_t = 0.5, requires = "detector")]
    pub match_iou: f64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub signatures: PathBuf,
    /// Report file (key=value text).
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value = "1", value_parser = parse_k)]
    pub k: NeighborCount,
    #[arg(long, default_value = "manhattan", value_parser = parse_metric)]
    pub metric: Metric,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 20)]
    pub samples_per_instance: usize,
    #[arg(long, default_value_t = 20)]
    pub min_occurrences: usize,
    #[arg(long)]
    pub seed: u64,
    /// Cut each instance's frames into contiguous per-fold blocks instead of
    /// shuffling them.
    #[arg(long)]
    pub holdout_frames: bool,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Labeled signature file to search.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Signature file of queries; its labels are echoed, not used.
    #[arg(long)]
    pub queries: PathBuf,
    /// Matches listed per query.
    #[arg(long, default_value_t = 5, value_parser = parse_positive)]
    pub k: usize,
    #[arg(long, default_value = "manhattan", value_parser = parse_metric)]
    pub metric: Metric,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    /// Layers to keep, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub layers: Vec<LayerId>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    /// Network input side, a multiple of 32.
    #[arg(long, default_value_t = FIXTURE_SIDE)]
    pub side: usize,
    #[arg(long, default_value_t = SEED)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A multiple of 4.
    #[arg(long, default_value_t = 12)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 20)]
    pub frames_per_vehicle: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, short)]
    pub output: PathBuf,
}

fn parse_scale_layer(s: &str) -> Result<(Scale, LayerId), String> {
    let (scale, layer) = s.split_once('=').ok_or_else(|| format!("expected SCALE=LAYER, got {s:?}"))?;
    let scale = match scale {
        "coarse" | "0" => Scale::Coarse,
        "medium" | "1" => Scale::Medium,
        "fine" | "2" => Scale::Fine,
        other => return Err(format!("unknown scale {other:?} (coarse, medium, fine or 0-2)")),
    };
    let layer = layer.parse().map_err(|_| format!("layer id is not an integer: {layer:?}"))?;
    Ok((scale, layer))
}

fn parse_positive(s: &str) -> Result<usize, String> {
    s.parse::<usize>()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| format!("expected a positive integer, got {s:?}"))
}

fn parse_k(s: &str) -> Result<NeighborCount, String> {
    s.parse::<usize>()
        .ok()
        .and_then(|k| NeighborCount::new(k).ok())
        .ok_or_else(|| format!("k must be 1, 3 or 5, got {s:?}"))
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse::<Metric>().map_err(|e| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run_main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Extract(a) => run_extract(a, out),
        Command::Evaluate(a) => run_evaluate(a, out),
        Command::Match(a) => run_match(a, out),
        Command::Dump(a) => run_dump(a, out),
        Command::GenWeights(a) => run_gen_weights(a, out),
        Command::Render(a) => run_render(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DATA
        }
    }
}
