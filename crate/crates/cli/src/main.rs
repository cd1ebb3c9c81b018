//! `bendseg`: evaluation, bending analysis, ground-truth generation,
//! watershed postprocessing, loss checks and patch tiling.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use bendseg::{BendingParams, LabelFormat, PostprocessParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unreadable/invalid input (exit 2).
    Input(String),
    /// Anything else (exit 1).
    Internal(String),
}

impl From<bendseg::Error> for CliError {
    fn from(e: bendseg::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "bendseg", version, about = "Bending-loss tooling for nuclei instance segmentation")]
struct Cli {
    /// Worker threads for per-image work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
pub struct BendArgs {
    /// Weight of concave points.
    #[arg(long, default_value_t = 20.0)]
    mu: f64,
    /// Weight of the bending term in the total loss.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Neighbour distance used to decide concavity.
    #[arg(long, default_value_t = 1)]
    concavity_extent: usize,
}

impl BendArgs {
    pub fn params(&self) -> CliResult<BendingParams> {
        let p = BendingParams {
            mu: self.mu,
            alpha: self.alpha,
            concavity_extent: self.concavity_extent,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Clone, Copy)]
pub struct WatershedArgs {
    #[arg(long, default_value_t = 0.5)]
    prob_threshold: f64,
    #[arg(long, default_value_t = 0.4)]
    contour_threshold: f64,
    #[arg(long, default_value_t = 10)]
    min_marker_area: usize,
}

impl WatershedArgs {
    pub fn params(&self) -> CliResult<PostprocessParams> {
        let p = PostprocessParams {
            prob_threshold: self.prob_threshold,
            contour_threshold: self.contour_threshold,
            min_marker_area: self.min_marker_area,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Aggregate {
    /// Unweighted mean of per-image values.
    Mean,
    /// Metrics recomputed from counts pooled over all images.
    Pooled,
}

fn parse_format(s: &str) -> Result<LabelFormat, String> {
    s.parse().map_err(|e: bendseg::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Score predicted label maps against ground truth (files or directories).
    Evaluate {
        gt: PathBuf,
        pred: PathBuf,
        /// Jaccard threshold for ACCO.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, value_enum, default_value = "mean")]
        aggregate: Aggregate,
        /// Only consider label maps of this format in directories.
        #[arg(long, value_parser = parse_format)]
        format: Option<LabelFormat>,
        /// Directory for per-image and summary key=value reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bending energy of a label map, with an optional colour overlay.
    Bend {
        input: PathBuf,
        #[command(flatten)]
        bend: BendArgs,
        #[arg(long, value_parser = parse_format)]
        format: Option<LabelFormat>,
        /// Greyscale backdrop for the overlay.
        #[arg(long)]
        backdrop: Option<PathBuf>,
        /// Overlay PNG to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convex and concave energies of the 28 neighbourhood curve patterns.
    PatternTable {
        #[arg(long, default_value_t = 20.0)]
        mu: f64,
    },
    /// Distance-map targets and overlapped ids for a ground-truth map.
    GtDistmap {
        input: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<LabelFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Watershed instance recovery from probability and distance maps.
    ///
    /// Either `PROB.fmap HV.fmap --out LABELS`, or a single directory of
    /// `<stem>_prob.fmap` / `<stem>_hv.fmap` pairs with `--out DIR`.
    Postprocess {
        #[arg(num_args = 1..=2, required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        watershed: WatershedArgs,
        #[arg(long, value_parser = parse_format, default_value = "png16")]
        format: LabelFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every loss term of a prediction against a ground-truth map.
    Loss {
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        hv: PathBuf,
        #[arg(long)]
        ohv: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Predicted instances for the bending term; recovered by watershed
        /// when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Evaluate the gradient terms over the whole image.
        #[arg(long)]
        whole_image_gradient: bool,
        #[command(flatten)]
        bend: BendArgs,
        #[command(flatten)]
        watershed: WatershedArgs,
    },
    /// Cut a label map or float map into mirror-padded patches.
    Patch {
        input: PathBuf,
        #[arg(long, default_value_t = 270)]
        patch: usize,
        #[arg(long, default_value_t = 80)]
        window: usize,
        #[arg(long, value_parser = parse_format)]
        format: Option<LabelFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reassemble a patch directory written by `patch`.
    Merge {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker threads: {e}")))?;
    match cli.command {
        Command::Evaluate { gt, pred, tau, aggregate, format, out } => {
            commands::evaluate(&pool, &gt, &pred, tau, aggregate, format, out.as_deref())
        }
        Command::Bend { input, bend, format, backdrop, out } => {
            commands::bend(&input, &bend.params()?, format, backdrop.as_deref(), out.as_deref())
        }
        Command::PatternTable { mu } => commands::pattern_table(mu),
        Command::GtDistmap { input, format, out } => commands::gt_distmap(&input, format, &out),
        Command::Postprocess { inputs, watershed, format, out } => {
            commands::postprocess(&pool, &inputs, &watershed.params()?, format, &out)
        }
        Command::Loss { prob, hv, ohv, gt, labels, whole_image_gradient, bend, watershed } => commands::loss(
            &commands::LossInputs { prob, hv, ohv, gt, labels },
            &bend.params()?,
            &watershed.params()?,
            whole_image_gradient,
        ),
        Command::Patch { input, patch, window, format, out } => {
            commands::patch(&pool, &input, patch, window, format, &out)
        }
        Command::Merge { dir, out } => commands::merge(&dir, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Err(CliError::Input(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Ok(Err(CliError::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(1),
    }
}
