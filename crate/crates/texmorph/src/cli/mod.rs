//! Command-line surface. [`run`] executes a parsed command line and writes
//! its report to the given stream; the binary maps the outcome to an exit
//! status (0 ok, 1 check failed, 2 usage or input error).

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::{Error, Result};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "texmorph", version, about = "Morphable face model rendering, fitting and texture recovery")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write procedural training meshes, labels and the mouth contour.
    Template(TemplateArgs),
    /// Build a morphable model from meshes in correspondence.
    BuildModel(BuildModelArgs),
    /// Render a face with a texture under SH lighting; also writes the
    /// coverage mask and the inner-mouth mask (`<out>.mouth.png`).
    Render(RenderArgs),
    /// Generate a synthetic ground-truth corpus.
    #[command(alias = "corpus")]
    Sample(SampleArgs),
    /// Fit model parameters to an image.
    Fit(FitArgs),
    /// Recover, inpaint and relight a UV texture from posed views.
    Reconstruct(ReconstructArgs),
    /// Paste a rendered face over a background, keeping the mouth open.
    Composite(CompositeArgs),
    /// Run a paired synthetic ablation and report pass/fail.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients on toy scenes.
    Gradcheck(GradcheckArgs),
    /// Image similarity metrics between two images.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct TemplateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Neutral identities; each also gets one expressive mesh.
    #[arg(long, default_value_t = 40)]
    pub identities: usize,
}

#[derive(Debug, Args)]
pub struct BuildModelArgs {
    /// Directory of OBJ meshes; `labels.txt` marks expressive meshes
    /// (`file expressive neutral-file`), unlisted meshes are neutral.
    #[arg(long, required_unless_present = "procedural")]
    pub samples: Option<PathBuf>,
    /// Build from procedural samples instead of a directory.
    #[arg(long, conflicts_with = "samples")]
    pub procedural: bool,
    #[arg(long, default_value_t = 40)]
    pub identities: usize,
    #[arg(long)]
    pub ks: usize,
    #[arg(long)]
    pub ke: usize,
    /// Mouth contour, one vertex index per line.
    #[arg(long, required_unless_present = "procedural")]
    pub mouth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub texture: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lighting file overriding the params' lighting.
    #[arg(long)]
    pub light: Option<PathBuf>,
    /// Coverage mask output; defaults to `<out>.mask.png`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// TOML sample spec; built-in defaults without it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub texture: PathBuf,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub init: PathBuf,
    /// Fitted params file.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV; defaults to `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub w_reg: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub images: Vec<PathBuf>,
    /// One params file per image.
    #[arg(long, value_delimiter = ',', required_unless_present = "fit", conflicts_with = "fit")]
    pub params: Vec<PathBuf>,
    /// Fit each view (texture optimized jointly) instead of reading params.
    #[arg(long)]
    pub fit: bool,
    /// Landmark files for `--fit`, one per image.
    #[arg(long, value_delimiter = ',', requires = "fit")]
    pub landmarks: Vec<PathBuf>,
    /// Initial params for `--fit`; a frontal mean face otherwise.
    #[arg(long, requires = "fit")]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub texsize: usize,
    #[arg(long)]
    pub lambda_tv: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    #[arg(long)]
    pub face: PathBuf,
    #[arg(long)]
    pub facemask: PathBuf,
    #[arg(long)]
    pub mouthmask: PathBuf,
    #[arg(long)]
    pub background: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Feather radius in pixels (0 = hard edge).
    #[arg(long)]
    pub feather: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationMode {
    /// Frontal-only versus multi-yaw texture coverage.
    Rotations,
    /// No face pixels inside the mouth mask.
    Mouth,
    /// Known lighting versus constant lighting during recovery.
    Relight,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub mode: AblationMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of random toy scenes.
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    /// Add an edge-on triangle whose coverage flips under perturbation.
    #[arg(long)]
    pub grazing: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Also write the report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Restrict the metrics to set pixels.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Append `metric=value` lines.
    #[arg(long)]
    pub machine: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::CheckFailed => 1,
        }
    }
}

pub(crate) struct Context {
    pub seed: Option<u64>,
    pub config: Config,
}

/// Runs `cli` on a pool of `--threads` workers.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    let config = Config::load(cli.config.as_deref())?;
    let ctx = Context {
        seed: cli.seed,
        config,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker threads: {e}")))?;
    let (outcome, text) = pool.install(|| commands::dispatch(&ctx, &cli.command))?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(std::path::Path::new("<stdout>"), e))?;
    Ok(outcome)
}
