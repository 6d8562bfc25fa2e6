//! The `scatvox` command line: argument parsing, config files, thread setup
//! and error reporting. Subcommands live in [`commands`].

pub mod commands;
pub mod config;
pub mod formats;
pub mod report;

use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

/// Exit-code classes: validation errors exit 1, runtime errors exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<scatvox::Error> for CliError {
    fn from(e: scatvox::Error) -> Self {
        use scatvox::Error::*;
        match e {
            RankDeficient(_) | DegenerateTarget | IdenticalSamples | TooFewDifferences(_) | ZeroSignalVariance(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scatvox", version, about = "Scattering features, voxel encoding and decoding")]
pub struct Cli {
    /// Worker threads (falls back to SCATTER_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// key=value file supplying flags; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a filter bank and report its Littlewood-Paley coverage.
    Filters(FiltersArgs),
    /// Scattering coefficients for a set of images.
    Scatter(ScatterArgs),
    /// Nested leave-one-session-out ridge encoding.
    Encode(EncodeArgs),
    /// Block-wise cross-validated logistic decoding.
    Decode(DecodeArgs),
    /// Voxelwise comparison of two encoding results.
    Compare(CompareArgs),
    /// Synthetic textures and planted voxel responses.
    Synth(SynthArgs),
    /// The full synthetic study in one run.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FilterShape {
    #[arg(long = "sigma0")]
    pub sigma0: Option<f64>,
    #[arg(long = "xi0")]
    pub xi0: Option<f64>,
    #[arg(long = "slant")]
    pub slant: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FiltersArgs {
    #[arg(long = "J")]
    pub scales: usize,
    #[arg(long = "L")]
    pub orientations: usize,
    /// WxH
    #[arg(long)]
    pub size: String,
    #[command(flatten)]
    pub shape: FilterShape,
    /// lo,hi radii in radians/pixel (default xi0/2^J,xi0)
    #[arg(long)]
    pub annulus: Option<String>,
    /// Write |psi_hat| of each filter as a raster here.
    #[arg(long)]
    pub spectra_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScatterArgs {
    /// Image directory, list file, or image files (.ras or .pgm).
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub images: Vec<PathBuf>,
    #[arg(long = "M", default_value_t = 2)]
    pub depth: usize,
    #[arg(long = "J", default_value_t = 5)]
    pub scales: usize,
    #[arg(long = "L", default_value_t = 4)]
    pub orientations: usize,
    #[command(flatten)]
    pub shape: FilterShape,
    /// features.bin or features.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selection {
    PerVoxel,
    Shared,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    /// Comma-separated penalties (default ten values 1e-3..1e5).
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = Selection::PerVoxel)]
    pub selection: Selection,
    /// Keep only paths up to this layer (1 gives the M=1 model from M=2 features).
    #[arg(long)]
    pub max_layer: Option<u8>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvUnit {
    Block,
    Session,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// sessions.csv giving each image's session and block.
    #[arg(long)]
    pub blocks: PathBuf,
    /// Held-out unit of the outer loop.
    #[arg(long, value_enum, default_value_t = CvUnit::Block)]
    pub cv_unit: CvUnit,
    /// Comma-separated penalties (default 1e-2..1e2, five values).
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub inner_folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Baseline encoding result.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub top_k: usize,
    /// map.csv,scatter.csv
    #[arg(long)]
    pub out: String,
    /// Also write a summary with the top-k Wilcoxon test.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Texture corpus JSON (default: the study corpus).
    #[arg(long)]
    pub textures: Option<PathBuf>,
    /// Plant spec JSON (default: 50 voxels per kind at SNR 1).
    #[arg(long)]
    pub plant: Option<PathBuf>,
    /// Seed for whichever spec is defaulted.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long = "M", default_value_t = 2)]
    pub depth: usize,
    #[arg(long = "J", default_value_t = 5)]
    pub scales: usize,
    #[arg(long = "L", default_value_t = 4)]
    pub orientations: usize,
    #[arg(long, default_value_t = 6)]
    pub sessions: usize,
    #[arg(long, default_value_t = 36)]
    pub blocks_per_session: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long = "J", default_value_t = 5)]
    pub scales: usize,
    #[arg(long = "L", default_value_t = 4)]
    pub orientations: usize,
    #[arg(long, default_value_t = 6)]
    pub sessions: usize,
    #[arg(long, default_value_t = 36)]
    pub blocks_per_session: usize,
    /// Voxels per plant kind.
    #[arg(long, default_value_t = 50)]
    pub per_kind: usize,
    #[arg(long, default_value_t = 1.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = CvUnit::Session)]
    pub decode_unit: CvUnit,
}

pub fn command() -> clap::Command {
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd.build();
    cmd
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(2);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Config-file tokens go right after the subcommand so explicit flags override them.
fn expand_config(cmd: &clap::Command, argv: &[String]) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(argv) else { return Ok(argv.to_vec()) };
    let sub = cmd
        .find_subcommand(&argv[1])
        .ok_or_else(|| CliError::Invalid(format!("unknown subcommand '{}'", argv[1])))?;
    let mut out = argv[..2].to_vec();
    out.extend(config::config_tokens(sub, &path)?);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SCATTER_THREADS") {
            Ok(s) if !s.trim().is_empty() => Some(
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Invalid(format!("SCATTER_THREADS='{s}' is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Invalid("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn run(argv: &[String]) -> Result<(), CliError> {
    let cmd = command();
    let argv = expand_config(&cmd, argv)?;
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(CliError::Invalid(e.to_string())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Invalid(e.to_string()))?;
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let resolved = config::resolved_config(cmd.find_subcommand(name).expect("known subcommand"), sub_matches);
    let work = || commands::dispatch(&cli.command, &resolved);
    match thread_count(cli.threads)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Runs `scatvox` on `argv` (program name first) and returns the exit code.
pub fn run_subcommand(argv: &[String]) -> i32 {
    if argv.len() < 2 {
        eprintln!("error: missing subcommand");
        eprintln!("{}", command().render_usage());
        eprintln!("subcommands: filters, scatter, encode, decode, compare, synth, reproduce");
        return 1;
    }
    match run(argv) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.trim_start_matches("error: ").trim_end();
            eprintln!("error: {msg}");
            e.exit_code()
        }
    }
}
