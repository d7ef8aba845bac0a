//! `ifsgen`: sample IFS codes, render them, stream training batches and
//! reproduce the sampler studies and timing tables.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ifsgen", version, about = "Fractal pre-training image generator")]
struct Cli {
    /// Master seed; all randomness flows from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Render worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset of IFS codes and write the codes file and manifest.
    Sample(SampleArgs),
    /// Render one code from a codes file to PNG.
    Render(RenderArgs),
    /// Stream training batches in the FBAT format.
    Stream(StreamArgs),
    /// Run a sampler study and print a CSV report.
    Validate(ValidateArgs),
    /// Time the sampling and rendering stages and print a CSV table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 1000)]
    classes: usize,

    /// Sampled systems per class, before augmentation.
    #[arg(long, default_value_t = 1)]
    codes_per_class: usize,

    /// Allowed system sizes N, drawn uniformly.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    sizes: Vec<usize>,

    /// Scaled copies added per sampled system.
    #[arg(long, default_value_t = 0)]
    augment: usize,

    /// Range of the augmentation scale factor.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.8, 1.1])]
    augment_gamma: Vec<f64>,

    /// Codes file to write.
    #[arg(long, short)]
    out: PathBuf,

    /// Manifest to write (default: the codes path with a `.json` extension).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct RenderOptions {
    /// Image side in pixels.
    #[arg(long)]
    side: Option<usize>,

    /// Chaos game iterations.
    #[arg(long)]
    iterations: Option<usize>,

    /// Manifest whose render settings to use (defaults otherwise).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Codes file.
    #[arg(long)]
    codes: PathBuf,

    /// Flat code index, counting classes in order.
    #[arg(long, default_value_t = 0)]
    index: usize,

    /// PNG to write.
    #[arg(long, short)]
    out: PathBuf,

    /// Binary rendering of the bare attractor: no patch, color or background.
    #[arg(long)]
    grayscale: bool,

    /// Skip the background texture.
    #[arg(long)]
    no_background: bool,

    #[command(flatten)]
    render: RenderOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StreamMode {
    Multiclass,
    MultiInstance,
}

#[derive(Debug, Args)]
struct StreamArgs {
    /// Codes file.
    #[arg(long)]
    codes: PathBuf,

    #[arg(long, value_enum, default_value_t = StreamMode::Multiclass)]
    mode: StreamMode,

    /// Images per batch.
    #[arg(long, default_value_t = 256)]
    batch: usize,

    /// Number of batches.
    #[arg(long, default_value_t = 1)]
    count: usize,

    /// Sink: a file path, `-` for stdout, or `tcp:HOST:PORT`.
    #[arg(long, short, default_value = "-")]
    out: String,

    /// Sprite cache capacity.
    #[arg(long)]
    cache_capacity: Option<usize>,

    /// Background cache capacity.
    #[arg(long)]
    background_capacity: Option<usize>,

    /// Side of cached sprites in multi-instance mode.
    #[arg(long)]
    sprite_side: Option<usize>,

    /// Most fractals per multi-instance image.
    #[arg(long)]
    n_max: Option<usize>,

    /// Images between cache refreshes in multi-instance mode.
    #[arg(long)]
    refresh_every: Option<usize>,

    #[command(flatten)]
    render: RenderOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    /// Non-contractive fractions of naively sampled systems per N.
    Naive,
    /// Histogram of σ-factors.
    SigmaFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FactorOrigin {
    Sampled,
    Naive,
    File,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Study::Naive)]
    study: Study,

    /// Systems per N.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,

    #[arg(long, default_value_t = 2)]
    n_min: usize,

    #[arg(long, default_value_t = 8)]
    n_max: usize,

    /// σ-factor source.
    #[arg(long, value_enum, default_value_t = FactorOrigin::Sampled)]
    source: FactorOrigin,

    /// Codes file for `--source file`.
    #[arg(long)]
    codes: Option<PathBuf>,

    /// Histogram bins.
    #[arg(long, default_value_t = 30)]
    bins: usize,

    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Timed repetitions per stage.
    #[arg(long, default_value_t = 1000)]
    reps: usize,

    /// Untimed repetitions before each stage.
    #[arg(long, default_value_t = 50)]
    warmup: usize,

    #[arg(long, default_value_t = 256)]
    side: usize,

    #[arg(long, default_value_t = 100_000)]
    iterations: usize,

    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::error!("cannot start {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Sample(args) => commands::sample(cli.seed, args),
        Command::Render(args) => commands::render(cli.seed, args),
        Command::Stream(args) => commands::stream(cli.seed, args),
        Command::Validate(args) => commands::validate(cli.seed, args),
        Command::Bench(args) => commands::bench(cli.seed, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
