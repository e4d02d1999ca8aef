//! `mvfuse`: command-line front end for multi-view hand pose fusion.

mod commands;
mod frames;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mvfuse_core::io::{RunConfig, CONFIG_KEYS};

/// Failure classes, mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// One or more frames failed; the rest were written (exit 1).
    Frames { failed: usize, total: usize },
    /// Anything else that stopped the run (exit 1).
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Frames { failed, total } => write!(f, "{failed} of {total} frames failed"),
            CliError::Run(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Frames { .. } | CliError::Run(_) => 1,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn config_keys_help() -> String {
    let mut s = String::from("Configuration keys (config file lines `key = value`, or `--set key=value`):\n");
    for (key, doc) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<22} {doc}\n"));
    }
    s.push_str("\nEnvironment: MVFUSE_THREADS caps the number of worker threads.\n");
    s.push_str("Exit codes: 0 success, 1 frame or run error, 2 configuration error.");
    s
}

#[derive(Parser, Debug)]
#[command(name = "mvfuse", version, about = "Multi-view projection and heat-map fusion for 3D hand pose", after_help = config_keys_help())]
struct Cli {
    /// Flat `key = value` configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable. Applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Input file or directory (meaning depends on the subcommand).
    #[arg(short, long, global = true)]
    input: Option<PathBuf>,

    /// Output file or directory (meaning depends on the subcommand).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Pose prior (MVPP file).
    #[arg(long, global = true)]
    prior: Option<PathBuf>,

    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of prior principal components.
    #[arg(long, global = true)]
    components: Option<usize>,

    /// Depth file adapter: canonical or msra_like (experimental).
    #[arg(long, global = true)]
    adapter: Option<String>,

    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BaselineKind {
    /// XY heat-map plus depth lookup.
    Single,
    /// Averaged per-view 2D estimates.
    Coarse,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Depth frame(s) to OBB and three projected views. Input: a depth file
    /// or a directory of them; output: a directory with one folder per frame.
    Project,
    /// Write a synthetic scene directory: per-frame heat-maps, views and OBB,
    /// the generator prior and ground-truth joints.
    Synth {
        /// Number of frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Additive Gaussian heat-map noise.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Per-frame probability of a spurious hotspot.
        #[arg(long)]
        hotspot_probability: Option<f64>,
    },
    /// Fit a PCA pose prior to a joints text file.
    FitPrior,
    /// Fine fusion over a scene directory; writes joints, per-frame
    /// diagnostics and a summary.
    Fuse,
    /// Run a baseline estimator over a scene directory.
    Baseline {
        #[arg(value_enum)]
        method: BaselineKind,
    },
    /// Score predicted joints against ground truth.
    Eval {
        /// Predicted joints text file.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth joints text file.
        #[arg(long)]
        gt: PathBuf,
        /// Method name recorded in the report.
        #[arg(long, default_value = "fine")]
        method: String,
    },
    /// Combine several eval reports into a comparison table.
    Report {
        /// `report.json` files written by `eval`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Fine-fusion error against prior size on synthetic scenes.
    Sweep {
        /// Prior sizes to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = (1..=12).map(|i| 5 * i).collect::<Vec<usize>>())]
        components_list: Vec<usize>,
        /// Use noisy heat-maps (per the noise configuration keys).
        #[arg(long)]
        noisy: bool,
        /// Number of frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) =
            item.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config.set(key.trim(), value).map_err(CliError::Config)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let path = |p: &PathBuf| p.display().to_string();
    if let Some(p) = &cli.input {
        flags.push(("input", path(p)));
    }
    if let Some(p) = &cli.output {
        flags.push(("output", path(p)));
    }
    if let Some(p) = &cli.prior {
        flags.push(("prior", path(p)));
    }
    if let Some(s) = cli.seed {
        flags.push(("seed", s.to_string()));
    }
    if let Some(m) = cli.components {
        flags.push(("components", m.to_string()));
    }
    if let Some(a) = &cli.adapter {
        flags.push(("adapter", a.clone()));
    }
    match &cli.command {
        Command::Synth { frames, noise_sigma, hotspot_probability } => {
            if let Some(n) = frames {
                flags.push(("frames", n.to_string()));
            }
            if let Some(s) = noise_sigma {
                flags.push(("noise_sigma", s.to_string()));
            }
            if let Some(p) = hotspot_probability {
                flags.push(("hotspot_probability", p.to_string()));
            }
        }
        Command::Sweep { frames: Some(n), .. } => flags.push(("frames", n.to_string())),
        _ => {}
    }
    for (key, value) in flags {
        config.set(key, &value).map_err(CliError::Config)?;
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

fn init_threads() -> CliResult {
    let Ok(value) = std::env::var("MVFUSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MVFUSE_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Run(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult {
    init_threads()?;
    let config = load_config(&cli)?;
    log::debug!("config hash {}", config.hash());
    match cli.command {
        Command::Project => commands::project(&config),
        Command::Synth { .. } => commands::synth(&config),
        Command::FitPrior => commands::fit_prior(&config),
        Command::Fuse => commands::estimate(&config, mvfuse_core::pipeline::Method::Fine),
        Command::Baseline { method } => commands::estimate(
            &config,
            match method {
                BaselineKind::Single => mvfuse_core::pipeline::Method::Single,
                BaselineKind::Coarse => mvfuse_core::pipeline::Method::Coarse,
            },
        ),
        Command::Eval { pred, gt, method } => commands::eval(&config, &pred, &gt, &method),
        Command::Report { reports } => commands::report(&config, &reports),
        Command::Sweep { components_list, noisy, .. } => commands::sweep(&config, &components_list, noisy),
        Command::ShowConfig => {
            print!("{}", config.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvfuse: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
