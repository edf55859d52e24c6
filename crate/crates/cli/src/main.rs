use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daec2::data::Domain;
use daec2::event_io::SensorDims;
use daec2_cli::{
    cmd_ablate, cmd_eval, cmd_export_embeddings, cmd_train, parse_config, plan_ablation, CliError,
    EvalArgs, ExportArgs, Grid, Source,
};

/// Frame-to-event domain adaptation: training, evaluation, embedding export
/// and ablation sweeps.
#[derive(Parser)]
#[command(name = "daec2", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a run config.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Print the accuracy of a checkpoint on one split as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset root containing `<split>/<class>/` directories.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long, value_enum)]
        domain: DomainArg,
        /// Score event data through the frame encoder.
        #[arg(long)]
        events_as_frames: bool,
        #[command(flatten)]
        common: LoadArgs,
    },
    /// Write pooled content features of frame and/or event data to CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, requires = "frame_split")]
        frame_root: Option<PathBuf>,
        #[arg(long, requires = "frame_root")]
        frame_split: Option<String>,
        #[arg(long, requires = "event_split")]
        event_root: Option<PathBuf>,
        #[arg(long, requires = "event_root")]
        event_split: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: LoadArgs,
    },
    /// Train and evaluate a grid of configurations.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Built-in grid: losses, components or all.
        #[arg(long, conflicts_with = "grid")]
        preset: Option<String>,
        /// TOML file of `[[run]]` tables.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Print the planned runs and exit.
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.lr=3e-4`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct LoadArgs {
    /// Event sensor as WIDTHxHEIGHT.
    #[arg(long, default_value = "34x34", value_parser = parse_sensor)]
    sensor: SensorDims,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Load at most this many samples; 0 loads all.
    #[arg(long, default_value_t = 0)]
    max: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Frame,
    Event,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Frame => Domain::Frame,
            DomainArg::Event => Domain::Event,
        }
    }
}

fn parse_sensor(s: &str) -> Result<SensorDims, String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: u32 = w.parse().map_err(|_| "bad width")?;
    let h: u32 = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("sensor dimensions must be positive".into());
    }
    Ok(SensorDims { width: w, height: h })
}

fn source(root: Option<PathBuf>, split: Option<String>) -> Option<Source> {
    Some(Source {
        root: root?,
        split: split?,
    })
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, resume } => {
            let cfg = parse_config(&config.config, &config.overrides)?;
            let out = cmd_train(&cfg, resume.as_deref())?;
            if let Some(last) = out.history.last() {
                for (k, v) in &last.accuracy {
                    println!("{k}: {v:.4}");
                }
            }
            println!("checkpoint: {}", out.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            root,
            split,
            domain,
            events_as_frames,
            common,
        } => {
            let report = cmd_eval(&EvalArgs {
                checkpoint,
                source: Source { root, split },
                domain: domain.into(),
                events_as_frames,
                sensor: common.sensor,
                batch_size: common.batch_size,
                max: common.max,
            })?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{json}");
        }
        Command::ExportEmbeddings {
            checkpoint,
            frame_root,
            frame_split,
            event_root,
            event_split,
            out,
            force,
            common,
        } => {
            let rows = cmd_export_embeddings(&ExportArgs {
                checkpoint,
                frames: source(frame_root, frame_split),
                events: source(event_root, event_split),
                out: out.clone(),
                force,
                sensor: common.sensor,
                batch_size: common.batch_size,
                max: common.max,
            })?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Ablate {
            config,
            preset,
            grid,
            dry_run,
        } => {
            let cfg = parse_config(&config.config, &config.overrides)?;
            let grid = match grid {
                Some(p) => Grid::File(p),
                None => Grid::Preset(preset.unwrap_or_else(|| "losses".into())),
            };
            let runs = plan_ablation(&cfg, &grid)?;
            if dry_run {
                for r in &runs {
                    println!("{}\t{}", daec2::eval::run_slug(&r.name), r.name);
                }
                return Ok(());
            }
            for row in cmd_ablate(&cfg, &runs)? {
                println!("{}: {:?}", row.name, row.accuracy);
            }
            println!("results: {}", cfg.run_dir().join("ablation.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if daec2::deterministic_requested() {
        daec2::enable_deterministic_mode();
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
