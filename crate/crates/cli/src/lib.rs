//! Library side of the `daec2` binary: configuration, data wiring and the
//! four commands. Each command returns a [`CliError`] that maps onto the exit
//! codes 1 (usage or configuration) and 2 (runtime failure).

pub mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use daec2::data::{Dataset, Domain};
use daec2::eval::{
    ablation_grid, evaluate, export_embeddings, run_ablation, run_slug, AblationRow, AblationRun,
    EvalPath, EvalReport,
};
use daec2::event_io::{load_manifest, SensorDims};
use daec2::nets::NetworkConfig;
use daec2::trainer::{load_checkpoint, train, EvalSet, TrainConfig, TrainData, TrainOutcome};
use toml::{Table, Value};

pub use config::{parse_config, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<daec2::Error> for CliError {
    fn from(e: daec2::Error) -> Self {
        use daec2::Error as E;
        match e {
            E::Config(_) | E::Manifest { .. } | E::Policy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// One `<root>/<split>` tree.
#[derive(Debug, Clone)]
pub struct Source {
    pub root: PathBuf,
    pub split: String,
}

/// Loads a split, keeping a seeded subset of at most `max` samples (0 = all).
pub fn load_split(
    network: &NetworkConfig,
    domain: Domain,
    source: &Source,
    sensor: SensorDims,
    max: usize,
    seed: u64,
) -> Result<Dataset, CliError> {
    let mut m = load_manifest(&source.root, &source.split)?;
    if m.is_empty() {
        return Err(CliError::Usage(format!(
            "no samples under {}",
            source.root.join(&source.split).display()
        )));
    }
    if max > 0 {
        m = m.subset(max, seed);
    }
    let [h, w] = network.input_size;
    Ok(match domain {
        Domain::Frame => Dataset::load_frames(&m, network.frame_channels, h, w)?,
        Domain::Event => Dataset::load_events(&m.with_sensor(sensor), h, w)?,
    })
}

/// Training sets plus validation splits (held out from training) and test
/// splits for both domains.
pub fn load_train_data(config: &RunConfig) -> Result<TrainData, CliError> {
    let d = &config.data;
    let net = &config.network;
    let seed = config.train.seed;
    let src = |root: &Path, split: &str| Source {
        root: root.to_path_buf(),
        split: split.to_string(),
    };
    let mut frames = load_split(
        net,
        Domain::Frame,
        &src(&d.frame_root, &d.frame_train_split),
        d.sensor(),
        d.max_train,
        seed,
    )?;
    let mut events = load_split(
        net,
        Domain::Event,
        &src(&d.event_root, &d.event_train_split),
        d.sensor(),
        d.max_train,
        seed,
    )?;
    let mut eval = Vec::new();
    if d.val_fraction > 0.0 {
        let (f_rest, f_val) = frames.split(d.val_fraction, seed)?;
        let (e_rest, e_val) = events.split(d.val_fraction, seed)?;
        frames = f_rest;
        events = e_rest;
        for (name, data) in [("val_frame", f_val), ("val_event", e_val)] {
            if !data.is_empty() {
                eval.push(EvalSet {
                    name: name.into(),
                    path: EvalPath::Native,
                    data,
                });
            }
        }
    }
    let test_frames = load_split(
        net,
        Domain::Frame,
        &src(&d.frame_root, &d.frame_test_split),
        d.sensor(),
        d.max_test,
        seed,
    )?;
    let test_events = load_split(
        net,
        Domain::Event,
        &src(&d.event_root, &d.event_test_split),
        d.sensor(),
        d.max_test,
        seed,
    )?;
    eval.push(EvalSet {
        name: "test_frame".into(),
        path: EvalPath::Native,
        data: test_frames,
    });
    if d.events_as_frames {
        eval.push(EvalSet {
            name: "test_event_as_frame".into(),
            path: EvalPath::EventsAsFrames,
            data: test_events.clone(),
        });
    }
    eval.push(EvalSet {
        name: "test_event".into(),
        path: EvalPath::Native,
        data: test_events,
    });
    Ok(TrainData { frames, events, eval })
}

fn write_resolved(config: &RunConfig, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    Ok(())
}

/// Trains into `<output.dir>/<output.run_name>`, which receives the resolved
/// config before any data is loaded.
pub fn cmd_train(config: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome, CliError> {
    let run_dir = config.run_dir();
    write_resolved(config, &run_dir)?;
    let data = load_train_data(config)?;
    log::info!(
        "training on {} frames and {} event samples into {}",
        data.frames.len(),
        data.events.len(),
        run_dir.display()
    );
    Ok(train(&config.network, &config.train, &data, &run_dir, resume)?)
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub source: Source,
    pub domain: Domain,
    pub events_as_frames: bool,
    pub sensor: SensorDims,
    pub batch_size: usize,
    pub max: usize,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let bundle = ck.to_bundle()?;
    let data = load_split(&ck.network, args.domain, &args.source, args.sensor, args.max, ck.train.seed)?;
    let path = if args.events_as_frames {
        EvalPath::EventsAsFrames
    } else {
        EvalPath::Native
    };
    let mut report = evaluate(&bundle, &data, path, args.batch_size.max(1))?;
    report.epoch = Some(ck.epoch);
    Ok(report)
}

pub struct ExportArgs {
    pub checkpoint: PathBuf,
    pub frames: Option<Source>,
    pub events: Option<Source>,
    pub out: PathBuf,
    pub force: bool,
    pub sensor: SensorDims,
    pub batch_size: usize,
    pub max: usize,
}

/// Returns the number of rows written.
pub fn cmd_export_embeddings(args: &ExportArgs) -> Result<usize, CliError> {
    if args.frames.is_none() && args.events.is_none() {
        return Err(CliError::Usage("nothing to export: give frame and/or event data".into()));
    }
    if args.out.exists() && !args.force {
        return Err(CliError::Usage(format!(
            "{} exists; pass --force to overwrite",
            args.out.display()
        )));
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    let bundle = ck.to_bundle()?;
    let mut sets = Vec::new();
    for (domain, source) in [(Domain::Frame, &args.frames), (Domain::Event, &args.events)] {
        if let Some(s) = source {
            sets.push(load_split(&ck.network, domain, s, args.sensor, args.max, ck.train.seed)?);
        }
    }
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    let refs: Vec<&Dataset> = sets.iter().collect();
    let dump = export_embeddings(&bundle, &refs, &args.out, args.batch_size.max(1))?;
    Ok(dump.rows.len())
}

/// Where ablation runs come from.
pub enum Grid {
    Preset(String),
    File(PathBuf),
}

/// Grid file: one `[[run]]` table per configuration, each with a `name` and
/// an optional `[run.train]` table of overrides on the base train config.
pub fn parse_grid(text: &str, base: &TrainConfig) -> Result<Vec<AblationRun>, CliError> {
    let mut doc: Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid grid file: {e}")))?;
    let runs = match doc.remove("run") {
        None => Vec::new(),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(CliError::Usage("`run` must be an array of tables".into())),
    };
    if let Some(key) = doc.keys().next() {
        return Err(CliError::Usage(format!("unknown grid key `{key}`")));
    }
    let base_table = Table::try_from(base)
        .map_err(|e| CliError::Runtime(format!("cannot serialize train config: {e}")))?;
    let mut out = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        let Value::Table(mut t) = run else {
            return Err(CliError::Usage(format!("run[{i}] is not a table")));
        };
        let name = match t.remove("name") {
            Some(Value::String(s)) if !s.is_empty() => s,
            _ => return Err(CliError::Usage(format!("run[{i}] needs a non-empty name"))),
        };
        let overrides = match t.remove("train") {
            None => Table::new(),
            Some(Value::Table(o)) => o,
            Some(_) => return Err(CliError::Usage(format!("run[{i}].train must be a table"))),
        };
        if let Some(key) = t.keys().next() {
            return Err(CliError::Usage(format!("unknown grid key `run[{i}].{key}`")));
        }
        let merged = config::merge(base_table.clone(), overrides, &format!("run[{i}].train"))?;
        let config: TrainConfig = Value::Table(merged)
            .try_into()
            .map_err(|e| CliError::Usage(format!("run[{i}]: {e}")))?;
        config.validate()?;
        out.push(AblationRun { name, config });
    }
    Ok(out)
}

pub fn plan_ablation(config: &RunConfig, grid: &Grid) -> Result<Vec<AblationRun>, CliError> {
    let runs = match grid {
        Grid::Preset(p) => ablation_grid(&config.train, p)?,
        Grid::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read grid {}: {e}", path.display()))
            })?;
            parse_grid(&text, &config.train)?
        }
    };
    if runs.is_empty() {
        return Err(CliError::Usage("ablation grid is empty".into()));
    }
    let mut slugs: Vec<String> = runs.iter().map(|r| run_slug(&r.name)).collect();
    slugs.sort();
    if slugs.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("ablation run names must be distinct".into()));
    }
    Ok(runs)
}

/// Trains every run under `<output.dir>/<output.run_name>/<slug>` and writes
/// `ablation.csv` next to them.
pub fn cmd_ablate(config: &RunConfig, runs: &[AblationRun]) -> Result<Vec<AblationRow>, CliError> {
    let out = config.run_dir();
    write_resolved(config, &out)?;
    for run in runs {
        let mut resolved = config.clone();
        resolved.train = run.config.clone();
        resolved.output.dir = out.clone();
        resolved.output.run_name = run_slug(&run.name);
        write_resolved(&resolved, &resolved.run_dir())?;
    }
    let data = load_train_data(config)?;
    Ok(run_ablation(&config.network, runs, &data, &out)?)
}
