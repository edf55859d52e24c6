//! Run configuration. A TOML file with `[data]`, `[network]`, `[train]` and
//! `[output]` sections is merged key by key over [`RunConfig::default`], so a
//! config only needs the keys it changes. Keys absent from the defaults are
//! rejected by their dotted path.

use std::fs;
use std::path::{Path, PathBuf};

use daec2::event_io::SensorDims;
use daec2::nets::NetworkConfig;
use daec2::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled frames, `<frame_root>/<split>/<class>/*.png`.
    pub frame_root: PathBuf,
    /// Event recordings, `<event_root>/<split>/<class>/*.bin`.
    pub event_root: PathBuf,
    pub frame_train_split: String,
    pub frame_test_split: String,
    pub event_train_split: String,
    pub event_test_split: String,
    /// `[width, height]` of the recording sensor.
    pub event_sensor: [u32; 2],
    /// Share of each training split held out for validation; 0 disables.
    pub val_fraction: f64,
    /// Caps on samples loaded per split; 0 loads everything.
    pub max_train: usize,
    pub max_test: usize,
    /// Also score test events through the frame encoder.
    pub events_as_frames: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            frame_root: PathBuf::from("data/mnist"),
            event_root: PathBuf::from("data/nmnist"),
            frame_train_split: "train".into(),
            frame_test_split: "test".into(),
            event_train_split: "Train".into(),
            event_test_split: "Test".into(),
            event_sensor: [34, 34],
            val_fraction: 0.1,
            max_train: 0,
            max_test: 0,
            events_as_frames: false,
        }
    }
}

impl DataConfig {
    pub fn sensor(&self) -> SensorDims {
        SensorDims {
            width: self.event_sensor[0],
            height: self.event_sensor[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Runs are written to `<dir>/<run_name>`.
    pub run_name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            run_name: "daec2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(&self.output.run_name)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.network.validate()?;
        self.train.validate()?;
        let d = &self.data;
        if !(0.0..1.0).contains(&d.val_fraction) {
            return Err(CliError::Usage(format!(
                "data.val_fraction must be in [0, 1), got {}",
                d.val_fraction
            )));
        }
        if d.event_sensor.contains(&0) {
            return Err(CliError::Usage("data.event_sensor must be positive".into()));
        }
        for (root, split) in [
            (&d.frame_root, &d.frame_train_split),
            (&d.frame_root, &d.frame_test_split),
            (&d.event_root, &d.event_train_split),
            (&d.event_root, &d.event_test_split),
        ] {
            let dir = root.join(split);
            if !dir.is_dir() {
                return Err(CliError::Usage(format!(
                    "dataset directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if self.output.run_name.is_empty() {
            return Err(CliError::Usage("output.run_name is empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }
}

/// Reads, merges, applies `section.key=value` overrides and validates.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let config = resolve(&text, overrides)?;
    config.validate()?;
    Ok(config)
}

/// Merge and override without validation.
pub fn resolve(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut user: Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    for o in overrides {
        apply_override(&mut user, o)?;
    }
    let defaults = Table::try_from(RunConfig::default())
        .map_err(|e| CliError::Runtime(format!("cannot serialize defaults: {e}")))?;
    let merged = merge(defaults, user, "")?;
    Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

/// Overlays `user` on `base`. Every user key must exist in `base`.
pub fn merge(mut base: Table, user: Table, prefix: &str) -> Result<Table, CliError> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (base.remove(&key), value) {
            (None, _) => {
                return Err(CliError::Usage(format!("unknown configuration key `{path}`")));
            }
            (Some(Value::Table(b)), Value::Table(u)) => {
                base.insert(key, Value::Table(merge(b, u, &path)?));
            }
            (Some(Value::Table(_)), _) => {
                return Err(CliError::Usage(format!("`{path}` must be a section")));
            }
            (Some(_), v) => {
                base.insert(key, v);
            }
        }
    }
    Ok(base)
}

/// `section.key=value`; the value is read as TOML, falling back to a string.
fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{path}`")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override `{path}` crosses a value")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_defaults() {
        assert_eq!(resolve("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = resolve("[train]\nlr = 0.01\n[train.weights]\nlambda4 = 0.5\n", &[]).unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.weights.lambda4, 0.5);
        assert_eq!(c.train.weights.lambda1, 1.0);
        assert_eq!(c.train.epochs, TrainConfig::default().epochs);
        assert_eq!(c.network, NetworkConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("[train]\nlrr = 1.0\n", "train.lrr"),
            ("[bogus]\n", "bogus"),
            ("[train.augment_frame.crop]\nsize = [1, 1]\nwidth = 3\n", "train.augment_frame.crop.width"),
        ] {
            match resolve(text, &[]) {
                Err(CliError::Usage(m)) => assert!(m.contains(key), "{m}"),
                other => panic!("expected an error for {key}, got {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_win_over_file_values() {
        let c = resolve(
            "[train]\nlr = 0.01\n",
            &[
                "train.lr=0.5".into(),
                "output.run_name=abc".into(),
                "train.selfsup_metric=l2".into(),
                "network.input_size=[16, 16]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.output.run_name, "abc");
        assert_eq!(c.train.selfsup_metric, daec2::losses::SelfSupMetric::L2);
        assert_eq!(c.network.input_size, [16, 16]);
        assert!(resolve("", &["train.nope=1".into()]).is_err());
        assert!(resolve("", &["train.lr".into()]).is_err());
    }

    #[test]
    fn out_of_range_lr_is_rejected() {
        for lr in ["0.0", "-1e-3", "nan", "inf"] {
            let c = resolve(&format!("[train]\nlr = {lr}\n"), &[]).unwrap();
            match c.validate() {
                Err(CliError::Usage(m)) => assert!(m.contains("lr"), "{m}"),
                other => panic!("lr {lr}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(resolve("[train]\nepochs = \"many\"\n", &[]).is_err());
        assert!(resolve("train = 3\n", &[]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = resolve("[train]\nlr = 0.003\ngrad_clip = 5.0\n", &[]).unwrap();
        let back = resolve(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(back, c);
    }
}
