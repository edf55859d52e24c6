//! Single-file checkpoints: a safetensors container holding parameters,
//! buffers and optimizer moments, with configs, epoch, RNG state and step
//! counters in the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;
use safetensors::{Dtype, SafeTensors};

use super::optim::{GroupState, OptimState};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::nets::{Group, ModelBundle, NetworkConfig};

pub const FORMAT_VERSION: u32 = 1;

const PARAM_PREFIX: &str = "param/";
const OPTIM_PREFIX: &str = "optim/";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub optim: OptimState,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Snapshot of a bundle's tensors (copied, so later training does not alias).
    pub fn capture(
        bundle: &ModelBundle,
        train: &TrainConfig,
        epoch: usize,
        rng: &ChaCha8Rng,
        optim: &OptimState,
    ) -> Result<Self> {
        let params = bundle
            .store
            .named()
            .map(|(n, v)| Ok((n.to_string(), v.as_tensor().copy()?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            version: FORMAT_VERSION,
            network: bundle.config.clone(),
            train: train.clone(),
            epoch,
            rng: rng.clone(),
            optim: optim.clone(),
            params,
        })
    }

    /// Rebuilds the bundle this checkpoint was taken from.
    pub fn to_bundle(&self) -> Result<ModelBundle> {
        let bundle = ModelBundle::new(&self.network, self.train.seed)?;
        self.restore_into(&bundle)?;
        Ok(bundle)
    }

    /// Copies parameters into an existing bundle with an identical config.
    pub fn restore_into(&self, bundle: &ModelBundle) -> Result<()> {
        if bundle.config != self.network {
            return Err(Error::Checkpoint(format!(
                "network config mismatch: checkpoint has {:?}, target has {:?}",
                self.network, bundle.config
            )));
        }
        bundle.store.load(&self.params)
    }
}

fn group_by_name(name: &str) -> Result<Group> {
    Group::ALL
        .into_iter()
        .find(|g| g.name() == name)
        .ok_or_else(|| Error::Checkpoint(format!("unknown parameter group `{name}`")))
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for (name, t) in &ck.params {
        tensors.push((format!("{PARAM_PREFIX}{name}"), t));
    }
    for (group, state) in &ck.optim.groups {
        for (kind, map) in [("m", &state.m), ("v", &state.v)] {
            for (name, t) in map {
                tensors.push((format!("{OPTIM_PREFIX}{}/{kind}/{name}", group.name()), t));
            }
        }
    }
    let steps: BTreeMap<&str, u64> = ck
        .optim
        .groups
        .iter()
        .map(|(g, s)| (g.name(), s.step))
        .collect();
    let metadata: HashMap<String, String> = [
        ("format_version", ck.version.to_string()),
        ("network", json(&ck.network)?),
        ("train", json(&ck.train)?),
        ("epoch", ck.epoch.to_string()),
        ("rng", json(&ck.rng)?),
        ("optim_steps", json(&steps)?),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    safetensors::serialize_to_file(tensors, Some(metadata), &tmp)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn parse<T: serde::de::DeserializeOwned>(meta: &HashMap<String, String>, key: &str) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))?;
    serde_json::from_str(raw).map_err(|e| Error::Checkpoint(format!("metadata `{key}`: {e}")))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let bad = |e: safetensors::SafeTensorError| {
        Error::Checkpoint(format!("{}: {e}", path.display()))
    };
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(bad)?;
    let meta = header
        .metadata()
        .clone()
        .ok_or_else(|| Error::Checkpoint(format!("{}: no metadata", path.display())))?;
    let version: u32 = parse(&meta, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let network: NetworkConfig = parse(&meta, "network")?;
    let train: TrainConfig = parse(&meta, "train")?;
    let epoch: usize = parse(&meta, "epoch")?;
    let rng: ChaCha8Rng = parse(&meta, "rng")?;
    let steps: BTreeMap<String, u64> = parse(&meta, "optim_steps")?;

    let mut optim = OptimState::default();
    for (name, step) in steps {
        optim.groups.insert(
            group_by_name(&name)?,
            GroupState {
                step,
                ..GroupState::default()
            },
        );
    }

    let st = SafeTensors::deserialize(&bytes).map_err(bad)?;
    let mut params = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has dtype {:?}, expected F32",
                view.dtype()
            )));
        }
        let values: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::from_vec(values, view.shape(), &Device::Cpu)?;
        if let Some(p) = name.strip_prefix(PARAM_PREFIX) {
            params.insert(p.to_string(), tensor);
        } else if let Some(rest) = name.strip_prefix(OPTIM_PREFIX) {
            let mut parts = rest.splitn(3, '/');
            let (g, kind, pname) = match (parts.next(), parts.next(), parts.next()) {
                (Some(g), Some(k), Some(p)) => (g, k, p),
                _ => return Err(Error::Checkpoint(format!("malformed tensor name `{name}`"))),
            };
            let state = optim
                .groups
                .get_mut(&group_by_name(g)?)
                .ok_or_else(|| Error::Checkpoint(format!("no step counter for group `{g}`")))?;
            let map = match kind {
                "m" => &mut state.m,
                "v" => &mut state.v,
                _ => return Err(Error::Checkpoint(format!("malformed tensor name `{name}`"))),
            };
            map.insert(pname.to_string(), tensor);
        } else {
            return Err(Error::Checkpoint(format!("unexpected tensor `{name}`")));
        }
    }
    Ok(Checkpoint {
        version,
        network,
        train,
        epoch,
        rng,
        optim,
        params,
    })
}
