//! N-MNIST address-event records and on-disk dataset manifests.
//!
//! A record is five bytes: `x`, `y`, then a 24-bit big-endian word whose top
//! bit is the polarity (1 = ON) and whose remaining 23 bits are the timestamp
//! in microseconds.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 5;
pub const MAX_TIMESTAMP: u32 = (1 << 23) - 1;

/// Sensor resolution of the ATIS recordings in N-MNIST.
pub const NMNIST_SENSOR: SensorDims = SensorDims {
    width: 34,
    height: 34,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    /// Histogram channel: ON is 0, OFF is 1.
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// Microseconds.
    pub t: u64,
    pub p: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDims {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u32,
    pub height: u32,
    pub label: Option<usize>,
}

impl EventStream {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            events: Vec::new(),
            width,
            height,
            label: None,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks every event against the sensor bounds.
    pub fn validate(&self) -> Result<()> {
        for (index, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::Bounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    /// Shifts timestamps so the first event starts at zero.
    pub fn rebased(mut self) -> Self {
        if let Some(t0) = self.events.iter().map(|e| e.t).min() {
            for e in &mut self.events {
                e.t -= t0;
            }
        }
        self
    }
}

/// Decodes a complete N-MNIST `.bin` file.
pub fn decode_nmnist_bin(bytes: &[u8], width: u32, height: u32) -> Result<EventStream> {
    let remaining = bytes.len() % RECORD_BYTES;
    if remaining != 0 {
        return Err(Error::Decode {
            offset: bytes.len() - remaining,
            remaining,
        });
    }
    let mut stream = EventStream::new(width, height);
    stream.events.reserve(bytes.len() / RECORD_BYTES);
    for (index, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let x = rec[0] as u32;
        let y = rec[1] as u32;
        if x >= width || y >= height {
            return Err(Error::Bounds {
                index,
                x,
                y,
                width,
                height,
            });
        }
        let p = if rec[2] & 0x80 != 0 {
            Polarity::On
        } else {
            Polarity::Off
        };
        let t = (((rec[2] & 0x7f) as u64) << 16) | ((rec[3] as u64) << 8) | rec[4] as u64;
        stream.events.push(Event { x, y, t, p });
    }
    Ok(stream)
}

/// Inverse of [`decode_nmnist_bin`].
pub fn encode_nmnist_bin(stream: &EventStream) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stream.events.len() * RECORD_BYTES);
    for (index, e) in stream.events.iter().enumerate() {
        if e.x > 255 || e.y > 255 {
            return Err(Error::Encode {
                index,
                reason: format!("coordinate ({}, {}) exceeds 8 bits", e.x, e.y),
            });
        }
        if e.t > MAX_TIMESTAMP as u64 {
            return Err(Error::Encode {
                index,
                reason: format!("timestamp {} exceeds 23 bits", e.t),
            });
        }
        let t = e.t as u32;
        let pol = if e.p == Polarity::On { 0x80 } else { 0 };
        out.extend_from_slice(&[
            e.x as u8,
            e.y as u8,
            pol | ((t >> 16) as u8 & 0x7f),
            (t >> 8) as u8,
            t as u8,
        ]);
    }
    Ok(out)
}

pub fn read_nmnist_file(path: &Path, dims: SensorDims) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_nmnist_bin(&bytes, dims.width, dims.height)
}

pub fn write_nmnist_file(path: &Path, stream: &EventStream) -> Result<()> {
    fs::write(path, encode_nmnist_bin(stream)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub path: PathBuf,
    pub label: usize,
}

/// Labeled file list for one split of a `<root>/<split>/<class_index>/<file>` tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: String,
    pub records: Vec<Record>,
    pub class_count: usize,
    pub sensor: Option<SensorDims>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_sensor(mut self, dims: SensorDims) -> Self {
        self.sensor = Some(dims);
        self
    }

    /// Number of records per class index.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Deterministic random subset of at most `n` records, kept in path order.
    pub fn subset(&self, n: usize, seed: u64) -> Self {
        if n >= self.records.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        Self {
            records: idx.into_iter().map(|i| self.records[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Scans `<root>/<split>/<class_index>/*`. Class directories must be named by
/// their integer index; records are ordered lexicographically by path.
pub fn load_manifest(root: &Path, split: &str) -> Result<DatasetManifest> {
    let split_dir = root.join(split);
    if !split_dir.is_dir() {
        return Err(Error::Manifest {
            path: split_dir,
            reason: "split directory not found".into(),
        });
    }
    let manifest_err = |path: &Path, e: std::io::Error| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };

    let mut class_dirs = Vec::new();
    for entry in fs::read_dir(&split_dir).map_err(|e| manifest_err(&split_dir, e))? {
        let entry = entry.map_err(|e| manifest_err(&split_dir, e))?;
        let path = entry.path();
        if !path.is_dir() || is_hidden(&path) {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let label: usize = name.parse().map_err(|_| Error::Manifest {
            path: path.clone(),
            reason: format!("class directory `{name}` is not an integer index"),
        })?;
        class_dirs.push((label, path));
    }
    let class_count = class_dirs.iter().map(|(l, _)| l + 1).max().unwrap_or(0);

    let mut records = Vec::new();
    for (label, dir) in &class_dirs {
        for entry in fs::read_dir(dir).map_err(|e| manifest_err(dir, e))? {
            let path = entry.map_err(|e| manifest_err(dir, e))?.path();
            if path.is_file() && !is_hidden(&path) {
                records.push(Record {
                    path,
                    label: *label,
                });
            }
        }
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));

    Ok(DatasetManifest {
        split: split.to_string(),
        records,
        class_count,
        sensor: None,
    })
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}
