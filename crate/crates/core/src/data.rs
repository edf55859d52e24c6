//! In-memory datasets of preprocessed samples and batch assembly.

use candle_core::{Device, Tensor};
use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_io::{read_nmnist_file, DatasetManifest, NMNIST_SENSOR};
use crate::representation::{events_to_histogram, load_frame, normalize_event_frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Frame,
    Event,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Frame => "frame",
            Domain::Event => "event",
        }
    }
}

/// Preprocessed `(C, H, W)` samples with their labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub domain: Domain,
    pub samples: Vec<Array3<f32>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        domain: Domain,
        samples: Vec<Array3<f32>>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.dim() != first.dim()) {
                return Err(Error::Shape {
                    context: "Dataset::new",
                    expected: first.shape().to_vec(),
                    actual: bad.shape().to_vec(),
                });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Label {
                label,
                classes: class_count,
            });
        }
        Ok(Self {
            domain,
            samples,
            labels,
            class_count,
        })
    }

    /// Decodes every image of `manifest` to `(channels, h, w)` in [0, 1].
    pub fn load_frames(manifest: &DatasetManifest, channels: usize, h: usize, w: usize) -> Result<Self> {
        let mut samples = Vec::with_capacity(manifest.len());
        for r in &manifest.records {
            samples.push(load_frame(&r.path, channels, h, w)?.data);
        }
        let labels = manifest.records.iter().map(|r| r.label).collect();
        Self::new(Domain::Frame, samples, labels, manifest.class_count)
    }

    /// Decodes every event file of `manifest` into max-normalized ON/OFF
    /// histograms of size `(h, w)`.
    pub fn load_events(manifest: &DatasetManifest, h: usize, w: usize) -> Result<Self> {
        let sensor = manifest.sensor.unwrap_or(NMNIST_SENSOR);
        let mut samples = Vec::with_capacity(manifest.len());
        for r in &manifest.records {
            let stream = read_nmnist_file(&r.path, sensor).map_err(|e| Error::Ingestion {
                path: r.path.clone(),
                reason: e.to_string(),
            })?;
            let hist = events_to_histogram(&stream, h, w)?;
            samples.push(normalize_event_frame(&hist).data);
        }
        let labels = manifest.records.iter().map(|r| r.label).collect();
        Self::new(Domain::Event, samples, labels, manifest.class_count)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(C, H, W)` of every sample.
    pub fn sample_shape(&self) -> Option<[usize; 3]> {
        self.samples.first().map(|s| {
            let (c, h, w) = s.dim();
            [c, h, w]
        })
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            domain: self.domain,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Seeded random split into `(rest, held_out)` with `round(len · fraction)`
    /// held-out samples; both parts keep the original order.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Argument(format!(
                "split fraction must be in [0, 1), got {fraction}"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_held = (self.len() as f64 * fraction).round() as usize;
        let (held, rest) = idx.split_at(n_held);
        let (mut held, mut rest) = (held.to_vec(), rest.to_vec());
        held.sort_unstable();
        rest.sort_unstable();
        Ok((self.select(&rest), self.select(&held)))
    }

    /// Stacks the selected samples into an `(N, C, H, W)` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let views: Vec<&Array3<f32>> = indices.iter().map(|&i| &self.samples[i]).collect();
        stack(&views)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Stacks equally shaped `(C, H, W)` arrays into an `(N, C, H, W)` tensor.
pub fn stack(samples: &[&Array3<f32>]) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Argument("cannot stack an empty batch".into()))?;
    let (c, h, w) = first.dim();
    let mut flat = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.dim() != (c, h, w) {
            return Err(Error::Shape {
                context: "stack",
                expected: vec![c, h, w],
                actual: s.shape().to_vec(),
            });
        }
        flat.extend(s.iter().copied());
    }
    Ok(Tensor::from_vec(flat, (samples.len(), c, h, w), &Device::Cpu)?)
}

/// Event histogram as a frame-shaped input: ON and OFF summed, rescaled to a
/// maximum of 1 and repeated over `channels`.
pub fn events_as_frame(sample: &Array3<f32>, channels: usize) -> Array3<f32> {
    let mut sum = sample.sum_axis(Axis(0));
    let max = sum.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        sum.mapv_inplace(|v| v / max);
    }
    let (h, w) = sum.dim();
    let plane = sum.into_shape_with_order((1, h, w)).expect("2-D plane");
    let views = vec![plane.view(); channels];
    ndarray::concatenate(Axis(0), &views).expect("equal plane shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn toy(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Array3::from_elem((2, 3, 3), i as f32))
            .collect();
        let labels = (0..n).map(|i| i % 3).collect();
        Dataset::new(Domain::Event, samples, labels, 3).unwrap()
    }

    #[test]
    fn batch_stacks_in_index_order() {
        let d = toy(5);
        let t = d.batch(&[4, 1]).unwrap();
        assert_eq!(t.dims(), &[2, 2, 3, 3]);
        let v: Vec<f32> = t.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(v[0], 4.0);
        assert_eq!(v[18], 1.0);
        assert_eq!(d.batch_labels(&[4, 1]), vec![1, 1]);
        assert!(d.batch(&[]).is_err());
    }

    #[test]
    fn split_partitions() {
        let d = toy(20);
        let (rest, held) = d.split(0.25, 3).unwrap();
        assert_eq!(held.len(), 5);
        assert_eq!(rest.len(), 15);
        let mut all: Vec<f32> = rest
            .samples
            .iter()
            .chain(&held.samples)
            .map(|s| s[[0, 0, 0]])
            .collect();
        all.sort_by(f32::total_cmp);
        assert_eq!(all, (0..20).map(|i| i as f32).collect::<Vec<_>>());
        let (_, again) = d.split(0.25, 3).unwrap();
        assert_eq!(again.labels, held.labels);
    }

    #[test]
    fn rejects_bad_labels() {
        let s = vec![Array3::zeros((1, 2, 2))];
        assert!(Dataset::new(Domain::Frame, s, vec![3], 3).is_err());
    }

    #[test]
    fn events_as_frame_sums_polarities() {
        let mut e = Array3::<f32>::zeros((2, 2, 2));
        e[[0, 0, 0]] = 1.0;
        e[[1, 0, 0]] = 1.0;
        e[[1, 1, 1]] = 0.5;
        let f = events_as_frame(&e, 3);
        assert_eq!(f.dim(), (3, 2, 2));
        assert_eq!(f[[2, 0, 0]], 1.0);
        assert_eq!(f[[0, 1, 1]], 0.25);
    }
}
