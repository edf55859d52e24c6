//! Small procedurally generated datasets on disk, laid out like the real
//! ones: PNG frames under `<root>/<split>/<class>/` and N-MNIST style `.bin`
//! event files under the same structure.
//!
//! Each class is a bright square at a class-specific grid position. Frames
//! show the square with intensity noise; event files record the square's
//! edges while it makes three small saccade-like moves, which is roughly how
//! the real event datasets were recorded from static images.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_io::{write_nmnist_file, Event, EventStream, Polarity};

#[derive(Debug, Clone)]
pub struct ToySpec {
    pub classes: usize,
    /// Square sensor and image side length.
    pub size: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            classes: 4,
            size: 16,
            train_per_class: 8,
            test_per_class: 4,
            seed: 0,
        }
    }
}

impl ToySpec {
    fn cell(&self, class: usize) -> (usize, usize, usize) {
        let grid = (self.classes as f64).sqrt().ceil() as usize;
        let cell = self.size / grid;
        let side = (cell / 2).max(1);
        let (gy, gx) = (class / grid, class % grid);
        (gy * cell + (cell - side) / 2, gx * cell + (cell - side) / 2, side)
    }

    /// Binary mask of class `class` offset by `(dy, dx)`.
    fn mask(&self, class: usize, dy: i64, dx: i64) -> Vec<bool> {
        let (y0, x0, side) = self.cell(class);
        let n = self.size as i64;
        let mut m = vec![false; self.size * self.size];
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                let (yy, xx) = (y0 as i64 + y + dy, x0 as i64 + x + dx);
                if (0..n).contains(&yy) && (0..n).contains(&xx) {
                    m[(yy * n + xx) as usize] = true;
                }
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.size < 4 {
            return Err(Error::Argument(
                "toy datasets need >= 2 classes and size >= 4".into(),
            ));
        }
        let grid = (self.classes as f64).sqrt().ceil() as usize;
        if self.size / grid < 2 {
            return Err(Error::Argument(format!(
                "size {} too small for {} classes",
                self.size, self.classes
            )));
        }
        Ok(())
    }
}

fn jitter(rng: &mut ChaCha8Rng) -> (i64, i64) {
    (rng.random_range(-1..=1), rng.random_range(-1..=1))
}

/// Writes `<root>/{train_split,test_split}/<class>/<i>.png`.
pub fn write_frame_tree(root: &Path, spec: &ToySpec, splits: [&str; 2]) -> Result<()> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (split, per_class) in splits.iter().zip([spec.train_per_class, spec.test_per_class]) {
        for class in 0..spec.classes {
            let dir = root.join(split).join(class.to_string());
            fs::create_dir_all(&dir)?;
            for i in 0..per_class {
                let (dy, dx) = jitter(&mut rng);
                let mask = spec.mask(class, dy, dx);
                let pixels: Vec<u8> = mask
                    .iter()
                    .map(|&on| {
                        let base = if on { 220.0 } else { 20.0 };
                        (base + rng.random_range(-20.0..20.0f32)).clamp(0.0, 255.0) as u8
                    })
                    .collect();
                let img = GrayImage::from_raw(spec.size as u32, spec.size as u32, pixels)
                    .expect("buffer matches image size");
                img.save(dir.join(format!("{i:05}.png")))
                    .map_err(|e| Error::Encode {
                        index: i,
                        reason: e.to_string(),
                    })?;
            }
        }
    }
    Ok(())
}

/// Event stream of the class square moving through three saccades.
pub fn toy_event_stream(spec: &ToySpec, class: usize, rng: &mut ChaCha8Rng) -> EventStream {
    let (jy, jx) = jitter(rng);
    let path = [(0, 0), (1, 1), (0, 2), (0, 0)];
    let mut stream = EventStream::new(spec.size as u32, spec.size as u32);
    let mut t = 0u64;
    for pair in path.windows(2) {
        let before = spec.mask(class, jy + pair[0].0, jx + pair[0].1);
        let after = spec.mask(class, jy + pair[1].0, jx + pair[1].1);
        for (i, (&b, &a)) in before.iter().zip(&after).enumerate() {
            if a == b || rng.random_bool(0.1) {
                continue;
            }
            t += rng.random_range(1..50);
            stream.events.push(Event {
                x: (i % spec.size) as u32,
                y: (i / spec.size) as u32,
                t,
                p: if a { Polarity::On } else { Polarity::Off },
            });
        }
        t += 1000;
    }
    // sparse background noise
    for _ in 0..rng.random_range(0..4) {
        t += rng.random_range(1..50);
        stream.events.push(Event {
            x: rng.random_range(0..spec.size as u32),
            y: rng.random_range(0..spec.size as u32),
            t,
            p: if rng.random_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            },
        });
    }
    stream
}

/// Writes `<root>/{train_split,test_split}/<class>/<i>.bin` with a sensor of
/// `spec.size × spec.size`.
pub fn write_event_tree(root: &Path, spec: &ToySpec, splits: [&str; 2]) -> Result<()> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    for (split, per_class) in splits.iter().zip([spec.train_per_class, spec.test_per_class]) {
        for class in 0..spec.classes {
            let dir = root.join(split).join(class.to_string());
            fs::create_dir_all(&dir)?;
            for i in 0..per_class {
                let stream = toy_event_stream(spec, class, &mut rng);
                write_nmnist_file(&dir.join(format!("{i:05}.bin")), &stream)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::{load_manifest, read_nmnist_file, SensorDims};

    #[test]
    fn trees_have_expected_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ToySpec::default();
        write_frame_tree(&dir.path().join("f"), &spec, ["train", "test"]).unwrap();
        write_event_tree(&dir.path().join("e"), &spec, ["Train", "Test"]).unwrap();
        let m = load_manifest(&dir.path().join("f"), "train").unwrap();
        assert_eq!(m.len(), 32);
        assert_eq!(m.class_histogram(), vec![8; 4]);
        let m = load_manifest(&dir.path().join("e"), "Test").unwrap();
        assert_eq!(m.len(), 16);
        let s = read_nmnist_file(
            &m.records[0].path,
            SensorDims {
                width: 16,
                height: 16,
            },
        )
        .unwrap();
        assert!(!s.is_empty());
    }

    #[test]
    fn events_follow_the_class_square() {
        let spec = ToySpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = toy_event_stream(&spec, 3, &mut rng);
        let (y0, x0, side) = spec.cell(3);
        let near = s
            .events
            .iter()
            .filter(|e| {
                (e.y as usize + 2 >= y0 && (e.y as usize) < y0 + side + 4)
                    && (e.x as usize + 2 >= x0 && (e.x as usize) < x0 + side + 4)
            })
            .count();
        assert!(near * 10 >= s.len() * 8, "{near} of {}", s.len());
    }
}
