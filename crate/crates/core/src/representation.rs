//! Fixed-shape tensors for the networks: 2-channel event histograms and
//! intensity frames, both laid out as (channels, height, width).

use std::path::Path;

use image::DynamicImage;
use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::event_io::EventStream;

/// Channels of an event histogram: ON counts then OFF counts.
pub const EVENT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub data: Array3<f32>,
    pub label: Option<usize>,
}

impl EventFrame {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            data: Array3::zeros((EVENT_CHANNELS, height, width)),
            label: None,
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn total(&self) -> f32 {
        self.data.sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    /// Intensities in [0, 1].
    pub data: Array3<f32>,
    pub label: Option<usize>,
}

/// Collapses the time axis into per-pixel ON/OFF counts, optionally resampled
/// bilinearly to `(out_h, out_w)`.
pub fn events_to_histogram(stream: &EventStream, out_h: usize, out_w: usize) -> Result<EventFrame> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Argument(format!(
            "histogram size must be nonzero, got {out_h}x{out_w}"
        )));
    }
    stream.validate()?;
    let (h, w) = (stream.height as usize, stream.width as usize);
    let mut counts = Array3::<f32>::zeros((EVENT_CHANNELS, h, w));
    for e in &stream.events {
        counts[[e.p.channel(), e.y as usize, e.x as usize]] += 1.0;
    }
    let data = if (h, w) == (out_h, out_w) {
        counts
    } else {
        resize_bilinear(&counts, out_h, out_w)
    };
    Ok(EventFrame {
        data,
        label: stream.label,
    })
}

/// Scales a frame so its maximum entry is 1. All-zero frames pass through.
pub fn normalize_event_frame(frame: &EventFrame) -> EventFrame {
    let max = frame.data.iter().copied().fold(0.0f32, f32::max);
    let mut out = frame.clone();
    if max > 0.0 && max.is_finite() {
        out.data.mapv_inplace(|v| v / max);
    }
    out
}

/// Converts a decoded image into a `(channels, out_h, out_w)` tensor in [0, 1].
/// Grayscale sources are replicated when three channels are requested.
pub fn prepare_frame(
    image: &DynamicImage,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Result<FrameImage> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Argument("empty image".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::Argument(format!(
            "frame size must be nonzero, got {out_h}x{out_w}"
        )));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let data = match channels {
        1 => {
            let luma = image.to_luma32f();
            Array3::from_shape_vec((1, h, w), luma.into_raw())
                .expect("luma buffer matches image dimensions")
        }
        3 => {
            let rgb = image.to_rgb32f();
            Array3::from_shape_vec((h, w, 3), rgb.into_raw())
                .expect("rgb buffer matches image dimensions")
                .permuted_axes([2, 0, 1])
                .as_standard_layout()
                .to_owned()
        }
        c => {
            return Err(Error::Argument(format!(
                "frames must have 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut data = if (h, w) == (out_h, out_w) {
        data
    } else {
        resize_bilinear(&data, out_h, out_w)
    };
    data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(FrameImage { data, label: None })
}

/// Reads an image file from disk and prepares it.
pub fn load_frame(path: &Path, channels: usize, out_h: usize, out_w: usize) -> Result<FrameImage> {
    let image = image::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    prepare_frame(&image, channels, out_h, out_w)
}

/// Half-pixel-centred bilinear resampling of every channel.
pub fn resize_bilinear(src: &Array3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (c, in_h, in_w) = src.dim();
    let rows = sample_positions(in_h, out_h);
    let cols = sample_positions(in_w, out_w);
    let mut out = Array3::<f32>::zeros((c, out_h, out_w));
    for (ch, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
        for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                let top = src[[ch, y0, x0]] * (1.0 - fx) + src[[ch, y0, x1]] * fx;
                let bottom = src[[ch, y1, x0]] * (1.0 - fx) + src[[ch, y1, x1]] * fx;
                plane[[oy, ox]] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::{Event, Polarity};
    use image::{GrayImage, Luma};
    use proptest::prelude::*;

    fn ev(x: u32, y: u32, p: Polarity) -> Event {
        Event { x, y, t: 0, p }
    }

    #[test]
    fn counts_events_per_polarity() {
        let mut s = EventStream::new(4, 4);
        s.events = vec![
            ev(1, 2, Polarity::On),
            ev(1, 2, Polarity::On),
            ev(0, 0, Polarity::Off),
        ];
        let f = events_to_histogram(&s, 4, 4).unwrap();
        assert_eq!(f.data[[0, 2, 1]], 2.0);
        assert_eq!(f.data[[1, 0, 0]], 1.0);
        assert_eq!(f.total(), 3.0);
    }

    #[test]
    fn empty_stream_gives_zero_frame() {
        let f = events_to_histogram(&EventStream::new(34, 34), 28, 28).unwrap();
        assert_eq!(f.data.dim(), (2, 28, 28));
        assert!(f.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_size_rejected() {
        assert!(events_to_histogram(&EventStream::new(4, 4), 0, 4).is_err());
    }

    #[test]
    fn out_of_bounds_stream_rejected() {
        let mut s = EventStream::new(4, 4);
        s.events.push(ev(4, 0, Polarity::On));
        assert!(matches!(
            events_to_histogram(&s, 4, 4),
            Err(Error::Bounds { .. })
        ));
    }

    #[test]
    fn normalize_scales_by_max() {
        let mut f = EventFrame::zeros(2, 2);
        f.data[[0, 0, 0]] = 4.0;
        f.data[[1, 1, 1]] = 2.0;
        let n = normalize_event_frame(&f);
        assert_eq!(n.data[[0, 0, 0]], 1.0);
        assert_eq!(n.data[[1, 1, 1]], 0.5);
        let z = EventFrame::zeros(3, 3);
        assert_eq!(normalize_event_frame(&z), z);
    }

    proptest! {
        #[test]
        fn normalize_max_is_one_and_idempotent(
            vals in prop::collection::vec(0.0f32..50.0, 2 * 5 * 5)
        ) {
            let f = EventFrame {
                data: Array3::from_shape_vec((2, 5, 5), vals).unwrap(),
                label: None,
            };
            let n = normalize_event_frame(&f);
            let max = n.data.iter().copied().fold(0.0f32, f32::max);
            if f.total() > 0.0 {
                prop_assert_eq!(max, 1.0);
            }
            prop_assert_eq!(normalize_event_frame(&n), n.clone());
            prop_assert!(n.data.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn prepare_mnist_sized_frame() {
        let img = GrayImage::from_fn(28, 28, |x, y| Luma([((x + y) * 4) as u8]));
        let f = prepare_frame(&DynamicImage::ImageLuma8(img), 1, 28, 28).unwrap();
        assert_eq!(f.data.dim(), (1, 28, 28));
        assert!(f.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(f.data[[0, 1, 2]], 12.0 / 255.0);
    }

    #[test]
    fn white_image_is_all_ones() {
        let img = GrayImage::from_pixel(20, 20, Luma([255]));
        let f = prepare_frame(&DynamicImage::ImageLuma8(img), 1, 16, 16).unwrap();
        assert!(f.data.iter().all(|&v| v == 1.0));
        let rgb = prepare_frame(&DynamicImage::ImageLuma8(GrayImage::from_pixel(4, 4, Luma([255]))), 3, 4, 4)
            .unwrap();
        assert_eq!(rgb.data.dim(), (3, 4, 4));
        assert!(rgb.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identity_resize_preserves_mean() {
        let img = GrayImage::from_fn(28, 28, |x, y| Luma([((x * 7 + y * 13) % 256) as u8]));
        let dynimg = DynamicImage::ImageLuma8(img.clone());
        let f = prepare_frame(&dynimg, 1, 28, 28).unwrap();
        let src_mean = img.pixels().map(|p| p.0[0] as f64 / 255.0).sum::<f64>() / (28.0 * 28.0);
        let out_mean = f.data.iter().map(|&v| v as f64).sum::<f64>() / (28.0 * 28.0);
        assert!((src_mean - out_mean).abs() <= 0.02 * src_mean);
    }

    #[test]
    fn unreadable_image_is_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(load_frame(&p, 1, 28, 28), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn bilinear_downsample_of_constant_is_constant() {
        let src = Array3::from_elem((2, 34, 34), 3.0f32);
        let out = resize_bilinear(&src, 28, 28);
        assert!(out.iter().all(|&v| (v - 3.0).abs() < 1e-6));
    }
}
