//! Stochastic views for the augmentation-invariance term.
//!
//! Frames get jitter, blur, resize, affine, crop and flip. Event histograms
//! get integer shift, flip, resize and crop. Every draw comes from an explicit
//! caller-owned generator, so a fixed seed reproduces the same views.

use ndarray::{s, Array3, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::{resize_bilinear, EventFrame, FrameImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    pub enabled: bool,
    /// Brightness factor drawn from `[1 - b, 1 + b]`.
    pub brightness: f32,
    /// Contrast factor drawn from `[1 - c, 1 + c]`.
    pub contrast: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blur {
    pub enabled: bool,
    pub sigma: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resize {
    pub enabled: bool,
    pub scale: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub enabled: bool,
    /// Rotation drawn from `[-degrees, degrees]`.
    pub degrees: f32,
    /// Translation as a fraction of the image size per axis.
    pub translate: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crop {
    pub enabled: bool,
    /// `[height, width]` of the random window, resized back to the input size.
    pub size: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flip {
    pub enabled: bool,
    pub probability: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub enabled: bool,
    pub max_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub jitter: Jitter,
    pub blur: Blur,
    pub resize: Resize,
    pub affine: Affine,
    pub crop: Crop,
    pub flip: Flip,
    pub shift: Shift,
    /// Use the unaugmented input as the first view instead of a second draw.
    pub use_original_as_view_a: bool,
}

impl AugmentationPolicy {
    /// Every transform off: augmentation is the identity.
    pub fn disabled() -> Self {
        Self {
            jitter: Jitter {
                enabled: false,
                brightness: 0.4,
                contrast: 0.4,
            },
            blur: Blur {
                enabled: false,
                sigma: [0.1, 2.0],
            },
            resize: Resize {
                enabled: false,
                scale: [0.8, 1.2],
            },
            affine: Affine {
                enabled: false,
                degrees: 10.0,
                translate: 0.1,
            },
            crop: Crop {
                enabled: false,
                size: [24, 24],
            },
            flip: Flip {
                enabled: false,
                probability: 0.5,
            },
            shift: Shift {
                enabled: false,
                max_pixels: 3,
            },
            use_original_as_view_a: false,
        }
    }

    /// Jitter, blur, resize, affine, crop and flip.
    pub fn frame_default() -> Self {
        let mut p = Self::disabled();
        p.jitter.enabled = true;
        p.blur.enabled = true;
        p.resize.enabled = true;
        p.affine.enabled = true;
        p.crop.enabled = true;
        p.flip.enabled = true;
        p
    }

    /// Shift, flip, resize and crop.
    pub fn event_default() -> Self {
        let mut p = Self::disabled();
        p.shift.enabled = true;
        p.flip.enabled = true;
        p.resize.enabled = true;
        p.crop.enabled = true;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Policy(msg));
        let range_ok = |r: [f32; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.jitter.enabled
            && !(self.jitter.brightness >= 0.0 && self.jitter.contrast >= 0.0)
        {
            return bad("jitter strengths must be nonnegative".into());
        }
        if self.blur.enabled && !(range_ok(self.blur.sigma) && self.blur.sigma[0] > 0.0) {
            return bad(format!("blur sigma range {:?} invalid", self.blur.sigma));
        }
        if self.resize.enabled && !(range_ok(self.resize.scale) && self.resize.scale[0] > 0.0) {
            return bad(format!("resize scale range {:?} invalid", self.resize.scale));
        }
        if self.affine.enabled
            && !(self.affine.degrees >= 0.0 && (0.0..=1.0).contains(&self.affine.translate))
        {
            return bad("affine degrees must be >= 0 and translate in [0, 1]".into());
        }
        if self.crop.enabled && self.crop.size.contains(&0) {
            return bad("crop size must be nonzero".into());
        }
        if self.flip.enabled && !(0.0..=1.0).contains(&self.flip.probability) {
            return bad(format!(
                "flip probability {} outside [0, 1]",
                self.flip.probability
            ));
        }
        Ok(())
    }
}

/// Two independently augmented views of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair<T> {
    pub view_a: T,
    pub view_b: T,
}

/// Inputs that have a domain-appropriate augmentation.
pub trait Augment: Sized + Clone {
    fn augment(&self, policy: &AugmentationPolicy, rng: &mut ChaCha8Rng) -> Result<Self>;
}

impl Augment for FrameImage {
    fn augment(&self, policy: &AugmentationPolicy, rng: &mut ChaCha8Rng) -> Result<Self> {
        augment_frame(self, policy, rng)
    }
}

impl Augment for EventFrame {
    fn augment(&self, policy: &AugmentationPolicy, rng: &mut ChaCha8Rng) -> Result<Self> {
        augment_events(self, policy, rng)
    }
}

pub fn augment_frame(
    image: &FrameImage,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<FrameImage> {
    policy.validate()?;
    let mut data = geometric(&image.data, policy, true, rng)?;
    if policy.jitter.enabled {
        let b = uniform(rng, (1.0 - policy.jitter.brightness).max(0.0), 1.0 + policy.jitter.brightness);
        let c = uniform(rng, (1.0 - policy.jitter.contrast).max(0.0), 1.0 + policy.jitter.contrast);
        data.mapv_inplace(|v| v * b);
        let mean = data.mean().unwrap_or(0.0);
        data.mapv_inplace(|v| (v - mean) * c + mean);
    }
    if policy.blur.enabled {
        let sigma = uniform(rng, policy.blur.sigma[0], policy.blur.sigma[1]);
        data = gaussian_blur(&data, sigma);
    }
    data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(FrameImage {
        data,
        label: image.label,
    })
}

pub fn augment_events(
    frame: &EventFrame,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<EventFrame> {
    policy.validate()?;
    let mut data = frame.data.clone();
    if policy.shift.enabled && policy.shift.max_pixels > 0 {
        let m = policy.shift.max_pixels as i64;
        let dx = rng.random_range(-m..=m);
        let dy = rng.random_range(-m..=m);
        data = shift(&data, dx, dy);
    }
    let mut data = geometric(&data, policy, false, rng)?;
    data.mapv_inplace(|v| v.max(0.0));
    Ok(EventFrame {
        data,
        label: frame.label,
    })
}

/// Draws two independent sub-streams from `rng` and augments once with each.
pub fn make_view_pair<T: Augment>(
    input: &T,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<ViewPair<T>> {
    let seed_a = rng.next_u64();
    let seed_b = rng.next_u64();
    let view_a = if policy.use_original_as_view_a {
        input.clone()
    } else {
        input.augment(policy, &mut ChaCha8Rng::seed_from_u64(seed_a))?
    };
    let view_b = input.augment(policy, &mut ChaCha8Rng::seed_from_u64(seed_b))?;
    Ok(ViewPair { view_a, view_b })
}

/// Resize, affine, crop and flip, in that order; shape preserving. Affine is
/// frame-only.
fn geometric(
    src: &Array3<f32>,
    policy: &AugmentationPolicy,
    with_affine: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Array3<f32>> {
    let (_, h, w) = src.dim();
    if policy.crop.enabled && (policy.crop.size[0] > h || policy.crop.size[1] > w) {
        return Err(Error::Policy(format!(
            "crop {:?} larger than {h}x{w} input",
            policy.crop.size
        )));
    }
    let mut data = src.clone();
    if policy.resize.enabled {
        let scale = uniform(rng, policy.resize.scale[0], policy.resize.scale[1]);
        data = rescale_centered(&data, scale);
    }
    if with_affine && policy.affine.enabled {
        let deg = uniform(rng, -policy.affine.degrees, policy.affine.degrees);
        let tx = uniform(rng, -policy.affine.translate, policy.affine.translate) * w as f32;
        let ty = uniform(rng, -policy.affine.translate, policy.affine.translate) * h as f32;
        data = affine(&data, deg.to_radians(), tx, ty);
    }
    if policy.crop.enabled {
        let [ch, cw] = policy.crop.size;
        let y0 = rng.random_range(0..=h - ch);
        let x0 = rng.random_range(0..=w - cw);
        let window = data.slice(s![.., y0..y0 + ch, x0..x0 + cw]).to_owned();
        data = resize_bilinear(&window, h, w);
    }
    if policy.flip.enabled && rng.random_bool(policy.flip.probability as f64) {
        data = hflip(&data);
    }
    Ok(data)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f32 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Mirrors left-right.
pub fn hflip(src: &Array3<f32>) -> Array3<f32> {
    src.slice(s![.., .., ..;-1]).to_owned()
}

/// Integer translation by `(dx, dy)` with zero fill; content leaving the
/// frame is dropped.
pub fn shift(src: &Array3<f32>, dx: i64, dy: i64) -> Array3<f32> {
    let (_, h, w) = src.dim();
    let mut out = Array3::<f32>::zeros(src.dim());
    let (h, w) = (h as i64, w as i64);
    if dx.abs() >= w || dy.abs() >= h {
        return out;
    }
    let u = |v: i64| v as usize;
    let (sx0, dx0, len_x) = (u(0.max(-dx)), u(0.max(dx)), u(w - dx.abs()));
    let (sy0, dy0, len_y) = (u(0.max(-dy)), u(0.max(dy)), u(h - dy.abs()));
    out.slice_mut(s![.., dy0..dy0 + len_y, dx0..dx0 + len_x])
        .assign(&src.slice(s![.., sy0..sy0 + len_y, sx0..sx0 + len_x]));
    out
}

/// Scales content about the centre, then crops or zero-pads back to the
/// original size.
fn rescale_centered(src: &Array3<f32>, scale: f32) -> Array3<f32> {
    let (c, h, w) = src.dim();
    let nh = ((h as f32 * scale).round() as usize).max(1);
    let nw = ((w as f32 * scale).round() as usize).max(1);
    if (nh, nw) == (h, w) {
        return src.clone();
    }
    let scaled = resize_bilinear(src, nh, nw);
    let mut out = Array3::<f32>::zeros((c, h, w));
    let (oy, sy, ly) = centre_overlap(h, nh);
    let (ox, sx, lx) = centre_overlap(w, nw);
    out.slice_mut(s![.., oy..oy + ly, ox..ox + lx])
        .assign(&scaled.slice(s![.., sy..sy + ly, sx..sx + lx]));
    out
}

/// Returns (destination offset, source offset, length) for centring a span of
/// `src_len` inside `dst_len`.
fn centre_overlap(dst_len: usize, src_len: usize) -> (usize, usize, usize) {
    if src_len >= dst_len {
        (0, (src_len - dst_len) / 2, dst_len)
    } else {
        ((dst_len - src_len) / 2, 0, src_len)
    }
}

/// Rotation by `theta` about the centre followed by translation, sampled
/// bilinearly with zero fill.
fn affine(src: &Array3<f32>, theta: f32, tx: f32, ty: f32) -> Array3<f32> {
    let (c, h, w) = src.dim();
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let (sin, cos) = theta.sin_cos();
    let mut out = Array3::<f32>::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            // inverse map: output pixel -> source coordinate
            let (u, v) = (x as f32 - cx - tx, y as f32 - cy - ty);
            let sx = cos * u + sin * v + cx;
            let sy = -sin * u + cos * v + cy;
            for ch in 0..c {
                out[[ch, y, x]] = sample_zero(src, ch, sy, sx);
            }
        }
    }
    out
}

fn sample_zero(src: &Array3<f32>, ch: usize, y: f32, x: f32) -> f32 {
    let (_, h, w) = src.dim();
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let px = |yy: f32, xx: f32| -> f32 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f32 || xx >= w as f32 {
            0.0
        } else {
            src[[ch, yy as usize, xx as usize]]
        }
    };
    let top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1.0) * fx;
    let bottom = px(y0 + 1.0, x0) * (1.0 - fx) + px(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Separable Gaussian blur with clamp-to-edge borders and a 3-sigma radius.
pub fn gaussian_blur(src: &Array3<f32>, sigma: f32) -> Array3<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f32 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|k| k / norm).collect();
    let pass = |a: &Array3<f32>, axis: usize| -> Array3<f32> {
        let mut out = Array3::<f32>::zeros(a.dim());
        let len = a.len_of(Axis(axis)) as i64;
        for ((ch, y, x), o) in out.indexed_iter_mut() {
            let pos = if axis == 1 { y } else { x } as i64;
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let p = (pos + k as i64 - radius).clamp(0, len - 1) as usize;
                acc += wk * if axis == 1 { a[[ch, p, x]] } else { a[[ch, y, p]] };
            }
            *o = acc;
        }
        out
    };
    pass(&pass(src, 2), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_frame() -> FrameImage {
        FrameImage {
            data: Array3::from_shape_fn((1, 16, 16), |(_, y, x)| ((x + 2 * y) % 17) as f32 / 16.0),
            label: Some(3),
        }
    }

    fn ramp_events() -> EventFrame {
        EventFrame {
            data: Array3::from_shape_fn((2, 16, 16), |(c, y, x)| ((c + x * y) % 5) as f32),
            label: None,
        }
    }

    #[test]
    fn disabled_policy_is_identity() {
        let p = AugmentationPolicy::disabled();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = ramp_frame();
        assert_eq!(augment_frame(&f, &p, &mut rng).unwrap(), f);
        let e = ramp_events();
        assert_eq!(augment_events(&e, &p, &mut rng).unwrap(), e);
        let pair = make_view_pair(&f, &p, &mut rng).unwrap();
        assert_eq!(pair.view_a, f);
        assert_eq!(pair.view_b, f);
    }

    #[test]
    fn certain_flip_mirrors() {
        let mut p = AugmentationPolicy::disabled();
        p.flip = Flip {
            enabled: true,
            probability: 1.0,
        };
        let f = ramp_frame();
        let out = augment_frame(&f, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(out.data[[0, y, x]], f.data[[0, y, 15 - x]]);
            }
        }
        assert_eq!(out.label, Some(3));
    }

    #[test]
    fn shift_by_one_column_drops_boundary() {
        let e = ramp_events();
        let out = shift(&e.data, 1, 0);
        for c in 0..2 {
            for y in 0..16 {
                assert_eq!(out[[c, y, 0]], 0.0);
                for x in 1..16 {
                    assert_eq!(out[[c, y, x]], e.data[[c, y, x - 1]]);
                }
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let p = AugmentationPolicy {
            crop: Crop {
                enabled: true,
                size: [12, 12],
            },
            ..AugmentationPolicy::frame_default()
        };
        let f = ramp_frame();
        let a = augment_frame(&f, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment_frame(&f, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        let pe = AugmentationPolicy {
            crop: Crop {
                enabled: true,
                size: [12, 12],
            },
            ..AugmentationPolicy::event_default()
        };
        let e = ramp_events();
        let a = augment_events(&e, &pe, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = augment_events(&e, &pe, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn oversized_crop_is_policy_error() {
        let mut p = AugmentationPolicy::disabled();
        p.crop = Crop {
            enabled: true,
            size: [32, 8],
        };
        let err = augment_frame(&ramp_frame(), &p, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Policy(_))));
    }

    #[test]
    fn invalid_probability_rejected() {
        let mut p = AugmentationPolicy::disabled();
        p.flip = Flip {
            enabled: true,
            probability: 1.5,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn views_differ_under_nontrivial_policy() {
        let p = AugmentationPolicy {
            crop: Crop {
                enabled: true,
                size: [12, 12],
            },
            ..AugmentationPolicy::frame_default()
        };
        let f = ramp_frame();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut differing = 0;
        for _ in 0..100 {
            let pair = make_view_pair(&f, &p, &mut rng).unwrap();
            assert_eq!(pair.view_a.data.dim(), f.data.dim());
            assert_eq!(pair.view_b.data.dim(), f.data.dim());
            if pair.view_a != pair.view_b {
                differing += 1;
            }
        }
        assert!(differing >= 99, "only {differing}/100 pairs differed");
    }

    #[test]
    fn original_as_view_a() {
        let p = AugmentationPolicy {
            use_original_as_view_a: true,
            ..AugmentationPolicy::event_default()
        };
        let p = AugmentationPolicy {
            crop: Crop {
                enabled: true,
                size: [12, 12],
            },
            ..p
        };
        let e = ramp_events();
        let pair = make_view_pair(&e, &p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(pair.view_a, e);
    }

    #[test]
    fn blur_preserves_constant_and_mass() {
        let c = Array3::from_elem((1, 10, 10), 0.25f32);
        let out = gaussian_blur(&c, 1.3);
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn frame_outputs_stay_in_unit_range() {
        let p = AugmentationPolicy {
            crop: Crop {
                enabled: true,
                size: [10, 10],
            },
            ..AugmentationPolicy::frame_default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let out = augment_frame(&ramp_frame(), &p, &mut rng).unwrap();
            assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
