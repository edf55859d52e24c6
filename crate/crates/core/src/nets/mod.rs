//! The trainable networks and their tensor contracts.
//!
//! Encoders are the first half of an 18-layer residual network (stem plus
//! two residual stages, no max pooling); the classifier is the second half.
//! Frame and event-content encoders map into the same content space, so the
//! content discriminator and classifier are shared across domains.

mod layers;
mod modules;

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{global_avg_pool, Group, Mode, ParamStore};
pub use modules::{Classifier, Decoder, Discriminator, Encoder, ProjectionHead, Refiner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadType {
    AvgPool,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// `[height, width]` shared by both domains.
    pub input_size: [usize; 2],
    pub frame_channels: usize,
    pub event_channels: usize,
    /// Width of the first residual stage; 64 for the standard network.
    pub base_channels: usize,
    pub stem_kernel: usize,
    /// 1 or 2. Content maps are downsampled by `2 * stem_stride`.
    pub stem_stride: usize,
    pub num_classes: usize,
    pub projection: HeadType,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    pub discriminator_channels: usize,
    pub discriminator_depth: usize,
    pub refinement_channels: usize,
    pub refinement_blocks: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_size: [28, 28],
            frame_channels: 1,
            event_channels: 2,
            base_channels: 64,
            stem_kernel: 7,
            stem_stride: 2,
            num_classes: 10,
            projection: HeadType::AvgPool,
            projection_hidden: 512,
            projection_dim: 128,
            discriminator_channels: 64,
            discriminator_depth: 4,
            refinement_channels: 64,
            refinement_blocks: 3,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return fail(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !matches!(self.stem_stride, 1 | 2) {
            return fail(format!("stem_stride must be 1 or 2, got {}", self.stem_stride));
        }
        if self.stem_kernel == 0 || self.stem_kernel.is_multiple_of(2) {
            return fail(format!("stem_kernel must be odd, got {}", self.stem_kernel));
        }
        let f = self.downsample_factor();
        if self.input_size.iter().any(|&s| s == 0 || s % f != 0) {
            return fail(format!(
                "input_size {:?} must be a nonzero multiple of {f}",
                self.input_size
            ));
        }
        let positive = [
            ("frame_channels", self.frame_channels),
            ("event_channels", self.event_channels),
            ("base_channels", self.base_channels),
            ("projection_hidden", self.projection_hidden),
            ("projection_dim", self.projection_dim),
            ("discriminator_channels", self.discriminator_channels),
            ("discriminator_depth", self.discriminator_depth),
            ("refinement_channels", self.refinement_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn downsample_factor(&self) -> usize {
        2 * self.stem_stride
    }

    /// `(C, H, W)` of content and attribute features.
    pub fn content_shape(&self) -> [usize; 3] {
        let f = self.downsample_factor();
        [
            2 * self.base_channels,
            self.input_size[0] / f,
            self.input_size[1] / f,
        ]
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [self.frame_channels, self.input_size[0], self.input_size[1]]
    }

    pub fn event_shape(&self) -> [usize; 3] {
        [self.event_channels, self.input_size[0], self.input_size[1]]
    }

    /// Length of projection vectors for `head`.
    pub fn projection_len(&self, head: HeadType) -> usize {
        match head {
            HeadType::AvgPool => self.content_shape()[0],
            HeadType::Mlp => self.projection_dim,
        }
    }
}

/// Which encoder a projection head sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Frame,
    EventContent,
    EventAttribute,
}

/// All trainable networks of the adaptation pipeline.
pub struct ModelBundle {
    pub config: NetworkConfig,
    pub store: ParamStore,
    pub frame_encoder: Encoder,
    pub event_content_encoder: Encoder,
    pub event_attribute_encoder: Encoder,
    pub decoder: Decoder,
    pub refiner: Refiner,
    pub content_discriminator: Discriminator,
    pub event_discriminator: Discriminator,
    pub classifier: Classifier,
    pub frame_head: ProjectionHead,
    pub event_content_head: ProjectionHead,
    pub event_attribute_head: ProjectionHead,
}

impl std::fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBundle")
            .field("config", &self.config)
            .field("tensors", &self.store.len())
            .finish()
    }
}

impl ModelBundle {
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut store = ParamStore::new(seed);
        let s = &mut store;
        let g = Group::Generator;
        let [cz, hz, wz] = c.content_shape();
        let frame_encoder = Encoder::new(s, "frame_encoder", c.frame_channels, c, g)?;
        let event_content_encoder = Encoder::new(s, "event_content_encoder", c.event_channels, c, g)?;
        let event_attribute_encoder =
            Encoder::new(s, "event_attribute_encoder", c.event_channels, c, g)?;
        let decoder = Decoder::new(s, "decoder", c)?;
        let refiner = Refiner::new(s, "refiner", c)?;
        let content_discriminator = Discriminator::new(
            s,
            "content_discriminator",
            [cz, hz, wz],
            c,
            Group::ContentDiscriminator,
        )?;
        let event_discriminator = Discriminator::new(
            s,
            "event_discriminator",
            c.event_shape(),
            c,
            Group::EventDiscriminator,
        )?;
        let classifier = Classifier::new(s, "classifier", cz, c)?;
        let frame_head = ProjectionHead::new(s, "frame_head", cz, c)?;
        let event_content_head = ProjectionHead::new(s, "event_content_head", cz, c)?;
        let event_attribute_head = ProjectionHead::new(s, "event_attribute_head", cz, c)?;
        Ok(Self {
            config: config.clone(),
            store,
            frame_encoder,
            event_content_encoder,
            event_attribute_encoder,
            decoder,
            refiner,
            content_discriminator,
            event_discriminator,
            classifier,
            frame_head,
            event_content_head,
            event_attribute_head,
        })
    }

    pub fn encode_frame(&self, frames: &Tensor, mode: Mode) -> Result<Tensor> {
        check_batch("encode_frame", frames, self.config.frame_shape())?;
        self.frame_encoder.forward(frames, mode)
    }

    pub fn encode_event_content(&self, events: &Tensor, mode: Mode) -> Result<Tensor> {
        check_batch("encode_event_content", events, self.config.event_shape())?;
        self.event_content_encoder.forward(events, mode)
    }

    pub fn encode_event_attribute(&self, events: &Tensor, mode: Mode) -> Result<Tensor> {
        check_batch("encode_event_attribute", events, self.config.event_shape())?;
        self.event_attribute_encoder.forward(events, mode)
    }

    /// Synthesizes event-shaped tensors from content and attribute features.
    pub fn decode(&self, content: &Tensor, attribute: &Tensor, mode: Mode) -> Result<Tensor> {
        let shape = self.config.content_shape();
        check_batch("decode(content)", content, shape)?;
        check_batch("decode(attribute)", attribute, shape)?;
        self.decoder.forward_events(content, attribute, mode)
    }

    /// Reconstructs a frame from content alone through the learned null attribute.
    pub fn decode_frame(&self, content: &Tensor, mode: Mode) -> Result<Tensor> {
        check_batch("decode_frame", content, self.config.content_shape())?;
        self.decoder.forward_frame(content, mode)
    }

    /// Attribute used in place of the attribute encoder when it is disabled.
    pub fn null_attribute(&self, batch: usize) -> Result<Tensor> {
        self.decoder.null_attribute(batch)
    }

    /// Refinement of raw fake events; the identity when `enabled` is false.
    pub fn refine(&self, raw_fake: &Tensor, mode: Mode, enabled: bool) -> Result<Tensor> {
        check_batch("refine", raw_fake, self.config.event_shape())?;
        if enabled {
            self.refiner.forward(raw_fake, mode)
        } else {
            Ok(raw_fake.clone())
        }
    }

    /// One pre-sigmoid logit per sample, shape `(N,)`.
    pub fn discriminate_content(&self, content: &Tensor) -> Result<Tensor> {
        check_batch("discriminate_content", content, self.config.content_shape())?;
        self.content_discriminator.forward(content)
    }

    pub fn discriminate_event(&self, events: &Tensor) -> Result<Tensor> {
        check_batch("discriminate_event", events, self.config.event_shape())?;
        self.event_discriminator.forward(events)
    }

    /// Class logits `(N, K)` from content features.
    pub fn classify(&self, content: &Tensor, mode: Mode) -> Result<Tensor> {
        check_batch("classify", content, self.config.content_shape())?;
        self.classifier.forward(content, mode)
    }

    /// Pooled projection of an encoder output through that encoder's head.
    pub fn project(&self, feature: &Tensor, encoder: EncoderKind, head: HeadType) -> Result<Tensor> {
        check_batch("project", feature, self.config.content_shape())?;
        let h = match encoder {
            EncoderKind::Frame => &self.frame_head,
            EncoderKind::EventContent => &self.event_content_head,
            EncoderKind::EventAttribute => &self.event_attribute_head,
        };
        h.forward(feature, head)
    }

    /// Event-domain prediction path: content encoder then classifier, nothing else.
    pub fn predict_events(&self, events: &Tensor) -> Result<Tensor> {
        let z = self.encode_event_content(events, Mode::Eval)?;
        self.classify(&z, Mode::Eval)
    }

    pub fn predict_frames(&self, frames: &Tensor) -> Result<Tensor> {
        let z = self.encode_frame(frames, Mode::Eval)?;
        self.classify(&z, Mode::Eval)
    }

    /// Convolution weights under orthogonal regularization, each flattened to
    /// `(dim0, rest)`: the three encoders, the decoder and the refinement net.
    pub fn orthogonal_weights(&self) -> Result<Vec<Tensor>> {
        let mut vars: Vec<&Var> = Vec::new();
        vars.extend(self.frame_encoder.conv_weights());
        vars.extend(self.event_content_encoder.conv_weights());
        vars.extend(self.event_attribute_encoder.conv_weights());
        vars.extend(self.decoder.conv_weights());
        vars.extend(self.refiner.conv_weights());
        vars.into_iter()
            .map(|v| Ok(v.as_tensor().flatten_from(1)?))
            .collect()
    }

    pub fn trainable(&self, group: Group) -> Vec<Var> {
        self.store
            .trainable(group)
            .into_iter()
            .map(|(_, v)| v.clone())
            .collect()
    }
}

/// Checks that `x` is `(N, C, H, W)` with `N >= 1` and the expected tail.
pub fn check_batch(context: &'static str, x: &Tensor, expected: [usize; 3]) -> Result<()> {
    let dims = x.dims();
    if dims.len() != 4 || dims[0] == 0 || dims[1..] != expected {
        let mut want = vec![dims.first().copied().unwrap_or(0)];
        want.extend_from_slice(&expected);
        return Err(Error::Shape {
            context,
            expected: want,
            actual: dims.to_vec(),
        });
    }
    Ok(())
}
