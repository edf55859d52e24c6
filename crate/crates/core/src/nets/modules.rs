use candle_core::{Tensor, Var};

use super::layers::{
    global_avg_pool, leaky_relu, sigmoid, BasicBlock, BatchNorm2d, Conv2d, ConvTranspose2d, Group, Init,
    Linear, Mode, ParamStore,
};
use super::{HeadType, NetworkConfig};
use crate::error::Result;

/// Stem plus the first two residual stages.
#[derive(Debug, Clone)]
pub struct Encoder {
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    blocks: Vec<BasicBlock>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        cfg: &NetworkConfig,
        group: Group,
    ) -> Result<Self> {
        let b = cfg.base_channels;
        let k = cfg.stem_kernel;
        let stem = Conv2d::new(
            store,
            &format!("{name}.stem"),
            in_channels,
            b,
            k,
            cfg.stem_stride,
            k / 2,
            false,
            Init::KaimingFanOut(b * k * k),
            group,
        )?;
        let stem_bn = BatchNorm2d::new(store, &format!("{name}.stem_bn"), b, group)?;
        let blocks = vec![
            BasicBlock::new(store, &format!("{name}.layer1.0"), b, b, 1, group)?,
            BasicBlock::new(store, &format!("{name}.layer1.1"), b, b, 1, group)?,
            BasicBlock::new(store, &format!("{name}.layer2.0"), b, 2 * b, 2, group)?,
            BasicBlock::new(store, &format!("{name}.layer2.1"), 2 * b, 2 * b, 1, group)?,
        ];
        Ok(Self {
            stem,
            stem_bn,
            blocks,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = self.stem_bn.forward(&self.stem.forward(x)?, mode)?.relu()?;
        for block in &self.blocks {
            h = block.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn conv_weights(&self) -> Vec<&Var> {
        let mut w = vec![&self.stem.weight];
        for b in &self.blocks {
            w.extend(b.conv_weights());
        }
        w
    }
}

/// Last two residual stages, global pooling and a linear layer.
#[derive(Debug, Clone)]
pub struct Classifier {
    blocks: Vec<BasicBlock>,
    fc: Linear,
}

impl Classifier {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        cfg: &NetworkConfig,
    ) -> Result<Self> {
        let g = Group::Generator;
        let c = in_channels;
        let blocks = vec![
            BasicBlock::new(store, &format!("{name}.layer3.0"), c, 2 * c, 2, g)?,
            BasicBlock::new(store, &format!("{name}.layer3.1"), 2 * c, 2 * c, 1, g)?,
            BasicBlock::new(store, &format!("{name}.layer4.0"), 2 * c, 4 * c, 2, g)?,
            BasicBlock::new(store, &format!("{name}.layer4.1"), 4 * c, 4 * c, 1, g)?,
        ];
        let fc = Linear::new(store, &format!("{name}.fc"), 4 * c, cfg.num_classes, g)?;
        Ok(Self { blocks, fc })
    }

    pub fn forward(&self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = z.clone();
        for block in &self.blocks {
            h = block.forward(&h, mode)?;
        }
        self.fc.forward(&global_avg_pool(&h)?)
    }
}

/// Upsampling decoder shared by fake-event synthesis and reconstruction.
/// Outputs pass through a sigmoid to match normalized inputs in [0, 1].
#[derive(Debug, Clone)]
pub struct Decoder {
    null_attribute: Var,
    fuse: Conv2d,
    fuse_bn: BatchNorm2d,
    ups: Vec<(ConvTranspose2d, BatchNorm2d)>,
    event_head: Conv2d,
    frame_head: Conv2d,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &NetworkConfig) -> Result<Self> {
        let g = Group::Generator;
        let [cz, hz, wz] = cfg.content_shape();
        let b = cfg.base_channels;
        let null_attribute = store.param(
            &format!("{name}.null_attribute"),
            &[1, cz, hz, wz],
            Init::Zeros,
            g,
        )?;
        let fuse = Conv2d::new(
            store,
            &format!("{name}.fuse"),
            2 * cz,
            cz,
            3,
            1,
            1,
            false,
            Init::KaimingFanOut(cz * 9),
            g,
        )?;
        let fuse_bn = BatchNorm2d::new(store, &format!("{name}.fuse_bn"), cz, g)?;
        let n_up = cfg.downsample_factor().trailing_zeros() as usize;
        let mut ups = Vec::with_capacity(n_up);
        let mut c_in = cz;
        for i in 0..n_up {
            let up = ConvTranspose2d::new(store, &format!("{name}.up{i}"), c_in, b, 4, 2, 1, g)?;
            let bn = BatchNorm2d::new(store, &format!("{name}.up{i}_bn"), b, g)?;
            ups.push((up, bn));
            c_in = b;
        }
        let head = |store: &mut ParamStore, n: &str, out: usize| {
            Conv2d::new(
                store,
                &format!("{name}.{n}"),
                c_in,
                out,
                3,
                1,
                1,
                true,
                Init::UniformFanIn(c_in * 9),
                g,
            )
        };
        let event_head = head(store, "event_head", cfg.event_channels)?;
        let frame_head = head(store, "frame_head", cfg.frame_channels)?;
        Ok(Self {
            null_attribute,
            fuse,
            fuse_bn,
            ups,
            event_head,
            frame_head,
        })
    }

    fn trunk(&self, content: &Tensor, attribute: &Tensor, mode: Mode) -> Result<Tensor> {
        let x = Tensor::cat(&[content, attribute], 1)?;
        let mut h = self.fuse_bn.forward(&self.fuse.forward(&x)?, mode)?.relu()?;
        for (up, bn) in &self.ups {
            h = bn.forward(&up.forward(&h)?, mode)?.relu()?;
        }
        Ok(h)
    }

    pub fn forward_events(&self, content: &Tensor, attribute: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.trunk(content, attribute, mode)?;
        sigmoid(&self.event_head.forward(&h)?)
    }

    /// The learned null attribute repeated over a batch.
    pub fn null_attribute(&self, batch: usize) -> Result<Tensor> {
        let d = self.null_attribute.dims();
        Ok(self.null_attribute.broadcast_as((batch, d[1], d[2], d[3]))?)
    }

    pub fn forward_frame(&self, content: &Tensor, mode: Mode) -> Result<Tensor> {
        let null = self.null_attribute(content.dim(0)?)?;
        let h = self.trunk(content, &null, mode)?;
        sigmoid(&self.frame_head.forward(&h)?)
    }

    pub fn conv_weights(&self) -> Vec<&Var> {
        let mut w = vec![&self.fuse.weight];
        w.extend(self.ups.iter().map(|(u, _)| &u.weight));
        w.push(&self.event_head.weight);
        w.push(&self.frame_head.weight);
        w
    }
}

/// Shape-preserving residual refinement of raw fake events. The output
/// convolution starts at zero, so an untrained refiner is the identity.
#[derive(Debug, Clone)]
pub struct Refiner {
    conv_in: Conv2d,
    blocks: Vec<(Conv2d, Conv2d)>,
    conv_out: Conv2d,
}

impl Refiner {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &NetworkConfig) -> Result<Self> {
        let g = Group::Generator;
        let r = cfg.refinement_channels;
        let conv = |store: &mut ParamStore, n: String, ci: usize, co: usize, init: Init| {
            Conv2d::new(store, &n, ci, co, 3, 1, 1, true, init, g)
        };
        let conv_in = conv(
            store,
            format!("{name}.conv_in"),
            cfg.event_channels,
            r,
            Init::KaimingFanOut(r * 9),
        )?;
        let mut blocks = Vec::with_capacity(cfg.refinement_blocks);
        for i in 0..cfg.refinement_blocks {
            blocks.push((
                conv(store, format!("{name}.block{i}.conv1"), r, r, Init::KaimingFanOut(r * 9))?,
                conv(store, format!("{name}.block{i}.conv2"), r, r, Init::KaimingFanOut(r * 9))?,
            ));
        }
        let conv_out = conv(
            store,
            format!("{name}.conv_out"),
            r,
            cfg.event_channels,
            Init::Zeros,
        )?;
        Ok(Self {
            conv_in,
            blocks,
            conv_out,
        })
    }

    pub fn forward(&self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let mut h = self.conv_in.forward(x)?.relu()?;
        for (c1, c2) in &self.blocks {
            let r = c2.forward(&c1.forward(&h)?.relu()?)?;
            h = (h + r)?.relu()?;
        }
        Ok((x + self.conv_out.forward(&h)?)?)
    }

    pub fn conv_weights(&self) -> Vec<&Var> {
        let mut w = vec![&self.conv_in.weight];
        for (a, b) in &self.blocks {
            w.push(&a.weight);
            w.push(&b.weight);
        }
        w.push(&self.conv_out.weight);
        w
    }
}

/// Strided convolutions with leaky ReLU, then a linear layer to one logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    convs: Vec<Conv2d>,
    head: Linear,
}

impl Discriminator {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: [usize; 3],
        cfg: &NetworkConfig,
        group: Group,
    ) -> Result<Self> {
        let [mut c, mut h, mut w] = input;
        let base = cfg.discriminator_channels;
        let mut convs = Vec::with_capacity(cfg.discriminator_depth);
        for i in 0..cfg.discriminator_depth {
            let out = base << i.min(3);
            convs.push(Conv2d::new(
                store,
                &format!("{name}.conv{i}"),
                c,
                out,
                3,
                2,
                1,
                true,
                Init::UniformFanIn(c * 9),
                group,
            )?);
            c = out;
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        let head = Linear::new(store, &format!("{name}.head"), c * h * w, 1, group)?;
        Ok(Self { convs, head })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = leaky_relu(&conv.forward(&h)?, 0.2)?;
        }
        Ok(self.head.forward(&h.flatten_from(1)?)?.flatten_all()?)
    }
}

/// Global average pooling, optionally followed by a two-layer MLP.
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    fc1: Linear,
    fc2: Linear,
}

impl ProjectionHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        cfg: &NetworkConfig,
    ) -> Result<Self> {
        let g = Group::Generator;
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), in_channels, cfg.projection_hidden, g)?,
            fc2: Linear::new(
                store,
                &format!("{name}.fc2"),
                cfg.projection_hidden,
                cfg.projection_dim,
                g,
            )?,
        })
    }

    pub fn forward(&self, feature: &Tensor, head: HeadType) -> Result<Tensor> {
        let pooled = global_avg_pool(feature)?;
        match head {
            HeadType::AvgPool => Ok(pooled),
            HeadType::Mlp => self.fc2.forward(&self.fc1.forward(&pooled)?.relu()?),
        }
    }
}
