//! Parameter storage and the handful of layers the networks are built from.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Optimizer group a trainable tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    /// Encoders, decoder, refinement net, classifier, projection heads.
    Generator,
    ContentDiscriminator,
    EventDiscriminator,
}

impl Group {
    pub const ALL: [Group; 3] = [
        Group::Generator,
        Group::ContentDiscriminator,
        Group::EventDiscriminator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Generator => "generator",
            Group::ContentDiscriminator => "content_discriminator",
            Group::EventDiscriminator => "event_discriminator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// N(0, 2 / fan_out), as for ReLU residual networks.
    KaimingFanOut(usize),
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    UniformFanIn(usize),
}

#[derive(Debug, Clone)]
struct Entry {
    var: Var,
    /// `None` marks a non-trainable buffer such as a running statistic.
    group: Option<Group>,
}

/// Named tensors of a model, seeded from one deterministic generator.
#[derive(Debug)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
    rng: ChaCha8Rng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            device: Device::Cpu,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init, group: Group) -> Result<Var> {
        let n: usize = shape.iter().product();
        let values: Vec<f32> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::KaimingFanOut(fan_out) => {
                let normal = Normal::new(0.0, (2.0 / fan_out as f64).sqrt())
                    .expect("finite standard deviation");
                (0..n).map(|_| normal.sample(&mut self.rng) as f32).collect()
            }
            Init::UniformFanIn(fan_in) => {
                let bound = 1.0 / (fan_in as f32).sqrt();
                (0..n)
                    .map(|_| self.rng.random_range(-bound..=bound))
                    .collect()
            }
        };
        let var = Var::from_vec(values, shape, &self.device)?;
        self.insert(name, var.clone(), Some(group))?;
        Ok(var)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let value = match init {
            Init::Ones => Tensor::ones(shape, DType::F32, &self.device)?,
            _ => Tensor::zeros(shape, DType::F32, &self.device)?,
        };
        let var = Var::from_tensor(&value)?;
        self.insert(name, var.clone(), None)?;
        Ok(var)
    }

    fn insert(&mut self, name: &str, var: Var, group: Option<Group>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Argument(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name.to_string(), Entry { var, group });
        Ok(())
    }

    /// Trainable tensors of one group, in name order.
    pub fn trainable(&self, group: Group) -> Vec<(&str, &Var)> {
        self.entries
            .iter()
            .filter(|(_, e)| e.group == Some(group))
            .map(|(n, e)| (n.as_str(), &e.var))
            .collect()
    }

    /// Every tensor, parameters and buffers, in name order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), &e.var))
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.get(name).map(|e| &e.var)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overwrites every tensor from `values`; names and shapes must match exactly.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                values.len()
            )));
        }
        for (name, entry) in &self.entries {
            let value = values
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if value.dims() != entry.var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    value.dims(),
                    entry.var.dims()
                )));
            }
            entry.var.set(value)?;
        }
        Ok(())
    }

    /// True when every tensor is finite.
    pub fn all_finite(&self) -> Result<bool> {
        for e in self.entries.values() {
            let v: Vec<f32> = e.var.as_tensor().flatten_all()?.to_vec1()?;
            if v.iter().any(|x| !x.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        init: Init,
        group: Group,
    ) -> Result<Self> {
        let weight = store.param(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            init,
            group,
        )?;
        let bias = if bias {
            let b_init = match init {
                Init::Zeros => Init::Zeros,
                _ => Init::UniformFanIn(c_in * kernel * kernel),
            };
            Some(store.param(&format!("{name}.bias"), &[c_out], b_init, group)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

/// Transposed convolution; weight layout is `(c_in, c_out, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        group: Group,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = store.param(
            &format!("{name}.weight"),
            &[c_in, c_out, kernel, kernel],
            Init::UniformFanIn(fan_in),
            group,
        )?;
        let bias = store.param(
            &format!("{name}.bias"),
            &[c_out],
            Init::UniformFanIn(fan_in),
            group,
        )?;
        Ok(Self {
            weight,
            bias: Some(bias),
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

fn add_channel_bias(y: Tensor, bias: Option<&Var>) -> Result<Tensor> {
    match bias {
        Some(b) => Ok(y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?),
        None => Ok(y),
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// `(out, in)`.
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        group: Group,
    ) -> Result<Self> {
        let init = Init::UniformFanIn(c_in);
        Ok(Self {
            weight: store.param(&format!("{name}.weight"), &[c_out, c_in], init, group)?,
            bias: store.param(&format!("{name}.bias"), &[c_out], init, group)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Batch normalization over (N, H, W) with running statistics for eval mode.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, group: Group) -> Result<Self> {
        Ok(Self {
            gamma: store.param(&format!("{name}.weight"), &[channels], Init::Ones, group)?,
            beta: store.param(&format!("{name}.bias"), &[channels], Init::Zeros, group)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[channels], Init::Zeros)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[channels], Init::Ones)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = x.dim(1)?;
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = x.mean_keepdim((0, 2, 3))?;
                let centered = x.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim((0, 2, 3))?;
                let n = x.elem_count() / c;
                let unbiased = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                let m = self.momentum;
                let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))?
                    + (mean.flatten_all()?.detach() * m)?)?;
                let new_var = ((self.running_var.as_tensor() * (1.0 - m))?
                    + (var.flatten_all()?.detach() * (m * unbiased))?)?;
                self.running_mean.set(&new_mean)?;
                self.running_var.set(&new_var)?;
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.reshape((1, c, 1, 1))?,
                self.running_var.reshape((1, c, 1, 1))?,
            ),
        };
        let normed = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

/// Two 3x3 convolutions with a projection shortcut when the shape changes.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    shortcut: Option<(Conv2d, BatchNorm2d)>,
}

impl BasicBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        group: Group,
    ) -> Result<Self> {
        let conv = |store: &mut ParamStore, n: &str, ci, k, s, p| {
            Conv2d::new(
                store,
                &format!("{name}.{n}"),
                ci,
                c_out,
                k,
                s,
                p,
                false,
                Init::KaimingFanOut(c_out * k * k),
                group,
            )
        };
        let conv1 = conv(store, "conv1", c_in, 3, stride, 1)?;
        let bn1 = BatchNorm2d::new(store, &format!("{name}.bn1"), c_out, group)?;
        let conv2 = conv(store, "conv2", c_out, 3, 1, 1)?;
        let bn2 = BatchNorm2d::new(store, &format!("{name}.bn2"), c_out, group)?;
        let shortcut = if stride != 1 || c_in != c_out {
            Some((
                conv(store, "downsample.conv", c_in, 1, stride, 0)?,
                BatchNorm2d::new(store, &format!("{name}.downsample.bn"), c_out, group)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1,
            conv2,
            bn2,
            shortcut,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, mode)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, mode)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }

    pub fn conv_weights(&self) -> Vec<&Var> {
        let mut w = vec![&self.conv1.weight, &self.conv2.weight];
        if let Some((c, _)) = &self.shortcut {
            w.push(&c.weight);
        }
        w
    }
}

/// Logistic function via `tanh`, stable for large magnitudes.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(((x * 0.5)?.tanh()? + 1.0)?.affine(0.5, 0.0)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Channel-wise spatial mean: `(N, C, H, W) -> (N, C)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean(D::Minus1)?.mean(D::Minus1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_is_seed_deterministic() {
        let mut a = ParamStore::new(5);
        let mut b = ParamStore::new(5);
        let wa = a.param("w", &[3, 4], Init::KaimingFanOut(3), Group::Generator).unwrap();
        let wb = b.param("w", &[3, 4], Init::KaimingFanOut(3), Group::Generator).unwrap();
        let va: Vec<f32> = wa.flatten_all().unwrap().to_vec1().unwrap();
        let vb: Vec<f32> = wb.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(0);
        s.param("w", &[1], Init::Zeros, Group::Generator).unwrap();
        assert!(s.param("w", &[1], Init::Zeros, Group::Generator).is_err());
    }

    #[test]
    fn batchnorm_train_normalizes_and_tracks() {
        let mut s = ParamStore::new(0);
        let bn = BatchNorm2d::new(&mut s, "bn", 2, Group::Generator).unwrap();
        let x = Tensor::arange(0f32, 16., &Device::Cpu)
            .unwrap()
            .reshape((2, 2, 2, 2))
            .unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        let m: Vec<f32> = y.mean_keepdim((0, 2, 3)).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-5));
        let rm: Vec<f32> = bn.running_mean.as_tensor().to_vec1().unwrap();
        // channel 0 holds {0,1,2,3,8,9,10,11}: mean 5.5
        assert!((rm[0] - 0.55).abs() < 1e-6);
        assert_eq!(s.trainable(Group::Generator).len(), 2);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn avg_pool_of_constant_map() {
        let x = Tensor::full(0.75f32, (3, 5, 4, 4), &Device::Cpu).unwrap();
        let p = global_avg_pool(&x).unwrap();
        assert_eq!(p.dims(), &[3, 5]);
        let v: Vec<f32> = p.flatten_all().unwrap().to_vec1().unwrap();
        assert!(v.iter().all(|&x| x == 0.75));
    }
}
