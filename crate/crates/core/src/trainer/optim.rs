//! Rectified Adam with per-group state, plus the learning-rate schedule.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Error, Result};
use crate::nets::Group;

/// `base_lr · decay^epoch`.
pub fn schedule_lr(base_lr: f64, decay: f64, epoch: usize) -> f64 {
    base_lr * decay.powi(epoch as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators and step count of one parameter group.
#[derive(Debug, Clone, Default)]
pub struct GroupState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// Optimizer state for every network group.
#[derive(Debug, Clone, Default)]
pub struct OptimState {
    pub groups: BTreeMap<Group, GroupState>,
}

impl OptimState {
    pub fn steps(&self) -> BTreeMap<Group, u64> {
        self.groups.iter().map(|(g, s)| (*g, s.step)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RAdam {
    pub config: RAdamConfig,
    pub state: OptimState,
}

impl RAdam {
    pub fn new(config: RAdamConfig) -> Self {
        Self {
            config,
            state: OptimState::default(),
        }
    }

    /// One update of every parameter in `params` that has a gradient.
    /// `clip` rescales the group's gradients to at most that global norm.
    pub fn step(
        &mut self,
        group: Group,
        params: &[(String, Var)],
        grads: &GradStore,
        lr: f64,
        clip: Option<f64>,
    ) -> Result<()> {
        let RAdamConfig { beta1, beta2, eps } = self.config;
        let mut present = Vec::with_capacity(params.len());
        let mut sq_norm = 0.0f64;
        for (name, var) in params {
            if let Some(g) = grads.get(var.as_tensor()) {
                if clip.is_some() {
                    sq_norm += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
                }
                present.push((name, var, g));
            }
        }
        let scale = match clip {
            Some(max) if sq_norm.sqrt() > max => max / (sq_norm.sqrt() + 1e-6),
            _ => 1.0,
        };

        let state = self.state.groups.entry(group).or_default();
        state.step += 1;
        let t = state.step as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let rho_t = rho_inf - 2.0 * t * beta2.powf(t) / bias2;
        let rect = (rho_t > 5.0).then(|| {
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt()
        });

        for (name, var, g) in present {
            // gradients keep their op history, which pins the whole forward graph
            let g = g.detach();
            let g = if scale != 1.0 { (g * scale)? } else { g };
            let m_prev = match state.m.get(name.as_str()) {
                Some(m) => m.clone(),
                None => g.zeros_like()?,
            };
            let v_prev = match state.v.get(name.as_str()) {
                Some(v) => v.clone(),
                None => g.zeros_like()?,
            };
            let m = ((m_prev * beta1)? + (&g * (1.0 - beta1))?)?;
            let v = ((v_prev * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
            let m_hat = (&m / bias1)?;
            let update = match rect {
                Some(r) => {
                    let denom = ((&v / bias2)?.sqrt()? + eps)?;
                    ((m_hat / denom)? * (lr * r))?
                }
                None => (m_hat * lr)?,
            };
            var.set(&(var.as_tensor() - update)?.detach())?;
            state.m.insert(name.clone(), m);
            state.v.insert(name.clone(), v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.config;
        if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) || c.eps <= 0.0 {
            return Err(Error::Config(format!(
                "invalid optimizer settings beta1={} beta2={} eps={}",
                c.beta1, c.beta2, c.eps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    #[test]
    fn schedule_values() {
        assert_eq!(schedule_lr(1e-4, 0.95, 0), 1e-4);
        assert!((schedule_lr(1e-4, 0.95, 1) - 9.5e-5).abs() < 1e-18);
        assert!((schedule_lr(1e-4, 0.95, 2) - 9.025e-5).abs() < 1e-18);
        assert!((schedule_lr(1e-4, 0.95, 20) - 3.5849e-5).abs() < 1e-9);
    }

    /// Scalar reference implementation of the same update rule.
    fn reference(grads: &[f64], lr: f64, c: RAdamConfig) -> f64 {
        let (mut x, mut m, mut v) = (0.0, 0.0, 0.0);
        let rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let m_hat = m / (1.0 - c.beta1.powi(t));
            let b2t = c.beta2.powi(t);
            let rho = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
            if rho > 5.0 {
                let r = ((rho - 4.0) * (rho - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                    .sqrt();
                x -= lr * r * m_hat / ((v / (1.0 - b2t)).sqrt() + c.eps);
            } else {
                x -= lr * m_hat;
            }
        }
        x
    }

    #[test]
    fn matches_scalar_reference() {
        let cfg = RAdamConfig {
            beta1: 0.9,
            ..RAdamConfig::default()
        };
        let mut opt = RAdam::new(cfg);
        let var = Var::from_vec(vec![0.0f32], 1, &Device::Cpu).unwrap();
        let params = vec![("w".to_string(), var.clone())];
        let gs: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.5) * 0.3).collect();
        for g in &gs {
            let loss = (var.as_tensor() * *g).unwrap().sum_all().unwrap();
            let grads = loss.backward().unwrap();
            opt.step(Group::Generator, &params, &grads, 0.01, None).unwrap();
        }
        let got = var.as_tensor().to_vec1::<f32>().unwrap()[0] as f64;
        let want = reference(&gs, 0.01, cfg);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        assert_eq!(opt.state.steps()[&Group::Generator], 12);
    }

    #[test]
    fn stored_moments_hold_no_graph() {
        let mut opt = RAdam::new(RAdamConfig::default());
        let var = Var::from_vec(vec![0.5f32, -0.5], 2, &Device::Cpu).unwrap();
        let params = vec![("w".to_string(), var.clone())];
        // the gradient of exp comes back with op history attached
        let loss = var.as_tensor().exp().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        opt.step(Group::Generator, &params, &grads, 0.1, Some(1.0)).unwrap();
        let s = &opt.state.groups[&Group::Generator];
        assert!(!s.m["w"].track_op() && !s.v["w"].track_op());
    }

    #[test]
    fn clipping_bounds_first_step() {
        let mut opt = RAdam::new(RAdamConfig::default());
        let var = Var::from_vec(vec![0.0f32, 0.0], 2, &Device::Cpu).unwrap();
        let params = vec![("w".to_string(), var.clone())];
        let k = Tensor::new(&[30.0f32, 40.0], &Device::Cpu).unwrap();
        let grads = (var.as_tensor() * k).unwrap().sum_all().unwrap().backward().unwrap();
        opt.step(Group::Generator, &params, &grads, 1.0, Some(5.0)).unwrap();
        let v = var.as_tensor().to_vec1::<f32>().unwrap();
        assert!((v[0] + 3.0).abs() < 1e-4 && (v[1] + 4.0).abs() < 1e-4, "{v:?}");
    }
}
