//! Alternating adversarial training: per iteration one discriminator update,
//! then one update of encoders, decoder, refinement net, classifier and
//! projection heads.

pub mod checkpoint;
pub mod optim;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Tensor, Var};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{make_view_pair, AugmentationPolicy};
use crate::data::{stack, Dataset, Domain};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalPath};
use crate::losses::{
    adversarial_loss, cls_loss, cycle_attribute_loss, cycle_content_loss, decoder_loss, orth_loss,
    selfsup_loss_with, total_loss, uncorr_loss, AdversarialRole, LossReport, LossTerms,
    LossWeights, SelfSupMetric, Term,
};
use crate::nets::{EncoderKind, Group, Mode, ModelBundle, NetworkConfig};
use crate::representation::{EventFrame, FrameImage};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use optim::{schedule_lr, OptimState, RAdam, RAdamConfig};

/// Seed used when a config does not set one.
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples per domain per iteration.
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    pub enable_selfsup: bool,
    pub enable_uncorr: bool,
    pub enable_refinement: bool,
    pub enable_event_discriminator: bool,
    pub enable_content_discriminator: bool,
    /// Fake-event synthesis and everything downstream of it: the decoder and
    /// cycle terms, fake classification and the event discriminator.
    pub enable_fake_generation: bool,
    /// When off, the decoder is conditioned on the learned null attribute.
    pub enable_attribute_encoder: bool,
    pub enable_orth_reg: bool,
    /// Stops fake-classification gradients at the fake events.
    pub stop_grad_fake_cls: bool,
    /// Global gradient-norm bound per group; 0 disables clipping.
    pub grad_clip: f64,
    pub selfsup_metric: SelfSupMetric,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Evaluate every this many epochs; 0 evaluates only after the last.
    pub eval_every: usize,
    pub eval_batch_size: usize,
    /// Caps iterations per epoch; 0 runs the full source set.
    pub max_steps_per_epoch: usize,
    pub augment_frame: AugmentationPolicy,
    pub augment_event: AugmentationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 7,
            lr: 1e-4,
            lr_decay: 0.95,
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
            weights: LossWeights::default(),
            enable_selfsup: true,
            enable_uncorr: true,
            enable_refinement: true,
            enable_event_discriminator: true,
            enable_content_discriminator: true,
            enable_fake_generation: true,
            enable_attribute_encoder: true,
            enable_orth_reg: true,
            stop_grad_fake_cls: false,
            grad_clip: 0.0,
            selfsup_metric: SelfSupMetric::Cos,
            seed: DEFAULT_SEED,
            checkpoint_every: 1,
            eval_every: 1,
            eval_batch_size: 256,
            max_steps_per_epoch: 0,
            augment_frame: AugmentationPolicy::frame_default(),
            augment_event: AugmentationPolicy::event_default(),
        }
    }
}

impl TrainConfig {
    /// Only supervised frame classification.
    pub fn source_only(mut self) -> Self {
        self.enable_selfsup = false;
        self.enable_uncorr = false;
        self.enable_refinement = false;
        self.enable_event_discriminator = false;
        self.enable_content_discriminator = false;
        self.enable_fake_generation = false;
        self.enable_attribute_encoder = false;
        self.enable_orth_reg = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.eval_batch_size == 0 {
            return fail("eval_batch_size must be >= 1".into());
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return fail(format!("grad_clip must be >= 0, got {}", self.grad_clip));
        }
        self.optimizer().validate()?;
        self.weights.validate()?;
        self.augment_frame.validate()?;
        self.augment_event.validate()?;
        Ok(())
    }

    pub fn optimizer(&self) -> RAdam {
        RAdam::new(RAdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        })
    }

    /// Equal except for the epoch budget, which may grow on resume.
    fn compatible_for_resume(&self, other: &TrainConfig) -> bool {
        let mut a = self.clone();
        a.epochs = other.epochs;
        a == *other
    }
}

/// Training state: networks, optimizer, random stream and epoch counter.
#[derive(Debug)]
pub struct Trainer {
    pub bundle: ModelBundle,
    pub config: TrainConfig,
    pub optim: RAdam,
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    params: BTreeMap<Group, Vec<(String, Var)>>,
}

impl Trainer {
    pub fn new(network: &NetworkConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let bundle = ModelBundle::new(network, config.seed)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        Ok(Self::assemble(bundle, config, rng, 0))
    }

    /// Resumes from a checkpoint. `config` must match the checkpoint's except
    /// for `epochs`.
    pub fn from_checkpoint(ck: &Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if !ck.train.compatible_for_resume(&config) {
            return Err(Error::Checkpoint(
                "training config differs from the checkpoint's (only `epochs` may change)".into(),
            ));
        }
        let bundle = ck.to_bundle()?;
        let mut t = Self::assemble(bundle, config, ck.rng.clone(), ck.epoch);
        t.optim.state = ck.optim.clone();
        Ok(t)
    }

    fn assemble(bundle: ModelBundle, config: TrainConfig, rng: ChaCha8Rng, epoch: usize) -> Self {
        let params = Group::ALL
            .into_iter()
            .map(|g| {
                let named = bundle
                    .store
                    .trainable(g)
                    .into_iter()
                    .map(|(n, v)| (n.to_string(), v.clone()))
                    .collect();
                (g, named)
            })
            .collect();
        Self {
            optim: config.optimizer(),
            bundle,
            config,
            rng,
            epoch,
            params,
        }
    }

    /// Learning rate of the next epoch.
    pub fn lr(&self) -> f64 {
        schedule_lr(self.config.lr, self.config.lr_decay, self.epoch)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(&self.bundle, &self.config, self.epoch, &self.rng, &self.optim.state)
    }

    fn clip(&self) -> Option<f64> {
        (self.config.grad_clip > 0.0).then_some(self.config.grad_clip)
    }

    fn encode(&self, kind: EncoderKind, x: &Tensor) -> Result<Tensor> {
        match kind {
            EncoderKind::Frame => self.bundle.encode_frame(x, Mode::Train),
            EncoderKind::EventContent => self.bundle.encode_event_content(x, Mode::Train),
            EncoderKind::EventAttribute => self.bundle.encode_event_attribute(x, Mode::Train),
        }
    }

    /// Self-supervised term for one encoder: both augmented views projected
    /// through the encoder's head. `main` is the encoder's output on the
    /// unaugmented batch, reused when the policy keeps the original as view a.
    fn selfsup_term(
        &self,
        kind: EncoderKind,
        views: &(Tensor, Tensor),
        main: &Tensor,
        reuse_main: bool,
    ) -> Result<Tensor> {
        let head = self.bundle.config.projection;
        let fa = if reuse_main {
            main.clone()
        } else {
            self.encode(kind, &views.0)?
        };
        let fb = self.encode(kind, &views.1)?;
        let pa = self.bundle.project(&fa, kind, head)?;
        let pb = self.bundle.project(&fb, kind, head)?;
        selfsup_loss_with(&pa, &pb, self.config.selfsup_metric)
    }

    fn frame_views(&mut self, frames: &[&Array3<f32>]) -> Result<(Tensor, Tensor)> {
        let mut a = Vec::with_capacity(frames.len());
        let mut b = Vec::with_capacity(frames.len());
        for f in frames {
            let img = FrameImage {
                data: (*f).clone(),
                label: None,
            };
            let pair = make_view_pair(&img, &self.config.augment_frame, &mut self.rng)?;
            a.push(pair.view_a.data);
            b.push(pair.view_b.data);
        }
        Ok((stack(&a.iter().collect::<Vec<_>>())?, stack(&b.iter().collect::<Vec<_>>())?))
    }

    fn event_views(&mut self, events: &[&Array3<f32>]) -> Result<(Tensor, Tensor)> {
        let mut a = Vec::with_capacity(events.len());
        let mut b = Vec::with_capacity(events.len());
        for e in events {
            let frame = EventFrame {
                data: (*e).clone(),
                label: None,
            };
            let pair = make_view_pair(&frame, &self.config.augment_event, &mut self.rng)?;
            a.push(pair.view_a.data);
            b.push(pair.view_b.data);
        }
        Ok((stack(&a.iter().collect::<Vec<_>>())?, stack(&b.iter().collect::<Vec<_>>())?))
    }

    /// One iteration on a labeled frame batch and an unlabeled event batch
    /// of the same size. Returns every active term, unweighted, and the
    /// weighted total over both sub-steps.
    pub fn train_step(
        &mut self,
        frames: &[&Array3<f32>],
        labels: &[usize],
        events: &[&Array3<f32>],
    ) -> Result<LossReport> {
        if frames.is_empty() || events.is_empty() {
            return Err(Error::Argument("train_step needs nonempty batches".into()));
        }
        if frames.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} frames but {} labels",
                frames.len(),
                labels.len()
            )));
        }
        if frames.len() != events.len() {
            return Err(Error::Argument(format!(
                "frame and event batches must be equally sized, got {} and {}",
                frames.len(),
                events.len()
            )));
        }
        let cfg = self.config.clone();
        let use_att = cfg.enable_attribute_encoder;
        let lr = self.lr();
        let n = frames.len();

        // Views are drawn before the forward pass so the random stream does
        // not depend on which terms are active downstream.
        let selfsup_views = if cfg.enable_selfsup {
            Some((self.frame_views(frames)?, self.event_views(events)?))
        } else {
            None
        };

        let y_f = stack(frames)?;
        let y_e = stack(events)?;
        let m = &self.bundle;

        let z_f = m.encode_frame(&y_f, Mode::Train)?;
        let z_e = m.encode_event_content(&y_e, Mode::Train)?;
        let a_e = if use_att {
            m.encode_event_attribute(&y_e, Mode::Train)?
        } else {
            m.null_attribute(n)?
        };

        let mut gen = LossTerms::new();
        gen.insert(Term::ClsFrame, cls_loss(&m.classify(&z_f, Mode::Train)?, labels)?);

        let fake = if cfg.enable_fake_generation {
            let raw = m.decode(&z_f, &a_e, Mode::Train)?;
            let fake = m.refine(&raw, Mode::Train, cfg.enable_refinement)?;
            let z_fake = m.encode_event_content(&fake, Mode::Train)?;
            let cls_in = if cfg.stop_grad_fake_cls {
                m.encode_event_content(&fake.detach(), Mode::Train)?
            } else {
                z_fake.clone()
            };
            gen.insert(Term::ClsFake, cls_loss(&m.classify(&cls_in, Mode::Train)?, labels)?);
            gen.insert(Term::CycCont, cycle_content_loss(&z_f, &z_fake)?);
            let a_fake = if use_att {
                let a_fake = m.encode_event_attribute(&fake, Mode::Train)?;
                gen.insert(Term::CycAtt, cycle_attribute_loss(&a_e, &a_fake)?);
                a_fake
            } else {
                m.null_attribute(n)?
            };
            let recon_frame = m.decode_frame(&z_f, Mode::Train)?;
            let recon_fake = m.decode(&z_fake, &a_fake, Mode::Train)?;
            let recon_event = m.decode(&z_e, &a_e, Mode::Train)?;
            gen.insert(
                Term::Decoder,
                decoder_loss(&recon_frame, &y_f, &fake, &recon_fake, &y_e, &recon_event)?,
            );
            Some(fake)
        } else {
            None
        };

        if cfg.enable_orth_reg {
            gen.insert(
                Term::Orth,
                orth_loss(&m.orthogonal_weights()?, cfg.weights.beta)?,
            );
        }

        if let Some(((fa, fb), (ea, eb))) = &selfsup_views {
            let reuse_f = cfg.augment_frame.use_original_as_view_a;
            let reuse_e = cfg.augment_event.use_original_as_view_a;
            gen.insert(
                Term::SelfsupFrame,
                self.selfsup_term(EncoderKind::Frame, &(fa.clone(), fb.clone()), &z_f, reuse_f)?,
            );
            let ev = (ea.clone(), eb.clone());
            gen.insert(
                Term::SelfsupEventCont,
                self.selfsup_term(EncoderKind::EventContent, &ev, &z_e, reuse_e)?,
            );
            if use_att {
                gen.insert(
                    Term::SelfsupEventAtt,
                    self.selfsup_term(EncoderKind::EventAttribute, &ev, &a_e, reuse_e)?,
                );
            }
        }

        if cfg.enable_uncorr && use_att {
            let head = m.config.projection;
            let p_att = m.project(&a_e, EncoderKind::EventAttribute, head)?;
            let p_cont = m.project(&z_e, EncoderKind::EventContent, head)?;
            gen.insert(Term::Uncorr, uncorr_loss(&p_att, &p_cont)?);
        }

        // Discriminator sub-step on detached inputs.
        let event_adv = cfg.enable_event_discriminator && fake.is_some();
        let mut disc = LossTerms::new();
        if cfg.enable_content_discriminator {
            let real = m.discriminate_content(&z_f.detach())?;
            let other = m.discriminate_content(&z_e.detach())?;
            disc.insert(
                Term::DisCont,
                adversarial_loss(&real, &other, AdversarialRole::Discriminator)?,
            );
        }
        if let (true, Some(fake)) = (event_adv, &fake) {
            let real = m.discriminate_event(&y_e)?;
            let other = m.discriminate_event(&fake.detach())?;
            disc.insert(
                Term::DisE,
                adversarial_loss(&real, &other, AdversarialRole::Discriminator)?,
            );
        }
        let (disc_total, disc_report) = total_loss(&disc, &cfg.weights)?;
        if disc.get(Term::DisCont).is_some() || disc.get(Term::DisE).is_some() {
            let grads = disc_total.backward()?;
            let clip = self.clip();
            for (term, group) in [
                (Term::DisCont, Group::ContentDiscriminator),
                (Term::DisE, Group::EventDiscriminator),
            ] {
                if disc.get(term).is_some() {
                    self.optim.step(group, &self.params[&group], &grads, lr, clip)?;
                }
            }
        }

        // Generator-side adversarial terms against the updated discriminators.
        let m = &self.bundle;
        if cfg.enable_content_discriminator {
            let real = m.discriminate_content(&z_f)?;
            let other = m.discriminate_content(&z_e)?;
            gen.insert(
                Term::EncCont,
                adversarial_loss(&real, &other, AdversarialRole::Generator)?,
            );
        }
        if let (true, Some(fake)) = (event_adv, &fake) {
            let real = m.discriminate_event(&y_e)?;
            let other = m.discriminate_event(fake)?;
            gen.insert(
                Term::GenE,
                adversarial_loss(&real, &other, AdversarialRole::Generator)?,
            );
        }
        let (gen_total, gen_report) = total_loss(&gen, &cfg.weights)?;
        let grads = gen_total.backward()?;
        let clip = self.clip();
        self.optim
            .step(Group::Generator, &self.params[&Group::Generator], &grads, lr, clip)?;

        let mut report = gen_report;
        report.terms.extend(disc_report.terms);
        report.total += disc_report.total;
        Ok(report)
    }

    /// One pass over the source set; the target set is cycled to match.
    pub fn run_epoch(&mut self, frames: &Dataset, events: &Dataset) -> Result<Vec<LossReport>> {
        if frames.is_empty() || events.is_empty() {
            return Err(Error::Argument("training sets must be nonempty".into()));
        }
        let mut perm_f: Vec<usize> = (0..frames.len()).collect();
        let mut perm_e: Vec<usize> = (0..events.len()).collect();
        perm_f.shuffle(&mut self.rng);
        perm_e.shuffle(&mut self.rng);
        let b = self.config.batch_size;
        let mut steps = frames.len().div_ceil(b);
        if self.config.max_steps_per_epoch > 0 {
            steps = steps.min(self.config.max_steps_per_epoch);
        }
        let mut reports = Vec::with_capacity(steps);
        for s in 0..steps {
            let idx_f = &perm_f[s * b..((s + 1) * b).min(frames.len())];
            let idx_e: Vec<usize> = (0..idx_f.len())
                .map(|j| perm_e[(s * b + j) % events.len()])
                .collect();
            let fs: Vec<&Array3<f32>> = idx_f.iter().map(|&i| &frames.samples[i]).collect();
            let es: Vec<&Array3<f32>> = idx_e.iter().map(|&i| &events.samples[i]).collect();
            let labels = frames.batch_labels(idx_f);
            reports.push(self.train_step(&fs, &labels, &es)?);
        }
        self.epoch += 1;
        Ok(reports)
    }
}

/// A labeled set evaluated after epochs; reported as `<name>_acc`.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub name: String,
    pub path: EvalPath,
    pub data: Dataset,
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub frames: Dataset,
    pub events: Dataset,
    pub eval: Vec<EvalSet>,
}

impl TrainData {
    fn validate(&self, network: &NetworkConfig) -> Result<()> {
        for (d, domain, shape) in [
            (&self.frames, Domain::Frame, network.frame_shape()),
            (&self.events, Domain::Event, network.event_shape()),
        ] {
            if d.domain != domain {
                return Err(Error::Argument(format!(
                    "expected a {} dataset, got {}",
                    domain.name(),
                    d.domain.name()
                )));
            }
            if d.is_empty() {
                return Err(Error::Argument(format!("{} training set is empty", domain.name())));
            }
            if let Some(s) = d.sample_shape() {
                if s != shape {
                    return Err(Error::Shape {
                        context: "training data",
                        expected: shape.to_vec(),
                        actual: s.to_vec(),
                    });
                }
            }
        }
        if self.frames.class_count > network.num_classes {
            return Err(Error::Config(format!(
                "dataset has {} classes but the classifier has {}",
                self.frames.class_count, network.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub losses: LossReport,
    pub accuracy: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochMetrics>,
    /// Per-step reports of the epochs run by this call.
    pub steps: Vec<LossReport>,
    pub trainer: Trainer,
}

/// Rewritten-on-append CSV file whose rows start with an epoch index.
struct CsvLog {
    path: PathBuf,
    header: String,
    rows: Vec<String>,
}

impl CsvLog {
    /// Keeps rows from an existing file whose epoch is below `keep_before`.
    fn open(path: PathBuf, header: String, keep_before: usize) -> Result<Self> {
        let mut rows = Vec::new();
        if keep_before > 0 {
            if let Ok(text) = fs::read_to_string(&path) {
                if text.lines().next() == Some(header.as_str()) {
                    rows = text
                        .lines()
                        .skip(1)
                        .filter(|l| {
                            l.split(',')
                                .next()
                                .and_then(|e| e.parse::<usize>().ok())
                                .is_some_and(|e| e < keep_before)
                        })
                        .map(str::to_string)
                        .collect();
                }
            }
        }
        let log = Self { path, header, rows };
        log.flush()?;
        Ok(log)
    }

    fn push(&mut self, row: String) -> Result<()> {
        self.rows.push(row);
        self.flush()
    }

    fn flush(&self) -> Result<()> {
        let mut text = self.header.clone();
        text.push('\n');
        for r in &self.rows {
            text.push_str(r);
            text.push('\n');
        }
        fs::write(&self.path, text)?;
        Ok(())
    }
}

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir
        .join("checkpoints")
        .join(format!("epoch_{epoch:04}.safetensors"))
}

/// Trains for `config.epochs` epochs (counting any resumed ones), writing
/// `metrics.csv` (one row per epoch), `steps.csv` (one row per iteration)
/// and `checkpoints/` under `run_dir`.
pub fn train(
    network: &NetworkConfig,
    config: &TrainConfig,
    data: &TrainData,
    run_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    network.validate()?;
    data.validate(network)?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if ck.network != *network {
                return Err(Error::Checkpoint(
                    "network config differs from the checkpoint's".into(),
                ));
            }
            Trainer::from_checkpoint(&ck, config.clone())?
        }
        None => Trainer::new(network, config.clone())?,
    };
    fs::create_dir_all(run_dir.join("checkpoints"))?;

    let loss_cols = LossReport::csv_header().join(",");
    let acc_cols: Vec<String> = data.eval.iter().map(|e| format!("{}_acc", e.name)).collect();
    let mut metrics_header = format!("epoch,lr,steps,{loss_cols}");
    for c in &acc_cols {
        metrics_header.push(',');
        metrics_header.push_str(c);
    }
    let start = trainer.epoch;
    let mut metrics = CsvLog::open(run_dir.join("metrics.csv"), metrics_header, start)?;
    let mut step_log = CsvLog::open(
        run_dir.join("steps.csv"),
        format!("epoch,step,{loss_cols}"),
        start,
    )?;

    let mut history = Vec::new();
    let mut all_steps = Vec::new();
    let mut last_ckpt = None;
    for epoch in start..config.epochs {
        let lr = trainer.lr();
        let reports = trainer.run_epoch(&data.frames, &data.events)?;
        for (i, r) in reports.iter().enumerate() {
            step_log.push(format!("{epoch},{i},{}", r.csv_cells().join(",")))?;
        }
        let last = epoch + 1 == config.epochs;
        let due = |every: usize| last || (every > 0 && (epoch + 1) % every == 0);
        let mut accuracy = BTreeMap::new();
        if due(config.eval_every) {
            for set in &data.eval {
                let r = evaluate(&trainer.bundle, &set.data, set.path, config.eval_batch_size)?;
                accuracy.insert(format!("{}_acc", set.name), r.accuracy);
            }
        }
        let mean = LossReport::mean(&reports);
        let mut row = format!("{epoch},{lr:e},{},{}", reports.len(), mean.csv_cells().join(","));
        for c in &acc_cols {
            row.push(',');
            if let Some(a) = accuracy.get(c) {
                row.push_str(&format!("{a}"));
            }
        }
        metrics.push(row)?;
        log::info!(
            "epoch {epoch}: lr {lr:.3e}, loss {:.4}, {accuracy:?}",
            mean.total
        );
        history.push(EpochMetrics {
            epoch,
            lr,
            steps: reports.len(),
            losses: mean,
            accuracy,
        });
        all_steps.extend(reports);
        if due(config.checkpoint_every) {
            let path = checkpoint_path(run_dir, trainer.epoch);
            save_checkpoint(&trainer.checkpoint()?, &path)?;
            last_ckpt = Some(path);
        }
    }
    let checkpoint = match last_ckpt {
        Some(p) => p,
        None => {
            let path = checkpoint_path(run_dir, trainer.epoch);
            save_checkpoint(&trainer.checkpoint()?, &path)?;
            path
        }
    };
    Ok(TrainOutcome {
        checkpoint,
        history,
        steps: all_steps,
        trainer,
    })
}
