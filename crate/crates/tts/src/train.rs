//! Two-stage training on a seeded synthetic task.
//!
//! The synthetic target mel for symbols `c_1..c_T` and style scalar `s` is
//! `x1[f][j] = s + P[c_f][j] + 0.05 * noise`, where every symbol pattern `P`
//! has zero mean across channels. The frame mean of a clean target is
//! therefore exactly `s`. A separate reference mel with the same `s` (and
//! different symbols) feeds the style encoder during fine-tuning.

use std::str::FromStr;

use lombard_core::Scalar;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mel::{formant_shift_augment, mask_span_with, ToyMel, FORMANT_FACTOR_MAX, FORMANT_FACTOR_MIN};
use crate::model::{CfmExample, ModelDims, StyleSource, TtsModel};
use crate::text::{SPACE, VOCAB_SIZE};
use crate::TtsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Everything except the style encoder trains; no FiLM heads exist.
    Pretrain,
    /// Identity-initialized FiLM heads are added; the input layers and the blocks
    /// below the freeze boundary stay fixed.
    Finetune,
}

impl FromStr for Stage {
    type Err = TtsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pretrain" => Ok(Stage::Pretrain),
            "finetune" => Ok(Stage::Finetune),
            other => Err(TtsError::InvalidConfig(format!(
                "unknown stage '{other}' (expected pretrain or finetune)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Fraction of frames hidden from the context and supervised, drawn uniformly per example.
    pub mask_ratio: (f64, f64),
    /// Range of the formant-shift factor applied to reference mels.
    pub formant_range: (f64, f64),
    /// Euler steps used when sampling from the trained model.
    pub euler_steps: usize,
    pub stage: Stage,
    /// Probability of withholding the context vector entirely.
    pub context_drop: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Cosine-decay the learning rate to this fraction of its initial value by the last step.
    pub final_lr_fraction: f64,
    /// Seed of the synthetic task's symbol patterns.
    pub task_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            learning_rate: 3e-3,
            epochs: 10,
            steps_per_epoch: 100,
            batch_size: 16,
            mask_ratio: (0.7, 1.0),
            formant_range: (0.9, 1.1),
            euler_steps: 32,
            stage: Stage::Pretrain,
            context_drop: 0.3,
            grad_clip: 1.0,
            final_lr_fraction: 0.1,
            task_seed: SyntheticTask::SHIPPED_SEED,
        }
    }
}

impl TrainConfig {
    /// The shipped configuration for each stage. Fine-tuning withholds the
    /// context more often so the model learns to rely on the style embedding.
    pub fn shipped(stage: Stage) -> Self {
        match stage {
            Stage::Pretrain => TrainConfig::default(),
            Stage::Finetune => TrainConfig {
                seed: 1,
                stage,
                context_drop: 0.5,
                ..TrainConfig::default()
            },
        }
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    /// Learning rate at optimizer step `step` (0-based).
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let total = self.total_steps();
        if total <= 1 {
            return self.learning_rate;
        }
        let progress = step.min(total - 1) as f64 / (total - 1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cosine)
    }

    pub fn validate(&self) -> Result<(), TtsError> {
        let bad = |msg: String| Err(TtsError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.euler_steps == 0 {
            return bad("epochs, batch size and Euler steps must be at least 1".into());
        }
        let (lo, hi) = self.mask_ratio;
        if !(0.1 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("mask ratio range ({lo}, {hi}) must satisfy 0.1 <= lo <= hi <= 1"));
        }
        let (flo, fhi) = self.formant_range;
        if !(FORMANT_FACTOR_MIN <= flo && flo <= fhi && fhi <= FORMANT_FACTOR_MAX) {
            return bad(format!(
                "formant range ({flo}, {fhi}) must lie within [{FORMANT_FACTOR_MIN}, {FORMANT_FACTOR_MAX}]"
            ));
        }
        if !(0.0..=1.0).contains(&self.context_drop) {
            return bad(format!("context drop {} outside [0, 1]", self.context_drop));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad(format!("final learning-rate fraction {} outside [0, 1]", self.final_lr_fraction));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return bad(format!("gradient clip {} must be >= 0", self.grad_clip));
        }
        Ok(())
    }
}

/// Closed-form conditional task used for desk-scale training.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub channels: usize,
    /// `vocab x channels`, zero mean across channels for every symbol.
    pub patterns: Vec<f64>,
    pub noise_std: f64,
    /// Style scalars are drawn from `[-style_range, style_range]`.
    pub style_range: f64,
    pub min_frames: usize,
    pub max_frames: usize,
}

/// One sampled training item.
#[derive(Debug, Clone)]
pub struct TrainingItem<T> {
    pub example: CfmExample<T>,
    pub reference: ToyMel<T>,
    pub style_scalar: f64,
}

impl SyntheticTask {
    pub const SHIPPED_SEED: u64 = 0x5EED_2024;

    pub fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patterns = Vec::with_capacity(VOCAB_SIZE * channels);
        for _ in 0..VOCAB_SIZE {
            let row: Vec<f64> = (0..channels).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mean = row.iter().sum::<f64>() / channels as f64;
            patterns.extend(row.iter().map(|v| v - mean));
        }
        SyntheticTask {
            channels,
            patterns,
            noise_std: 0.05,
            style_range: 1.25,
            min_frames: 12,
            max_frames: 32,
        }
    }

    pub fn shipped(channels: usize) -> Self {
        Self::new(channels, Self::SHIPPED_SEED)
    }

    /// Symbols over letters and space, padded with filler after `len` symbols.
    pub fn random_symbols<R: Rng>(&self, frames: usize, rng: &mut R) -> Vec<usize> {
        let len = rng.random_range(frames / 2..=frames);
        (0..frames)
            .map(|f| if f < len { rng.random_range(1..=SPACE) } else { 0 })
            .collect()
    }

    /// `s + P[c] + noise` for each symbol.
    pub fn target_mel<T: Scalar, R: Rng>(&self, chars: &[usize], s: f64, rng: &mut R) -> ToyMel<T> {
        let c = self.channels;
        let mut values = Vec::with_capacity(chars.len() * c);
        for &ch in chars {
            for j in 0..c {
                let n: f64 = rng.sample(StandardNormal);
                values.push(T::lit(s + self.patterns[ch * c + j] + self.noise_std * n));
            }
        }
        ToyMel::new(chars.len(), c, values).expect("synthetic mel is well formed")
    }

    /// Reference utterance with style scalar `s` and random symbols.
    pub fn reference_mel<T: Scalar, R: Rng>(&self, s: f64, rng: &mut R) -> ToyMel<T> {
        let frames = rng.random_range(self.min_frames..=self.max_frames);
        let chars = self.random_symbols(frames, rng);
        self.target_mel(&chars, s, rng)
    }

    pub fn sample<T: Scalar, R: Rng>(&self, cfg: &TrainConfig, rng: &mut R) -> Result<TrainingItem<T>, TtsError> {
        let s = rng.random_range(-self.style_range..=self.style_range);
        let frames = rng.random_range(self.min_frames..=self.max_frames);
        let chars = self.random_symbols(frames, rng);
        let x1 = self.target_mel::<T, _>(&chars, s, rng);
        let ratio = rng.random_range(cfg.mask_ratio.0..=cfg.mask_ratio.1);
        let mask = mask_span_with(frames, ratio, rng)?;
        let x0 = (0..x1.values().len())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let t = T::lit(rng.sample::<f64, _>(Open01));
        let drop_context = rng.random_bool(cfg.context_drop);
        let reference = self.reference_mel::<T, _>(s, rng);
        let factor = rng.random_range(cfg.formant_range.0..=cfg.formant_range.1);
        let reference = formant_shift_augment(&reference, factor)?;
        Ok(TrainingItem {
            example: CfmExample {
                x1,
                chars,
                mask,
                x0,
                t,
                drop_context,
            },
            reference,
            style_scalar: s,
        })
    }
}

/// Whether the parameter `name` is updated in `stage`.
pub fn is_trainable(name: &str, stage: Stage, freeze_boundary: usize) -> bool {
    match stage {
        Stage::Pretrain => !name.starts_with("encoder.") && !name.contains(".film."),
        Stage::Finetune => {
            if name.starts_with("encoder.") || name.starts_with("out.") {
                return true;
            }
            name.strip_prefix("blocks.")
                .and_then(|rest| rest.split('.').next())
                .and_then(|i| i.parse::<usize>().ok())
                .is_some_and(|i| i >= freeze_boundary)
        }
    }
}

struct Adam<T> {
    m: TtsModel<T>,
    v: TtsModel<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &TtsModel<T>) -> Self {
        Adam {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut TtsModel<T>, grad: &TtsModel<T>, lr: f64, stage: Stage) {
        self.step += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::lit(1.0 - Self::BETA1.powi(self.step));
        let c2 = T::lit(1.0 - Self::BETA2.powi(self.step));
        let (lr, eps) = (T::lit(lr), T::lit(Self::EPS));
        let fb = model.dims.freeze_boundary;
        let params = model.tensors_mut();
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((name, p), (_, g)), (_, m)), (_, v)) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            if !is_trainable(&name, stage, fb) {
                continue;
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (T::one() - b1) * gi;
                v.data[i] = b2 * v.data[i] + (T::one() - b2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Per-step losses of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub steps_per_epoch: usize,
}

impl TrainReport {
    pub fn epoch_means(&self) -> Vec<f64> {
        self.losses
            .chunks(self.steps_per_epoch.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Trailing moving average (window 10) at the end of the first epoch and at the end of training.
    pub fn smoothed_first_and_final(&self) -> Option<(f64, f64)> {
        let s = smoothed(&self.losses, 10);
        let first = *s.get(self.steps_per_epoch.checked_sub(1)?)?;
        Some((first, *s.last()?))
    }
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Runs one training stage. Pretraining starts from `checkpoint` when given and
/// from a seeded initialization otherwise; fine-tuning requires a checkpoint.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    dims: ModelDims,
    checkpoint: Option<&TtsModel<T>>,
) -> Result<(TtsModel<T>, TrainReport), TtsError> {
    cfg.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = match (cfg.stage, checkpoint) {
        (Stage::Pretrain, Some(m)) => m.clone(),
        (Stage::Pretrain, None) => TtsModel::init(dims, &mut init_rng)?,
        (Stage::Finetune, Some(m)) => m.begin_finetune(),
        (Stage::Finetune, None) => return Err(TtsError::MissingCheckpoint),
    };
    let task = SyntheticTask::new(model.dims.channels, cfg.task_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut adam = Adam::new(&model);
    let mut losses = Vec::with_capacity(cfg.epochs * cfg.steps_per_epoch);
    let weight = T::one() / T::from_usize_lossy(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        for step in 0..cfg.steps_per_epoch {
            let mut grad = model.zeros_like();
            let mut loss = 0.0;
            for _ in 0..cfg.batch_size {
                let item = task.sample::<T, _>(cfg, &mut rng)?;
                let style = match cfg.stage {
                    Stage::Pretrain => StyleSource::None,
                    Stage::Finetune => StyleSource::Reference(&item.reference),
                };
                loss += model.cfm_loss_grad(&item.example, style, weight, &mut grad)?.as_f64();
            }
            loss /= cfg.batch_size as f64;
            let grad_norm = grad
                .tensors()
                .iter()
                .map(|(_, t)| t.squared_norm().as_f64())
                .sum::<f64>()
                .sqrt();
            if !loss.is_finite() || !grad_norm.is_finite() {
                let recent = &losses[losses.len().saturating_sub(10)..];
                return Err(TtsError::NonFiniteLoss {
                    epoch,
                    step,
                    loss,
                    grad_norm,
                    recent_mean: recent.iter().sum::<f64>() / recent.len().max(1) as f64,
                });
            }
            if cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip {
                let k = T::lit(cfg.grad_clip / grad_norm);
                for (_, t) in grad.tensors_mut() {
                    t.data.iter_mut().for_each(|g| *g *= k);
                }
            }
            adam.update(&mut model, &grad, cfg.learning_rate_at(losses.len()), cfg.stage);
            losses.push(loss);
        }
    }
    Ok((
        model,
        TrainReport {
            losses,
            steps_per_epoch: cfg.steps_per_epoch,
        },
    ))
}
