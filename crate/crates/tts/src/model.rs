//! Style encoder and FiLM-conditioned residual vector field, with hand-written
//! backpropagation.
//!
//! Per frame `f` the field computes
//!
//! ```text
//! h0   = Wn x_t[f] + bn + Wc ctx + E[char[f]] + Wt phi(t)
//! r_i  = h_i + W2 silu(W1 h_i + b1) + b2
//! h_i+1 = r_i                               (blocks without FiLM)
//! h_i+1 = (1 + Gg e + gg) * r_i + Gb e + gb (blocks with FiLM)
//! v[f] = Wo h_B + bo
//! ```
//!
//! where `phi(t) = [sin(pi k t), cos(pi k t)]` for `k = 1..=4`, `ctx` is the
//! mean of the unmasked (context) frames of the target mel and `e` the style
//! embedding. Frames are otherwise processed independently, so the context
//! reaches masked frames only through `ctx`.

use lombard_core::Scalar;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::mel::ToyMel;
use crate::tensor::{add_assign, matvec_acc, matvec_t_acc, outer_acc, Tensor};
use crate::text::VOCAB_SIZE;
use crate::TtsError;

pub const TIME_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub channels: usize,
    pub hidden: usize,
    pub ff: usize,
    pub style_dim: usize,
    pub encoder_hidden: usize,
    pub blocks: usize,
    /// Blocks below this index are frozen during fine-tuning and never carry FiLM heads.
    pub freeze_boundary: usize,
    pub vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            channels: 8,
            hidden: 32,
            ff: 64,
            style_dim: 16,
            encoder_hidden: 16,
            blocks: 4,
            freeze_boundary: 2,
            vocab: VOCAB_SIZE,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), TtsError> {
        let sizes = [
            ("channels", self.channels),
            ("hidden", self.hidden),
            ("ff", self.ff),
            ("style_dim", self.style_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("blocks", self.blocks),
            ("vocab", self.vocab),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(TtsError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.freeze_boundary > self.blocks {
            return Err(TtsError::InvalidConfig(format!(
                "freeze_boundary {} exceeds block count {}",
                self.freeze_boundary, self.blocks
            )));
        }
        Ok(())
    }

    pub(crate) fn to_meta(self) -> [usize; 8] {
        [
            self.channels,
            self.hidden,
            self.ff,
            self.style_dim,
            self.encoder_hidden,
            self.blocks,
            self.freeze_boundary,
            self.vocab,
        ]
    }

    pub(crate) fn from_meta(m: &[usize]) -> Option<Self> {
        let [channels, hidden, ff, style_dim, encoder_hidden, blocks, freeze_boundary, vocab] =
            <[usize; 8]>::try_from(m).ok()?;
        Some(ModelDims {
            channels,
            hidden,
            ff,
            style_dim,
            encoder_hidden,
            blocks,
            freeze_boundary,
            vocab,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `out x in`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[out, inp]),
            bias: Tensor::zeros(&[out]),
        }
    }

    fn random<R: Rng>(out: usize, inp: usize, gain: f64, rng: &mut R) -> Self {
        Linear {
            weight: random_tensor(&[out, inp], gain / (inp as f64).sqrt(), rng),
            bias: Tensor::zeros(&[out]),
        }
    }

    /// `W x + b`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = self.bias.data.clone();
        matvec_acc(&self.weight, x, &mut out);
        out
    }

    fn zeros_like(&self) -> Self {
        Linear {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    /// Accumulates parameter gradients for output gradient `dy` at input `x`.
    fn backward(&self, grad: &mut Linear<T>, x: &[T], dy: &[T], dx: Option<&mut [T]>) {
        outer_acc(&mut grad.weight, dy, x);
        add_assign(&mut grad.bias.data, dy);
        if let Some(dx) = dx {
            matvec_t_acc(&self.weight, dy, dx);
        }
    }
}

fn random_tensor<T: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Maps the style embedding to a per-channel scale `1 + gamma` and shift `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmHead<T> {
    pub gamma: Linear<T>,
    pub beta: Linear<T>,
}

impl<T: Scalar> FilmHead<T> {
    /// Zero weights and biases: every input yields scale 1 and shift 0.
    pub fn identity(hidden: usize, style_dim: usize) -> Self {
        FilmHead {
            gamma: Linear::zeros(hidden, style_dim),
            beta: Linear::zeros(hidden, style_dim),
        }
    }

    pub fn modulation(&self, style: &[T]) -> (Vec<T>, Vec<T>) {
        let mut gamma = self.gamma.apply(style);
        for g in &mut gamma {
            *g += T::one();
        }
        (gamma, self.beta.apply(style))
    }
}

/// `out[t][c] = gamma[c] * x[t][c] + beta[c]` for a `rows x cols` matrix.
pub fn film_apply<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> Result<Tensor<T>, TtsError> {
    let cols = x.cols();
    if x.shape.len() != 2 || gamma.len() != cols || beta.len() != cols {
        return Err(TtsError::ShapeMismatch(format!(
            "film_apply: input {:?}, gamma {}, beta {}",
            x.shape,
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(cols) {
        for ((v, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = g * *v + b;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub film: Option<FilmHead<T>>,
}

/// Frame projection followed by mean and standard-deviation pooling over time
/// and a projection of the pooled statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEncoder<T> {
    /// `encoder_hidden x channels`.
    pub frame: Linear<T>,
    /// `style_dim x 2*encoder_hidden`.
    pub pool: Linear<T>,
}

struct EncoderCache<T> {
    z: Vec<T>,
    mean: Vec<T>,
    std: Vec<T>,
    pooled: Vec<T>,
}

impl<T: Scalar> StyleEncoder<T> {
    fn forward(&self, mel: &ToyMel<T>) -> Result<(Vec<T>, EncoderCache<T>), TtsError> {
        let frames = mel.frames();
        if frames < 2 {
            return Err(TtsError::TooFewFrames { needed: 2, got: frames });
        }
        if mel.channels() != self.frame.weight.cols() {
            return Err(TtsError::ShapeMismatch(format!(
                "encoder expects {} channels, mel has {}",
                self.frame.weight.cols(),
                mel.channels()
            )));
        }
        let hs = self.frame.weight.rows();
        let mut z = Vec::with_capacity(frames * hs);
        for t in 0..frames {
            z.extend(self.frame.apply(mel.frame(t)));
        }
        let n = T::from_usize_lossy(frames);
        let mut mean = vec![T::zero(); hs];
        let mut std = vec![T::zero(); hs];
        let mut column = Vec::with_capacity(frames);
        for j in 0..hs {
            column.clear();
            column.extend(z.iter().skip(j).step_by(hs).copied());
            mean[j] = sorted_sum(&mut column) / n;
            if column[0] == column[frames - 1] {
                // constant in time: keep the statistics exact
                mean[j] = column[0];
                continue;
            }
            for v in column.iter_mut() {
                *v = (*v - mean[j]) * (*v - mean[j]);
            }
            std[j] = (sorted_sum(&mut column) / (n - T::one())).sqrt();
        }
        let pooled: Vec<T> = mean.iter().chain(&std).copied().collect();
        let e = self.pool.apply(&pooled);
        Ok((e, EncoderCache { z, mean, std, pooled }))
    }

    fn backward(&self, grad: &mut StyleEncoder<T>, mel: &ToyMel<T>, cache: &EncoderCache<T>, de: &[T]) {
        let hs = cache.mean.len();
        let frames = mel.frames();
        let mut dpooled = vec![T::zero(); 2 * hs];
        self.pool.backward(&mut grad.pool, &cache.pooled, de, Some(&mut dpooled));
        let (dmean, dstd) = dpooled.split_at(hs);
        let inv_n = T::one() / T::from_usize_lossy(frames);
        let inv_n1 = T::one() / T::from_usize_lossy(frames - 1);
        let mut dz = vec![T::zero(); hs];
        for t in 0..frames {
            let z = &cache.z[t * hs..(t + 1) * hs];
            for j in 0..hs {
                dz[j] = dmean[j] * inv_n;
                if cache.std[j] > T::zero() {
                    dz[j] += dstd[j] * (z[j] - cache.mean[j]) * inv_n1 / cache.std[j];
                }
            }
            self.frame.backward(&mut grad.frame, mel.frame(t), &dz, None);
        }
    }
}

/// Sum in ascending order, so pooled statistics do not depend on frame order.
fn sorted_sum<T: Scalar>(v: &mut [T]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.iter().copied().sum()
}

/// Inputs of one vector-field evaluation over a whole utterance.
#[derive(Debug, Clone, Copy)]
pub struct FieldInput<'a, T> {
    /// Noisy mel `x_t`, `frames x channels`.
    pub x: &'a [T],
    /// Context vector of `channels` values (zero when no context is given).
    pub cond: &'a [T],
    pub chars: &'a [usize],
    pub t: T,
    /// Style embedding; treated as zero when absent.
    pub style: Option<&'a [T]>,
}

struct FieldCache<T> {
    phi: Vec<T>,
    style: Vec<T>,
    /// Block inputs, `blocks + 1` entries of `frames x hidden` (last is the final hidden state).
    h: Vec<Vec<T>>,
    /// Pre-activations `frames x ff` per block.
    a: Vec<Vec<T>>,
    /// Residual outputs before FiLM (only filled for FiLM blocks).
    r: Vec<Vec<T>>,
    film: Vec<Option<(Vec<T>, Vec<T>)>>,
}

fn sigmoid<T: Scalar>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

fn silu<T: Scalar>(a: T) -> T {
    a * sigmoid(a)
}

fn silu_grad<T: Scalar>(a: T) -> T {
    let s = sigmoid(a);
    s * (T::one() + a * (T::one() - s))
}

pub fn time_features<T: Scalar>(t: T) -> Vec<T> {
    let pi = T::lit(std::f64::consts::PI);
    let mut phi = Vec::with_capacity(TIME_FEATURES);
    for k in 1..=TIME_FEATURES / 2 {
        let arg = pi * T::from_usize_lossy(k) * t;
        phi.push(arg.sin());
        phi.push(arg.cos());
    }
    phi
}

/// The full trainable model: style encoder plus vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct TtsModel<T> {
    pub dims: ModelDims,
    pub encoder: StyleEncoder<T>,
    /// `hidden x channels` projection of the noisy mel.
    pub noisy: Linear<T>,
    /// `hidden x channels` projection of the context vector.
    pub cond: Tensor<T>,
    /// `vocab x hidden` symbol embeddings.
    pub text: Tensor<T>,
    /// `hidden x TIME_FEATURES`.
    pub time: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    /// `channels x hidden`.
    pub out: Linear<T>,
}

impl<T: Scalar> TtsModel<T> {
    /// Randomly initialized model without FiLM heads.
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Result<Self, TtsError> {
        dims.validate()?;
        let ModelDims {
            channels: c,
            hidden: h,
            ff,
            style_dim: d,
            encoder_hidden: hs,
            ..
        } = dims;
        let encoder = StyleEncoder {
            frame: Linear::random(hs, c, 1.0, rng),
            pool: Linear::random(d, 2 * hs, 1.0, rng),
        };
        let noisy = Linear::random(h, c, 1.0, rng);
        let cond = random_tensor(&[h, c], 1.0 / (c as f64).sqrt(), rng);
        let text = random_tensor(&[dims.vocab, h], 0.5, rng);
        let time = random_tensor(&[h, TIME_FEATURES], 1.0 / (TIME_FEATURES as f64).sqrt(), rng);
        let blocks = (0..dims.blocks)
            .map(|_| Block {
                ff1: Linear::random(ff, h, 1.0, rng),
                ff2: Linear::random(h, ff, 0.5, rng),
                film: None,
            })
            .collect();
        let out = Linear::random(c, h, 1.0, rng);
        Ok(TtsModel {
            dims,
            encoder,
            noisy,
            cond,
            text,
            time,
            blocks,
            out,
        })
    }

    pub fn has_film(&self) -> bool {
        self.blocks.iter().any(|b| b.film.is_some())
    }

    /// Copy of a pretrained model with identity FiLM heads on every block at or
    /// above the freeze boundary; outputs are unchanged for every input.
    pub fn begin_finetune(&self) -> Self {
        let mut m = self.clone();
        let (h, d) = (self.dims.hidden, self.dims.style_dim);
        for block in m.blocks.iter_mut().skip(self.dims.freeze_boundary) {
            block.film.get_or_insert_with(|| FilmHead::identity(h, d));
        }
        m
    }

    /// Same structure with every tensor zeroed (gradient and optimizer buffers).
    pub fn zeros_like(&self) -> Self {
        TtsModel {
            dims: self.dims,
            encoder: StyleEncoder {
                frame: self.encoder.frame.zeros_like(),
                pool: self.encoder.pool.zeros_like(),
            },
            noisy: self.noisy.zeros_like(),
            cond: self.cond.zeros_like(),
            text: self.text.zeros_like(),
            time: self.time.zeros_like(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ff1: b.ff1.zeros_like(),
                    ff2: b.ff2.zeros_like(),
                    film: b.film.as_ref().map(|f| FilmHead {
                        gamma: f.gamma.zeros_like(),
                        beta: f.beta.zeros_like(),
                    }),
                })
                .collect(),
            out: self.out.zeros_like(),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v: Vec<(String, &Tensor<T>)> = vec![
            ("encoder.frame.weight".into(), &self.encoder.frame.weight),
            ("encoder.frame.bias".into(), &self.encoder.frame.bias),
            ("encoder.pool.weight".into(), &self.encoder.pool.weight),
            ("encoder.pool.bias".into(), &self.encoder.pool.bias),
            ("input.noisy.weight".into(), &self.noisy.weight),
            ("input.noisy.bias".into(), &self.noisy.bias),
            ("input.cond.weight".into(), &self.cond),
            ("input.text".into(), &self.text),
            ("input.time.weight".into(), &self.time),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("blocks.{i}.ff1.weight"), &b.ff1.weight));
            v.push((format!("blocks.{i}.ff1.bias"), &b.ff1.bias));
            v.push((format!("blocks.{i}.ff2.weight"), &b.ff2.weight));
            v.push((format!("blocks.{i}.ff2.bias"), &b.ff2.bias));
            if let Some(f) = &b.film {
                v.push((format!("blocks.{i}.film.gamma.weight"), &f.gamma.weight));
                v.push((format!("blocks.{i}.film.gamma.bias"), &f.gamma.bias));
                v.push((format!("blocks.{i}.film.beta.weight"), &f.beta.weight));
                v.push((format!("blocks.{i}.film.beta.bias"), &f.beta.bias));
            }
        }
        v.push(("out.weight".into(), &self.out.weight));
        v.push(("out.bias".into(), &self.out.bias));
        v
    }

    /// Mutable counterpart of [`TtsModel::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v: Vec<(String, &mut Tensor<T>)> = vec![
            ("encoder.frame.weight".into(), &mut self.encoder.frame.weight),
            ("encoder.frame.bias".into(), &mut self.encoder.frame.bias),
            ("encoder.pool.weight".into(), &mut self.encoder.pool.weight),
            ("encoder.pool.bias".into(), &mut self.encoder.pool.bias),
            ("input.noisy.weight".into(), &mut self.noisy.weight),
            ("input.noisy.bias".into(), &mut self.noisy.bias),
            ("input.cond.weight".into(), &mut self.cond),
            ("input.text".into(), &mut self.text),
            ("input.time.weight".into(), &mut self.time),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            v.push((format!("blocks.{i}.ff1.weight"), &mut b.ff1.weight));
            v.push((format!("blocks.{i}.ff1.bias"), &mut b.ff1.bias));
            v.push((format!("blocks.{i}.ff2.weight"), &mut b.ff2.weight));
            v.push((format!("blocks.{i}.ff2.bias"), &mut b.ff2.bias));
            if let Some(f) = &mut b.film {
                v.push((format!("blocks.{i}.film.gamma.weight"), &mut f.gamma.weight));
                v.push((format!("blocks.{i}.film.gamma.bias"), &mut f.gamma.bias));
                v.push((format!("blocks.{i}.film.beta.weight"), &mut f.beta.weight));
                v.push((format!("blocks.{i}.film.beta.bias"), &mut f.beta.bias));
            }
        }
        v.push(("out.weight".into(), &mut self.out.weight));
        v.push(("out.bias".into(), &mut self.out.bias));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> TtsModel<U> {
        let mut out = TtsModel::<U> {
            dims: self.dims,
            encoder: StyleEncoder {
                frame: Linear::zeros(0, 0),
                pool: Linear::zeros(0, 0),
            },
            noisy: Linear::zeros(0, 0),
            cond: Tensor::zeros(&[0]),
            text: Tensor::zeros(&[0]),
            time: Tensor::zeros(&[0]),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ff1: Linear::zeros(0, 0),
                    ff2: Linear::zeros(0, 0),
                    film: b.film.as_ref().map(|_| FilmHead::identity(0, 0)),
                })
                .collect(),
            out: Linear::zeros(0, 0),
        };
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }

    /// Style embedding of a reference mel. Requires at least two frames.
    pub fn encode_style(&self, mel: &ToyMel<T>) -> Result<Vec<T>, TtsError> {
        Ok(self.encoder.forward(mel)?.0)
    }

    fn check_input(&self, input: &FieldInput<'_, T>) -> Result<usize, TtsError> {
        let c = self.dims.channels;
        let frames = input.chars.len();
        if frames == 0 || input.x.len() != frames * c || input.cond.len() != c {
            return Err(TtsError::ShapeMismatch(format!(
                "field input: {} symbols, x {} values, cond {} values, {} channels",
                frames,
                input.x.len(),
                input.cond.len(),
                c
            )));
        }
        if let Some(&bad) = input.chars.iter().find(|&&s| s >= self.dims.vocab) {
            return Err(TtsError::ShapeMismatch(format!("symbol {bad} outside vocabulary")));
        }
        if let Some(s) = input.style {
            if s.len() != self.dims.style_dim {
                return Err(TtsError::ShapeMismatch(format!(
                    "style has {} values, model expects {}",
                    s.len(),
                    self.dims.style_dim
                )));
            }
        }
        Ok(frames)
    }

    fn field_forward(&self, input: &FieldInput<'_, T>) -> Result<(Vec<T>, FieldCache<T>), TtsError> {
        let frames = self.check_input(input)?;
        let ModelDims {
            channels: c,
            hidden: h,
            ff,
            style_dim: d,
            ..
        } = self.dims;
        let phi = time_features(input.t);
        let style = input.style.map_or_else(|| vec![T::zero(); d], <[T]>::to_vec);
        let mut shared = vec![T::zero(); h];
        matvec_acc(&self.time, &phi, &mut shared);
        matvec_acc(&self.cond, input.cond, &mut shared);

        let mut h0 = Vec::with_capacity(frames * h);
        for f in 0..frames {
            let mut row = self.noisy.bias.data.clone();
            matvec_acc(&self.noisy.weight, &input.x[f * c..(f + 1) * c], &mut row);
            add_assign(&mut row, self.text.row(input.chars[f]));
            add_assign(&mut row, &shared);
            h0.extend(row);
        }

        let mut cache = FieldCache {
            phi,
            h: vec![h0],
            a: Vec::with_capacity(self.blocks.len()),
            r: Vec::with_capacity(self.blocks.len()),
            film: Vec::with_capacity(self.blocks.len()),
            style,
        };
        for block in &self.blocks {
            let hin = cache.h.last().unwrap();
            let mut a_all = Vec::with_capacity(frames * ff);
            let mut r_all = Vec::with_capacity(frames * h);
            let mut u = vec![T::zero(); ff];
            for f in 0..frames {
                let x = &hin[f * h..(f + 1) * h];
                let a = block.ff1.apply(x);
                for (ui, &ai) in u.iter_mut().zip(&a) {
                    *ui = silu(ai);
                }
                let mut r = block.ff2.bias.data.clone();
                matvec_acc(&block.ff2.weight, &u, &mut r);
                add_assign(&mut r, x);
                a_all.extend(a);
                r_all.extend(r);
            }
            let mod_ = block.film.as_ref().map(|fh| fh.modulation(&cache.style));
            let hout = match &mod_ {
                None => r_all.clone(),
                Some((gamma, beta)) => film_apply(&Tensor::from_vec(&[frames, h], r_all.clone()), gamma, beta)?.data,
            };
            cache.a.push(a_all);
            cache.r.push(if mod_.is_some() { r_all } else { Vec::new() });
            cache.film.push(mod_);
            cache.h.push(hout);
        }

        let hb = cache.h.last().unwrap();
        let mut v = Vec::with_capacity(frames * c);
        for f in 0..frames {
            v.extend(self.out.apply(&hb[f * h..(f + 1) * h]));
        }
        Ok((v, cache))
    }

    /// Predicted velocity `v(x_t, t | chars, cond, style)`, `frames x channels`.
    pub fn velocity(&self, input: &FieldInput<'_, T>) -> Result<Vec<T>, TtsError> {
        Ok(self.field_forward(input)?.0)
    }

    /// Backpropagates `dv` through the field; returns the gradient w.r.t. the style embedding.
    fn field_backward(
        &self,
        grad: &mut TtsModel<T>,
        input: &FieldInput<'_, T>,
        cache: &FieldCache<T>,
        dv: &[T],
    ) -> Vec<T> {
        let ModelDims {
            channels: c,
            hidden: h,
            ff,
            style_dim: d,
            ..
        } = self.dims;
        let frames = input.chars.len();
        let mut dstyle = vec![T::zero(); d];

        let hb = cache.h.last().unwrap();
        let mut dh = vec![T::zero(); frames * h];
        for f in 0..frames {
            self.out.backward(
                &mut grad.out,
                &hb[f * h..(f + 1) * h],
                &dv[f * c..(f + 1) * c],
                Some(&mut dh[f * h..(f + 1) * h]),
            );
        }

        let mut u = vec![T::zero(); ff];
        let mut da = vec![T::zero(); ff];
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let gblock = &mut grad.blocks[i];
            // through FiLM: dr = gamma * dh; dgamma, dbeta summed over frames
            if let (Some(fh), Some((gamma, _))) = (&block.film, &cache.film[i]) {
                let r = &cache.r[i];
                let mut dgamma = vec![T::zero(); h];
                let mut dbeta = vec![T::zero(); h];
                for f in 0..frames {
                    for j in 0..h {
                        let g = dh[f * h + j];
                        dgamma[j] += g * r[f * h + j];
                        dbeta[j] += g;
                        dh[f * h + j] = g * gamma[j];
                    }
                }
                let gfilm = gblock.film.as_mut().expect("gradient structure matches model");
                fh.gamma.backward(&mut gfilm.gamma, &cache.style, &dgamma, Some(&mut dstyle));
                fh.beta.backward(&mut gfilm.beta, &cache.style, &dbeta, Some(&mut dstyle));
            }
            // residual block: dh_in = dr + W1^T (silu'(a) * W2^T dr)
            let hin = &cache.h[i];
            let a_all = &cache.a[i];
            for f in 0..frames {
                let a = &a_all[f * ff..(f + 1) * ff];
                for (ui, &ai) in u.iter_mut().zip(a) {
                    *ui = silu(ai);
                }
                let dr: Vec<T> = dh[f * h..(f + 1) * h].to_vec();
                da.iter_mut().for_each(|x| *x = T::zero());
                block.ff2.backward(&mut gblock.ff2, &u, &dr, Some(&mut da));
                for (dai, &ai) in da.iter_mut().zip(a) {
                    *dai *= silu_grad(ai);
                }
                block.ff1.backward(
                    &mut gblock.ff1,
                    &hin[f * h..(f + 1) * h],
                    &da,
                    Some(&mut dh[f * h..(f + 1) * h]),
                );
            }
        }

        let mut dshared = vec![T::zero(); h];
        for f in 0..frames {
            let dhf = &dh[f * h..(f + 1) * h];
            self.noisy.backward(&mut grad.noisy, &input.x[f * c..(f + 1) * c], dhf, None);
            add_assign(grad.text.row_mut(input.chars[f]), dhf);
            add_assign(&mut dshared, dhf);
        }
        outer_acc(&mut grad.time, &dshared, &cache.phi);
        outer_acc(&mut grad.cond, &dshared, input.cond);
        dstyle
    }
}

/// Where the style embedding of a training example comes from.
#[derive(Debug, Clone, Copy)]
pub enum StyleSource<'a, T> {
    None,
    Embedding(&'a [T]),
    /// Encoded by the model's own style encoder; gradients flow into the encoder.
    Reference(&'a ToyMel<T>),
}

/// One conditional flow-matching training example.
#[derive(Debug, Clone)]
pub struct CfmExample<T> {
    /// Target mel `x1`.
    pub x1: ToyMel<T>,
    pub chars: Vec<usize>,
    /// Frames supervised by the loss; the remaining frames are given as context.
    pub mask: Vec<bool>,
    /// Noise sample `x0`, same shape as `x1`.
    pub x0: Vec<T>,
    pub t: T,
    /// Withhold the unmasked context frames as well.
    pub drop_context: bool,
}

impl<T: Scalar> CfmExample<T> {
    fn validate(&self) -> Result<(), TtsError> {
        let n = self.x1.values().len();
        if self.x0.len() != n || self.chars.len() != self.x1.frames() || self.mask.len() != self.x1.frames() {
            return Err(TtsError::ShapeMismatch(format!(
                "example: x1 {}x{}, x0 {} values, {} symbols, mask {}",
                self.x1.frames(),
                self.x1.channels(),
                self.x0.len(),
                self.chars.len(),
                self.mask.len()
            )));
        }
        if !(self.t > T::zero() && self.t < T::one()) {
            return Err(TtsError::InvalidTime(self.t.as_f64()));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(TtsError::EmptyMask);
        }
        Ok(())
    }

    /// `x_t = (1 - t) x0 + t x1`.
    pub fn interpolant(&self) -> Vec<T> {
        let t = self.t;
        self.x0
            .iter()
            .zip(self.x1.values())
            .map(|(&a, &b)| (T::one() - t) * a + t * b)
            .collect()
    }

    /// `x1 - x0`.
    pub fn target(&self) -> Vec<T> {
        self.x1.values().iter().zip(&self.x0).map(|(&b, &a)| b - a).collect()
    }

    /// Mean of the unmasked frames of `x1`; zero when every frame is masked or
    /// the context is dropped.
    pub fn context(&self) -> Vec<T> {
        let c = self.x1.channels();
        let mut ctx = vec![T::zero(); c];
        let visible: Vec<usize> = (0..self.mask.len()).filter(|&f| !self.mask[f]).collect();
        if self.drop_context || visible.is_empty() {
            return ctx;
        }
        for &f in &visible {
            add_assign(&mut ctx, self.x1.frame(f));
        }
        let n = T::from_usize_lossy(visible.len());
        ctx.iter_mut().for_each(|v| *v /= n);
        ctx
    }
}

/// Mean squared error over the masked frames of `channels`-wide rows.
pub fn masked_mse<T: Scalar>(pred: &[T], target: &[T], mask: &[bool], channels: usize) -> Result<T, TtsError> {
    let count = mask.iter().filter(|&&m| m).count() * channels;
    if count == 0 {
        return Err(TtsError::EmptyMask);
    }
    let mut acc = T::zero();
    for (f, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for j in f * channels..(f + 1) * channels {
            let d = pred[j] - target[j];
            acc += d * d;
        }
    }
    Ok(acc / T::from_usize_lossy(count))
}

impl<T: Scalar> TtsModel<T> {
    /// Flow-matching loss of one example.
    pub fn cfm_loss(&self, ex: &CfmExample<T>, style: StyleSource<'_, T>) -> Result<T, TtsError> {
        ex.validate()?;
        let e = match style {
            StyleSource::None => None,
            StyleSource::Embedding(e) => Some(e.to_vec()),
            StyleSource::Reference(mel) => Some(self.encode_style(mel)?),
        };
        let (x, cond) = (ex.interpolant(), ex.context());
        let input = FieldInput {
            x: &x,
            cond: &cond,
            chars: &ex.chars,
            t: ex.t,
            style: e.as_deref(),
        };
        masked_mse(&self.velocity(&input)?, &ex.target(), &ex.mask, self.dims.channels)
    }

    /// Loss of one example with gradients accumulated (scaled by `weight`) into `grad`.
    pub fn cfm_loss_grad(
        &self,
        ex: &CfmExample<T>,
        style: StyleSource<'_, T>,
        weight: T,
        grad: &mut TtsModel<T>,
    ) -> Result<T, TtsError> {
        ex.validate()?;
        let c = self.dims.channels;
        let (e, enc) = match style {
            StyleSource::None => (None, None),
            StyleSource::Embedding(e) => (Some(e.to_vec()), None),
            StyleSource::Reference(mel) => {
                let (e, cache) = self.encoder.forward(mel)?;
                (Some(e), Some((mel, cache)))
            }
        };
        let (x, cond) = (ex.interpolant(), ex.context());
        let input = FieldInput {
            x: &x,
            cond: &cond,
            chars: &ex.chars,
            t: ex.t,
            style: e.as_deref(),
        };
        let (pred, cache) = self.field_forward(&input)?;
        let target = ex.target();
        let loss = masked_mse(&pred, &target, &ex.mask, c)?;

        let count = T::from_usize_lossy(ex.mask.iter().filter(|&&m| m).count() * c);
        let scale = T::lit(2.0) * weight / count;
        let mut dv = vec![T::zero(); pred.len()];
        for (f, _) in ex.mask.iter().enumerate().filter(|(_, &m)| m) {
            for j in f * c..(f + 1) * c {
                dv[j] = scale * (pred[j] - target[j]);
            }
        }
        let dstyle = self.field_backward(grad, &input, &cache, &dv);
        if let Some((mel, enc_cache)) = enc {
            self.encoder.backward(&mut grad.encoder, mel, &enc_cache, &dstyle);
        }
        Ok(loss)
    }
}
