//! Reference-free Euler sampling.

use lombard_core::{count_syllables, target_duration, Scalar, DEFAULT_SYLLABLE_RATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mel::ToyMel;
use crate::model::{FieldInput, TtsModel};
use crate::text::encode_text;
use crate::TtsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub frame_rate: f64,
    pub syllable_rate: f64,
    pub euler_steps: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            frame_rate: 50.0,
            syllable_rate: DEFAULT_SYLLABLE_RATE,
            euler_steps: 32,
        }
    }
}

/// Integrates `dx/dt = field(x, t)` from `t = 0` to `t = 1` in `steps` uniform Euler steps.
pub fn euler_integrate<T, F>(x0: &[T], steps: usize, mut field: F) -> Result<Vec<T>, TtsError>
where
    T: Scalar,
    F: FnMut(&[T], T) -> Result<Vec<T>, TtsError>,
{
    if steps == 0 {
        return Err(TtsError::InvalidConfig("Euler steps must be at least 1".into()));
    }
    let dt = T::one() / T::from_usize_lossy(steps);
    let mut x = x0.to_vec();
    for k in 0..steps {
        let t = T::from_usize_lossy(k) * dt;
        let v = field(&x, t)?;
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += dt * vi;
        }
    }
    Ok(x)
}

/// Standard-normal starting point for `len` values from `seed`.
pub fn initial_noise<T: Scalar>(len: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Generates a mel for `text` conditioned on `style` alone: no reference frames
/// are given. The frame count follows the syllable-rate duration rule.
pub fn synthesize<T: Scalar>(
    model: &TtsModel<T>,
    text: &str,
    style: &[T],
    speed: f64,
    seed: u64,
    opts: &SynthOptions,
) -> Result<ToyMel<T>, TtsError> {
    let dur = target_duration(count_syllables(text), speed, opts.syllable_rate, opts.frame_rate)?;
    let frames = dur.frames;
    let c = model.dims.channels;
    let chars = encode_text(text, frames);
    let ctx = vec![T::zero(); c];
    let x0 = initial_noise::<T>(frames * c, seed);
    let x1 = euler_integrate(&x0, opts.euler_steps, |x, t| {
        model.velocity(&FieldInput {
            x,
            cond: &ctx,
            chars: &chars,
            t,
            style: Some(style),
        })
    })?;
    ToyMel::new(frames, c, x1)
}
