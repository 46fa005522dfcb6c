use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::scalar::Scalar;

/// Mono audio buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio<T> {
    pub sample_rate: u32,
    pub samples: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrTarget {
    /// No noise added.
    Clean,
    Db(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSpec {
    pub target: SnrTarget,
    /// Seeds the noise-segment offset.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutcome<T> {
    pub audio: Audio<T>,
    /// Gain applied to the noise segment (0 for clean passthrough).
    pub gain: f64,
    /// Start offset of the looped noise segment.
    pub offset: usize,
    /// SNR of clean vs. scaled noise, before clipping.
    pub achieved_snr_db: Option<f64>,
    /// Output samples clamped to `[-1, 1]`.
    pub clipped: usize,
}

/// Mean squared amplitude.
pub fn mean_power<T: Scalar>(x: &[T]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_signal / P_noise)`.
pub fn achieved_snr_db<T: Scalar>(signal: &[T], noise: &[T]) -> f64 {
    10.0 * (mean_power(signal) / mean_power(noise)).log10()
}

/// Adds a seeded, looped segment of `noise` to `clean` at the target SNR.
///
/// The gain is `sqrt(P_clean / (P_segment * 10^(snr/10)))`, with powers taken
/// over whole signals. The sum is clamped to `[-1, 1]`; the number of clamped
/// samples is reported so callers can warn.
pub fn mix_at_snr<T: Scalar>(
    clean: &Audio<T>,
    noise: &Audio<T>,
    spec: &SnrSpec,
) -> Result<MixOutcome<T>, EvalError> {
    if clean.samples.is_empty() {
        return Err(EvalError::EmptyClean);
    }
    let snr = match spec.target {
        SnrTarget::Clean => {
            return Ok(MixOutcome {
                audio: clean.clone(),
                gain: 0.0,
                offset: 0,
                achieved_snr_db: None,
                clipped: 0,
            })
        }
        SnrTarget::Db(db) if !db.is_finite() => return Err(EvalError::NonFiniteSnr(db)),
        SnrTarget::Db(db) => db,
    };
    if clean.sample_rate != noise.sample_rate {
        return Err(EvalError::SampleRateMismatch {
            clean: clean.sample_rate,
            noise: noise.sample_rate,
        });
    }
    if noise.samples.is_empty() {
        return Err(EvalError::EmptyNoise);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = rng.random_range(0..noise.samples.len());
    let segment: Vec<T> = (0..clean.samples.len())
        .map(|i| noise.samples[(offset + i) % noise.samples.len()])
        .collect();

    let p_clean = mean_power(&clean.samples);
    let p_noise = mean_power(&segment);
    if p_noise == 0.0 {
        return Err(EvalError::SilentNoise(snr));
    }
    if p_clean == 0.0 {
        return Err(EvalError::SilentClean);
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr / 10.0))).sqrt();
    let g = T::lit(gain);
    let scaled: Vec<T> = segment.iter().map(|&n| g * n).collect();
    let achieved = achieved_snr_db(&clean.samples, &scaled);

    let mut clipped = 0;
    let samples = clean
        .samples
        .iter()
        .zip(&scaled)
        .map(|(&c, &n)| {
            let v = c + n;
            if v.abs() > T::one() {
                clipped += 1;
                v.max(-T::one()).min(T::one())
            } else {
                v
            }
        })
        .collect();

    Ok(MixOutcome {
        audio: Audio {
            sample_rate: clean.sample_rate,
            samples,
        },
        gain,
        offset,
        achieved_snr_db: Some(achieved),
        clipped,
    })
}
