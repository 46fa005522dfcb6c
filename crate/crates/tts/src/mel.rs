//! Toy mel-spectrogram frames, channel-axis formant warping and span masking.

use std::fmt::Write as _;
use std::path::Path;

use lombard_core::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::TtsError;

pub const FORMANT_FACTOR_MIN: f64 = 0.8;
pub const FORMANT_FACTOR_MAX: f64 = 1.25;

/// `frames x channels` matrix, one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMel<T> {
    frames: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> ToyMel<T> {
    pub fn new(frames: usize, channels: usize, values: Vec<T>) -> Result<Self, TtsError> {
        if frames == 0 || channels == 0 {
            return Err(TtsError::InvalidMel(format!(
                "shape must be at least 1x1, got {frames}x{channels}"
            )));
        }
        if values.len() != frames * channels {
            return Err(TtsError::InvalidMel(format!(
                "{} values do not fill {frames}x{channels}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TtsError::InvalidMel(format!(
                "non-finite value at frame {}, channel {}",
                i / channels,
                i % channels
            )));
        }
        Ok(ToyMel {
            frames,
            channels,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[T] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize_lossy(self.values.len())
    }

    pub fn frame_means(&self) -> Vec<T> {
        let c = T::from_usize_lossy(self.channels);
        self.values
            .chunks_exact(self.channels)
            .map(|f| f.iter().copied().sum::<T>() / c)
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for frame in self.values.chunks_exact(self.channels) {
            for (i, v) in frame.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{}", v.as_f64()).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, TtsError> {
        let mut values = Vec::new();
        let mut channels = None;
        let mut frames = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TtsError::InvalidMel(format!("line {}: {e}", lineno + 1)))?;
            match channels {
                None => channels = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(TtsError::InvalidMel(format!(
                        "line {}: expected {c} channels, found {}",
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row.into_iter().map(T::lit));
            frames += 1;
        }
        Self::new(frames, channels.unwrap_or(0), values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TtsError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| TtsError::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self, TtsError> {
        let text = std::fs::read_to_string(path).map_err(|e| TtsError::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Formant-shift analog used as training augmentation; `factor` must lie in
/// `[FORMANT_FACTOR_MIN, FORMANT_FACTOR_MAX]`. See [`warp_channels`].
pub fn formant_shift_augment<T: Scalar>(mel: &ToyMel<T>, factor: f64) -> Result<ToyMel<T>, TtsError> {
    if !(FORMANT_FACTOR_MIN..=FORMANT_FACTOR_MAX).contains(&factor) {
        return Err(TtsError::FormantFactor(factor));
    }
    warp_channels(mel, factor)
}

/// Warps every frame along the channel axis: output channel `j` reads the input
/// at position `j / factor` by linear interpolation, clamping past the last channel.
pub fn warp_channels<T: Scalar>(mel: &ToyMel<T>, factor: f64) -> Result<ToyMel<T>, TtsError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(TtsError::FormantFactor(factor));
    }
    let c = mel.channels;
    let mut values = Vec::with_capacity(mel.values.len());
    for frame in mel.values.chunks_exact(c) {
        for j in 0..c {
            let pos = j as f64 / factor;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= c {
                values.push(frame[c - 1]);
            } else {
                let w = T::lit(pos - i0 as f64);
                values.push(frame[i0] + w * (frame[i0 + 1] - frame[i0]));
            }
        }
    }
    Ok(ToyMel {
        frames: mel.frames,
        channels: c,
        values,
    })
}

/// One contiguous masked span of `round(ratio * frames)` frames, start drawn from `rng`.
pub fn mask_span_with<R: Rng>(frames: usize, ratio: f64, rng: &mut R) -> Result<Vec<bool>, TtsError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(TtsError::InvalidConfig(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let span = ((ratio * frames as f64).round() as usize).min(frames);
    let start = rng.random_range(0..=frames - span);
    Ok((0..frames).map(|t| t >= start && t < start + span).collect())
}

/// [`mask_span_with`] driven by a fresh generator seeded with `seed`.
pub fn mask_spans(frames: usize, ratio: f64, seed: u64) -> Result<Vec<bool>, TtsError> {
    mask_span_with(frames, ratio, &mut ChaCha8Rng::seed_from_u64(seed))
}
