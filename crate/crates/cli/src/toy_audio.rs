//! Audio stand-ins for the toy pipeline: a mel-to-waveform renderer, a seeded
//! noise source, a transcriber whose errors grow with broadband noise, and a
//! band-energy speaker embedder. None of these model real speech; they only
//! give the evaluation harness deterministic, noise-sensitive inputs.

use lombard_core::eval::{normalize_text, Audio};
use lombard_tts::ToyMel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SAMPLE_RATE: u32 = 16_000;

fn channel_frequency(j: usize) -> f64 {
    200.0 * 1.5f64.powi(j as i32)
}

/// Additive-sine rendering: channel `j` drives a partial at `200 * 1.5^j` Hz
/// with amplitude `0.02 * exp(0.8 * value)`, interpolated linearly between
/// frame centres.
pub fn render_mel(mel: &ToyMel<f32>, frame_rate: f64) -> Audio<f32> {
    let hop = (SAMPLE_RATE as f64 / frame_rate).round() as usize;
    let frames = mel.frames();
    let c = mel.channels();
    let amp = |t: usize, j: usize| 0.02 * (0.8 * mel.frame(t)[j] as f64).min(3.0).exp();
    let mut samples = Vec::with_capacity(frames * hop);
    let mut phase = vec![0.0f64; c];
    let step: Vec<f64> = (0..c)
        .map(|j| 2.0 * std::f64::consts::PI * channel_frequency(j) / SAMPLE_RATE as f64)
        .collect();
    for n in 0..frames * hop {
        let pos = n as f64 / hop as f64;
        let t0 = (pos.floor() as usize).min(frames - 1);
        let t1 = (t0 + 1).min(frames - 1);
        let w = pos - t0 as f64;
        let mut v = 0.0;
        for j in 0..c {
            let a = (1.0 - w) * amp(t0, j) + w * amp(t1, j);
            v += a * phase[j].sin();
            phase[j] = (phase[j] + step[j]) % (2.0 * std::f64::consts::PI);
        }
        samples.push(v.clamp(-1.0, 1.0) as f32);
    }
    Audio {
        sample_rate: SAMPLE_RATE,
        samples,
    }
}

/// Gaussian noise, standard deviation 0.1, clamped to [-1, 1].
pub fn noise(seconds: f64, seed: u64) -> Audio<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    Audio {
        sample_rate: SAMPLE_RATE,
        samples: (0..n)
            .map(|_| (0.1 * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0) as f32)
            .collect(),
    }
}

/// Ratio of first-difference power to signal power: near 0 for low tones,
/// 2 for white noise.
pub fn roughness(samples: &[f32]) -> f64 {
    let p: f64 = samples.iter().map(|&x| (x as f64).powi(2)).sum();
    if p == 0.0 {
        return 0.0;
    }
    let d: f64 = samples.windows(2).map(|w| (w[1] as f64 - w[0] as f64).powi(2)).sum();
    d / p
}

/// Corrupts the normalized reference words of `transcript`: word `i` becomes
/// "uh" when a fixed low-discrepancy sequence falls below an error rate that
/// grows with the roughness of the audio.
pub fn toy_transcribe(audio: &Audio<f32>, transcript: &str) -> String {
    let r = roughness(&audio.samples);
    let error_rate = (0.5 * r - 0.05).clamp(0.02, 0.9);
    let golden = 0.618_033_988_749_894_9;
    normalize_text(transcript)
        .split_whitespace()
        .enumerate()
        .map(|(i, w)| {
            let u = ((i + 1) as f64 * golden + 3.7 * r).fract();
            if u < error_rate {
                "uh"
            } else {
                w
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// 16 mean-removed log band energies (Goertzel filters at log-spaced
/// frequencies from 150 Hz to 6 kHz).
pub fn toy_embedding(audio: &Audio<f32>) -> Vec<f64> {
    let bands = 16;
    let sr = audio.sample_rate as f64;
    let mut logs: Vec<f64> = (0..bands)
        .map(|k| {
            let f = 150.0 * (6000.0f64 / 150.0).powf(k as f64 / (bands - 1) as f64);
            let coeff = 2.0 * (2.0 * std::f64::consts::PI * f / sr).cos();
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for &x in &audio.samples {
                let s0 = x as f64 + coeff * s1 - s2;
                s2 = s1;
                s1 = s0;
            }
            let power = (s1 * s1 + s2 * s2 - coeff * s1 * s2) / audio.samples.len().max(1) as f64;
            (power + 1e-9).ln()
        })
        .collect();
    let mean = logs.iter().sum::<f64>() / bands as f64;
    logs.iter_mut().for_each(|v| *v -= mean);
    logs
}

#[cfg(test)]
mod tests {
    use super::*;
    use lombard_core::eval::word_error_rate_text;

    #[test]
    fn render_length_and_range() {
        let mel = ToyMel::new(5, 8, vec![0.5f32; 40]).unwrap();
        let audio = render_mel(&mel, 50.0);
        assert_eq!(audio.samples.len(), 5 * 320);
        assert!(audio.samples.iter().all(|s| s.abs() <= 1.0));
        assert!(audio.samples.iter().any(|s| s.abs() > 0.01));
    }

    #[test]
    fn transcriber_degrades_with_noise() {
        let mel = ToyMel::new(50, 8, vec![0.0f32; 400]).unwrap();
        let clean = render_mel(&mel, 50.0);
        let text = "one two three four five six seven eight nine ten eleven twelve";
        let clean_wer = word_error_rate_text(text, &toy_transcribe(&clean, text)).unwrap().wer;
        let n = noise(1.0, 3);
        let noisy = Audio {
            sample_rate: SAMPLE_RATE,
            samples: clean.samples.iter().zip(n.samples.iter().cycle()).map(|(a, b)| a + 2.0 * b).collect(),
        };
        let noisy_wer = word_error_rate_text(text, &toy_transcribe(&noisy, text)).unwrap().wer;
        assert!(noisy_wer > clean_wer, "{noisy_wer} vs {clean_wer}");
        assert_eq!(toy_transcribe(&clean, text), toy_transcribe(&clean, text));
    }

    #[test]
    fn embedding_is_mean_free() {
        let e = toy_embedding(&noise(0.2, 1));
        assert_eq!(e.len(), 16);
        assert!(e.iter().sum::<f64>().abs() < 1e-9);
    }
}
