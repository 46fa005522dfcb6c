use std::path::Path;

use super::{Audio, EvalError};

fn wav_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Wav {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a mono 16-bit PCM WAV file into `[-1, 1)` samples.
pub fn read_wav(path: &Path) -> Result<Audio<f32>, EvalError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(wav_err(
            path,
            format!(
                "expected mono 16-bit PCM, got {} channel(s), {} bit {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    Ok(Audio {
        sample_rate: spec.sample_rate,
        samples,
    })
}

/// Writes mono 16-bit PCM; samples are clipped to `[-1, 1]` and rounded.
pub fn write_wav(path: &Path, audio: &Audio<f32>) -> Result<(), EvalError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = Audio {
            sample_rate: 16_000,
            samples: vec![0.0, 0.5, -0.25, 0.999, -1.0],
        };
        write_wav(&path, &audio).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16_000.0);
        }
        assert!(read_wav(&dir.path().join("missing.wav")).is_err());
    }
}
