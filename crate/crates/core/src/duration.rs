//! Syllable counting and the syllable-rate duration rule.
//!
//! Output length is `syllables / (rate_base * speed)` seconds, with a default
//! base rate of 4 syllables per second. A speed below 1 lengthens speech.
//!
//! Syllables are counted heuristically per whitespace-separated word:
//! maximal runs of the vowel letters `a e i o u y`, minus one for a terminal
//! silent `e`, and at least one for any word containing a letter. A final `e`
//! is silent when it follows a consonant letter, except in a consonant + `le`
//! ending ("table", "little"), where it carries the syllable.

use thiserror::Error;

pub const DEFAULT_SYLLABLE_RATE: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum DurationError {
    #[error("text has no syllables")]
    NoSyllables,
    #[error("speed must be positive and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("{name} must be positive and finite, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationSpec {
    pub syllables: usize,
    pub rate_base: f64,
    pub speed: f64,
    pub seconds: f64,
    pub frames: usize,
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn word_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).collect();
    if !chars.iter().any(|c| c.is_alphabetic()) {
        return 0;
    }
    let mut groups = 0;
    let mut in_vowels = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !in_vowels {
            groups += 1;
        }
        in_vowels = v;
    }

    let letters: Vec<char> = chars.into_iter().filter(|c| c.is_alphabetic()).collect();
    let n = letters.len();
    let silent_e = n >= 2 && letters[n - 1] == 'e' && !is_vowel(letters[n - 2]) && {
        let syllabic_le = letters[n - 2] == 'l' && n >= 3 && !is_vowel(letters[n - 3]);
        !syllabic_le
    };
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// Heuristic English syllable count; additive over whitespace-separated words.
pub fn count_syllables(text: &str) -> usize {
    text.split_whitespace().map(word_syllables).sum()
}

/// Target duration for `syllables` at `rate_base * speed` syllables per second.
pub fn target_duration(
    syllables: usize,
    speed: f64,
    rate_base: f64,
    frame_rate: f64,
) -> Result<DurationSpec, DurationError> {
    if syllables == 0 {
        return Err(DurationError::NoSyllables);
    }
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(DurationError::InvalidSpeed(speed));
    }
    for (name, value) in [("rate_base", rate_base), ("frame_rate", frame_rate)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(DurationError::InvalidRate { name, value });
        }
    }
    let seconds = syllables as f64 / (rate_base * speed);
    let frames = ((seconds * frame_rate).round() as usize).max(1);
    Ok(DurationSpec {
        syllables,
        rate_base,
        speed,
        seconds,
        frames,
    })
}
