use super::EvalError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerResult {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
    /// `(S + D + I) / reference_words`, as a fraction (not a percentage).
    pub wer: f64,
}

impl WerResult {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Lowercases and removes every character that is neither alphanumeric nor whitespace.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect()
}

/// Normalized whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_text(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Minimal-edit alignment with unit costs. Among alignments of equal cost the
/// one with the most substitutions wins, so a swapped pair counts as two
/// substitutions rather than a deletion plus an insertion.
pub fn word_error_rate<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> Result<WerResult, EvalError> {
    let (n, m) = (reference.len(), hypothesis.len());
    if n == 0 {
        return Err(EvalError::EmptyReference);
    }
    // (cost, substitutions); ordering key is (cost, -substitutions)
    let better = |a: (usize, usize), b: (usize, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 > b.1);
    let mut prev: Vec<(usize, usize)> = (0..=m).map(|j| (j, 0)).collect();
    let mut cur = vec![(0, 0); m + 1];
    for i in 1..=n {
        cur[0] = (i, 0);
        for j in 1..=m {
            let (dc, ds) = prev[j - 1];
            let mut best = if reference[i - 1] == hypothesis[j - 1] {
                (dc, ds)
            } else {
                (dc + 1, ds + 1)
            };
            for cand in [(prev[j].0 + 1, prev[j].1), (cur[j - 1].0 + 1, cur[j - 1].1)] {
                if better(cand, best) {
                    best = cand;
                }
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, substitutions) = prev[m];
    // D + I = cost - S and D - I = n - m
    let indel = cost - substitutions;
    let deletions = if n >= m {
        (indel + (n - m)) / 2
    } else {
        (indel - (m - n)) / 2
    };
    let insertions = indel - deletions;
    Ok(WerResult {
        substitutions,
        deletions,
        insertions,
        reference_words: n,
        wer: cost as f64 / n as f64,
    })
}

/// WER on raw strings after [`normalize_text`].
pub fn word_error_rate_text(reference: &str, hypothesis: &str) -> Result<WerResult, EvalError> {
    word_error_rate(&tokenize(reference), &tokenize(hypothesis))
}

/// Relative WER: `wer_noisy / wer_clean`; undefined when the clean WER is zero.
pub fn relative_wer<T: Scalar>(wer_noisy: T, wer_clean: T) -> Result<T, EvalError> {
    if wer_clean == T::zero() {
        return Err(EvalError::UndefinedRelativeWer);
    }
    Ok(wer_noisy / wer_clean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wer(r: &str, h: &str) -> WerResult {
        word_error_rate_text(r, h).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(wer("the cat sat", "the cat sat").wer, 0.0);
        let d = wer("the cat sat", "the cat");
        assert_eq!((d.substitutions, d.deletions, d.insertions), (0, 1, 0));
        assert!((d.wer - 1.0 / 3.0).abs() < 1e-15);
        let swap = wer("a b", "b a");
        assert_eq!((swap.substitutions, swap.deletions, swap.insertions), (2, 0, 0));
        assert_eq!(swap.wer, 1.0);
        let ins = wer("a", "x a y");
        assert_eq!((ins.substitutions, ins.deletions, ins.insertions), (0, 0, 2));
        assert_eq!(ins.wer, 2.0);
    }

    #[test]
    fn normalization_applies_to_both_sides() {
        assert_eq!(wer("Hello, World!", "hello world").wer, 0.0);
        assert_eq!(tokenize("Don't  STOP."), vec!["dont", "stop"]);
        assert!(matches!(
            word_error_rate_text("?!", "x"),
            Err(EvalError::EmptyReference)
        ));
    }

    #[test]
    fn relative_wer_cases() {
        let r: f64 = relative_wer(12.11, 8.52).unwrap();
        assert_eq!((r * 100.0).round() / 100.0, 1.42);
        let r: f64 = relative_wer(12.81, 7.23).unwrap();
        assert_eq!((r * 100.0).round() / 100.0, 1.77);
        assert_eq!(relative_wer(0.3f64, 0.3).unwrap(), 1.0);
        assert!(matches!(
            relative_wer(0.3f64, 0.0),
            Err(EvalError::UndefinedRelativeWer)
        ));
    }
}
