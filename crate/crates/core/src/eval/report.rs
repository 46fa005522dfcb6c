use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// Noise condition of a record: clean speech or a finite SNR in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCondition {
    Clean,
    Snr(f64),
}

impl fmt::Display for NoiseCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Clean => f.write_str("clean"),
            Self::Snr(db) => write!(f, "{db}"),
        }
    }
}

impl FromStr for NoiseCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("clean") || s.eq_ignore_ascii_case("none") {
            return Ok(Self::Clean);
        }
        let digits = s.strip_prefix("snr").or_else(|| s.strip_prefix("SNR")).unwrap_or(s);
        match digits.trim_start_matches('=').parse::<f64>() {
            Ok(db) if db.is_finite() => Ok(Self::Snr(db)),
            _ => Err(format!("expected \"clean\" or an SNR in dB, got {s:?}")),
        }
    }
}

/// One utterance evaluated at one Lombardness level and noise condition.
///
/// WER and similarities are fractions / cosines; reports scale them to percent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UtteranceRecord {
    pub utterance: String,
    pub level: String,
    pub noise: Option<NoiseCondition>,
    pub wer: Option<f64>,
    pub ssim: Option<f64>,
    pub delta_ssim: Option<f64>,
    /// Set when an external step failed for this record.
    pub error: Option<String>,
}

impl UtteranceRecord {
    pub fn new(utterance: &str, level: &str, noise: NoiseCondition) -> Self {
        Self {
            utterance: utterance.to_string(),
            level: level.to_string(),
            noise: Some(noise),
            ..Self::default()
        }
    }

    pub fn with_wer(mut self, wer: f64) -> Self {
        self.wer = Some(wer);
        self
    }
}

/// Row (level) and column (noise) order of the report grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportLayout {
    pub levels: Vec<String>,
    pub noises: Vec<NoiseCondition>,
}

impl Default for ReportLayout {
    fn default() -> Self {
        Self {
            levels: ["soft", "normal", "loud", "very_loud"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            noises: vec![
                NoiseCondition::Clean,
                NoiseCondition::Snr(10.0),
                NoiseCondition::Snr(5.0),
                NoiseCondition::Snr(1.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub level: String,
    pub noise: NoiseCondition,
    /// Mean WER (fraction) over records with a WER.
    pub wer: Option<f64>,
    /// Mean noisy WER over mean clean WER of the same level.
    pub delta_wer: Option<f64>,
    pub ssim: Option<f64>,
    pub delta_ssim: Option<f64>,
    /// Records contributing to `wer`.
    pub n: usize,
    /// Records flagged with an error.
    pub failed: usize,
    /// Why `delta_wer` is unavailable, for noisy cells.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub layout: ReportLayout,
    pub cells: Vec<ReportCell>,
    /// Records whose level or noise is not part of the layout.
    pub unplaced: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn noise_key(n: NoiseCondition) -> Option<u64> {
    match n {
        NoiseCondition::Clean => None,
        NoiseCondition::Snr(db) => Some(db.to_bits()),
    }
}

/// Aggregates records into per-(level, noise) cells.
///
/// Means are macro-averages over utterances. ΔWER is the ratio of the cell's
/// mean WER to the clean mean WER of the same level; it is left unavailable
/// when the clean cell is missing or zero, or when some noisy utterance has no
/// clean record.
pub fn build_report(records: &[UtteranceRecord], layout: &ReportLayout) -> EvalReport {
    let level_index: BTreeMap<&str, usize> = layout
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let noise_index = |n: NoiseCondition| layout.noises.iter().position(|&m| noise_key(m) == noise_key(n));

    let mut buckets: Vec<Vec<&UtteranceRecord>> = vec![Vec::new(); layout.levels.len() * layout.noises.len()];
    let mut unplaced = 0;
    for r in records {
        match (level_index.get(r.level.as_str()), r.noise.and_then(noise_index)) {
            (Some(&li), Some(ni)) => buckets[li * layout.noises.len() + ni].push(r),
            _ => unplaced += 1,
        }
    }

    let clean_col = layout.noises.iter().position(|&n| n == NoiseCondition::Clean);
    let mut cells = Vec::with_capacity(buckets.len());
    for (li, level) in layout.levels.iter().enumerate() {
        let clean_bucket = clean_col.map(|c| &buckets[li * layout.noises.len() + c]);
        let clean_utts: BTreeSet<&str> = clean_bucket
            .map(|b| {
                b.iter()
                    .filter(|r| r.wer.is_some())
                    .map(|r| r.utterance.as_str())
                    .collect()
            })
            .unwrap_or_default();
        let clean_mean = clean_bucket.and_then(|b| mean(&b.iter().filter_map(|r| r.wer).collect::<Vec<_>>()));

        for (ni, &noise) in layout.noises.iter().enumerate() {
            let bucket = &buckets[li * layout.noises.len() + ni];
            let wers: Vec<f64> = bucket.iter().filter_map(|r| r.wer).collect();
            let wer = mean(&wers);
            let (delta_wer, note) = if noise == NoiseCondition::Clean || wer.is_none() {
                (None, None)
            } else {
                let unpaired = bucket
                    .iter()
                    .filter(|r| r.wer.is_some())
                    .any(|r| !clean_utts.contains(r.utterance.as_str()));
                match clean_mean {
                    _ if unpaired => (None, Some("missing clean counterpart".to_string())),
                    None => (None, Some("missing clean counterpart".to_string())),
                    Some(0.0) => (None, Some("clean WER is zero".to_string())),
                    Some(c) => (wer.map(|w| w / c), None),
                }
            };
            cells.push(ReportCell {
                level: level.clone(),
                noise,
                wer,
                delta_wer,
                ssim: mean(&bucket.iter().filter_map(|r| r.ssim).collect::<Vec<_>>()),
                delta_ssim: mean(&bucket.iter().filter_map(|r| r.delta_ssim).collect::<Vec<_>>()),
                n: wers.len(),
                failed: bucket.iter().filter(|r| r.error.is_some()).count(),
                note,
            });
        }
    }

    EvalReport {
        layout: layout.clone(),
        cells,
        unplaced,
    }
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{:.4}", x * scale))
}

impl EvalReport {
    pub fn cell(&self, level: &str, noise: NoiseCondition) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.level == level && noise_key(c.noise) == noise_key(noise))
    }

    /// `level,noise,wer,delta_wer,ssim,delta_ssim,n`; WER and similarities in
    /// percent, unavailable values as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,noise,wer,delta_wer,ssim,delta_ssim,n\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.level,
                c.noise,
                fmt_opt(c.wer, 100.0),
                fmt_opt(c.delta_wer, 1.0),
                fmt_opt(c.ssim, 100.0),
                fmt_opt(c.delta_ssim, 100.0),
                c.n
            ));
        }
        out
    }

    /// Aligned text tables: WER (%) by level x noise, ΔWER by level x noisy
    /// condition, and similarity by level.
    pub fn to_table(&self) -> String {
        let noises = &self.layout.noises;
        let noisy: Vec<NoiseCondition> = noises
            .iter()
            .copied()
            .filter(|&n| n != NoiseCondition::Clean)
            .collect();
        let width = self
            .layout
            .levels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(10);
        let mut out = String::new();
        let mut grid = |title: &str, cols: &[NoiseCondition], value: &dyn Fn(&ReportCell) -> String| {
            out.push_str(title);
            out.push('\n');
            out.push_str(&format!("{:<width$}", ""));
            for n in cols {
                let label = match n {
                    NoiseCondition::Clean => "clean".to_string(),
                    NoiseCondition::Snr(db) => format!("SNR={db}"),
                };
                out.push_str(&format!(" {label:>9}"));
            }
            out.push('\n');
            for level in &self.layout.levels {
                out.push_str(&format!("{level:<width$}"));
                for &n in cols {
                    let v = self.cell(level, n).map_or_else(|| "NA".into(), value);
                    out.push_str(&format!(" {v:>9}"));
                }
                out.push('\n');
            }
            out.push('\n');
        };
        let two = |v: Option<f64>, s: f64| v.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", x * s));
        grid("WER (%)", noises, &|c| two(c.wer, 100.0));
        grid("Delta WER", &noisy, &|c| two(c.delta_wer, 1.0));

        out.push_str("Similarity (%)\n");
        out.push_str(&format!("{:<width$} {:>9} {:>9}\n", "", "SSIM", "dSSIM"));
        for level in &self.layout.levels {
            let clean = self.cell(level, NoiseCondition::Clean);
            out.push_str(&format!(
                "{level:<width$} {:>9} {:>9}\n",
                two(clean.and_then(|c| c.ssim), 100.0),
                two(clean.and_then(|c| c.delta_ssim), 100.0)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ReportLayout {
        ReportLayout {
            levels: vec!["soft".into(), "loud".into()],
            noises: vec![NoiseCondition::Clean, NoiseCondition::Snr(10.0)],
        }
    }

    #[test]
    fn single_record_cell_is_its_value() {
        let recs = vec![UtteranceRecord::new("u1", "soft", NoiseCondition::Clean).with_wer(0.25)];
        let r = build_report(&recs, &layout());
        let c = r.cell("soft", NoiseCondition::Clean).unwrap();
        assert_eq!(c.wer, Some(0.25));
        assert_eq!(c.n, 1);
        assert_eq!(r.cell("loud", NoiseCondition::Clean).unwrap().wer, None);
    }

    #[test]
    fn delta_from_level_means() {
        let recs = vec![
            UtteranceRecord::new("u1", "soft", NoiseCondition::Clean).with_wer(0.1),
            UtteranceRecord::new("u2", "soft", NoiseCondition::Clean).with_wer(0.3),
            UtteranceRecord::new("u1", "soft", NoiseCondition::Snr(10.0)).with_wer(0.2),
            UtteranceRecord::new("u2", "soft", NoiseCondition::Snr(10.0)).with_wer(0.4),
        ];
        let r = build_report(&recs, &layout());
        let c = r.cell("soft", NoiseCondition::Snr(10.0)).unwrap();
        assert!((c.delta_wer.unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(r.cell("soft", NoiseCondition::Clean).unwrap().delta_wer, None);
    }

    #[test]
    fn missing_clean_counterpart_is_flagged() {
        let recs = vec![
            UtteranceRecord::new("u1", "loud", NoiseCondition::Clean).with_wer(0.1),
            UtteranceRecord::new("u2", "loud", NoiseCondition::Snr(10.0)).with_wer(0.2),
            UtteranceRecord::new("u3", "soft", NoiseCondition::Snr(10.0)).with_wer(0.2),
        ];
        let r = build_report(&recs, &layout());
        for level in ["loud", "soft"] {
            let c = r.cell(level, NoiseCondition::Snr(10.0)).unwrap();
            assert_eq!(c.delta_wer, None);
            assert_eq!(c.note.as_deref(), Some("missing clean counterpart"));
        }
        assert!(r.to_csv().contains("loud,10,20.0000,NA,NA,NA,1"));
    }

    #[test]
    fn zero_clean_wer_leaves_delta_unavailable() {
        let recs = vec![
            UtteranceRecord::new("u1", "soft", NoiseCondition::Clean).with_wer(0.0),
            UtteranceRecord::new("u1", "soft", NoiseCondition::Snr(10.0)).with_wer(0.0),
        ];
        let r = build_report(&recs, &layout());
        let c = r.cell("soft", NoiseCondition::Snr(10.0)).unwrap();
        assert_eq!(c.delta_wer, None);
        assert_eq!(c.note.as_deref(), Some("clean WER is zero"));
        assert!(r.to_table().contains("Delta WER"));
    }

    #[test]
    fn noise_condition_parsing() {
        assert_eq!("clean".parse::<NoiseCondition>().unwrap(), NoiseCondition::Clean);
        assert_eq!("SNR=5".parse::<NoiseCondition>().unwrap(), NoiseCondition::Snr(5.0));
        assert_eq!("1".parse::<NoiseCondition>().unwrap(), NoiseCondition::Snr(1.0));
        assert_eq!(NoiseCondition::Snr(10.0).to_string(), "10");
        assert!("loud".parse::<NoiseCondition>().is_err());
    }
}
