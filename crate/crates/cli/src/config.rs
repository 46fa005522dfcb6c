//! Run configuration file.
//!
//! ```ini
//! seed = 7
//! frame_rate = 50
//!
//! [paths]
//! presets = presets.ini
//! checkpoint = tts/finetune.ttts
//!
//! [models]
//! loudness = pca/loudness.pcam
//! clarity = pca/clarity.pcam
//!
//! [pca]
//! components = max
//!
//! [tts]
//! freeze_boundary = 2
//!
//! [external]
//! transcriber = whisper-cli --file {wav}
//! embedder = embed-speaker {wav}
//!
//! [eval]
//! noise_levels = clean, 10, 5, 1
//! noise = noise.wav
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;
use lombard_core::eval::NoiseCondition;

pub const SEED_ENV: &str = "LOMBARDCTL_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub frame_rate: f64,
    pub presets: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub models: BTreeMap<String, PathBuf>,
    pub components: Option<String>,
    pub freeze_boundary: usize,
    pub transcriber: Option<String>,
    pub embedder: Option<String>,
    pub noise_levels: Vec<NoiseCondition>,
    pub noise: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            frame_rate: 50.0,
            presets: None,
            checkpoint: None,
            models: BTreeMap::new(),
            components: None,
            freeze_boundary: 2,
            transcriber: None,
            embedder: None,
            noise_levels: default_noise_levels(),
            noise: None,
        }
    }
}

pub fn default_noise_levels() -> Vec<NoiseCondition> {
    vec![
        NoiseCondition::Clean,
        NoiseCondition::Snr(10.0),
        NoiseCondition::Snr(5.0),
        NoiseCondition::Snr(1.0),
    ]
}

/// Comma-separated noise conditions; must not be empty.
pub fn parse_noise_levels(text: &str) -> Result<Vec<NoiseCondition>> {
    let levels = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<NoiseCondition>().map_err(|e| anyhow!(e)))
        .collect::<Result<Vec<_>>>()?;
    if levels.is_empty() {
        bail!("noise level list is empty");
    }
    Ok(levels)
}

pub fn parse_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text)?;
        let mut cfg = RunConfig::default();
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let value = value.trim();
                match (section, key) {
                    (None, "seed") => cfg.seed = Some(value.parse().with_context(|| format!("seed '{value}'"))?),
                    (None, "frame_rate") => {
                        cfg.frame_rate = value.parse().with_context(|| format!("frame_rate '{value}'"))?;
                        if !(cfg.frame_rate > 0.0 && cfg.frame_rate.is_finite()) {
                            bail!("frame_rate must be positive");
                        }
                    }
                    (Some("paths"), "presets") => cfg.presets = Some(resolve(value)),
                    (Some("paths"), "checkpoint") => cfg.checkpoint = Some(resolve(value)),
                    (Some("models"), name) => {
                        cfg.models.insert(name.to_string(), resolve(value));
                    }
                    (Some("pca"), "components") => cfg.components = Some(value.to_string()),
                    (Some("tts"), "freeze_boundary") => {
                        cfg.freeze_boundary = value.parse().with_context(|| format!("freeze_boundary '{value}'"))?
                    }
                    (Some("external"), "transcriber") => cfg.transcriber = Some(value.to_string()),
                    (Some("external"), "embedder") => cfg.embedder = Some(value.to_string()),
                    (Some("eval"), "noise_levels") => cfg.noise_levels = parse_noise_levels(value)?,
                    (Some("eval"), "noise") => cfg.noise = Some(resolve(value)),
                    (s, k) => bail!("unknown config key '{k}' in section [{}]", s.unwrap_or("")),
                }
            }
        }
        Ok(cfg)
    }

    /// Seed precedence: command-line flag, then the environment, then the file.
    pub fn resolve_seed(&self, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(text) = env {
            return text
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}='{text}' is not an unsigned integer"));
        }
        self.seed
            .ok_or_else(|| anyhow!("a seed is required: pass --seed, set {SEED_ENV}, or set seed in the config"))
    }
}
