//! PCA over style-embedding corpora.
//!
//! Models are fitted by SVD of the mean-centred data matrix (no per-dimension
//! scaling). Per-component standard deviations use `N - 1` normalisation and
//! are the unit in which style shifts are expressed. Each component row is
//! sign-normalised so its largest-magnitude entry is positive, which makes
//! fitting bitwise reproducible.
//!
//! Binary `PCAM` layout: magic `PCAM`, `u32` LE K, `u32` LE D, then `f64` LE
//! mean (D), sigma (K), explained-variance ratio (K), and the K x D component
//! matrix in row-major order.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::embedding_store::{EmbeddingCorpus, StyleEmbedding};
use crate::linalg::jacobi_svd;
use crate::scalar::{dot, Scalar};

const PCAM_MAGIC: &[u8; 4] = b"PCAM";
/// Orthonormality tolerance accepted when loading a stored model.
pub const LOAD_ORTHONORMALITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 samples to fit PCA, got {0}")]
    TooFewSamples(usize),
    #[error("component count {requested} out of range 1..={max}")]
    ComponentCountOutOfRange { requested: usize, max: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("dimension mismatch: model has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("score length mismatch: model has {expected} components, score has {found}")]
    ScoreLengthMismatch { expected: usize, found: usize },
    #[error("correlation needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("attribute values have zero variance")]
    ZeroAttributeVariance,
    #[error("bad magic")]
    BadMagic,
    #[error("truncated payload")]
    Truncated,
    #[error("orthonormality violated (max deviation {0:e})")]
    OrthonormalityViolated(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ComponentCount {
    /// `min(N - 1, D)`.
    #[default]
    Max,
    Exact(usize),
}

impl FromStr for ComponentCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Self::Max);
        }
        s.parse()
            .map(Self::Exact)
            .map_err(|_| format!("expected an integer or \"max\", got {s:?}"))
    }
}

impl fmt::Display for ComponentCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Max => f.write_str("max"),
            Self::Exact(k) => write!(f, "{k}"),
        }
    }
}

/// Pearson correlation between one component's scores and an attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentCorrelation<T> {
    pub component_index: usize,
    /// `None` when the component's scores have no variance over the pairs.
    pub pearson_r: Option<T>,
    pub sample_count: usize,
}

/// Fitted PCA basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    mean: Vec<T>,
    components: Vec<Vec<T>>,
    sigma: Vec<T>,
    explained_variance_ratio: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn fit(corpus: &EmbeddingCorpus, k: ComponentCount) -> Result<Self, PcaError> {
        Self::fit_rows(&corpus.rows_as::<T>(), k)
    }

    /// Fits on raw rows (all of equal length).
    pub fn fit_rows(rows: &[Vec<T>], k: ComponentCount) -> Result<Self, PcaError> {
        let n = rows.len();
        if n < 2 {
            return Err(PcaError::TooFewSamples(n));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(PcaError::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PcaError::NonFinite);
        }
        let max_k = (n - 1).min(d);
        let k = match k {
            ComponentCount::Max => max_k,
            ComponentCount::Exact(k) if (1..=max_k).contains(&k) => k,
            ComponentCount::Exact(k) => {
                return Err(PcaError::ComponentCountOutOfRange {
                    requested: k,
                    max: max_k,
                })
            }
        };

        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut mean = vec![T::zero(); d];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_n);

        let centered: Vec<T> = rows
            .iter()
            .flat_map(|row| row.iter().zip(&mean).map(|(&v, &m)| v - m))
            .collect();
        let total: T = centered.iter().map(|&x| x * x).sum();

        let svd = jacobi_svd(&centered, n, d);
        let dof = T::from_usize_lossy(n - 1).sqrt();
        let mut components = Vec::with_capacity(k);
        let mut sigma = Vec::with_capacity(k);
        let mut ratio = Vec::with_capacity(k);
        for (s, mut v) in svd.singular_values.into_iter().zip(svd.right_vectors).take(k) {
            normalize_sign(&mut v);
            components.push(v);
            sigma.push(s / dof);
            ratio.push(if total > T::zero() {
                s * s / total
            } else {
                T::zero()
            });
        }

        Ok(Self {
            mean,
            components,
            sigma,
            explained_variance_ratio: ratio,
        })
    }

    /// Assembles a model from parts, checking the structural invariants.
    pub fn from_parts(
        mean: Vec<T>,
        components: Vec<Vec<T>>,
        sigma: Vec<T>,
        explained_variance_ratio: Vec<T>,
    ) -> Result<Self, PcaError> {
        let d = mean.len();
        let k = components.len();
        if d == 0 || k == 0 || k > d {
            return Err(PcaError::InvalidModel(format!("K={k}, D={d}")));
        }
        if sigma.len() != k || explained_variance_ratio.len() != k {
            return Err(PcaError::InvalidModel(
                "sigma / variance-ratio length differs from K".into(),
            ));
        }
        if components.iter().any(|c| c.len() != d) {
            return Err(PcaError::InvalidModel("component row length differs from D".into()));
        }
        let all_finite = mean
            .iter()
            .chain(components.iter().flatten())
            .chain(&sigma)
            .chain(&explained_variance_ratio)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(PcaError::NonFinite);
        }
        if sigma.iter().any(|&s| s < T::zero()) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(PcaError::InvalidModel(
                "sigma must be non-negative and non-increasing".into(),
            ));
        }
        let model = Self {
            mean,
            components,
            sigma,
            explained_variance_ratio,
        };
        let dev = model.orthonormality_error().as_f64();
        if dev > LOAD_ORTHONORMALITY_TOLERANCE {
            return Err(PcaError::OrthonormalityViolated(dev));
        }
        Ok(model)
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Component rows, ordered by decreasing variance.
    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn explained_variance_ratio(&self) -> &[T] {
        &self.explained_variance_ratio
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// `max_{i,j} |<row_i, row_j> - delta_ij|`.
    pub fn orthonormality_error(&self) -> T {
        let mut worst = T::zero();
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate().skip(i) {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }

    /// Scores: `components * (e - mean)`.
    pub fn project(&self, e: &[T]) -> Result<Vec<T>, PcaError> {
        if e.len() != self.dimension() {
            return Err(PcaError::DimensionMismatch {
                expected: self.dimension(),
                found: e.len(),
            });
        }
        let centered: Vec<T> = e.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// `mean + components^T * score`.
    pub fn inverse_project(&self, score: &[T]) -> Result<Vec<T>, PcaError> {
        if score.len() != self.n_components() {
            return Err(PcaError::ScoreLengthMismatch {
                expected: self.n_components(),
                found: score.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, &s) in self.components.iter().zip(score) {
            for (o, &v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        Ok(out)
    }

    /// Projection onto the component span: `inverse_project(project(e))`.
    pub fn roundtrip(&self, e: &[T]) -> Result<Vec<T>, PcaError> {
        self.inverse_project(&self.project(e)?)
    }

    /// Pearson correlation of each component score with the paired attribute.
    pub fn correlate_components(
        &self,
        pairs: &[(&StyleEmbedding, f64)],
    ) -> Result<Vec<ComponentCorrelation<T>>, PcaError> {
        let n = pairs.len();
        if n < 3 {
            return Err(PcaError::TooFewPairs(n));
        }
        let attr: Vec<T> = pairs.iter().map(|&(_, v)| T::lit(v)).collect();
        let attr_centered = centered(&attr);
        let syy: T = attr_centered.iter().map(|&y| y * y).sum();
        if syy == T::zero() {
            return Err(PcaError::ZeroAttributeVariance);
        }

        let mut scores = Vec::with_capacity(n);
        let mut scale = T::zero();
        for (e, _) in pairs {
            let values = e.values_as::<T>();
            let offset: T = values
                .iter()
                .zip(&self.mean)
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum::<T>()
                .sqrt();
            scale = scale.max(offset);
            scores.push(self.project(&values)?);
        }
        // scores at rounding-noise level carry no signal
        let floor = T::lit(64.0) * T::epsilon() * scale.max(T::min_positive_value());

        Ok((0..self.n_components())
            .map(|k| {
                let xs: Vec<T> = scores.iter().map(|s| s[k]).collect();
                let xc = centered(&xs);
                let sxx: T = xc.iter().map(|&x| x * x).sum();
                let sd = (sxx / T::from_usize_lossy(n)).sqrt();
                let pearson_r = (sd > floor).then(|| {
                    let sxy: T = xc.iter().zip(&attr_centered).map(|(&x, &y)| x * y).sum();
                    (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one())
                });
                ComponentCorrelation {
                    component_index: k,
                    pearson_r,
                    sample_count: n,
                }
            })
            .collect())
    }

    pub fn to_pcam_bytes(&self) -> Vec<u8> {
        let (k, d) = (self.n_components(), self.dimension());
        let mut out = Vec::with_capacity(12 + 8 * (d + 2 * k + k * d));
        out.extend_from_slice(PCAM_MAGIC);
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        let values = self
            .mean
            .iter()
            .chain(&self.sigma)
            .chain(&self.explained_variance_ratio)
            .chain(self.components.iter().flatten());
        for v in values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out
    }

    pub fn from_pcam_bytes(bytes: &[u8]) -> Result<Self, PcaError> {
        if bytes.len() < 4 || &bytes[..4] != PCAM_MAGIC {
            return Err(PcaError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(PcaError::Truncated);
        }
        let k = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let expected = k
            .checked_mul(d)
            .and_then(|kd| kd.checked_add(d + 2 * k))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(12))
            .ok_or(PcaError::Truncated)?;
        if bytes.len() < expected {
            return Err(PcaError::Truncated);
        }
        if bytes.len() > expected {
            return Err(PcaError::InvalidModel(format!(
                "{} trailing bytes",
                bytes.len() - expected
            )));
        }
        let mut values = bytes[12..]
            .chunks_exact(8)
            .map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes"))));
        let mut take = |n: usize| -> Vec<T> { values.by_ref().take(n).collect() };
        let mean = take(d);
        let sigma = take(k);
        let ratio = take(k);
        let components = (0..k).map(|_| take(d)).collect();
        Self::from_parts(mean, components, sigma, ratio)
    }

    pub fn save(&self, path: &Path) -> Result<(), PcaError> {
        fs::write(path, self.to_pcam_bytes()).map_err(|source| PcaError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PcaError> {
        let bytes = fs::read(path).map_err(|source| PcaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_pcam_bytes(&bytes)
    }
}

fn centered<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mean = xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len());
    xs.iter().map(|&x| x - mean).collect()
}

/// Flips `v` so that its largest-magnitude entry is positive; near-ties go to
/// the lowest index.
fn normalize_sign<T: Scalar>(v: &mut [T]) {
    let max = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if max == T::zero() {
        return;
    }
    let cutoff = max * (T::one() - T::lit(64.0) * T::epsilon());
    if let Some(&pivot) = v.iter().find(|x| x.abs() >= cutoff) {
        if pivot < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
