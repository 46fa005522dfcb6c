//! Lombardness control by shifting PCA components of style embeddings.
//!
//! A shift of coefficient `c` on component `k` moves the embedding's score by
//! `c * sigma_k`. The part of the embedding outside the model's component
//! span is carried through unchanged, so a zero shift is an exact identity
//! even for truncated models.
//!
//! Presets name a loudness and a clarity value plus a speed factor. Axis
//! bindings say which components of which model realise each axis; presets
//! are resolved into per-model shift lists and applied model by model in
//! binding order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use thiserror::Error;

use crate::pca::{PcaError, PcaModel};
use crate::scalar::Scalar;

/// Preset and binding definitions shipped with the crate.
pub const DEFAULT_PRESETS: &str = include_str!("../presets/lombard.ini");

/// Upper bound on a preset's speed factor.
pub const MAX_SPEED: f64 = 4.0;

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("component index {index} out of range for model with {components} components")]
    ComponentOutOfRange { index: usize, components: usize },
    #[error("component {0} listed more than once")]
    DuplicateComponent(usize),
    #[error("non-finite coefficient for component {0}")]
    NonFiniteCoefficient(usize),
    #[error("axis {0} has a nonzero value but no binding")]
    UnboundAxis(Axis),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("unknown preset {name:?}; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error("invalid preset file: {0}")]
    InvalidPresetFile(String),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Control axis of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Loudness,
    Clarity,
}

impl Axis {
    pub const ALL: [Axis; 2] = [Axis::Loudness, Axis::Clarity];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Loudness => "loudness",
            Axis::Clarity => "clarity",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = StyleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loudness" => Ok(Axis::Loudness),
            "clarity" => Ok(Axis::Clarity),
            other => Err(StyleError::InvalidPresetFile(format!("unknown axis {other:?}"))),
        }
    }
}

/// Named PCA models available to preset application.
pub type ModelRegistry<T> = BTreeMap<String, PcaModel<T>>;

/// Move one component of one model by `coefficient` standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDirective {
    pub model_ref: String,
    pub component_index: usize,
    pub coefficient: f64,
}

impl FromStr for ShiftDirective {
    type Err = String;

    /// Parses `model:component:coefficient`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [model, component, coefficient] = parts.as_slice() else {
            return Err(format!("expected model:component:coefficient, got {s:?}"));
        };
        let component_index = component
            .parse()
            .map_err(|_| format!("bad component index {component:?}"))?;
        let coefficient: f64 = coefficient
            .parse()
            .map_err(|_| format!("bad coefficient {coefficient:?}"))?;
        if !coefficient.is_finite() {
            return Err(format!("non-finite coefficient in {s:?}"));
        }
        Ok(Self {
            model_ref: model.to_string(),
            component_index,
            coefficient,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LombardPreset {
    pub name: String,
    pub loudness: f64,
    pub clarity: f64,
    pub speed: f64,
}

impl LombardPreset {
    pub fn new(name: impl Into<String>, loudness: f64, clarity: f64, speed: f64) -> Self {
        Self {
            name: name.into(),
            loudness,
            clarity,
            speed,
        }
    }

    pub fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Loudness => self.loudness,
            Axis::Clarity => self.clarity,
        }
    }

    fn validate(&self) -> Result<(), StyleError> {
        if !(self.loudness.is_finite() && self.clarity.is_finite()) {
            return Err(StyleError::InvalidPresetFile(format!(
                "preset {:?} has non-finite coefficients",
                self.name
            )));
        }
        if !(self.speed > 0.0 && self.speed <= MAX_SPEED) {
            return Err(StyleError::InvalidPresetFile(format!(
                "preset {:?}: speed {} outside (0, {MAX_SPEED}]",
                self.name, self.speed
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingEntry {
    pub model_ref: String,
    pub component_index: usize,
    pub weight: f64,
}

/// Components realising one control axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBinding {
    pub axis: Axis,
    pub entries: Vec<BindingEntry>,
}

impl AxisBinding {
    pub fn single_model(axis: Axis, model_ref: &str, components: &[(usize, f64)]) -> Self {
        Self {
            axis,
            entries: components
                .iter()
                .map(|&(component_index, weight)| BindingEntry {
                    model_ref: model_ref.to_string(),
                    component_index,
                    weight,
                })
                .collect(),
        }
    }
}

/// Shifts `e` along the listed components: the score of component `k` moves
/// by `coefficient_k * sigma_k`, all other scores and the off-span residual
/// are left untouched.
pub fn shift_embedding<T: Scalar>(
    e: &[T],
    model: &PcaModel<T>,
    shifts: &[(usize, T)],
) -> Result<Vec<T>, StyleError> {
    if e.len() != model.dimension() {
        return Err(PcaError::DimensionMismatch {
            expected: model.dimension(),
            found: e.len(),
        }
        .into());
    }
    check_shifts(model, shifts)?;
    let mut out = e.to_vec();
    for &(k, c) in shifts {
        let delta = c * model.sigma()[k];
        for (o, &v) in out.iter_mut().zip(&model.components()[k]) {
            *o += delta * v;
        }
    }
    Ok(out)
}

/// Euclidean length of the embedding-space move made by `shifts`.
pub fn displacement_norm<T: Scalar>(model: &PcaModel<T>, shifts: &[(usize, T)]) -> Result<T, StyleError> {
    check_shifts(model, shifts)?;
    Ok(shifts
        .iter()
        .map(|&(k, c)| {
            let d = c * model.sigma()[k];
            d * d
        })
        .sum::<T>()
        .sqrt())
}

fn check_shifts<T: Scalar>(model: &PcaModel<T>, shifts: &[(usize, T)]) -> Result<(), StyleError> {
    let k = model.n_components();
    for (i, &(index, c)) in shifts.iter().enumerate() {
        if index >= k {
            return Err(StyleError::ComponentOutOfRange {
                index,
                components: k,
            });
        }
        if !c.is_finite() {
            return Err(StyleError::NonFiniteCoefficient(index));
        }
        if shifts[..i].iter().any(|&(j, _)| j == index) {
            return Err(StyleError::DuplicateComponent(index));
        }
    }
    Ok(())
}

/// Instantiates a preset against the bindings: coefficient = axis value x
/// weight. Axes at zero contribute nothing.
pub fn resolve_directives(
    preset: &LombardPreset,
    bindings: &[AxisBinding],
) -> Result<Vec<ShiftDirective>, StyleError> {
    for axis in Axis::ALL {
        if preset.axis_value(axis) != 0.0 && !bindings.iter().any(|b| b.axis == axis) {
            return Err(StyleError::UnboundAxis(axis));
        }
    }
    let mut directives = Vec::new();
    for binding in bindings {
        let value = preset.axis_value(binding.axis);
        if value == 0.0 {
            continue;
        }
        directives.extend(binding.entries.iter().map(|entry| ShiftDirective {
            model_ref: entry.model_ref.clone(),
            component_index: entry.component_index,
            coefficient: value * entry.weight,
        }));
    }
    Ok(directives)
}

/// Groups directives by model (first-appearance order), summing coefficients
/// that target the same component.
pub fn group_directives(directives: &[ShiftDirective]) -> Vec<(String, Vec<(usize, f64)>)> {
    let mut groups: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    for d in directives {
        let pos = match groups.iter().position(|(m, _)| *m == d.model_ref) {
            Some(pos) => pos,
            None => {
                groups.push((d.model_ref.clone(), Vec::new()));
                groups.len() - 1
            }
        };
        let shifts = &mut groups[pos].1;
        match shifts.iter_mut().find(|(k, _)| *k == d.component_index) {
            Some((_, c)) => *c += d.coefficient,
            None => shifts.push((d.component_index, d.coefficient)),
        }
    }
    groups
}

/// Applies directives model by model.
pub fn apply_directives<T: Scalar>(
    e: &[T],
    directives: &[ShiftDirective],
    models: &ModelRegistry<T>,
) -> Result<Vec<T>, StyleError> {
    let groups = group_directives(directives);
    for (model_ref, _) in &groups {
        if !models.contains_key(model_ref) {
            return Err(StyleError::UnknownModel(model_ref.clone()));
        }
    }
    let mut out = e.to_vec();
    for (model_ref, shifts) in groups {
        let shifts: Vec<(usize, T)> = shifts.into_iter().map(|(k, c)| (k, T::lit(c))).collect();
        out = shift_embedding(&out, &models[&model_ref], &shifts)?;
    }
    Ok(out)
}

/// Applies a preset; returns the manipulated embedding and the preset's speed.
pub fn apply_preset<T: Scalar>(
    e: &[T],
    preset: &LombardPreset,
    bindings: &[AxisBinding],
    models: &ModelRegistry<T>,
) -> Result<(Vec<T>, f64), StyleError> {
    let directives = resolve_directives(preset, bindings)?;
    Ok((apply_directives(e, &directives, models)?, preset.speed))
}

/// Presets and bindings read from a `[preset.<name>]` / `[binding.<axis>]` file.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetFile {
    pub presets: Vec<LombardPreset>,
    pub bindings: Vec<AxisBinding>,
}

impl Default for PresetFile {
    fn default() -> Self {
        Self::parse(DEFAULT_PRESETS).expect("shipped preset file parses")
    }
}

impl PresetFile {
    pub fn parse(text: &str) -> Result<Self, StyleError> {
        let ini = Ini::load_from_str(text)
            .map_err(|e| StyleError::InvalidPresetFile(e.to_string()))?;
        let mut presets: Vec<LombardPreset> = Vec::new();
        let mut bindings: Vec<AxisBinding> = Vec::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.is_empty() {
                    continue;
                }
                return Err(StyleError::InvalidPresetFile(
                    "keys outside of a section".into(),
                ));
            };
            let get = |key: &str| {
                props.get(key).ok_or_else(|| {
                    StyleError::InvalidPresetFile(format!("[{section}] missing `{key}`"))
                })
            };
            if let Some(name) = section.strip_prefix("preset.") {
                let preset = LombardPreset {
                    name: name.to_string(),
                    loudness: parse_f64(section, "loudness", get("loudness")?)?,
                    clarity: parse_f64(section, "clarity", get("clarity")?)?,
                    speed: parse_f64(section, "speed", get("speed")?)?,
                };
                preset.validate()?;
                if presets.iter().any(|p| p.name == preset.name) {
                    return Err(StyleError::InvalidPresetFile(format!(
                        "duplicate preset {name:?}"
                    )));
                }
                presets.push(preset);
            } else if let Some(axis) = section.strip_prefix("binding.") {
                let axis: Axis = axis.parse()?;
                let model = get("model")?.trim().to_string();
                let components = parse_list::<usize>(section, "components", get("components")?)?;
                let weights = parse_list::<f64>(section, "weights", get("weights")?)?;
                if components.is_empty() || components.len() != weights.len() {
                    return Err(StyleError::InvalidPresetFile(format!(
                        "[{section}] needs matching non-empty `components` and `weights`"
                    )));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(StyleError::InvalidPresetFile(format!(
                        "[{section}] has non-finite weights"
                    )));
                }
                if bindings.iter().any(|b| b.axis == axis) {
                    return Err(StyleError::InvalidPresetFile(format!(
                        "duplicate binding for {axis}"
                    )));
                }
                let pairs: Vec<(usize, f64)> = components.into_iter().zip(weights).collect();
                bindings.push(AxisBinding::single_model(axis, &model, &pairs));
            } else {
                return Err(StyleError::InvalidPresetFile(format!(
                    "unknown section [{section}]"
                )));
            }
        }
        Ok(Self { presets, bindings })
    }

    pub fn load(path: &Path) -> Result<Self, StyleError> {
        let text = fs::read_to_string(path).map_err(|source| StyleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn preset(&self, name: &str) -> Result<&LombardPreset, StyleError> {
        self.presets
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| StyleError::UnknownPreset {
                name: name.to_string(),
                available: self.preset_names().join(", "),
            })
    }

    pub fn preset_names(&self) -> Vec<&str> {
        self.presets.iter().map(|p| p.name.as_str()).collect()
    }
}

fn parse_f64(section: &str, key: &str, raw: &str) -> Result<f64, StyleError> {
    raw.trim().parse().map_err(|_| {
        StyleError::InvalidPresetFile(format!("[{section}] `{key}` is not a number: {raw:?}"))
    })
}

fn parse_list<V: FromStr>(section: &str, key: &str, raw: &str) -> Result<Vec<V>, StyleError> {
    raw.split(',')
        .map(|item| {
            item.trim().parse().map_err(|_| {
                StyleError::InvalidPresetFile(format!("[{section}] bad `{key}` entry {item:?}"))
            })
        })
        .collect()
}
