//! Run configuration: JSON in, validated [`RunConfig`] out.
//!
//! Unknown keys are rejected outright; a key one edit away from a known one
//! gets a suggestion.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use oneshot_core::OneShotConfig;

pub const SCHEMA: &str = include_str!("../schema.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("unknown key \"{key}\" in {scope}{}", suggestion_text(.suggestion))]
    UnknownKey { scope: String, key: String, suggestion: Option<String> },

    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn suggestion_text(s: &Option<String>) -> String {
    s.as_ref().map(|k| format!(" (did you mean \"{k}\"?)")).unwrap_or_default()
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vdp,
    Advdiff,
    VdpControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SimulateClassic,
    SimulateOneshot,
    SimulateRescaled,
    OptimizeOneshot,
    OptimizeNested,
    ScalingStudy,
}

impl Mode {
    pub fn is_optimization(self) -> bool {
        matches!(self, Mode::OptimizeOneshot | Mode::OptimizeNested)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub final_time: f64,
    #[serde(rename = "N")]
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Per-step tolerance of the classical solver.
    pub inner_tol: f64,
    /// Stopping tolerance of the optimizers.
    pub eps_stop: f64,
    /// Total-residual tolerance of the sweep simulations.
    pub sim_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub model_params: BTreeMap<String, f64>,
    pub grid: GridConfig,
    pub mode: Mode,
    pub tolerances: Tolerances,
    pub max_iter: usize,
    pub log_every: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub preconditioner_scale: f64,
    /// Rescale inside the one-shot optimizer.
    pub rescaling: bool,
    pub oneshot: OneShotConfig,
    /// Grid sizes of the scaling study.
    pub scaling_n: Vec<usize>,
    pub plots: bool,
}

const TOP_KEYS: &[&str] = &[
    "model",
    "model_params",
    "grid",
    "mode",
    "tolerances",
    "max_iter",
    "log_every",
    "seed",
    "output_dir",
    "preconditioner_scale",
    "rescaling",
    "oneshot",
    "scaling_study",
    "plots",
];
const GRID_KEYS: &[&str] = &["T", "N"];
const TOL_KEYS: &[&str] = &["inner_tol", "eps_stop", "sim_tol"];
const ONESHOT_KEYS: &[&str] = &["b0_scale", "design_freeze", "max_design_step", "bfgs_updates", "alpha", "beta"];
const SCALING_KEYS: &[&str] = &["N"];

impl ModelKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "vdp" => Self::Vdp,
            "advdiff" => Self::Advdiff,
            "vdp_control" => Self::VdpControl,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Vdp => "vdp",
            Self::Advdiff => "advdiff",
            Self::VdpControl => "vdp_control",
        }
    }

    /// Accepted parameters with their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Vdp => &[("u", 1.0), ("x0", 2.0), ("v0", 0.0)],
            Self::Advdiff => &[("a", 1.0), ("mu", 1e-5), ("M", 100.0)],
            Self::VdpControl => &[("u0", 1.0), ("x0", 2.0), ("v0", 0.0), ("u_pen", 0.1), ("u_ref", 0.0)],
        }
    }

    fn default_grid(self) -> GridConfig {
        match self {
            Self::Vdp | Self::VdpControl => GridConfig { final_time: 20.0, steps: 512 },
            Self::Advdiff => GridConfig { final_time: 1.0, steps: 100 },
        }
    }

    fn has_design(self) -> bool {
        !matches!(self, Self::Advdiff)
    }
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate_classic" => Self::SimulateClassic,
            "simulate_oneshot" => Self::SimulateOneshot,
            "simulate_rescaled" => Self::SimulateRescaled,
            "optimize_oneshot" => Self::OptimizeOneshot,
            "optimize_nested" => Self::OptimizeNested,
            "scaling_study" => Self::ScalingStudy,
            _ => return None,
        })
    }
}

const MODEL_NAMES: &[&str] = &["vdp", "advdiff", "vdp_control"];
const MODE_NAMES: &[&str] = &[
    "simulate_classic",
    "simulate_oneshot",
    "simulate_rescaled",
    "optimize_oneshot",
    "optimize_nested",
    "scaling_study",
];

/// A case-insensitive match, else the first candidate within
/// optimal-string-alignment distance 1.
fn suggest(key: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .find(|k| k.eq_ignore_ascii_case(key))
        .or_else(|| known.iter().find(|k| strsim::osa_distance(key, k) == 1))
        .map(|k| k.to_string())
}

fn check_keys(obj: &Map<String, Value>, known: &[&str], scope: &str) -> Result<(), ConfigError> {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                scope: scope.to_string(),
                key: key.clone(),
                suggestion: suggest(key, known),
            });
        }
    }
    Ok(())
}

fn object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    v.as_object().ok_or_else(|| invalid(field, "expected an object"))
}

fn number(v: &Value, field: &str) -> Result<f64, ConfigError> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| invalid(field, "expected a finite number"))
}

fn positive(v: &Value, field: &str) -> Result<f64, ConfigError> {
    let x = number(v, field)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(field, format!("must be positive, got {x}")))
    }
}

fn count(v: &Value, field: &str, min: i64) -> Result<usize, ConfigError> {
    match v.as_i64() {
        Some(n) if n >= min => Ok(n as usize),
        Some(n) => Err(invalid(field, format!("must be >= {min}, got {n}"))),
        None => Err(invalid(field, "expected an integer")),
    }
}

fn boolean(v: &Value, field: &str) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| invalid(field, "expected true or false"))
}

fn string<'a>(v: &'a Value, field: &str) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| invalid(field, "expected a string"))
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let top = object(&root, "<root>")?;
    check_keys(top, TOP_KEYS, "<root>")?;

    let model_name = string(top.get("model").ok_or_else(|| invalid("model", "required"))?, "model")?;
    let model = ModelKind::parse(model_name).ok_or_else(|| {
        let hint = suggest(model_name, MODEL_NAMES).map(|s| format!(" (did you mean \"{s}\"?)")).unwrap_or_default();
        invalid("model", format!("unknown model \"{model_name}\"{hint}; expected one of {MODEL_NAMES:?}"))
    })?;
    let mode_name = string(top.get("mode").ok_or_else(|| invalid("mode", "required"))?, "mode")?;
    let mode = Mode::parse(mode_name).ok_or_else(|| {
        let hint = suggest(mode_name, MODE_NAMES).map(|s| format!(" (did you mean \"{s}\"?)")).unwrap_or_default();
        invalid("mode", format!("unknown mode \"{mode_name}\"{hint}; expected one of {MODE_NAMES:?}"))
    })?;

    let defaults = model.default_params();
    let mut model_params: BTreeMap<String, f64> = defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    if let Some(v) = top.get("model_params") {
        let obj = object(v, "model_params")?;
        let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
        check_keys(obj, &known, "model_params")?;
        for (k, v) in obj {
            model_params.insert(k.clone(), number(v, &format!("model_params.{k}"))?);
        }
    }
    validate_params(model, &model_params)?;

    let mut grid = model.default_grid();
    if let Some(v) = top.get("grid") {
        let obj = object(v, "grid")?;
        check_keys(obj, GRID_KEYS, "grid")?;
        if let Some(t) = obj.get("T") {
            grid.final_time = positive(t, "grid.T")?;
        }
        if let Some(n) = obj.get("N") {
            grid.steps = count(n, "grid.N", 1)?;
        }
    }

    let mut tolerances = Tolerances { inner_tol: 1e-10, eps_stop: 1e-3, sim_tol: 1e-8 };
    if let Some(v) = top.get("tolerances") {
        let obj = object(v, "tolerances")?;
        check_keys(obj, TOL_KEYS, "tolerances")?;
        if let Some(x) = obj.get("inner_tol") {
            tolerances.inner_tol = positive(x, "tolerances.inner_tol")?;
        }
        if let Some(x) = obj.get("eps_stop") {
            tolerances.eps_stop = positive(x, "tolerances.eps_stop")?;
        }
        if let Some(x) = obj.get("sim_tol") {
            tolerances.sim_tol = positive(x, "tolerances.sim_tol")?;
        }
    }

    let max_iter = top.get("max_iter").map(|v| count(v, "max_iter", 1)).transpose()?.unwrap_or(5000);
    let log_every = top.get("log_every").map(|v| count(v, "log_every", 1)).transpose()?.unwrap_or(10);
    let seed = match top.get("seed") {
        Some(v) => v.as_u64().ok_or_else(|| invalid("seed", "expected a non-negative integer"))?,
        None => 0,
    };
    let output_dir = top.get("output_dir").map(|v| string(v, "output_dir").map(PathBuf::from)).transpose()?;
    let preconditioner_scale =
        top.get("preconditioner_scale").map(|v| positive(v, "preconditioner_scale")).transpose()?.unwrap_or(1.0);
    let rescaling = top.get("rescaling").map(|v| boolean(v, "rescaling")).transpose()?.unwrap_or(false);
    let plots = top.get("plots").map(|v| boolean(v, "plots")).transpose()?.unwrap_or(true);

    let mut oneshot = OneShotConfig {
        eps_stop: tolerances.eps_stop,
        max_iter,
        rescaling,
        preconditioner_scale,
        ..Default::default()
    };
    if let Some(v) = top.get("oneshot") {
        let obj = object(v, "oneshot")?;
        check_keys(obj, ONESHOT_KEYS, "oneshot")?;
        if let Some(x) = obj.get("b0_scale") {
            oneshot.b0_scale = positive(x, "oneshot.b0_scale")?;
        }
        if let Some(x) = obj.get("design_freeze") {
            oneshot.design_freeze = count(x, "oneshot.design_freeze", 0)?;
        }
        if let Some(x) = obj.get("max_design_step") {
            oneshot.max_design_step = positive(x, "oneshot.max_design_step")?;
        }
        if let Some(x) = obj.get("bfgs_updates") {
            oneshot.bfgs_updates = boolean(x, "oneshot.bfgs_updates")?;
        }
        for key in ["alpha", "beta"] {
            if let Some(x) = obj.get(key) {
                let field = format!("oneshot.{key}");
                if number(x, &field)? != 0.0 {
                    return Err(invalid(field, "only 0 is supported (reduced-gradient preconditioning)"));
                }
            }
        }
    }

    let mut scaling_n = vec![64, 128, 256, 512, 1024];
    if let Some(v) = top.get("scaling_study") {
        let obj = object(v, "scaling_study")?;
        check_keys(obj, SCALING_KEYS, "scaling_study")?;
        if let Some(list) = obj.get("N") {
            let arr = list.as_array().ok_or_else(|| invalid("scaling_study.N", "expected an array"))?;
            if arr.is_empty() {
                return Err(invalid("scaling_study.N", "must not be empty"));
            }
            scaling_n = arr
                .iter()
                .enumerate()
                .map(|(i, n)| count(n, &format!("scaling_study.N[{i}]"), 1))
                .collect::<Result<_, _>>()?;
        }
    }

    if mode.is_optimization() && !model.has_design() {
        return Err(invalid("mode", format!("{mode_name} needs a model with a design variable")));
    }

    Ok(RunConfig {
        model,
        model_params,
        grid,
        mode,
        tolerances,
        max_iter,
        log_every,
        seed,
        output_dir,
        preconditioner_scale,
        rescaling,
        oneshot,
        scaling_n,
        plots,
    })
}

fn validate_params(model: ModelKind, p: &BTreeMap<String, f64>) -> Result<(), ConfigError> {
    if model == ModelKind::Advdiff {
        let m = p["M"];
        if m.fract() != 0.0 || m < 3.0 {
            return Err(invalid("model_params.M", format!("must be an integer >= 3, got {m}")));
        }
        if p["mu"] < 0.0 {
            return Err(invalid("model_params.mu", "must be non-negative"));
        }
    }
    if model == ModelKind::VdpControl && p["u_pen"] < 0.0 {
        return Err(invalid("model_params.u_pen", "must be non-negative"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_advdiff_gets_defaults() {
        let cfg = parse_config_str(r#"{"model": "advdiff", "mode": "simulate_rescaled"}"#).unwrap();
        assert_eq!(cfg.model_params["M"], 100.0);
        assert_eq!(cfg.tolerances.inner_tol, 1e-10);
        assert_eq!(cfg.grid, GridConfig { final_time: 1.0, steps: 100 });
        assert_eq!(cfg.oneshot.eps_stop, 1e-3);
    }

    #[test]
    fn negative_steps_name_the_field() {
        let err = parse_config_str(r#"{"model": "vdp", "mode": "simulate_oneshot", "grid": {"N": -4}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.N"), "{err}");
    }

    #[test]
    fn typo_gets_a_suggestion() {
        let err = parse_config_str(r#"{"model": "vdp", "mode": "simulate_oneshot", "gird": {"N": 4}}"#).unwrap_err();
        match &err {
            ConfigError::UnknownKey { key, suggestion, .. } => {
                assert_eq!(key, "gird");
                assert_eq!(suggestion.as_deref(), Some("grid"));
            }
            other => panic!("{other}"),
        }
        let err = parse_config_str(r#"{"model": "vdp", "mode": "simulate_oneshot", "grid": {"n": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("did you mean \"N\""), "{err}");
        let err = parse_config_str(r#"{"model": "vdp", "mode": "simulate_oneshot", "zzz": 1}"#).unwrap_err();
        assert!(!err.to_string().contains("did you mean"));
    }

    #[test]
    fn schema_violations() {
        for (text, field) in [
            (r#"{"mode": "simulate_oneshot"}"#, "model"),
            (r#"{"model": "vdp"}"#, "mode"),
            (r#"{"model": "vdp", "mode": "simulate"}"#, "mode"),
            (r#"{"model": "advdiff", "mode": "optimize_oneshot"}"#, "mode"),
            (r#"{"model": "advdiff", "mode": "simulate_oneshot", "model_params": {"M": 2}}"#, "model_params.M"),
            (r#"{"model": "vdp", "mode": "simulate_oneshot", "tolerances": {"sim_tol": 0}}"#, "tolerances.sim_tol"),
            (r#"{"model": "vdp_control", "mode": "optimize_oneshot", "oneshot": {"alpha": 1}}"#, "oneshot.alpha"),
            (r#"{"model": "vdp", "mode": "scaling_study", "scaling_study": {"N": [64, 0]}}"#, "scaling_study.N[1]"),
        ] {
            let err = parse_config_str(text).unwrap_err();
            assert!(matches!(&err, ConfigError::Invalid { field: f, .. } if f == field), "{text}: {err}");
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_config_str("{\n  \"model\": \"vdp\",\n  oops\n}").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn schema_is_valid_json_listing_every_key() {
        let schema: Value = serde_json::from_str(SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        for key in TOP_KEYS {
            assert!(props.contains_key(*key), "{key}");
        }
    }
}
