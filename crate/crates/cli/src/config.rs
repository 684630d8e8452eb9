//! Command configs: a checked-in JSON default per command, optionally
//! replaced by `--input`, patched by `--set key=value`, then parsed strictly.

use std::fs;
use std::path::Path;

use mlip::sim::{ForceEvent, GainSetting, Scenario};
use mlip::{GaitParams, WalkingMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const MATRICES: &str = include_str!("../configs/matrices.json");
pub const ORBIT: &str = include_str!("../configs/orbit.json");
pub const GAINS: &str = include_str!("../configs/gains.json");
pub const SIMULATE: &str = include_str!("../configs/simulate.json");
pub const SWEEP: &str = include_str!("../configs/sweep.json");
pub const PUSH: &str = include_str!("../configs/push.json");
pub const MAXSPEED: &str = include_str!("../configs/maxspeed.json");
pub const FIGURE: &str = include_str!("../configs/figure.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesConfig {
    pub params: GaitParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub params: GaitParams,
    pub v_d: f64,
    /// Nominal step width; selects the period-2 orbit when set.
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default = "default_portrait_dt")]
    pub dt: f64,
}

fn default_portrait_dt() -> f64 {
    0.005
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub params: GaitParams,
    #[serde(default)]
    pub gains: GainSetting,
    /// Componentwise disturbance bound `(w_p, w_L)` for the invariant box.
    #[serde(default)]
    pub w_max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub speeds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushConfig {
    pub scenario: Scenario,
    pub pushes: Vec<ForceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxSpeedConfig {
    pub scenario: Scenario,
    pub modes: Vec<WalkingMode>,
    pub u_limit: f64,
    #[serde(default = "forward")]
    pub direction: f64,
}

fn forward() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub sagittal: GaitParams,
    pub lateral: GaitParams,
    pub portrait_dt: f64,
    pub orbit_speeds: Vec<f64>,
    pub toe_to_heel_speed: f64,
    pub step_times: Vec<f64>,
    pub widths: Vec<f64>,
    pub plant_z0: f64,
    pub seed: u64,
}

/// Read the raw JSON for a command: the file at `input` if given, else the
/// embedded default.
pub fn load_value(input: Option<&Path>, default: &str) -> Result<Value, CliError> {
    let (text, origin) = match input {
        Some(path) => (
            fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
            path.display().to_string(),
        ),
        None => (default.to_string(), "built-in default".to_string()),
    };
    serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{origin}: {e}")))
}

/// Apply `key=value` overrides. Keys are dotted paths (`params.z0`,
/// `command.1.v`); values are parsed as JSON and fall back to strings.
pub fn apply_overrides(value: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            CliError::schema(format!("override `{item}` is not of the form key=value"))
        })?;
        let new: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(value, key, new)?;
    }
    Ok(())
}

fn set_path(root: &mut Value, key: &str, new: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::schema(format!(
            "override key `{key}` has an empty segment"
        )));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let index: usize = part.parse().map_err(|_| {
                    CliError::schema(format!("override `{key}`: `{part}` is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(index).ok_or_else(|| {
                    CliError::schema(format!(
                        "override `{key}`: index {index} out of range ({len} items)"
                    ))
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else {
                    unreachable!()
                };
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => {
                return Err(CliError::schema(format!(
                    "override `{key}`: `{}` is not an object",
                    parts[..i].join(".")
                )))
            }
        };
    }
    Ok(())
}

pub fn parse<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::schema(e.to_string()))
}

/// Load, patch and parse a command config.
pub fn load<T: DeserializeOwned>(
    input: Option<&Path>,
    default: &str,
    overrides: &[String],
) -> Result<T, CliError> {
    let mut value = load_value(input, default)?;
    apply_overrides(&mut value, overrides)?;
    parse(value)
}
