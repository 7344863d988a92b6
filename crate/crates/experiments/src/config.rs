//! Run configuration: a TOML file plus `--set key=value` overrides.
//!
//! ```toml
//! out_dir = "runs/desk"
//!
//! [data]
//! train_images = "data/desk/train-images-idx3-ubyte"
//! train_labels = "data/desk/train-labels-idx1-ubyte"
//! val_images = "data/desk/t10k-images-idx3-ubyte"
//! val_labels = "data/desk/t10k-labels-idx1-ubyte"
//! subset_seed = 7
//!
//! [hyper]
//! hidden_layers = 2
//! quantum = { a = "10^(-1/2)", g = "pi/2" }
//!
//! [inference]
//! mode = "multi_shot"
//! shots = 15
//!
//! [sweep]
//! a = [0, "10^(-1)", "10^(-1/2)", 1]
//! g = ["pi/2"]
//! seeds = [0, 1, 2]
//! ```
//!
//! The stretch `a` and angle `g` (under `hyper.quantum` and `sweep`) accept
//! either numbers or arithmetic strings understood by [`crate::expr`].

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qnn::{Hyperparams, InferencePolicy, QuantumConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub val_images: PathBuf,
    pub val_labels: PathBuf,
    /// Seed of the training and validation subsets, kept apart from the run
    /// seed so every sweep cell sees the same images.
    pub subset_seed: u64,
}

impl Default for DataPaths {
    fn default() -> Self {
        let dir = Path::new("data/mnist");
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            val_images: dir.join("t10k-images-idx3-ubyte"),
            val_labels: dir.join("t10k-labels-idx1-ubyte"),
            subset_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub a: Vec<f64>,
    pub g: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepAxes {
    /// `a ∈ {0} ∪ {10^(k/6) : k = -9..=3}`, `g ∈ {kπ/38 : k = 1..=19}`.
    fn default() -> Self {
        let mut a = vec![0.0];
        a.extend((-9..=3).map(|k| 10f64.powf(k as f64 / 6.0)));
        let g = (1..=19).map(|k| if k == 19 { FRAC_PI_2 } else { k as f64 * PI / 38.0 }).collect();
        Self { a, g, seeds: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub hyper: Hyperparams,
    pub inference: InferencePolicy,
    pub sweep: SweepAxes,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            hyper: Hyperparams::default(),
            inference: InferencePolicy::default(),
            sweep: SweepAxes::default(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

const EXPRESSION_KEYS: [&str; 4] = ["hyper.quantum.a", "hyper.quantum.g", "sweep.a", "sweep.g"];
const ANGLE_KEYS: [&str; 2] = ["hyper.quantum.g", "sweep.g"];

impl RunConfig {
    /// Parse TOML text and apply `key=value` overrides (dotted keys).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text.parse().context("config is not valid TOML")?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        for key in EXPRESSION_KEYS {
            if let Some(value) = lookup_mut(&mut table, key) {
                evaluate_expressions(value).with_context(|| format!("in `{key}`"))?;
            }
        }
        for key in ANGLE_KEYS {
            if let Some(value) = lookup_mut(&mut table, key) {
                snap_right_angle(value);
            }
        }
        let config: RunConfig = Value::Table(table).try_into().context("config does not match the expected schema")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.inference.validate()?;
        if self.sweep.a.is_empty() || self.sweep.g.is_empty() || self.sweep.seeds.is_empty() {
            bail!(qnn::Error::ConfigInvalid("sweep axes must be non-empty".into()));
        }
        for &a in &self.sweep.a {
            for &g in &self.sweep.g {
                QuantumConfig::new(a, g)?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn lookup_mut<'a>(table: &'a mut Table, dotted: &str) -> Option<&'a mut Value> {
    let mut parts = dotted.split('.');
    let mut current = table.get_mut(parts.next()?)?;
    for part in parts {
        current = current.as_table_mut()?.get_mut(part)?;
    }
    Some(current)
}

fn evaluate_expressions(value: &mut Value) -> Result<()> {
    match value {
        Value::String(s) => *value = Value::Float(expr::eval(s)?),
        Value::Integer(i) => *value = Value::Float(*i as f64),
        Value::Array(items) => items.iter_mut().try_for_each(evaluate_expressions)?,
        _ => {}
    }
    Ok(())
}

/// Angles within 1e-12 of π/2 (e.g. `19pi/38`) become exactly π/2, the
/// projective-measurement point.
fn snap_right_angle(value: &mut Value) {
    match value {
        Value::Float(g) if (*g - FRAC_PI_2).abs() < 1e-12 => *g = FRAC_PI_2,
        Value::Array(items) => items.iter_mut().for_each(snap_right_angle),
        _ => {}
    }
}

/// `a.b.c=value`; the value is read as a TOML literal when it parses as one
/// and as a bare string otherwise.
fn apply_override(table: &mut Table, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| anyhow!("override `{item}` is not key=value"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| anyhow!("empty override key"))?;
    let mut current = table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}
