//! The JSON study configuration read by every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::NeymanConfig;
use crate::error::{Error, Result};
use crate::ideal::{IdealSpec, LinearConstraint, MarginalSpec, DEFAULT_GRID_STEP};
use crate::optimizer::{Tolerances, DEFAULT_MULTISTART};
use crate::population::{CharacteristicSchema, SyntheticSpec};

use super::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_id_column")]
    pub id_column: String,
}

fn default_id_column() -> String {
    "id".into()
}

/// A group's ideal share in percent: a number, or `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PercentValue {
    Fixed(f64),
    Range([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// characteristic → group → percent.
    pub marginals: BTreeMap<String, BTreeMap<String, PercentValue>>,
    /// Linear relations over ideal fractions (not percents).
    #[serde(default)]
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_constraint_tol")]
    pub constraint_tol: f64,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_multistart() -> usize {
    DEFAULT_MULTISTART
}
fn default_constraint_tol() -> f64 {
    Tolerances::default().constraint_tol
}
fn default_kkt_tol() -> f64 {
    Tolerances::default().kkt_tol
}
fn default_max_iters() -> usize {
    Tolerances::default().max_iters
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            multistart: default_multistart(),
            constraint_tol: default_constraint_tol(),
            kkt_tol: default_kkt_tol(),
            max_iters: default_max_iters(),
        }
    }
}

impl SolverConfig {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances { constraint_tol: self.constraint_tol, kkt_tol: self.kkt_tol, max_iters: self.max_iters }
    }
}

/// Neyman inputs; the pilot seed defaults to the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeymanSection {
    pub target_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub size: usize,
    #[serde(flatten)]
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub characteristics: Vec<CharacteristicSchema>,
    /// One study ideal; shorthand for a single-entry `ideals`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<IdealConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ideals: Vec<IdealConfig>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step")]
    pub grid_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neyman: Option<NeymanSection>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// The document as written, echoed into reports.
    #[serde(skip)]
    pub raw: Option<serde_json::Value>,
}

fn default_sample_size() -> usize {
    100
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_step() -> f64 {
    DEFAULT_GRID_STEP
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Reads the config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        cfg.raw = serde_json::from_str(&text).ok();
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.dataset.path.is_relative() {
            self.dataset.path = base.join(&self.dataset.path);
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    /// Named ideals in config order; unnamed ones are called `ideal`,
    /// `ideal-2`, ...
    pub fn named_ideals(&self) -> Vec<(String, &IdealConfig)> {
        self.ideal
            .iter()
            .chain(&self.ideals)
            .enumerate()
            .map(|(i, c)| {
                let name = c.name.clone().unwrap_or_else(|| {
                    if i == 0 {
                        "ideal".to_string()
                    } else {
                        format!("ideal-{}", i + 1)
                    }
                });
                (name, c)
            })
            .collect()
    }

    /// The ideal called `name`, or the first one.
    pub fn select_ideal(&self, name: Option<&str>) -> Result<(String, &IdealConfig)> {
        let all = self.named_ideals();
        match name {
            None => all.into_iter().next().ok_or_else(|| Error::Validation("config has no `ideal`".into())),
            Some(n) => all
                .into_iter()
                .find(|(k, _)| k == n)
                .ok_or_else(|| Error::Validation(format!("no ideal named `{n}` in the config"))),
        }
    }

    pub fn neyman_config(&self) -> Option<NeymanConfig> {
        self.neyman.as_ref().map(|n| {
            let mut cfg = NeymanConfig::new(&n.target_column);
            cfg.pilot_size = n.pilot_size;
            cfg.pilot_seed = n.pilot_seed.unwrap_or(self.seed);
            if let Some(f) = n.sigma_floor {
                cfg.sigma_floor = f;
            }
            cfg
        })
    }

    pub fn validate_basics(&self) -> Result<()> {
        if self.characteristics.is_empty() {
            return Err(Error::Validation("config lists no characteristics".into()));
        }
        for s in &self.characteristics {
            s.validate()?;
        }
        if self.sample_size == 0 {
            return Err(Error::Validation("sample_size must be positive".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::Validation(format!("grid_step {} must lie in (0, 1]", self.grid_step)));
        }
        Ok(())
    }
}

impl IdealConfig {
    /// Converts percents to fractions in schema group order.
    pub fn to_spec(&self, schemas: &[CharacteristicSchema], sample_size: usize) -> Result<IdealSpec> {
        for name in self.marginals.keys() {
            if !schemas.iter().any(|s| &s.name == name) {
                return Err(Error::UnknownCharacteristic(name.clone()));
            }
        }
        let mut marginals = Vec::with_capacity(schemas.len());
        for s in schemas {
            let groups = self
                .marginals
                .get(&s.name)
                .ok_or_else(|| Error::Validation(format!("ideal has no entry for characteristic `{}`", s.name)))?;
            for g in groups.keys() {
                if s.group_index(g).is_none() {
                    return Err(Error::UnknownGroup { characteristic: s.name.clone(), group: g.clone() });
                }
            }
            let values: Vec<PercentValue> = s
                .groups
                .iter()
                .map(|g| {
                    groups.get(&g.name).copied().ok_or_else(|| {
                        Error::Validation(format!("ideal for `{}` has no value for group `{}`", s.name, g.name))
                    })
                })
                .collect::<Result<_>>()?;
            let ranged = values.iter().any(|v| matches!(v, PercentValue::Range(_)));
            marginals.push(if ranged {
                MarginalSpec::range(
                    &s.name,
                    values
                        .iter()
                        .map(|v| match *v {
                            PercentValue::Fixed(p) => (p / 100.0, p / 100.0),
                            PercentValue::Range([a, b]) => (a / 100.0, b / 100.0),
                        })
                        .collect(),
                )
            } else {
                MarginalSpec::fixed(
                    &s.name,
                    values
                        .iter()
                        .map(|v| match *v {
                            PercentValue::Fixed(p) => p / 100.0,
                            PercentValue::Range(_) => unreachable!(),
                        })
                        .collect(),
                )
            });
        }
        Ok(IdealSpec::new(marginals, sample_size).with_constraints(self.constraints.clone()))
    }
}
