//! Comparison methods: proportional and Neyman allocation over strata,
//! rank aggregation of per-characteristic weight orders, weighted random
//! sampling, and the wrapper that runs any of them over range lattices.

mod assignment;
mod range;
mod rank;
mod wrs;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::cosine_distance;
use crate::population::{Population, StratificationIndex};
use crate::rng;

pub use assignment::{min_cost_assignment, Assignment};
pub use range::{range_wrapper, run_baseline, BaselineContext, RangeOutcome};
pub use rank::{footrule_aggregate, footrule_cost, rank_aggregation_select, rank_weights, weight_orders, Aggregation};
pub use wrs::{subject_weights, wrs_select, SubjectWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    #[serde(rename = "psrs")]
    Psrs,
    #[serde(rename = "neyman")]
    Neyman,
    #[serde(rename = "ra")]
    RankAggregation,
    #[serde(rename = "wrs")]
    Wrs,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] =
        [BaselineMethod::Psrs, BaselineMethod::Neyman, BaselineMethod::RankAggregation, BaselineMethod::Wrs];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMethod::Psrs => "psrs",
            BaselineMethod::Neyman => "neyman",
            BaselineMethod::RankAggregation => "ra",
            BaselineMethod::Wrs => "wrs",
        }
    }

    /// Whether the method selects concrete subjects rather than fractions.
    pub fn selects(&self) -> bool {
        matches!(self, BaselineMethod::RankAggregation | BaselineMethod::Wrs)
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psrs" | "proportional" => Ok(BaselineMethod::Psrs),
            "neyman" | "osrs" => Ok(BaselineMethod::Neyman),
            "ra" | "rank" | "rank-aggregation" => Ok(BaselineMethod::RankAggregation),
            "wrs" => Ok(BaselineMethod::Wrs),
            other => Err(Error::InvalidInput(format!("unknown baseline method `{other}`"))),
        }
    }
}

/// Per-stratum fractions produced by one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAllocation {
    pub method: BaselineMethod,
    pub fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_marginals: Option<Vec<Vec<f64>>>,
    /// Cosine distance to the joint ideal, once one is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    /// Population positions of the selected subjects, for selecting methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FinalAllocation {
    fn new(method: BaselineMethod, fractions: Vec<f64>) -> Self {
        FinalAllocation {
            method,
            fractions,
            chosen_marginals: None,
            distance: None,
            selected: None,
            warnings: Vec::new(),
        }
    }

    /// Sets [`FinalAllocation::distance`] against `joint_ideal`.
    pub fn with_distance(mut self, joint_ideal: &[f64]) -> Result<Self> {
        self.distance = Some(cosine_distance(&self.fractions, joint_ideal)?);
        Ok(self)
    }
}

fn check_sample_size(index: &StratificationIndex, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("sample size must be positive".into()));
    }
    if n > index.total() {
        return Err(Error::Infeasible(format!("sample size {n} exceeds the population size {}", index.total())));
    }
    Ok(())
}

/// Fractions from the per-stratum counts of a concrete selection.
fn fractions_of(index: &StratificationIndex, selected: &[usize]) -> Vec<f64> {
    let mut counts = vec![0usize; index.dimension()];
    for &pos in selected {
        counts[index.stratum_of(pos)] += 1;
    }
    let n = selected.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Proportional allocation: `F_h = N_h / N`.
pub fn psrs_allocation(index: &StratificationIndex, n: usize) -> Result<FinalAllocation> {
    check_sample_size(index, n)?;
    let total = index.total() as f64;
    let fractions = index.init_counts().into_iter().map(|c| c as f64 / total).collect();
    Ok(FinalAllocation::new(BaselineMethod::Psrs, fractions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeymanConfig {
    pub target_column: String,
    /// Defaults to `min(N, 10·D)`.
    #[serde(default)]
    pub pilot_size: Option<usize>,
    #[serde(default)]
    pub pilot_seed: u64,
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
}

fn default_sigma_floor() -> f64 {
    1e-6
}

impl NeymanConfig {
    pub fn new(target_column: &str) -> Self {
        NeymanConfig {
            target_column: target_column.to_string(),
            pilot_size: None,
            pilot_seed: 0,
            sigma_floor: default_sigma_floor(),
        }
    }

    pub fn with_pilot(mut self, size: usize, seed: u64) -> Self {
        self.pilot_size = Some(size);
        self.pilot_seed = seed;
        self
    }
}

/// Per-stratum sample standard deviations of the target column over a
/// seeded simple random pilot. Strata with fewer than two pilot members or a
/// zero spread get `sigma_floor`.
pub fn pilot_sigmas(index: &StratificationIndex, pop: &Population, cfg: &NeymanConfig) -> Result<Vec<f64>> {
    if cfg.sigma_floor.is_nan() || cfg.sigma_floor <= 0.0 {
        return Err(Error::InvalidInput("sigma_floor must be positive".into()));
    }
    if !pop.has_column(&cfg.target_column) {
        return Err(Error::MissingColumn { column: cfg.target_column.clone() });
    }
    let total = index.total();
    if pop.len() != total {
        return Err(Error::DimensionMismatch { expected: total, actual: pop.len() });
    }
    let size = cfg.pilot_size.unwrap_or((10 * index.dimension()).min(total));
    if size < 2 || size > total {
        return Err(Error::InvalidInput(format!("pilot size {size} must lie in [2, {total}]")));
    }
    let mut r = rng::seeded(cfg.pilot_seed);
    let mut pilot = sample(&mut r, total, size).into_vec();
    pilot.sort_unstable();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); index.dimension()];
    for pos in pilot {
        values[index.stratum_of(pos)].push(pop.numeric(pos, &cfg.target_column)?);
    }
    Ok(values
        .iter()
        .map(|v| {
            if v.len() < 2 {
                return cfg.sigma_floor;
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
            let sd = var.sqrt();
            if sd > cfg.sigma_floor {
                sd
            } else {
                cfg.sigma_floor
            }
        })
        .collect())
}

/// Neyman allocation with a seeded pilot estimate of each stratum's spread.
pub fn neyman_allocation(
    index: &StratificationIndex,
    n: usize,
    cfg: &NeymanConfig,
    pop: &Population,
) -> Result<FinalAllocation> {
    check_sample_size(index, n)?;
    let sigmas = pilot_sigmas(index, pop, cfg)?;
    neyman_from_sigmas(index, n, &sigmas)
}

/// `F_h ∝ N_h·σ_h`, with strata whose share would exceed `N_h / n` held at
/// that cap and the rest re-spread over the others.
pub fn neyman_from_sigmas(index: &StratificationIndex, n: usize, sigmas: &[f64]) -> Result<FinalAllocation> {
    check_sample_size(index, n)?;
    let d = index.dimension();
    if sigmas.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: sigmas.len() });
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidInput(format!("stratum deviation {s} must be positive")));
    }
    let counts = index.init_counts();
    // relative to the largest σ so that equal σ gives exactly N_h / N
    let smax = sigmas.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> = counts.iter().zip(sigmas).map(|(&c, s)| c as f64 * (s / smax)).collect();
    let caps: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let mut pinned = vec![false; d];
    let mut fractions = vec![0.0; d];
    loop {
        let free_mass = 1.0 - (0..d).filter(|&h| pinned[h]).map(|h| caps[h]).sum::<f64>();
        let free_weight: f64 = (0..d).filter(|&h| !pinned[h]).map(|h| weights[h]).sum();
        let mut changed = false;
        for h in 0..d {
            fractions[h] = if pinned[h] {
                caps[h]
            } else if free_mass == 1.0 {
                weights[h] / free_weight
            } else {
                free_mass * weights[h] / free_weight
            };
        }
        for h in 0..d {
            if !pinned[h] && fractions[h] > caps[h] + 1e-12 {
                pinned[h] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(FinalAllocation::new(BaselineMethod::Neyman, fractions))
}
