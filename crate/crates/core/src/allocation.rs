//! Integer per-stratum counts from fractions, and the concrete cohort drawn
//! from them.

use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::StratificationIndex;
use crate::rng;

/// Remainders are compared after rounding to this grid so that float noise
/// does not decide ties.
const REMAINDER_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortPlan {
    pub counts: Vec<usize>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CohortPlan {
    /// Draws the cohort and records it with its seed.
    pub fn drawn(mut self, index: &StratificationIndex, seed: u64) -> Result<Self> {
        self.selected_ids = Some(draw_cohort(&self, index, seed)?);
        self.seed = Some(seed);
        Ok(self)
    }

    /// `counts / n`.
    pub fn fractions(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

/// Largest-remainder apportionment of `n·F_h` with hard caps.
///
/// Each stratum first gets `min(⌊n·F_h⌋, cap_h)`. Remaining seats go one per
/// pass to the uncapped strata in order of descending `n·F_h − count_h`,
/// ties to the lower stratum index, until all `n` are placed.
pub fn apportion(fractions: &[f64], caps: &[usize], n: usize) -> Result<Vec<usize>> {
    if fractions.len() != caps.len() {
        return Err(Error::DimensionMismatch { expected: caps.len(), actual: fractions.len() });
    }
    if let Some(f) = fractions.iter().find(|f| !f.is_finite() || **f < -1e-12) {
        return Err(Error::InvalidDistribution(format!("fraction {f} is negative or not finite")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("fractions sum to {sum}, not 1")));
    }
    let capacity: usize = caps.iter().sum();
    if capacity < n {
        return Err(Error::Infeasible(format!(
            "strata hold {capacity} subjects in total, fewer than the sample size {n}"
        )));
    }
    let quotas: Vec<f64> = fractions.iter().map(|f| f.max(0.0) * n as f64).collect();
    let mut counts: Vec<usize> =
        quotas.iter().zip(caps).map(|(q, &c)| ((q + REMAINDER_QUANTUM).floor() as usize).min(c)).collect();
    let mut remaining = n.saturating_sub(counts.iter().sum());
    while remaining > 0 {
        let mut order: Vec<usize> = (0..counts.len()).filter(|&h| counts[h] < caps[h]).collect();
        let key = |h: usize| ((quotas[h] - counts[h] as f64) / REMAINDER_QUANTUM).round() as i64;
        order.sort_by(|&a, &b| key(b).cmp(&key(a)).then(a.cmp(&b)));
        for h in order {
            if remaining == 0 {
                break;
            }
            counts[h] += 1;
            remaining -= 1;
        }
    }
    Ok(counts)
}

/// Apportions `fractions` over the strata of `index`, capped by stratum size.
pub fn fractions_to_counts(fractions: &[f64], index: &StratificationIndex, n: usize) -> Result<CohortPlan> {
    if n == 0 {
        return Err(Error::Validation("sample size must be positive".into()));
    }
    let counts = apportion(fractions, &index.init_counts(), n)?;
    Ok(CohortPlan { counts, n, selected_ids: None, seed: None })
}

/// Population positions of a uniform draw without replacement of
/// `counts_h` members from every stratum, grouped by stratum and ascending
/// within each.
pub fn draw_positions(plan: &CohortPlan, index: &StratificationIndex, seed: u64) -> Result<Vec<usize>> {
    if plan.counts.len() != index.dimension() {
        return Err(Error::DimensionMismatch { expected: index.dimension(), actual: plan.counts.len() });
    }
    let mut out = Vec::with_capacity(plan.counts.iter().sum());
    for (h, (stratum, &k)) in index.strata().iter().zip(&plan.counts).enumerate() {
        if k > stratum.init_count {
            return Err(Error::Infeasible(format!(
                "stratum `{}` has {} members but {k} were requested",
                index.label(h),
                stratum.init_count
            )));
        }
        if k == 0 {
            continue;
        }
        let mut r = rng::stream(seed, h as u64);
        let mut picked: Vec<usize> =
            sample(&mut r, stratum.init_count, k).into_iter().map(|i| stratum.members[i]).collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    Ok(out)
}

/// Ids of the subjects drawn for `plan`; deterministic per seed.
pub fn draw_cohort(plan: &CohortPlan, index: &StratificationIndex, seed: u64) -> Result<Vec<String>> {
    let ids = subject_ids(index);
    Ok(draw_positions(plan, index, seed)?.into_iter().map(|p| ids[p].clone()).collect())
}

fn subject_ids(index: &StratificationIndex) -> Vec<String> {
    let mut ids = vec![String::new(); index.total()];
    for s in index.strata() {
        for (&pos, id) in s.members.iter().zip(&s.member_ids) {
            ids[pos] = id.clone();
        }
    }
    ids
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub id: String,
    pub stratum: usize,
    /// Group names of the stratum, `|`-separated.
    pub groups: String,
    pub method: String,
}

/// One row per selected population position.
pub fn selection_rows(index: &StratificationIndex, positions: &[usize], method: &str) -> Vec<SelectionRow> {
    let ids = subject_ids(index);
    positions
        .iter()
        .map(|&p| {
            let h = index.stratum_of(p);
            SelectionRow { id: ids[p].clone(), stratum: h, groups: index.label(h), method: method.to_string() }
        })
        .collect()
}

pub fn write_selection_csv<W: Write>(writer: W, rows: &[SelectionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<selection>", e))?;
    Ok(())
}

/// `stratum,groups,init,count` per stratum.
pub fn write_plan_csv<W: Write>(writer: W, plan: &CohortPlan, index: &StratificationIndex) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stratum", "groups", "init", "count"])?;
    for (h, (s, c)) in index.strata().iter().zip(&plan.counts).enumerate() {
        w.write_record([h.to_string(), index.label(h), s.init_count.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<plan>", e))?;
    Ok(())
}
