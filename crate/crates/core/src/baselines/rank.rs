//! Rank aggregation: every characteristic orders the population by the ratio
//! of ideal to initial share of the subject's group, and the orders are
//! merged into the ranking minimizing total footrule displacement.

use serde::{Deserialize, Serialize};

use super::{check_sample_size, fractions_of, min_cost_assignment, BaselineMethod, FinalAllocation};
use crate::error::{Error, Result};
use crate::population::StratificationIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    /// Items in aggregate order, best first.
    pub ranking: Vec<usize>,
    /// Σ over inputs and items of |input position − aggregate position|.
    pub cost: i64,
}

pub(crate) fn subject_ids(index: &StratificationIndex) -> Vec<&str> {
    let mut ids = vec![""; index.total()];
    for s in index.strata() {
        for (&pos, id) in s.members.iter().zip(&s.member_ids) {
            ids[pos] = id;
        }
    }
    ids
}

/// `W[c][pos] = I[c][g] / Init[c][g]` for the group `g` of the subject at
/// `pos`, plus warnings for ideal mass placed on empty groups.
pub fn rank_weights(index: &StratificationIndex, marginals: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let schemas = index.schemas();
    if marginals.len() != schemas.len() {
        return Err(Error::DimensionMismatch { expected: schemas.len(), actual: marginals.len() });
    }
    let mut warnings = Vec::new();
    let mut per_group = Vec::with_capacity(marginals.len());
    for (c, m) in marginals.iter().enumerate() {
        if m.len() != schemas[c].group_count() {
            return Err(Error::DimensionMismatch { expected: schemas[c].group_count(), actual: m.len() });
        }
        let init = index.group_initial_by_index(c);
        let w: Vec<f64> = m
            .iter()
            .zip(&init)
            .enumerate()
            .map(|(g, (&ideal, &share))| {
                if share > 0.0 {
                    ideal / share
                } else {
                    if ideal > 0.0 {
                        warnings.push(format!(
                            "group `{}` of `{}` has ideal share {ideal} but no subjects",
                            schemas[c].groups[g].name, schemas[c].name
                        ));
                    }
                    0.0
                }
            })
            .collect();
        per_group.push(w);
    }
    let weights = (0..marginals.len())
        .map(|c| (0..index.total()).map(|pos| per_group[c][index.strata()[index.stratum_of(pos)].index[c]]).collect())
        .collect();
    Ok((weights, warnings))
}

/// Position of every subject in each characteristic's order: larger weight
/// first, equal weights by ascending id.
pub fn weight_orders(weights: &[Vec<f64>], ids: &[&str]) -> Vec<Vec<usize>> {
    weights
        .iter()
        .map(|w| {
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then_with(|| ids[a].cmp(ids[b])));
            let mut position = vec![0usize; w.len()];
            for (p, &s) in order.iter().enumerate() {
                position[s] = p;
            }
            position
        })
        .collect()
}

/// Footrule distance of `ranking` (items best first) from the inputs.
pub fn footrule_cost(orders: &[Vec<usize>], ranking: &[usize]) -> i64 {
    ranking.iter().enumerate().map(|(p, &s)| orders.iter().map(|o| (o[s] as i64 - p as i64).abs()).sum::<i64>()).sum()
}

/// Cost matrices up to this many cells are built up front.
const DENSE_COST_LIMIT: usize = 1 << 24;

/// Footrule-optimal aggregation of `orders` (each mapping item → position)
/// as a minimum-cost matching of items to positions.
pub fn footrule_aggregate(orders: &[Vec<usize>]) -> Result<Aggregation> {
    let Some(first) = orders.first() else {
        return Err(Error::InvalidInput("no orders to aggregate".into()));
    };
    let n = first.len();
    if orders.iter().any(|o| o.len() != n) {
        return Err(Error::InvalidInput("orders differ in length".into()));
    }
    let c = orders.len();
    let flat: Vec<i64> = (0..n).flat_map(|s| orders.iter().map(move |o| o[s] as i64)).collect();
    let cell = |s: usize, p: usize| -> i64 {
        let p = p as i64;
        flat[s * c..(s + 1) * c].iter().map(|&o| (o - p).abs()).sum()
    };
    let a = if n.saturating_mul(n) <= DENSE_COST_LIMIT {
        let dense: Vec<i64> = (0..n * n).map(|k| cell(k / n, k % n)).collect();
        min_cost_assignment(n, n, |s, p| dense[s * n + p])
    } else {
        min_cost_assignment(n, n, cell)
    };
    let mut ranking = vec![0usize; n];
    for (s, &p) in a.row_to_col.iter().enumerate() {
        ranking[p] = s;
    }
    Ok(Aggregation { ranking, cost: a.cost })
}

/// Selects the top `n` of the aggregate ranking built from fixed marginals.
pub fn rank_aggregation_select(
    index: &StratificationIndex,
    marginals: &[Vec<f64>],
    n: usize,
) -> Result<FinalAllocation> {
    check_sample_size(index, n)?;
    let (weights, warnings) = rank_weights(index, marginals)?;
    let ids = subject_ids(index);
    let orders = weight_orders(&weights, &ids);
    let agg = footrule_aggregate(&orders)?;
    let selected: Vec<usize> = agg.ranking[..n].to_vec();
    let mut out = FinalAllocation::new(BaselineMethod::RankAggregation, fractions_of(index, &selected));
    out.selected = Some(selected);
    out.warnings = warnings;
    Ok(out)
}
