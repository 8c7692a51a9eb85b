//! Running a baseline against range-based ideals: every combination of
//! lattice points of the ranged marginals is tried and the allocation closest
//! to its own joint ideal wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    neyman_allocation, psrs_allocation, rank_aggregation_select, wrs_select, BaselineMethod, FinalAllocation,
    NeymanConfig,
};
use crate::error::{Error, Result};
use crate::ideal::{enumerate_range_grid, joint_from_marginals, IdealSpec, Variation, MAX_GRID_POINTS};
use crate::population::{Population, StratificationIndex};

/// Inputs some methods need beyond the stratification.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineContext<'a> {
    pub population: Option<&'a Population>,
    pub neyman: Option<&'a NeymanConfig>,
    /// Seed for WRS draws.
    pub seed: u64,
}

/// One run of `method` against fixed marginals; the distance is filled in.
pub fn run_baseline(
    method: BaselineMethod,
    index: &StratificationIndex,
    marginals: &[Vec<f64>],
    n: usize,
    ctx: &BaselineContext<'_>,
) -> Result<FinalAllocation> {
    let ji = joint_from_marginals(index.layout(), marginals);
    let out = match method {
        BaselineMethod::Psrs => psrs_allocation(index, n)?,
        BaselineMethod::Neyman => {
            let (Some(pop), Some(cfg)) = (ctx.population, ctx.neyman) else {
                return Err(Error::InvalidInput("neyman allocation needs a population and a target column".into()));
            };
            neyman_allocation(index, n, cfg, pop)?
        }
        BaselineMethod::RankAggregation => rank_aggregation_select(index, marginals, n)?,
        BaselineMethod::Wrs => wrs_select(index, &ji, n, ctx.seed)?,
    };
    out.with_distance(&ji)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeOutcome {
    pub best: FinalAllocation,
    /// Number of method invocations, one per lattice combination.
    pub evaluations: usize,
}

/// Runs `method` for every combination of lattice points of the spec's
/// marginals (fixed ones held constant) and keeps the smallest distance.
/// Ties go to the lexicographically smallest marginals.
pub fn range_wrapper(
    method: BaselineMethod,
    index: &StratificationIndex,
    spec: &IdealSpec,
    step: f64,
    ctx: &BaselineContext<'_>,
) -> Result<RangeOutcome> {
    if spec.variation() == Variation::Generalized {
        return Err(Error::Unsupported("generalized variation unsupported by baselines".into()));
    }
    let mut grids = Vec::new();
    let mut count: u128 = 1;
    for m in spec.ordered_marginals(index)? {
        let grid = enumerate_range_grid(m, step)?;
        if let Some(w) = grid.warning {
            return Err(Error::Infeasible(w));
        }
        count = count.saturating_mul(grid.points.len() as u128);
        if count > MAX_GRID_POINTS {
            return Err(Error::GridTooLarge { count, limit: MAX_GRID_POINTS });
        }
        grids.push(grid.points);
    }
    let combos = cartesian(&grids);
    let runs: Vec<FinalAllocation> = combos
        .into_par_iter()
        .map(|marg| {
            let mut out = run_baseline(method, index, &marg, spec.sample_size, ctx)?;
            out.chosen_marginals = Some(marg);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let evaluations = runs.len();
    let best = runs
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or_else(|| Error::Infeasible("no lattice combination to evaluate".into()))?;
    Ok(RangeOutcome { best, evaluations })
}

fn better(a: &FinalAllocation, b: &FinalAllocation) -> bool {
    let (da, db) = (a.distance.unwrap_or(f64::INFINITY), b.distance.unwrap_or(f64::INFINITY));
    match da.total_cmp(&db) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            let flat =
                |x: &FinalAllocation| x.chosen_marginals.iter().flatten().flatten().copied().collect::<Vec<f64>>();
            let (fa, fb) = (flat(a), flat(b));
            fa.iter()
                .zip(&fb)
                .find_map(|(x, y)| match x.total_cmp(y) {
                    std::cmp::Ordering::Equal => None,
                    o => Some(o == std::cmp::Ordering::Less),
                })
                .unwrap_or(false)
        }
    }
}

fn cartesian(sets: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for p in set {
                let mut v = prefix.clone();
                v.push(p.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}
