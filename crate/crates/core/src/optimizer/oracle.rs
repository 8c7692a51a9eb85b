//! Exhaustive lattice search used to cross-check the solver on small
//! instances.

use serde::{Deserialize, Serialize};

use super::{SolveProblem, SolveTarget};
use crate::error::{Error, Result};
use crate::ideal::{count_range_grid, joint_from_marginals, lattice_points, Relation};
use crate::metrics::{cosine_distance, norm};

pub const ORACLE_MAX_DIMENSION: usize = 4;
pub const ORACLE_MIN_STEP: f64 = 0.005;

/// Cap on (fraction points) × (marginal points) evaluated by the oracle.
const MAX_EVALUATIONS: u128 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub objective: f64,
    pub fractions: Vec<f64>,
    pub marginals: Option<Vec<Vec<f64>>>,
    pub evaluations: u64,
}

/// Minimum of the objective over the `step` lattice of capped fractions and,
/// for marginal targets, over the product of the marginal lattices that
/// satisfy the extra constraints. Ties keep the first point in enumeration
/// order. Degenerate intervals stay at their pinned value.
pub fn brute_force_oracle(problem: &SolveProblem, step: f64) -> Result<OracleResult> {
    let d = problem.dimension();
    if d > ORACLE_MAX_DIMENSION {
        return Err(Error::Unsupported(format!("oracle handles at most {ORACLE_MAX_DIMENSION} strata, got {d}")));
    }
    if step < ORACLE_MIN_STEP {
        return Err(Error::InvalidInput(format!("oracle step {step} is below {ORACLE_MIN_STEP}")));
    }
    let f_bounds: Vec<(f64, f64)> = problem.caps.iter().map(|&c| (0.0, c.clamp(0.0, 1.0))).collect();
    let f_count = count_range_grid(&f_bounds, step)?;

    let candidates: Vec<Option<Vec<Vec<f64>>>> = match &problem.target {
        SolveTarget::Fixed(ji) => {
            if ji.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: ji.len() });
            }
            vec![None]
        }
        SolveTarget::Marginals(m) => {
            let mut per_char: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m.bounds.len());
            let mut m_count: u128 = 1;
            for b in &m.bounds {
                let pts = if b.iter().all(|&(lo, hi)| lo == hi) {
                    vec![b.iter().map(|x| x.0).collect()]
                } else {
                    m_count = m_count.saturating_mul(count_range_grid(b, step)?);
                    if m_count.saturating_mul(f_count) > MAX_EVALUATIONS {
                        return Err(Error::GridTooLarge {
                            count: m_count.saturating_mul(f_count),
                            limit: MAX_EVALUATIONS,
                        });
                    }
                    lattice_points(b, step)?
                };
                per_char.push(pts);
            }
            cartesian(&per_char).into_iter().filter(|marg| satisfies(problem, marg)).map(Some).collect()
        }
    };

    let f_points = lattice_points(&f_bounds, step)?;
    if f_points.is_empty() {
        return Err(Error::Infeasible(format!("no capped fraction vector on the {step} lattice")));
    }
    if candidates.is_empty() {
        return Err(Error::Infeasible(format!("no marginal vector on the {step} lattice meets the constraints")));
    }
    let f_unit: Vec<Vec<f64>> = f_points
        .iter()
        .map(|f| {
            let n = norm(f);
            f.iter().map(|x| x / n).collect()
        })
        .collect();

    let mut best: Option<(f64, usize, usize)> = None;
    let mut evaluations = 0u64;
    for (mi, marg) in candidates.iter().enumerate() {
        let ji = match (marg, &problem.target) {
            (Some(m), SolveTarget::Marginals(vars)) => joint_from_marginals(&vars.layout, m),
            (_, SolveTarget::Fixed(ji)) => ji.clone(),
            _ => unreachable!(),
        };
        let nj = norm(&ji);
        if nj == 0.0 {
            continue;
        }
        for (fi, fu) in f_unit.iter().enumerate() {
            evaluations += 1;
            let cos: f64 = fu.iter().zip(&ji).map(|(a, b)| a * b).sum::<f64>() / nj;
            let value = 1.0 - cos.clamp(-1.0, 1.0);
            if best.is_none_or(|(v, _, _)| value < v) {
                best = Some((value, mi, fi));
            }
        }
    }
    let (_, mi, fi) = best.ok_or(Error::ZeroNorm)?;
    let fractions = f_points[fi].clone();
    let marginals = candidates[mi].clone();
    // report the objective with the library metric so it compares exactly
    let ji = match (&marginals, &problem.target) {
        (Some(m), SolveTarget::Marginals(vars)) => joint_from_marginals(&vars.layout, m),
        (_, SolveTarget::Fixed(ji)) => ji.clone(),
        _ => unreachable!(),
    };
    let objective = cosine_distance(&fractions, &ji)?;
    Ok(OracleResult { objective, fractions, marginals, evaluations })
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

fn satisfies(problem: &SolveProblem, marg: &[Vec<f64>]) -> bool {
    problem.extra_constraints.iter().all(|rc| {
        let lhs: f64 = rc.terms.iter().map(|&(c, g, a)| a * marg[c][g]).sum();
        match rc.relation {
            Relation::Eq => (lhs - rc.rhs).abs() <= 1e-9,
            Relation::Le => lhs <= rc.rhs + 1e-9,
            Relation::Ge => lhs >= rc.rhs - 1e-9,
        }
    })
}
