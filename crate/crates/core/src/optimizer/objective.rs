//! Cosine-distance objective and its analytic gradient, with respect to the
//! final fractions and, when the joint ideal is built from marginal
//! variables, with respect to each marginal entry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideal::joint_from_marginals;
use crate::metrics::norm;
use crate::population::StrataLayout;

/// Objective value plus partials w.r.t. `F` and w.r.t. the joint ideal vector.
pub(crate) fn value_and_partials(f: &[f64], ji: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if f.len() != ji.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), actual: ji.len() });
    }
    let (nf, nj) = (norm(f), norm(ji));
    if nf == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = f.iter().zip(ji).map(|(a, b)| a * b).sum();
    let denom = nf * nj;
    let cos = dot / denom;
    let gf = f.iter().zip(ji).map(|(&fh, &jh)| -(jh / denom - dot * fh / (nf * nf * denom))).collect();
    let gj = f.iter().zip(ji).map(|(&fh, &jh)| -(fh / denom - dot * jh / (nj * nj * denom))).collect();
    Ok((1.0 - cos, gf, gj))
}

/// Chain rule from joint-ideal partials to marginal partials:
/// `∂JI_h/∂I[c][g]` is the product of the other characteristics' entries
/// when stratum `h` contains group `g` of `c`, and zero otherwise.
pub(crate) fn marginal_partials(layout: &StrataLayout, marginals: &[Vec<f64>], dji: &[f64]) -> Vec<Vec<f64>> {
    let c_count = layout.characteristics();
    let mut out: Vec<Vec<f64>> = marginals.iter().map(|m| vec![0.0; m.len()]).collect();
    let mut prefix = vec![1.0; c_count + 1];
    let mut suffix = vec![1.0; c_count + 1];
    for (h, &gh) in dji.iter().enumerate() {
        if gh == 0.0 {
            continue;
        }
        let t = layout.tuple(h);
        for c in 0..c_count {
            prefix[c + 1] = prefix[c] * marginals[c][t[c]];
        }
        for c in (0..c_count).rev() {
            suffix[c] = suffix[c + 1] * marginals[c][t[c]];
        }
        for c in 0..c_count {
            out[c][t[c]] += gh * prefix[c] * suffix[c + 1];
        }
    }
    out
}

/// Gradient of the cosine distance between `fractions` and the joint ideal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGradient {
    pub fractions: Vec<f64>,
    /// Per characteristic, partials w.r.t. each group's ideal share. Empty
    /// when the joint ideal is a constant.
    pub marginals: Vec<Vec<f64>>,
}

/// Gradient w.r.t. `fractions` with the joint ideal held constant.
pub fn objective_gradient(fractions: &[f64], joint_ideal: &[f64]) -> Result<ObjectiveGradient> {
    let (_, gf, _) = value_and_partials(fractions, joint_ideal)?;
    Ok(ObjectiveGradient { fractions: gf, marginals: Vec::new() })
}

/// Gradient w.r.t. both `fractions` and every marginal entry, the joint ideal
/// being the product of `marginals` over the strata of `layout`.
pub fn objective_gradient_marginals(
    fractions: &[f64],
    layout: &StrataLayout,
    marginals: &[Vec<f64>],
) -> Result<ObjectiveGradient> {
    if marginals.len() != layout.characteristics()
        || marginals.iter().zip(layout.group_counts()).any(|(m, &g)| m.len() != g)
    {
        return Err(Error::InvalidInput("marginals do not match the strata layout".into()));
    }
    let ji = joint_from_marginals(layout, marginals);
    let (_, gf, gj) = value_and_partials(fractions, &ji)?;
    Ok(ObjectiveGradient { fractions: gf, marginals: marginal_partials(layout, marginals, &gj) })
}
