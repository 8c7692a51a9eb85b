//! Weighted random sampling without replacement, one pass of exponential
//! keys: each subject draws `ln(u) / w` and the `n` largest keys win. The
//! first draw is exactly proportional to the weights; later draws follow the
//! successive-sampling law of the scheme.

use std::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_sample_size, fractions_of, BaselineMethod, FinalAllocation};
use crate::error::{Error, Result};
use crate::population::StratificationIndex;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectWeights {
    /// `JW_h = JI_h / JInit_h`; zero for empty strata.
    pub joint_by_stratum: Vec<f64>,
    /// `JW_s`, the joint weight of each subject's stratum, by population position.
    pub joint: Vec<f64>,
    /// `P(s) = JW_s / N`.
    pub probability: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn subject_weights(index: &StratificationIndex, joint_ideal: &[f64]) -> Result<SubjectWeights> {
    let d = index.dimension();
    if joint_ideal.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: joint_ideal.len() });
    }
    let mut warnings = Vec::new();
    let joint_by_stratum: Vec<f64> = index
        .joint_initial()
        .iter()
        .zip(joint_ideal)
        .enumerate()
        .map(|(h, (&init, &ideal))| {
            if init > 0.0 {
                ideal / init
            } else {
                if ideal > 0.0 {
                    warnings.push(format!(
                        "stratum `{}` has ideal share {ideal} but no subjects; that mass is unreachable",
                        index.label(h)
                    ));
                }
                0.0
            }
        })
        .collect();
    let total = index.total() as f64;
    let joint: Vec<f64> = (0..index.total()).map(|pos| joint_by_stratum[index.stratum_of(pos)]).collect();
    let probability = joint.iter().map(|w| w / total).collect();
    Ok(SubjectWeights { joint_by_stratum, joint, probability, warnings })
}

/// Draws `n` distinct subjects with pressure proportional to their joint
/// weight. If fewer than `n` subjects carry positive weight the remainder is
/// filled uniformly from the zero-weight subjects.
pub fn wrs_select(index: &StratificationIndex, joint_ideal: &[f64], n: usize, seed: u64) -> Result<FinalAllocation> {
    check_sample_size(index, n)?;
    let weights = subject_weights(index, joint_ideal)?;
    if weights.joint.iter().all(|w| *w <= 0.0) {
        return Err(Error::AllWeightsZero);
    }
    let mut r = rng::seeded(seed);
    // (tier, key, position); tier 1 holds positive weights
    let mut keys: Vec<(u8, f64, usize)> = weights
        .joint
        .iter()
        .enumerate()
        .map(|(pos, &w)| {
            let u: f64 = 1.0 - r.random::<f64>();
            if w > 0.0 {
                (1, u.ln() / w, pos)
            } else {
                (0, u.ln(), pos)
            }
        })
        .collect();
    keys.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal)).then_with(|| a.2.cmp(&b.2))
    });
    let mut selected: Vec<usize> = keys[..n].iter().map(|k| k.2).collect();
    let mut warnings = weights.warnings;
    let filled = keys[..n].iter().filter(|k| k.0 == 0).count();
    if filled > 0 {
        warnings.push(format!("{filled} subjects drawn uniformly from zero-weight strata"));
    }
    selected.sort_unstable();
    let mut out = FinalAllocation::new(BaselineMethod::Wrs, fractions_of(index, &selected));
    out.selected = Some(selected);
    out.warnings = warnings;
    Ok(out)
}
