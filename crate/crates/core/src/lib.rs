//! Representative cohort selection from biased populations.
//!
//! A population is partitioned into strata (the cross product of every
//! characteristic's groups). Per-characteristic target shares define a joint
//! ideal distribution over strata, and the optimizer finds per-stratum
//! sampling fractions closest to it in cosine distance while respecting how
//! many subjects each stratum actually holds. Baseline samplers (proportional
//! and Neyman stratified sampling, rank aggregation, weighted random sampling)
//! are provided for comparison.

#![allow(clippy::needless_range_loop)]

pub mod allocation;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod ideal;
pub mod metrics;
pub mod optimizer;
pub mod population;
pub mod rng;

pub use error::{Error, Result};
