//! Constrained minimization of the cosine distance between final stratum
//! fractions and the joint ideal.
//!
//! Three variations share one solver. In the fixed variation the joint ideal
//! is a constant vector; in the range variation every non-degenerate marginal
//! entry is a decision variable bounded by its interval, with one simplex
//! equality per characteristic; the generalized variation adds arbitrary
//! linear rows over the marginal variables.

mod model;
mod objective;
mod oracle;
pub mod qp;
mod sqp;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideal::{joint_from_marginals, IdealSpec, ResolvedConstraint, Variation};
use crate::metrics::cosine_distance;
use crate::population::{StrataLayout, StratificationIndex};
use crate::rng;

use model::{project_box_simplex, Model};

pub use objective::{objective_gradient, objective_gradient_marginals, ObjectiveGradient};
pub use oracle::{brute_force_oracle, OracleResult, ORACLE_MAX_DIMENSION, ORACLE_MIN_STEP};

/// Default count of random starts; the deterministic starts come on top.
pub const DEFAULT_MULTISTART: usize = 16;

/// Above this many decision variables the dense SQP is skipped and starts go
/// straight to the projected-gradient loop.
pub const SQP_MAX_VARS: usize = 400;

/// Objectives closer than this are treated as equal when merging starts.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub constraint_tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { constraint_tol: 1e-8, kkt_tol: 1e-6, max_iters: 500 }
    }
}

/// Marginal variables with interval bounds, in stratification order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVariables {
    pub layout: StrataLayout,
    pub bounds: Vec<Vec<(f64, f64)>>,
    /// Characteristic and group names, used in diagnostics only.
    pub names: Vec<(String, Vec<String>)>,
}

impl MarginalVariables {
    pub fn new(layout: StrataLayout, bounds: Vec<Vec<(f64, f64)>>) -> Self {
        let names = bounds
            .iter()
            .enumerate()
            .map(|(c, b)| (format!("c{c}"), (0..b.len()).map(|g| format!("g{g}")).collect()))
            .collect();
        MarginalVariables { layout, bounds, names }
    }

    pub fn with_names(mut self, names: Vec<(String, Vec<String>)>) -> Self {
        self.names = names;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveTarget {
    Fixed(Vec<f64>),
    Marginals(MarginalVariables),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveProblem {
    pub target: SolveTarget,
    /// Per-stratum upper bounds `init_h / n`.
    pub caps: Vec<f64>,
    pub sample_size: usize,
    pub extra_constraints: Vec<ResolvedConstraint>,
    pub multistart: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl SolveProblem {
    pub fn fixed(joint_ideal: Vec<f64>, caps: Vec<f64>, sample_size: usize) -> Self {
        SolveProblem {
            target: SolveTarget::Fixed(joint_ideal),
            caps,
            sample_size,
            extra_constraints: Vec::new(),
            multistart: DEFAULT_MULTISTART,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn range(marginals: MarginalVariables, caps: Vec<f64>, sample_size: usize) -> Self {
        SolveProblem { target: SolveTarget::Marginals(marginals), ..SolveProblem::fixed(Vec::new(), caps, sample_size) }
    }

    pub fn with_constraints(mut self, constraints: Vec<ResolvedConstraint>) -> Self {
        self.extra_constraints = constraints;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_multistart(mut self, starts: usize) -> Self {
        self.multistart = starts;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    /// Builds the problem for `spec` over a stratified population.
    pub fn from_spec(spec: &IdealSpec, index: &StratificationIndex) -> Result<Self> {
        if spec.sample_size == 0 {
            return Err(Error::Validation("sample size must be positive".into()));
        }
        let caps = index.caps(spec.sample_size);
        match spec.variation() {
            Variation::Fixed => {
                let ji = crate::ideal::joint_ideal(spec, index)?;
                Ok(SolveProblem::fixed(ji.values, caps, spec.sample_size))
            }
            Variation::Range | Variation::Generalized => {
                let bounds = spec
                    .ordered_marginals(index)?
                    .into_iter()
                    .map(|m| {
                        if m.is_range() {
                            Ok(m.bounds())
                        } else {
                            Ok(m.normalized_fixed()?.into_iter().map(|p| (p, p)).collect())
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let names = index
                    .schemas()
                    .iter()
                    .map(|s| (s.name.clone(), s.group_names().into_iter().map(String::from).collect()))
                    .collect();
                let vars = MarginalVariables::new(index.layout().clone(), bounds).with_names(names);
                Ok(SolveProblem::range(vars, caps, spec.sample_size)
                    .with_constraints(spec.resolved_constraints(index)?))
            }
        }
    }

    pub fn variation(&self) -> Variation {
        match &self.target {
            SolveTarget::Fixed(_) => Variation::Fixed,
            SolveTarget::Marginals(_) if self.extra_constraints.is_empty() => Variation::Range,
            SolveTarget::Marginals(_) => Variation::Generalized,
        }
    }

    pub fn dimension(&self) -> usize {
        self.caps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub variation: Variation,
    pub fractions: Vec<f64>,
    /// Per-characteristic marginals at the optimum; absent in fixed mode.
    pub chosen_marginals: Option<Vec<Vec<f64>>>,
    pub joint_ideal: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub starts_used: usize,
    pub iterations: usize,
}

/// Solves any variation; dispatches on the problem's target and constraints.
pub fn solve(problem: &SolveProblem) -> Result<SolveResult> {
    let model = build_model(problem)?;
    let starts = initial_points(problem, &model)?;
    let tol = problem.tolerances;
    let outcomes: Vec<sqp::Outcome> = starts
        .into_par_iter()
        .map(|x0| {
            if model.n_vars() > SQP_MAX_VARS {
                sqp::augmented_lagrangian(&model, x0, &tol)
            } else {
                sqp::solve_from(&model, x0, &tol)
            }
        })
        .collect::<Result<_>>()?;
    let fallbacks = outcomes.iter().filter(|o| o.used_fallback).count();
    if fallbacks > 0 {
        log::debug!("{fallbacks} of {} starts finished in the projected-gradient loop", outcomes.len());
    }
    let starts_used = outcomes.len();
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let best = pick_best(&model, outcomes);
    finish(problem, &model, best, starts_used, iterations)
}

pub fn solve_fixed(problem: &SolveProblem) -> Result<SolveResult> {
    expect_variation(problem, Variation::Fixed)?;
    solve(problem)
}

pub fn solve_range(problem: &SolveProblem) -> Result<SolveResult> {
    expect_variation(problem, Variation::Range)?;
    solve(problem)
}

pub fn solve_generalized(problem: &SolveProblem) -> Result<SolveResult> {
    if !matches!(problem.target, SolveTarget::Marginals(_)) {
        return Err(Error::InvalidInput("generalized solve needs marginal variables".into()));
    }
    solve(problem)
}

fn expect_variation(problem: &SolveProblem, want: Variation) -> Result<()> {
    let got = problem.variation();
    if got != want {
        return Err(Error::InvalidInput(format!("expected a {want} problem, got {got}")));
    }
    Ok(())
}

fn check_caps(caps: &[f64], constraint_tol: f64) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::InvalidInput("no strata".into()));
    }
    if let Some(c) = caps.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(Error::InvalidInput(format!("stratum cap {c} is negative or not finite")));
    }
    let total: f64 = caps.iter().sum();
    if total < 1.0 - constraint_tol {
        return Err(Error::Infeasible(format!(
            "stratum capacities sum to {total}, below the required 1; the population is smaller than the sample"
        )));
    }
    Ok(())
}

fn build_model(problem: &SolveProblem) -> Result<Model> {
    check_caps(&problem.caps, problem.tolerances.constraint_tol)?;
    let d = problem.dimension();
    match &problem.target {
        SolveTarget::Fixed(ji) => {
            if !problem.extra_constraints.is_empty() {
                return Err(Error::InvalidInput(
                    "linear constraints need marginal variables, not a fixed joint ideal".into(),
                ));
            }
            if ji.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: ji.len() });
            }
            if ji.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidDistribution("joint ideal has a negative or non-finite entry".into()));
            }
            if ji.iter().all(|v| *v == 0.0) {
                return Err(Error::ZeroNorm);
            }
            Ok(Model::fixed(ji.clone(), &problem.caps))
        }
        SolveTarget::Marginals(m) => {
            if m.layout.dimension() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: m.layout.dimension() });
            }
            if m.bounds.len() != m.layout.characteristics()
                || m.bounds.iter().zip(m.layout.group_counts()).any(|(b, g)| b.len() != *g)
                || m.names.len() != m.bounds.len()
            {
                return Err(Error::InvalidInput("marginal bounds do not match the strata layout".into()));
            }
            for (c, b) in m.bounds.iter().enumerate() {
                for &(lo, hi) in b {
                    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                        return Err(Error::InvalidDistribution(format!(
                            "`{}`: interval [{lo}, {hi}] is not within [0, 1] with min <= max",
                            m.names[c].0
                        )));
                    }
                }
                let (slo, shi): (f64, f64) = (b.iter().map(|x| x.0).sum(), b.iter().map(|x| x.1).sum());
                if slo > 1.0 + 1e-9 || shi < 1.0 - 1e-9 {
                    return Err(Error::Infeasible(format!(
                        "marginal ranges of `{}` cannot sum to 1 (Σmin = {slo}, Σmax = {shi})",
                        m.names[c].0
                    )));
                }
            }
            for rc in &problem.extra_constraints {
                if rc.terms.iter().any(|&(c, g, _)| c >= m.bounds.len() || g >= m.bounds[c].len()) {
                    return Err(Error::InvalidInput(format!("constraint `{}` references an unknown group", rc.label)));
                }
            }
            Model::with_marginals(m.layout.clone(), &m.bounds, &problem.caps, &problem.extra_constraints, &m.names)
        }
    }
}

/// Deterministic starts first, then `multistart` random ones drawn from
/// independent streams so that more starts only ever add points.
fn initial_points(problem: &SolveProblem, model: &Model) -> Result<Vec<Vec<f64>>> {
    let d = model.d;
    let n = model.n_vars();
    let caps = &problem.caps;
    let cap_total: f64 = caps.iter().sum();
    let psrs: Vec<f64> = caps.iter().map(|c| c / cap_total).collect();

    let mut points = Vec::with_capacity(problem.multistart + 2);

    // interval midpoints, then F from the projected joint ideal
    let mut mid = vec![0.0; n];
    for i in d..n {
        mid[i] = 0.5 * (model.lo[i] + model.hi[i]);
    }
    model.project_marginals(&mut mid)?;
    let ji = model.joint(&mid);
    if ji.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroNorm);
    }
    mid[..d].copy_from_slice(&ji);
    model.project_fractions(&mut mid)?;
    points.push(mid.clone());

    let mut p = mid;
    p[..d].copy_from_slice(&psrs);
    model.project_fractions(&mut p)?;
    points.push(p);

    for k in 0..problem.multistart {
        let mut r = rng::stream(problem.seed, k as u64);
        let mut x = vec![0.0; n];
        for i in d..n {
            x[i] = r.random_range(model.lo[i]..=model.hi[i]);
        }
        model.project_marginals(&mut x)?;
        let ji = model.joint(&x);
        let ji_total: f64 = ji.iter().sum();
        let weights: Vec<f64> = (0..d).map(|_| -r.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let w_total: f64 = weights.iter().sum();
        let mix: f64 = r.random();
        for h in 0..d {
            let target = if ji_total > 0.0 { ji[h] / ji_total } else { 0.0 };
            x[h] = mix * target + (1.0 - mix) * weights[h] / w_total;
        }
        model.project_fractions(&mut x)?;
        points.push(x);
    }
    Ok(points)
}

fn pick_best(model: &Model, outcomes: Vec<sqp::Outcome>) -> sqp::Outcome {
    let mut best: Option<sqp::Outcome> = None;
    for o in outcomes {
        best = Some(match best {
            None => o,
            Some(b) => {
                if better(model, &o, &b) {
                    o
                } else {
                    b
                }
            }
        });
    }
    best.expect("at least one start")
}

fn better(model: &Model, a: &sqp::Outcome, b: &sqp::Outcome) -> bool {
    if a.value < b.value - TIE_TOL {
        return true;
    }
    if a.value > b.value + TIE_TOL {
        return false;
    }
    let key = |o: &sqp::Outcome| {
        let mut k: Vec<f64> = model.marginals(&o.x).into_iter().flatten().collect();
        k.extend_from_slice(&o.x[..model.d]);
        k
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn finish(
    problem: &SolveProblem,
    model: &Model,
    best: sqp::Outcome,
    starts_used: usize,
    iterations: usize,
) -> Result<SolveResult> {
    let mut x = best.x;
    model.clamp_bounds(&mut x);
    // restore simplex sums lost to clamping without leaving the boxes
    if let Some(p) = project_box_simplex(&x[..model.d], &model.lo[..model.d], &model.hi[..model.d], 1.0) {
        let drift: f64 = p.iter().zip(&x[..model.d]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift <= 1e-9 {
            x[..model.d].copy_from_slice(&p);
        }
    }
    let fractions = x[..model.d].to_vec();
    let (chosen_marginals, joint_ideal) = match &problem.target {
        SolveTarget::Fixed(ji) => (None, ji.clone()),
        SolveTarget::Marginals(m) => {
            let marg = model.marginals(&x);
            let ji = joint_from_marginals(&m.layout, &marg);
            (Some(marg), ji)
        }
    };
    let objective = cosine_distance(&fractions, &joint_ideal)?;
    let violation = model.max_violation(&x);
    let grad = model.eval(&x)?.grad;
    let kkt = model.stationarity(&x, &grad).unwrap_or(best.stationarity);
    let tol = &problem.tolerances;
    let converged = violation <= tol.constraint_tol && kkt <= tol.kkt_tol;
    if !converged {
        log::warn!("solver did not converge: stationarity {kkt:.3e}, constraint violation {violation:.3e}");
    }
    Ok(SolveResult {
        variation: problem.variation(),
        fractions,
        chosen_marginals,
        joint_ideal,
        objective,
        converged,
        max_constraint_violation: violation,
        kkt_residual: kkt,
        starts_used,
        iterations,
    })
}
