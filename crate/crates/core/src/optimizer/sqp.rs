//! Local solvers run from one feasible start.
//!
//! The primary path is sequential quadratic programming: each iteration
//! solves a QP built from a damped-BFGS Hessian model and the linear
//! constraints shifted to the current point, then backtracks on an ℓ1 merit
//! function. All constraints are linear, so accepted iterates stay feasible
//! up to rounding. When the QP subproblem breaks down the start is handed to a
//! projected-gradient augmented-Lagrangian loop instead.

use super::model::Model;
use super::qp::{self, QpError, RowKind};
use super::Tolerances;
use crate::error::Result;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity: f64,
    pub used_fallback: bool,
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = scale;
    }
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(b: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&b[i * n..(i + 1) * n], v)).collect()
}

/// Powell-damped BFGS update; keeps `b` positive definite.
fn bfgs_update(b: &mut [f64], s: &[f64], y: &[f64], n: usize) {
    let bs = mat_vec(b, s, n);
    let sbs = dot(s, &bs);
    if sbs <= 1e-300 {
        return;
    }
    let sy = dot(s, y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r: Vec<f64> = y.iter().zip(&bs).map(|(yi, bi)| theta * yi + (1.0 - theta) * bi).collect();
    let sr = dot(s, &r);
    if sr <= 1e-300 {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
        }
    }
}

/// SQP from a feasible `x0`, falling back to [`augmented_lagrangian`] when the
/// QP subproblem fails or the iteration stalls short of stationarity.
pub(crate) fn solve_from(model: &Model, x0: Vec<f64>, tol: &Tolerances) -> Result<Outcome> {
    let outcome = sqp(model, x0, tol)?;
    if outcome.converged {
        return Ok(outcome);
    }
    let fallback = augmented_lagrangian(model, outcome.x.clone(), tol)?;
    let better = fallback.converged && !outcome.converged
        || (fallback.converged == outcome.converged && fallback.value < outcome.value);
    Ok(if better { fallback } else { outcome })
}

fn sqp(model: &Model, mut x: Vec<f64>, tol: &Tolerances) -> Result<Outcome> {
    let n = model.n_vars();
    let mut ev = model.eval(&x)?;
    let mut b = identity(n, 1.0);
    let mut fresh_hessian = true;
    let mut mu = 0.0f64;
    let mut chi = model.stationarity(&x, &ev.grad)?;
    let mut iterations = 0;
    let mut converged = chi <= tol.kkt_tol;
    // a few extra iterations past the tolerance tighten the active set
    let mut polish = 3;

    while iterations < tol.max_iters {
        if converged {
            if polish == 0 || chi <= 1e-13 {
                break;
            }
            polish -= 1;
        }
        iterations += 1;
        let rows = model.step_rows(&x);
        let sol = match qp::solve(&b, &ev.grad, &rows, n) {
            Ok(sol) => sol,
            Err(QpError::NotPositiveDefinite) if !fresh_hessian => {
                b = identity(n, 1.0);
                fresh_hessian = true;
                continue;
            }
            Err(_) => break,
        };
        let d = sol.x;
        let dnorm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dnorm <= 1e-15 {
            break;
        }
        let lam_max = sol.active.iter().fold(0.0f64, |m, &(_, u)| m.max(u.abs()));
        mu = mu.max(lam_max).max(1.0);

        let viol0 = model.general_violation(&x);
        let phi0 = ev.value + mu * viol0;
        let slope = dot(&ev.grad, &d) - mu * viol0;
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= 1e-12 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, s)| a + alpha * s).collect();
            model.clamp_bounds(&mut xt);
            let ft = model.value(&xt)?;
            let phit = ft + mu * model.general_violation(&xt);
            if phit <= phi0 + 1e-4 * alpha * slope.min(0.0) {
                accepted = Some(xt);
                break;
            }
            alpha *= 0.5;
        }
        let Some(xt) = accepted else {
            if fresh_hessian {
                break;
            }
            b = identity(n, 1.0);
            fresh_hessian = true;
            continue;
        };
        let evt = model.eval(&xt)?;
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, c)| a - c).collect();
        let y: Vec<f64> = evt.grad.iter().zip(&ev.grad).map(|(a, c)| a - c).collect();
        if fresh_hessian {
            // Shanno-Phua scaling of the initial model
            let (yy, sy) = (dot(&y, &y), dot(&s, &y));
            if sy > 1e-300 && yy > 0.0 {
                b = identity(n, yy / sy);
            }
            fresh_hessian = false;
        }
        bfgs_update(&mut b, &s, &y, n);
        x = xt;
        ev = evt;
        chi = model.stationarity(&x, &ev.grad)?;
        converged = chi <= tol.kkt_tol;
    }

    let feasible = model.max_violation(&x) <= tol.constraint_tol;
    Ok(Outcome {
        value: ev.value,
        x,
        converged: converged && feasible,
        iterations,
        stationarity: chi,
        used_fallback: false,
    })
}

/// Projected gradient on the bound/simplex structure with the remaining
/// general rows moved into an augmented Lagrangian.
pub(crate) fn augmented_lagrangian(model: &Model, mut x: Vec<f64>, tol: &Tolerances) -> Result<Outcome> {
    let general: Vec<usize> = (0..model.rows.len()).filter(|r| !is_structural(model, *r)).collect();
    let mut lambda = vec![0.0; general.len()];
    let mut rho = 10.0;
    let mut iterations = 0;
    let inner_budget = (tol.max_iters * 20).max(200);

    // projection onto the structural set ignores general rows
    let project = |x: &mut Vec<f64>| -> Result<()> {
        model.project_fractions(x)?;
        project_marginal_structure(model, x);
        Ok(())
    };
    project(&mut x)?;

    let lagrangian = |x: &[f64], lambda: &[f64], rho: f64| -> Result<(f64, Vec<f64>)> {
        let ev = model.eval(x)?;
        let mut value = ev.value;
        let mut grad = ev.grad;
        for (k, &r) in general.iter().enumerate() {
            let row = &model.rows[r];
            let c = row.slack(x);
            let active = row.kind == RowKind::Eq || c - lambda[k] / rho < 0.0;
            let w = if active {
                value += -lambda[k] * c + 0.5 * rho * c * c;
                -lambda[k] + rho * c
            } else {
                value -= lambda[k] * lambda[k] / (2.0 * rho);
                0.0
            };
            for &(i, a) in &row.coeffs {
                grad[i] += w * a;
            }
        }
        Ok((value, grad))
    };

    let mut chi = f64::INFINITY;
    for _outer in 0..60 {
        let mut step = 1.0;
        let (mut lv, mut lg) = lagrangian(&x, &lambda, rho)?;
        for _ in 0..inner_budget {
            iterations += 1;
            let mut accepted = false;
            while step >= 1e-14 {
                let mut xt: Vec<f64> = x.iter().zip(&lg).map(|(a, g)| a - step * g).collect();
                project(&mut xt)?;
                let diff: f64 = xt.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                let (tv, tg) = lagrangian(&xt, &lambda, rho)?;
                if tv <= lv - 1e-4 / step * diff {
                    let moved = diff.sqrt();
                    x = xt;
                    lv = tv;
                    lg = tg;
                    accepted = moved > 1e-16;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            let mut probe: Vec<f64> = x.iter().zip(&lg).map(|(a, g)| a - g).collect();
            project(&mut probe)?;
            let pg = probe.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if !accepted || pg <= 0.1 * tol.kkt_tol {
                break;
            }
        }
        let worst = general.iter().map(|&r| model.rows[r].violation(&x)).fold(0.0, f64::max);
        for (k, &r) in general.iter().enumerate() {
            let row = &model.rows[r];
            let c = row.slack(&x);
            lambda[k] = match row.kind {
                RowKind::Eq => lambda[k] - rho * c,
                RowKind::Ge => (lambda[k] - rho * c).max(0.0),
            };
        }
        let ev = model.eval(&x)?;
        chi = model.stationarity(&x, &ev.grad).unwrap_or(f64::INFINITY);
        if worst <= tol.constraint_tol && (chi <= tol.kkt_tol || general.is_empty()) {
            break;
        }
        if worst > tol.constraint_tol {
            rho = (rho * 10.0).min(1e12);
        }
    }
    let value = model.value(&x)?;
    let ev = model.eval(&x)?;
    if chi.is_infinite() {
        chi = model.stationarity(&x, &ev.grad).unwrap_or(f64::INFINITY);
    }
    Ok(Outcome {
        converged: chi <= tol.kkt_tol && model.max_violation(&x) <= tol.constraint_tol,
        value,
        x,
        iterations,
        stationarity: chi,
        used_fallback: true,
    })
}

fn is_structural(model: &Model, r: usize) -> bool {
    r == 0 || (model.marginal_rows.contains(&r) && model.labels[r].starts_with("sum of I["))
}

fn project_marginal_structure(model: &Model, x: &mut [f64]) {
    for &r in &model.marginal_rows {
        if !is_structural(model, r) {
            continue;
        }
        let row = &model.rows[r];
        let idx: Vec<usize> = row.coeffs.iter().map(|&(i, _)| i).collect();
        let v: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let lo: Vec<f64> = idx.iter().map(|&i| model.lo[i]).collect();
        let hi: Vec<f64> = idx.iter().map(|&i| model.hi[i]).collect();
        if let Some(p) = super::model::project_box_simplex(&v, &lo, &hi, row.rhs) {
            for (&i, pi) in idx.iter().zip(p) {
                x[i] = pi;
            }
        }
    }
}
