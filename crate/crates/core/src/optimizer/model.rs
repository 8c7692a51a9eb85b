//! Flattened decision-variable layout shared by the SQP solver, the fallback
//! and the brute-force oracle.
//!
//! Variables are `[F_0 .. F_{D-1}, I vars ...]`. Marginal entries with a
//! degenerate interval are pinned as constants; only the remaining entries
//! become variables.

use crate::error::{Error, Result};
use crate::ideal::{joint_from_marginals, Relation, ResolvedConstraint};
use crate::population::StrataLayout;

use super::objective::{marginal_partials, value_and_partials};
use super::qp::{self, QpError, Row, RowKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Slot {
    Const(f64),
    Var(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub d: usize,
    pub layout: Option<StrataLayout>,
    pub joint_const: Option<Vec<f64>>,
    pub slots: Vec<Vec<Slot>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Equality and general rows, excluding variable bounds.
    pub rows: Vec<Row>,
    pub labels: Vec<String>,
    /// Rows touching only marginal variables, i.e. everything but `ΣF = 1`.
    pub marginal_rows: Vec<usize>,
    /// Any row beyond the per-characteristic simplex equalities.
    pub has_general: bool,
    /// `(characteristic, group)` of each marginal variable.
    pub var_groups: Vec<(usize, usize)>,
    pub var_labels: Vec<String>,
}

pub(crate) struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Model {
    pub fn fixed(joint: Vec<f64>, caps: &[f64]) -> Self {
        let d = joint.len();
        Model {
            d,
            layout: None,
            joint_const: Some(joint),
            slots: Vec::new(),
            lo: vec![0.0; d],
            hi: caps.to_vec(),
            rows: vec![sum_row(0..d, 1.0)],
            labels: vec!["sum of F = 1".into()],
            marginal_rows: Vec::new(),
            has_general: false,
            var_groups: Vec::new(),
            var_labels: Vec::new(),
        }
    }

    pub fn with_marginals(
        layout: StrataLayout,
        bounds: &[Vec<(f64, f64)>],
        caps: &[f64],
        constraints: &[ResolvedConstraint],
        names: &[(String, Vec<String>)],
    ) -> Result<Self> {
        let d = layout.dimension();
        let mut lo = vec![0.0; d];
        let mut hi = caps.to_vec();
        let mut slots = Vec::with_capacity(bounds.len());
        let mut var_groups = Vec::new();
        let mut var_labels = Vec::new();
        let mut rows = vec![sum_row(0..d, 1.0)];
        let mut labels = vec!["sum of F = 1".to_string()];
        let mut marginal_rows = Vec::new();

        for (c, b) in bounds.iter().enumerate() {
            let mut char_slots = Vec::with_capacity(b.len());
            let mut constant = 0.0;
            let mut vars = Vec::new();
            for (g, &(a, z)) in b.iter().enumerate() {
                if a == z {
                    char_slots.push(Slot::Const(a));
                    constant += a;
                } else {
                    let v = lo.len();
                    lo.push(a);
                    hi.push(z);
                    var_groups.push((c, g));
                    var_labels.push(format!("I[{}={}]", names[c].0, names[c].1[g]));
                    vars.push(v);
                    char_slots.push(Slot::Var(v));
                }
            }
            if vars.is_empty() {
                if (constant - 1.0).abs() > 1e-9 {
                    return Err(Error::Infeasible(format!(
                        "marginal `{}` is pinned to a total of {constant}",
                        names[c].0
                    )));
                }
            } else {
                marginal_rows.push(rows.len());
                rows.push(sum_row(vars.iter().copied(), 1.0 - constant));
                labels.push(format!("sum of I[{}] = 1", names[c].0));
            }
            slots.push(char_slots);
        }

        let mut has_general = false;
        for rc in constraints {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            let mut rhs = rc.rhs;
            for &(c, g, a) in &rc.terms {
                match slots[c][g] {
                    Slot::Const(v) => rhs -= a * v,
                    Slot::Var(i) => match coeffs.iter_mut().find(|(j, _)| *j == i) {
                        Some((_, acc)) => *acc += a,
                        None => coeffs.push((i, a)),
                    },
                }
            }
            coeffs.retain(|&(_, a)| a != 0.0);
            if coeffs.is_empty() {
                let ok = match rc.relation {
                    Relation::Eq => rhs.abs() <= 1e-9,
                    Relation::Le => rhs >= -1e-9,
                    Relation::Ge => rhs <= 1e-9,
                };
                if !ok {
                    return Err(Error::Infeasible(format!(
                        "constraint `{}` cannot hold with the fixed marginals",
                        rc.label
                    )));
                }
                continue;
            }
            let row = match rc.relation {
                Relation::Eq => Row { coeffs, kind: RowKind::Eq, rhs },
                Relation::Ge => Row { coeffs, kind: RowKind::Ge, rhs },
                Relation::Le => {
                    Row { coeffs: coeffs.into_iter().map(|(i, a)| (i, -a)).collect(), kind: RowKind::Ge, rhs: -rhs }
                }
            };
            marginal_rows.push(rows.len());
            rows.push(row);
            labels.push(rc.label.clone());
            has_general = true;
        }

        Ok(Model {
            d,
            layout: Some(layout),
            joint_const: None,
            slots,
            lo,
            hi,
            rows,
            labels,
            marginal_rows,
            has_general,
            var_groups,
            var_labels,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.lo.len()
    }

    pub fn n_marginal_vars(&self) -> usize {
        self.n_vars() - self.d
    }

    pub fn marginals(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.slots
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|s| match *s {
                        Slot::Const(v) => v,
                        Slot::Var(i) => x[i],
                    })
                    .collect()
            })
            .collect()
    }

    pub fn joint(&self, x: &[f64]) -> Vec<f64> {
        match (&self.joint_const, &self.layout) {
            (Some(j), _) => j.clone(),
            (None, Some(layout)) => joint_from_marginals(layout, &self.marginals(x)),
            (None, None) => unreachable!("model without a joint ideal"),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Eval> {
        let ji = self.joint(x);
        let (value, gf, gj) = value_and_partials(&x[..self.d], &ji)?;
        let mut grad = gf;
        grad.resize(self.n_vars(), 0.0);
        if let Some(layout) = &self.layout {
            let gm = marginal_partials(layout, &self.marginals(x), &gj);
            for (k, &(c, g)) in self.var_groups.iter().enumerate() {
                grad[self.d + k] = gm[c][g];
            }
        }
        Ok(Eval { value, grad })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let ji = self.joint(x);
        Ok(value_and_partials(&x[..self.d], &ji)?.0)
    }

    /// Bound rows for the step `d` taken from `x`, plus shifted general rows.
    pub fn step_rows(&self, x: &[f64]) -> Vec<Row> {
        let mut out: Vec<Row> =
            self.rows.iter().map(|r| Row { coeffs: r.coeffs.clone(), kind: r.kind, rhs: r.rhs - r.dot(x) }).collect();
        for i in 0..self.n_vars() {
            push_bounds(&mut out, i, self.lo[i] - x[i], self.hi[i] - x[i]);
        }
        out
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x));
        let bounds = (0..self.n_vars()).map(|i| (self.lo[i] - x[i]).max(x[i] - self.hi[i]).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn general_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).sum()
    }

    pub fn clamp_bounds(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Euclidean projection of the marginal block of `x` onto its feasible
    /// polytope (simplex rows, bounds and general rows).
    pub fn project_marginals(&self, x: &mut [f64]) -> Result<()> {
        let m = self.n_marginal_vars();
        if m == 0 {
            return Ok(());
        }
        let d = self.d;
        if !self.has_general {
            for &r in &self.marginal_rows {
                let row = &self.rows[r];
                let idx: Vec<usize> = row.coeffs.iter().map(|&(i, _)| i).collect();
                let v: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                let lo: Vec<f64> = idx.iter().map(|&i| self.lo[i]).collect();
                let hi: Vec<f64> = idx.iter().map(|&i| self.hi[i]).collect();
                let p = project_box_simplex(&v, &lo, &hi, row.rhs).ok_or_else(|| {
                    Error::Infeasible(format!("`{}` cannot be met within the ranges", self.labels[r]))
                })?;
                for (&i, pi) in idx.iter().zip(p) {
                    x[i] = pi;
                }
            }
            return Ok(());
        }
        let mut rows: Vec<Row> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for &r in &self.marginal_rows {
            let row = &self.rows[r];
            rows.push(Row {
                coeffs: row.coeffs.iter().map(|&(i, a)| (i - d, a)).collect(),
                kind: row.kind,
                rhs: row.rhs,
            });
            labels.push(self.labels[r].clone());
        }
        for k in 0..m {
            let i = d + k;
            let before = rows.len();
            push_bounds(&mut rows, k, self.lo[i], self.hi[i]);
            for _ in before..rows.len() {
                labels.push(format!("{} in [{}, {}]", self.var_labels[k], self.lo[i], self.hi[i]));
            }
        }
        let mut ident = vec![0.0; m * m];
        for k in 0..m {
            ident[k * m + k] = 1.0;
        }
        let c: Vec<f64> = x[d..].iter().map(|v| -v).collect();
        match qp::solve(&ident, &c, &rows, m) {
            Ok(sol) => {
                x[d..].copy_from_slice(&sol.x);
                Ok(())
            }
            Err(QpError::Infeasible { rows: conflict }) => {
                let mut names: Vec<String> = conflict.iter().map(|&r| labels[r].clone()).collect();
                names.dedup();
                Err(Error::Infeasible(format!("constraint system has no solution; conflicting: {}", names.join("; "))))
            }
            Err(e) => Err(Error::Infeasible(format!("projection failed: {e:?}"))),
        }
    }

    /// Projection of the fraction block onto the capped simplex.
    pub fn project_fractions(&self, x: &mut [f64]) -> Result<()> {
        let d = self.d;
        let p = project_box_simplex(&x[..d], &self.lo[..d], &self.hi[..d], 1.0)
            .ok_or_else(|| Error::Infeasible("stratum capacities sum to less than the sample".into()))?;
        x[..d].copy_from_slice(&p);
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) -> Result<()> {
        self.project_fractions(x)?;
        self.project_marginals(x)
    }

    /// `‖P(x − ∇f) − x‖∞`, zero exactly at first-order stationary points.
    pub fn stationarity(&self, x: &[f64], grad: &[f64]) -> Result<f64> {
        let mut y: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
        self.project(&mut y)?;
        Ok(y.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

fn sum_row(idx: impl Iterator<Item = usize>, rhs: f64) -> Row {
    Row { coeffs: idx.map(|i| (i, 1.0)).collect(), kind: RowKind::Eq, rhs }
}

fn push_bounds(rows: &mut Vec<Row>, i: usize, lo: f64, hi: f64) {
    if lo == hi {
        rows.push(Row { coeffs: vec![(i, 1.0)], kind: RowKind::Eq, rhs: lo });
    } else {
        rows.push(Row { coeffs: vec![(i, 1.0)], kind: RowKind::Ge, rhs: lo });
        rows.push(Row { coeffs: vec![(i, -1.0)], kind: RowKind::Ge, rhs: -hi });
    }
}

/// Euclidean projection of `v` onto `{x : lo ≤ x ≤ hi, Σx = total}`, found by
/// bisection on the shift `τ` in `x = clamp(v − τ, lo, hi)`. `None` when the
/// set is empty.
pub(crate) fn project_box_simplex(v: &[f64], lo: &[f64], hi: &[f64], total: f64) -> Option<Vec<f64>> {
    let (slo, shi): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
    let tol = 1e-12 * (1.0 + total.abs());
    if slo > total + tol || shi < total - tol {
        return None;
    }
    let mass = |tau: f64| -> f64 { v.iter().zip(lo.iter().zip(hi)).map(|(x, (a, b))| (x - tau).clamp(*a, *b)).sum() };
    let spread =
        v.iter().zip(lo.iter().zip(hi)).map(|(x, (a, b))| (x - a).abs().max((x - b).abs())).fold(0.0, f64::max) + 1.0;
    let (mut tlo, mut thi) = (-spread, spread);
    for _ in 0..200 {
        let mid = 0.5 * (tlo + thi);
        if mid == tlo || mid == thi {
            break;
        }
        if mass(mid) > total {
            tlo = mid;
        } else {
            thi = mid;
        }
    }
    let tau = 0.5 * (tlo + thi);
    let mut x: Vec<f64> = v.iter().zip(lo.iter().zip(hi)).map(|(x, (a, b))| (x - tau).clamp(*a, *b)).collect();
    // push the rounding residual into coordinates with room
    let mut residual = total - x.iter().sum::<f64>();
    for i in 0..x.len() {
        if residual == 0.0 {
            break;
        }
        let room = if residual > 0.0 { hi[i] - x[i] } else { lo[i] - x[i] };
        let delta = if residual > 0.0 { residual.min(room) } else { residual.max(room) };
        x[i] += delta;
        residual -= delta;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_simplex_projection() {
        let p = project_box_simplex(&[0.9, 0.1], &[0.0, 0.0], &[0.5, 1.0], 1.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        let p = project_box_simplex(&[0.2, 0.3, 0.5], &[0.0; 3], &[1.0; 3], 1.0).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        assert!(project_box_simplex(&[0.5, 0.5], &[0.0; 2], &[0.3, 0.3], 1.0).is_none());
    }

    #[test]
    fn general_rows_fold_constants() {
        let layout = StrataLayout::new(vec![2, 2]).unwrap();
        let bounds = vec![vec![(0.0, 1.0), (0.0, 1.0)], vec![(0.5, 0.5), (0.5, 0.5)]];
        let names = vec![
            ("gender".to_string(), vec!["m".into(), "f".into()]),
            ("age".to_string(), vec!["y".into(), "o".into()]),
        ];
        let c = ResolvedConstraint {
            terms: vec![(0, 1, 1.0), (0, 0, -2.0), (1, 0, 1.0)],
            relation: Relation::Eq,
            rhs: 0.5,
            label: "x".into(),
        };
        let m = Model::with_marginals(layout, &bounds, &[1.0; 4], &[c], &names).unwrap();
        assert_eq!(m.n_marginal_vars(), 2);
        let general = m.rows.last().unwrap();
        assert_eq!(general.rhs, 0.0);
        assert_eq!(general.coeffs, vec![(5, 1.0), (4, -2.0)]);
        let mut x = vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5];
        m.project_marginals(&mut x).unwrap();
        assert!((x[4] - 1.0 / 3.0).abs() < 1e-12 && (x[5] - 2.0 / 3.0).abs() < 1e-12);
    }
}
