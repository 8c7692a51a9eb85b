//! Dense strictly convex quadratic programs solved by the dual active-set
//! method of Goldfarb and Idnani.
//!
//! minimize ½ xᵀGx + cᵀx subject to rows `aᵀx = b` or `aᵀx ≥ b`.
//!
//! The method starts at the unconstrained minimizer and adds violated
//! constraints one at a time, so no feasible starting point is needed and an
//! empty feasible set is detected directly. Active-set factors are kept as
//! `J = L⁻ᵀQ` and an upper-triangular `R` with `JᵀN = [R; 0]`, updated with
//! Givens rotations.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Ge,
}

/// A sparse linear constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

impl Row {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * x[i]).sum()
    }

    /// Signed slack: positive when satisfied with room to spare.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.dot(x) - self.rhs
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let s = self.slack(x);
        match self.kind {
            RowKind::Eq => s.abs(),
            RowKind::Ge => (-s).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    /// Hessian is not numerically positive definite.
    NotPositiveDefinite,
    /// No point satisfies all rows. `rows` lists the constraints that were
    /// in conflict when the failure was detected.
    Infeasible { rows: Vec<usize> },
    /// Iteration limit hit; usually the sign of cycling on degenerate rows.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Active row indices with their multipliers.
    pub active: Vec<(usize, f64)>,
    pub iterations: usize,
}

/// Lower-triangular Cholesky factor of a dense row-major matrix.
pub fn cholesky(g: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !sum.is_finite() || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / r, b / r, r)
    }
}

struct Factors {
    n: usize,
    /// Row-major n×n.
    j: Vec<f64>,
    /// Column-major upper triangle; column k holds entries 0..=k.
    r: Vec<Vec<f64>>,
}

impl Factors {
    fn new(l: &[f64], n: usize) -> Self {
        // J = L⁻ᵀ, upper triangular: solve Lᵀ J = I column by column
        let mut j = vec![0.0; n * n];
        for col in 0..n {
            for row in (0..=col).rev() {
                let mut sum = if row == col { 1.0 } else { 0.0 };
                for k in row + 1..=col {
                    sum -= l[k * n + row] * j[k * n + col];
                }
                j[row * n + col] = sum / l[row * n + row];
            }
        }
        Factors { n, j, r: Vec::new() }
    }

    fn q(&self) -> usize {
        self.r.len()
    }

    fn jt_times(&self, row: &Row) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n];
        for &(i, a) in &row.coeffs {
            let base = i * n;
            for (k, dk) in d.iter_mut().enumerate() {
                *dk += self.j[base + k] * a;
            }
        }
        d
    }

    /// Primal direction `z = J₂ d₂` and dual direction `r = R⁻¹ d₁`.
    fn directions(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let q = self.q();
        let mut z = vec![0.0; n];
        for row in 0..n {
            let base = row * n;
            z[row] = (q..n).map(|k| self.j[base + k] * d[k]).sum();
        }
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut sum = d[i];
            for k in i + 1..q {
                sum -= self.r[k][i] * r[k];
            }
            r[i] = sum / self.r[i][i];
        }
        (z, r)
    }

    fn rotate_j_columns(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        for row in 0..n {
            let (x, y) = (self.j[row * n + a], self.j[row * n + b]);
            self.j[row * n + a] = c * x + s * y;
            self.j[row * n + b] = -s * x + c * y;
        }
    }

    /// Appends a constraint whose transformed normal is `d = Jᵀa`. Returns
    /// false when the normal is dependent on the active set.
    fn add(&mut self, mut d: Vec<f64>) -> bool {
        let n = self.n;
        let q = self.q();
        for k in (q + 1..n).rev() {
            if d[k] == 0.0 {
                continue;
            }
            let (c, s, r) = givens(d[k - 1], d[k]);
            d[k - 1] = r;
            d[k] = 0.0;
            self.rotate_j_columns(k - 1, k, c, s);
        }
        let scale = d[..=q.min(n - 1)].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if q >= n || d[q].abs() <= 1e-13 * scale.max(1.0) {
            return false;
        }
        self.r.push(d[..=q].to_vec());
        true
    }

    fn drop(&mut self, k: usize) {
        self.r.remove(k);
        let q = self.q();
        for col in k..q {
            // column `col` now has a subdiagonal entry at row col + 1
            let (a, b) = (self.r[col][col], self.r[col][col + 1]);
            let (c, s, rr) = givens(a, b);
            self.r[col][col] = rr;
            self.r[col].truncate(col + 1);
            for later in col + 1..q {
                let (x, y) = (self.r[later][col], self.r[later][col + 1]);
                self.r[later][col] = c * x + s * y;
                self.r[later][col + 1] = -s * x + c * y;
            }
            self.rotate_j_columns(col, col + 1, c, s);
        }
    }
}

/// Tolerance below which a row counts as satisfied.
fn feas_tol(row: &Row) -> f64 {
    1e-12 * (1.0 + row.rhs.abs())
}

/// Solves the QP with Hessian `g` (row-major `n×n`, symmetric positive
/// definite) and linear term `c`.
pub fn solve(g: &[f64], c: &[f64], rows: &[Row], n: usize) -> Result<QpSolution, QpError> {
    let l = cholesky(g, n).ok_or(QpError::NotPositiveDefinite)?;
    solve_factored(&l, c, rows, n)
}

/// Like [`solve`] with a precomputed Cholesky factor `l` of the Hessian.
pub fn solve_factored(l: &[f64], c: &[f64], rows: &[Row], n: usize) -> Result<QpSolution, QpError> {
    let mut f = Factors::new(l, n);
    // unconstrained minimizer x = -G⁻¹c = -J Jᵀ c
    let mut x = vec![0.0; n];
    {
        let mut jtc = vec![0.0; n];
        for (k, v) in jtc.iter_mut().enumerate() {
            *v = (0..n).map(|i| f.j[i * n + k] * c[i]).sum();
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = -(0..n).map(|k| f.j[i * n + k] * jtc[k]).sum::<f64>();
        }
    }

    // active[i] = (row index, sign, multiplier); sign flips equalities so the
    // violated side reads as aᵀx ≥ b.
    let mut active: Vec<(usize, f64, f64)> = Vec::new();
    let mut is_active = vec![false; rows.len()];
    let max_iter = 50 * (n + rows.len()) + 100;
    let mut iterations = 0;

    let equalities: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].kind == RowKind::Eq).collect();
    let mut eq_cursor = 0;

    loop {
        // pick the next constraint to add
        let next = if eq_cursor < equalities.len() {
            let p = equalities[eq_cursor];
            eq_cursor += 1;
            Some(p)
        } else {
            let mut worst: Option<(usize, f64)> = None;
            for (i, row) in rows.iter().enumerate() {
                if is_active[i] || row.kind == RowKind::Eq {
                    continue;
                }
                let s = row.slack(&x);
                let scaled = s / (1.0 + row.rhs.abs());
                if s < -feas_tol(row) && worst.is_none_or(|(_, w)| scaled < w) {
                    worst = Some((i, scaled));
                }
            }
            worst.map(|(i, _)| i)
        };
        let Some(p) = next else {
            let active = active.into_iter().map(|(i, sign, u)| (i, sign * u)).collect();
            return Ok(QpSolution { x, active, iterations });
        };

        let row = &rows[p];
        let is_eq = row.kind == RowKind::Eq;
        let sign = if is_eq && row.slack(&x) > 0.0 { -1.0 } else { 1.0 };
        let signed_slack = |x: &[f64]| sign * row.slack(x);
        let mut u_new = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let mut d = f.jt_times(row);
            if sign < 0.0 {
                d.iter_mut().for_each(|v| *v = -*v);
            }
            let (z, r) = f.directions(&d);
            let s_p = signed_slack(&x);

            // dual step keeping active inequality multipliers nonnegative
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &(i, _, u)) in active.iter().enumerate() {
                if rows[i].kind == RowKind::Eq {
                    continue;
                }
                if r[k] > 1e-14 {
                    let t = u / r[k];
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(k);
                    }
                }
            }
            let zz: f64 = z.iter().map(|v| v * v).sum::<f64>();
            let zn: f64 = sign * row.coeffs.iter().map(|&(i, a)| a * z[i]).sum::<f64>();
            let anorm: f64 = row.coeffs.iter().map(|&(_, a)| a * a).sum::<f64>().sqrt();
            let primal_ok = zz.sqrt() > 1e-13 * (1.0 + anorm) && zn > 1e-15;
            let t2 = if primal_ok { (-s_p).max(0.0) / zn } else { f64::INFINITY };

            if !primal_ok {
                if is_eq && s_p.abs() <= 1e-10 * (1.0 + row.rhs.abs()) {
                    // redundant equality
                    break;
                }
                if t1.is_infinite() {
                    let mut conflict: Vec<usize> =
                        active.iter().zip(&r).filter(|(_, rk)| rk.abs() > 1e-12).map(|(&(i, _, _), _)| i).collect();
                    conflict.push(p);
                    conflict.sort_unstable();
                    return Err(QpError::Infeasible { rows: conflict });
                }
                let k = drop_at.expect("finite t1 has an index");
                for (a, rk) in active.iter_mut().zip(&r) {
                    a.2 -= t1 * rk;
                }
                u_new += t1;
                let (i, _, _) = active.remove(k);
                is_active[i] = false;
                f.drop(k);
                continue;
            }

            let t = t1.min(t2);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (a, rk) in active.iter_mut().zip(&r) {
                a.2 -= t * rk;
            }
            u_new += t;

            if t2 <= t1 {
                if f.add(d) {
                    active.push((p, sign, u_new));
                    is_active[p] = true;
                }
                break;
            }
            let k = drop_at.expect("partial step has an index");
            let (i, _, _) = active.remove(k);
            is_active[i] = false;
            f.drop(k);
        }
    }
}
