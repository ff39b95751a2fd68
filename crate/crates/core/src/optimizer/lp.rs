//! Dense bounded-variable primal simplex (two phases).
//!
//! Variables live in `[lower, upper]` with finite lower bounds. Nonbasic
//! variables at their upper bound are handled by complementing them
//! (`x = u - x'`), so every nonbasic variable sits at zero in the tableau.

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c·x` subject to rows and bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Largest violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - v).max(v - self.upper[i]);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|(j, a)| a * x[*j]).sum();
            let v = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

struct Tableau {
    /// m constraint rows followed by the objective row; last column is rhs.
    t: Vec<Vec<f64>>,
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
    upper: Vec<f64>,
    flipped: Vec<bool>,
    /// Columns allowed to enter the basis.
    enterable: Vec<bool>,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.ncols]
    }

    /// Substitute `x_j = u_j - x_j'` for a nonbasic column.
    fn complement_nonbasic(&mut self, j: usize) {
        let u = self.upper[j];
        let nc = self.ncols;
        for row in self.t.iter_mut() {
            let a = row[j];
            if a != 0.0 {
                row[nc] -= a * u;
                row[j] = -a;
            }
        }
        self.flipped[j] = !self.flipped[j];
    }

    /// Substitute `x_b = u_b - x_b'` for the basic variable of row `r`.
    fn complement_basic(&mut self, r: usize) {
        let b = self.basis[r];
        let u = self.upper[b];
        let nc = self.ncols;
        for (c, v) in self.t[r].iter_mut().enumerate() {
            if c != b {
                *v = -*v;
            }
        }
        self.t[r][nc] += u;
        self.flipped[b] = !self.flipped[b];
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current objective row. Returns false
    /// if the problem is unbounded.
    fn optimize(&mut self, max_iter: usize) -> Result<bool> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let obj = &self.t[m];
            let bland = degenerate_run > DEGENERATE_LIMIT;
            let mut entering = None;
            let mut best = -EPS;
            for j in 0..self.ncols {
                if !self.enterable[j] || self.basis.contains(&j) {
                    continue;
                }
                let d = obj[j];
                if d < -EPS {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        entering = Some(j);
                    }
                }
            }
            let Some(c) = entering else {
                return Ok(true);
            };

            // Ratio test; `None` row means the entering variable hits its bound.
            let mut step = self.upper[c];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                let b = self.rhs(i).max(0.0);
                let (ratio, to_upper) = if a > PIVOT_TOL {
                    (b / a, false)
                } else if a < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    ((self.upper[self.basis[i]] - b).max(0.0) / -a, true)
                } else {
                    continue;
                };
                let better = if ratio < step - EPS {
                    true
                } else if ratio <= step + EPS {
                    match leave {
                        Some((li, _)) if bland => self.basis[i] < self.basis[li],
                        Some((li, _)) => a.abs() > self.t[li][c].abs(),
                        // Prefer a plain bound flip over a pivot.
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    step = ratio;
                    leave = Some((i, to_upper));
                }
            }
            if !step.is_finite() {
                return Ok(false);
            }
            if step <= EPS {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            match leave {
                None => self.complement_nonbasic(c),
                Some((r, to_upper)) => {
                    if to_upper {
                        self.complement_basic(r);
                    }
                    if self.t[r][c].abs() < PIVOT_TOL {
                        return Err(Error::NumericalFailure(format!(
                            "pivot element {:e} below tolerance",
                            self.t[r][c]
                        )));
                    }
                    self.pivot(r, c);
                }
            }
        }
        Err(Error::NumericalFailure(format!(
            "simplex did not converge within {max_iter} iterations"
        )))
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.m;
        let nc = self.ncols;
        let mut obj = vec![0.0; nc + 1];
        for j in 0..nc {
            obj[j] = if self.flipped[j] { -cost[j] } else { cost[j] };
        }
        for i in 0..m {
            let b = self.basis[i];
            let cb = obj[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.t[i]) {
                    *o -= cb * v;
                }
            }
        }
        self.t[m] = obj;
    }

    fn values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols];
        for i in 0..self.m {
            x[self.basis[i]] = self.rhs(i);
        }
        for j in 0..self.ncols {
            if self.flipped[j] {
                x[j] = self.upper[j] - x[j];
            }
        }
        x
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpStatus> {
    let n = lp.num_vars();
    for j in 0..n {
        if !lp.lower[j].is_finite() {
            return Err(Error::InvalidArgument(format!("variable {j} has no finite lower bound")));
        }
        if lp.upper[j] < lp.lower[j] - EPS {
            return Ok(LpStatus::Infeasible);
        }
    }
    let m = lp.rows.len();
    // Column layout: structural, then one slack/surplus per inequality row,
    // then one artificial per row that needs one.
    let mut slack_of = vec![None; m];
    let mut ncols = n;
    for (i, row) in lp.rows.iter().enumerate() {
        if row.sense != Sense::Eq {
            slack_of[i] = Some(ncols);
            ncols += 1;
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut senses = Vec::with_capacity(m);
    for row in &lp.rows {
        let mut r = vec![0.0; ncols + 1];
        let mut rhs = row.rhs;
        for &(j, a) in &row.coeffs {
            r[j] += a;
            rhs -= a * lp.lower[j];
        }
        r[ncols] = rhs;
        rows.push(r);
        senses.push(row.sense);
    }
    for (i, r) in rows.iter_mut().enumerate() {
        if let Some(s) = slack_of[i] {
            r[s] = if senses[i] == Sense::Le { 1.0 } else { -1.0 };
        }
        if r[ncols] < 0.0 {
            for v in r.iter_mut() {
                *v = -*v;
            }
        }
    }
    // A row can start with its slack basic if the slack coefficient is +1.
    let mut basis = vec![usize::MAX; m];
    let mut artificials = Vec::new();
    for i in 0..m {
        if let Some(s) = slack_of[i] {
            if rows[i][s] > 0.0 {
                basis[i] = s;
                continue;
            }
        }
        artificials.push(i);
    }
    let total = ncols + artificials.len();
    for r in rows.iter_mut() {
        let rhs = r[ncols];
        r.truncate(ncols);
        r.resize(total + 1, 0.0);
        r[total] = rhs;
    }
    for (k, &i) in artificials.iter().enumerate() {
        rows[i][ncols + k] = 1.0;
        basis[i] = ncols + k;
    }
    rows.push(vec![0.0; total + 1]);

    let mut upper = vec![f64::INFINITY; total];
    for j in 0..n {
        upper[j] = lp.upper[j] - lp.lower[j];
    }
    let mut tab = Tableau {
        t: rows,
        m,
        ncols: total,
        basis,
        upper,
        flipped: vec![false; total],
        enterable: vec![true; total],
    };
    let max_iter = 50 * (m + total) + 10_000;

    // Zero-width variables never need to move.
    for j in 0..n {
        if tab.upper[j] <= EPS {
            tab.upper[j] = 0.0;
            tab.enterable[j] = false;
        }
    }

    if !artificials.is_empty() {
        let mut cost = vec![0.0; total];
        for k in 0..artificials.len() {
            cost[ncols + k] = 1.0;
        }
        tab.set_objective(&cost);
        tab.optimize(max_iter)?;
        let infeasibility = -tab.t[m][total];
        let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-7 * scale {
            return Ok(LpStatus::Infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] < ncols {
                continue;
            }
            let col = (0..ncols)
                .filter(|&j| tab.enterable[j] && !tab.basis.contains(&j))
                .max_by(|&a, &b| tab.t[i][a].abs().total_cmp(&tab.t[i][b].abs()));
            if let Some(c) = col {
                if tab.t[i][c].abs() > 1e-7 {
                    tab.pivot(i, c);
                }
            }
        }
        for k in 0..artificials.len() {
            tab.enterable[ncols + k] = false;
            tab.upper[ncols + k] = 0.0;
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    tab.set_objective(&cost);
    if !tab.optimize(max_iter)? {
        return Ok(LpStatus::Unbounded);
    }
    let raw = tab.values();
    let x: Vec<f64> = (0..n)
        .map(|j| (raw[j] + lp.lower[j]).clamp(lp.lower[j], lp.upper[j]))
        .collect();
    let violation = lp.max_violation(&x);
    if violation > 1e-6 {
        return Err(Error::NumericalFailure(format!(
            "solution violates constraints by {violation:e}"
        )));
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpStatus::Optimal { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match solve_lp(lp).unwrap() {
            LpStatus::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let (v, obj) = optimum(&lp);
        assert!((v[0] - 3.0).abs() < 1e-9);
        assert!((obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_two_variables() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var(-1.0, 0.0, 1.0);
        let y = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let (_, obj) = optimum(&lp);
        assert!((obj + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bound_flips_without_rows() {
        let mut lp = LinearProgram::default();
        lp.add_var(-2.0, 1.0, 4.0);
        lp.add_var(3.0, -2.0, 5.0);
        let (v, obj) = optimum(&lp);
        assert_eq!(v, vec![4.0, -2.0]);
        assert!((obj + 14.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_infeasibility() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var(1.0, 0.0, 1.0);
        let y = lp.add_var(2.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.5);
        let (v, obj) = optimum(&lp);
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 0.5).abs() < 1e-9);
        assert!((obj - 2.0).abs() < 1e-9);

        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn min_max_balance() {
        // Split a 10 s task between agents with fixed loads 6 and 8.
        let mut lp = LinearProgram::default();
        let a = lp.add_var(0.0, 0.0, 1.0);
        let b = lp.add_var(0.0, 0.0, 1.0);
        let t = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.0);
        lp.add_row(vec![(t, 1.0), (a, -10.0)], Sense::Ge, 6.0);
        lp.add_row(vec![(t, 1.0), (b, -10.0)], Sense::Ge, 8.0);
        let (v, obj) = optimum(&lp);
        assert!((obj - 12.0).abs() < 1e-9);
        assert!((v[a] - 0.6).abs() < 1e-9);
    }
}
