//! Exact LP oracle: maximize `cᵀv` over `{A v ≤ b, A_eq v = b_eq, v ≥ 0}`.
//!
//! Two-phase revised simplex. The basis inverse is kept as a dense matrix and
//! updated in product form after each pivot (skipping the zero entries, which
//! dominate for flow polytopes), with periodic refactorization. Pricing uses
//! the most negative reduced cost and falls back to Bland's rule after a
//! streak of degenerate pivots.

use serde::{Deserialize, Serialize};

use crate::error::LpError;

/// Sparse row: `(variable index, coefficient)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpStandardForm {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub ineq_rows: Vec<SparseRow>,
    pub ineq_rhs: Vec<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
}

impl LpStandardForm {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ineq_rows: Vec::new(),
            ineq_rhs: Vec::new(),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
        }
    }

    /// Builds a problem from dense rows; zero coefficients are dropped.
    pub fn from_dense(
        objective: Vec<f64>,
        ineq: &[(Vec<f64>, f64)],
        eq: &[(Vec<f64>, f64)],
    ) -> Self {
        let mut p = Self::new(objective.len());
        p.objective = objective;
        for (row, rhs) in ineq {
            p.push_ineq(sparsify(row), *rhs);
        }
        for (row, rhs) in eq {
            p.push_eq(sparsify(row), *rhs);
        }
        p
    }

    pub fn push_ineq(&mut self, row: SparseRow, rhs: f64) {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn push_eq(&mut self, row: SparseRow, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.ineq_rows.len() + self.eq_rows.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.num_vars {
            return Err(LpError::Dimension(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            )));
        }
        if self.ineq_rows.len() != self.ineq_rhs.len() || self.eq_rows.len() != self.eq_rhs.len() {
            return Err(LpError::Dimension("row/rhs count mismatch".into()));
        }
        for row in self.ineq_rows.iter().chain(&self.eq_rows) {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= self.num_vars) {
                return Err(LpError::Dimension(format!("column {j} out of range")));
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(&self.ineq_rhs)
            .chain(&self.eq_rhs)
            .chain(self.ineq_rows.iter().chain(&self.eq_rows).flatten().map(|(_, v)| v))
            .all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Dimension("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Largest violation of any row or of nonnegativity at `v`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = v.iter().map(|x| -x).fold(0.0, f64::max);
        for (row, &b) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            worst = worst.max(row_dot(row, v) - b);
        }
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((row_dot(row, v) - b).abs());
        }
        worst
    }

    pub fn objective_at(&self, v: &[f64]) -> f64 {
        self.objective.iter().zip(v).map(|(c, x)| c * x).sum()
    }
}

pub fn row_dot(row: &[(usize, f64)], v: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * v[j]).sum()
}

fn sparsify(row: &[f64]) -> SparseRow {
    row.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, *v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    /// Optimal basic feasible point.
    pub point: Vec<f64>,
    pub objective_value: f64,
    /// Dual multipliers, inequality rows first, then equality rows. Inequality
    /// multipliers are nonnegative and `Aᵀu ≥ c` at optimality.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    /// `bᵀu`, an upper bound on the primal optimum whenever `u` is dual feasible.
    pub fn dual_objective(&self, problem: &LpStandardForm) -> f64 {
        problem
            .ineq_rhs
            .iter()
            .chain(&problem.eq_rhs)
            .zip(&self.dual)
            .map(|(b, u)| b * u)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    /// Degenerate pivots in a row before switching to Bland's rule.
    pub degenerate_streak: usize,
    pub refactor_every: usize,
    pub max_iterations: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            feasibility_tol: 1e-7,
            degenerate_streak: 50,
            refactor_every: 1000,
            max_iterations: None,
        }
    }
}

pub fn solve_lp(problem: &LpStandardForm) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, &SimplexOptions::default())
}

pub fn solve_lp_with(problem: &LpStandardForm, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let s = Simplex::solve(problem, *opts)?;
    Ok(s.extract(problem))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Simplex {
    opts: SimplexOptions,
    m: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kind: Vec<Kind>,
    /// `-1` when the row was negated to make its rhs nonnegative.
    row_sign: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    y: Vec<f64>,
    phase_one: bool,
    iterations: usize,
    since_refactor: usize,
    max_iterations: usize,
}

impl Simplex {
    fn build(p: &LpStandardForm, opts: SimplexOptions) -> Self {
        let m_ineq = p.ineq_rows.len();
        let m = p.num_rows();
        let n = p.num_vars;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut rhs = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        for (i, (row, &b)) in p
            .ineq_rows
            .iter()
            .chain(&p.eq_rows)
            .zip(p.ineq_rhs.iter().chain(&p.eq_rhs))
            .enumerate()
        {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            row_sign.push(sign);
            rhs.push(sign * b);
            for &(j, a) in row {
                if a != 0.0 {
                    cols[j].push((i, sign * a));
                }
            }
        }
        let mut kind = vec![Kind::Structural; n];
        let mut basis = vec![usize::MAX; m];
        for i in 0..m_ineq {
            cols.push(vec![(i, row_sign[i])]);
            kind.push(Kind::Slack);
            if row_sign[i] > 0.0 {
                basis[i] = cols.len() - 1;
            }
        }
        for (i, slot) in basis.iter_mut().enumerate() {
            if *slot == usize::MAX {
                cols.push(vec![(i, 1.0)]);
                kind.push(Kind::Artificial);
                *slot = cols.len() - 1;
            }
        }
        let total = cols.len();
        let mut in_basis = vec![None; total];
        for (r, &j) in basis.iter().enumerate() {
            in_basis[j] = Some(r);
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            // basic columns are unit vectors e_r (slack rows are not negated)
            binv[r * m + r] = 1.0;
        }
        let has_artificial = kind.contains(&Kind::Artificial);
        let cost = kind
            .iter()
            .map(|k| if *k == Kind::Artificial { 1.0 } else { 0.0 })
            .collect();
        let max_iterations = opts
            .max_iterations
            .unwrap_or(50 * (total + m) + 1000);
        let mut s = Self {
            opts,
            m,
            n_struct: n,
            cols,
            kind,
            row_sign,
            xb: rhs.clone(),
            rhs,
            cost,
            basis,
            in_basis,
            binv,
            y: vec![0.0; m],
            phase_one: has_artificial,
            iterations: 0,
            since_refactor: 0,
            max_iterations,
        };
        if !has_artificial {
            s.set_phase_two_costs(p);
        }
        s.recompute_duals();
        s
    }

    fn set_phase_two_costs(&mut self, p: &LpStandardForm) {
        for (j, c) in self.cost.iter_mut().enumerate() {
            *c = if j < self.n_struct { -p.objective[j] } else { 0.0 };
        }
        self.phase_one = false;
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let cb = self.cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (k, yk) in self.y.iter_mut().enumerate() {
                *yk += cb * self.binv[r * m + k];
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| self.y[i] * a).sum::<f64>()
    }

    fn can_enter(&self, j: usize) -> bool {
        self.in_basis[j].is_none() && self.kind[j] != Kind::Artificial
    }

    fn run(&mut self) -> Result<(), LpError> {
        if self.phase_one {
            self.iterate()?;
            let infeasibility: f64 = (0..self.m)
                .filter(|&r| self.kind[self.basis[r]] == Kind::Artificial)
                .map(|r| self.xb[r])
                .sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > self.opts.feasibility_tol * scale {
                return Err(LpError::Infeasible);
            }
            self.drive_out_artificials();
            self.phase_one = false;
        }
        Ok(())
    }

    fn phase_two(&mut self, p: &LpStandardForm) -> Result<(), LpError> {
        self.set_phase_two_costs(p);
        self.recompute_duals();
        self.iterate()
    }

    /// Pivots zero-level artificials out of the basis where possible. Rows
    /// where no structural or slack column has a nonzero entry are redundant;
    /// their artificial stays basic at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if self.kind[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if !self.can_enter(j) {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| row[i] * v).sum();
                if a.abs() > 1e-7 && best.map_or(true, |(_, b)| a.abs() > b.abs() + 1e-12) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.column(q);
                self.pivot(q, r, &alpha);
            }
        }
        self.refactor();
    }

    fn column(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(k, a) in &self.cols[q] {
            for (i, al) in alpha.iter_mut().enumerate() {
                let b = self.binv[i * m + k];
                if b != 0.0 {
                    *al += b * a;
                }
            }
        }
        alpha
    }

    fn iterate(&mut self) -> Result<(), LpError> {
        let mut degenerate_run = 0usize;
        let mut checked_after_refactor = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let bland = degenerate_run >= self.opts.degenerate_streak;
            let entering = self.price(bland);
            let Some((q, dq)) = entering else {
                if checked_after_refactor || self.since_refactor == 0 {
                    return Ok(());
                }
                // confirm optimality on a fresh factorization
                self.refactor();
                checked_after_refactor = true;
                continue;
            };
            checked_after_refactor = false;
            let alpha = self.column(q);
            let Some((r, theta)) = self.ratio_test(&alpha, bland) else {
                if self.phase_one {
                    // phase one is bounded below by zero; treat as numerical trouble
                    self.refactor();
                    degenerate_run = self.opts.degenerate_streak;
                    self.iterations += 1;
                    continue;
                }
                return Err(LpError::Unbounded);
            };
            if theta <= self.opts.feasibility_tol * 1e-2 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            // dual update uses the old row r of B⁻¹
            let m = self.m;
            let ratio = dq / alpha[r];
            for k in 0..m {
                let b = self.binv[r * m + k];
                if b != 0.0 {
                    self.y[k] += ratio * b;
                }
            }
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.xb[i] -= theta * a;
                }
            }
            self.pivot(q, r, &alpha);
            self.xb[r] = theta;
            for v in self.xb.iter_mut() {
                if *v < 0.0 && *v > -1e-11 {
                    *v = 0.0;
                }
            }
            self.iterations += 1;
            self.since_refactor += 1;
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor();
            }
        }
    }

    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols.len() {
            if !self.can_enter(j) {
                continue;
            }
            let d = self.reduced_cost(j);
            if d < -tol {
                if bland {
                    return Some((j, d));
                }
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        best
    }

    fn ratio_test(&self, alpha: &[f64], bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts.pivot_tol;
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            let basic = self.basis[i];
            let blocked_artificial =
                !self.phase_one && self.kind[basic] == Kind::Artificial && a.abs() > tol;
            if !(a > tol || blocked_artificial) {
                continue;
            }
            let ratio = if blocked_artificial {
                0.0
            } else {
                self.xb[i].max(0.0) / a
            };
            let better = match best {
                None => true,
                Some((bi, br)) => {
                    if ratio < br - 1e-12 {
                        true
                    } else if ratio <= br + 1e-12 {
                        if bland {
                            basic < self.basis[bi]
                        } else {
                            a.abs() > alpha[bi].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((i, ratio));
            }
        }
        best
    }

    fn pivot(&mut self, q: usize, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let row_r: Vec<(usize, f64)> = (0..m)
            .filter_map(|k| {
                let v = self.binv[r * m + k];
                (v != 0.0).then(|| (k, v / piv))
            })
            .collect();
        for k in 0..m {
            self.binv[r * m + k] = 0.0;
        }
        for &(k, v) in &row_r {
            self.binv[r * m + k] = v;
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for &(k, v) in &row_r {
                row[k] -= a * v;
            }
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = None;
        self.basis[r] = q;
        self.in_basis[q] = Some(r);
    }

    /// Recomputes `B⁻¹` by Gauss-Jordan elimination, then `x_B` and `y`.
    fn refactor(&mut self) {
        let m = self.m;
        if m == 0 {
            self.since_refactor = 0;
            return;
        }
        let mut b = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                b[i * m + r] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &bb| b[a * m + c].abs().total_cmp(&b[bb * m + c].abs()))
                .unwrap();
            if b[p * m + c].abs() < 1e-14 {
                // singular basis; keep the product-form inverse
                self.since_refactor = 0;
                return;
            }
            if p != c {
                for k in 0..m {
                    b.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = b[c * m + c];
            let bc: Vec<(usize, f64)> = (0..m)
                .filter_map(|k| (b[c * m + k] != 0.0).then(|| (k, b[c * m + k] / d)))
                .collect();
            let ic: Vec<(usize, f64)> = (0..m)
                .filter_map(|k| (inv[c * m + k] != 0.0).then(|| (k, inv[c * m + k] / d)))
                .collect();
            for k in 0..m {
                b[c * m + k] = 0.0;
                inv[c * m + k] = 0.0;
            }
            for &(k, v) in &bc {
                b[c * m + k] = v;
            }
            for &(k, v) in &ic {
                inv[c * m + k] = v;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = b[i * m + c];
                if f == 0.0 {
                    continue;
                }
                for &(k, v) in &bc {
                    b[i * m + k] -= f * v;
                }
                for &(k, v) in &ic {
                    inv[i * m + k] -= f * v;
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
            self.xb[i] = if v < 0.0 && v > -1e-9 { 0.0 } else { v };
        }
        self.recompute_duals();
        self.since_refactor = 0;
    }

    fn extract(&self, p: &LpStandardForm) -> LpSolution {
        let mut point = vec![0.0; self.n_struct];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                point[j] = self.xb[r].max(0.0);
            }
        }
        let dual = self
            .y
            .iter()
            .zip(&self.row_sign)
            .map(|(y, s)| -y * s)
            .collect();
        LpSolution {
            objective_value: p.objective_at(&point),
            point,
            dual,
            iterations: self.iterations,
        }
    }
}

impl Simplex {
    fn solve(p: &LpStandardForm, opts: SimplexOptions) -> Result<Self, LpError> {
        let mut s = Self::build(p, opts);
        s.run()?;
        s.phase_two(p)?;
        Ok(s)
    }
}
