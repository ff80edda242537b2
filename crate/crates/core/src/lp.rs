//! Dense two-phase simplex for small linear programs.
//!
//! Solves `minimize c·x` subject to rows `a·x {<=,=,>=} b` and `x >= 0`.
//! Pivoting uses Dantzig's rule and falls back to Bland's rule after a run of
//! degenerate pivots, which rules out cycling. Ties resolve to the lowest
//! column or basis index, so the returned vertex is deterministic.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("row has {found} coefficients, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    /// A minimization problem over `objective.len()` non-negative variables.
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self {
            num_vars: objective.len(),
            objective,
            rows: Vec::new(),
        }
    }

    pub fn add_constraint(
        &mut self,
        coeffs: Vec<f64>,
        rel: Relation,
        rhs: f64,
    ) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars {
            return Err(LpError::Dimension {
                expected: self.num_vars,
                found: coeffs.len(),
            });
        }
        self.rows.push((coeffs, rel, rhs));
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// m rows of `cols` coefficients followed by the rhs.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        let slacks = lp
            .rows
            .iter()
            .filter(|(_, r, _)| *r != Relation::Eq)
            .count();
        // artificials for every row keeps the initial basis trivial
        let m = lp.rows.len();
        let first_artificial = n + slacks;
        let cols = first_artificial + m;
        let mut a = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack = n;
        for (i, (coeffs, rel, rhs)) in lp.rows.iter().enumerate() {
            let mut row = vec![0.0; cols + 1];
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, c) in coeffs.iter().enumerate() {
                row[j] = sign * c;
            }
            match rel {
                Relation::Le => {
                    row[slack] = sign;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -sign;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[first_artificial + i] = 1.0;
            row[cols] = sign * rhs;
            a.push(row);
            basis.push(first_artificial + i);
        }
        Self {
            a,
            basis,
            cols,
            first_artificial,
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let m = self.a.len();
        let cols = self.cols;

        // phase 1: minimize the sum of artificials
        let mut cost1 = vec![0.0; cols];
        for c in cost1.iter_mut().skip(self.first_artificial) {
            *c = 1.0;
        }
        self.optimize(&cost1, cols)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| self.basis[i] >= self.first_artificial)
            .map(|i| self.a[i][cols])
            .sum();
        if infeasibility > FEAS_EPS {
            return Err(LpError::Infeasible);
        }

        // drive remaining (zero-valued) artificials out of the basis
        let mut redundant = Vec::new();
        for i in 0..m {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            match (0..self.first_artificial).find(|&j| self.a[i][j].abs() > PIVOT_EPS) {
                Some(j) => self.pivot(i, j),
                None => redundant.push(i),
            }
        }
        for i in redundant.into_iter().rev() {
            self.a.remove(i);
            self.basis.remove(i);
        }

        // phase 2 over structural and slack columns only
        let mut cost2 = vec![0.0; cols];
        cost2[..lp.num_vars].copy_from_slice(&lp.objective);
        self.optimize(&cost2, self.first_artificial)?;

        let mut x = vec![0.0; lp.num_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < lp.num_vars {
                x[b] = self.a[i][cols].max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(v, c)| v * c).sum();
        Ok(LpSolution { x, objective })
    }

    /// Runs primal simplex with entering columns restricted to `0..limit`.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> Result<(), LpError> {
        let m = self.a.len();
        let cols = self.cols;
        let max_iter = 50 * (m + cols) + 1000;
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            // reduced costs: c_j - c_B B^-1 A_j, tableau already holds B^-1 A
            let mut entering = None;
            let mut best = -COST_EPS;
            let bland = degenerate >= DEGENERATE_RUN;
            for j in 0..limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for i in 0..m {
                    let aij = self.a[i][j];
                    if aij != 0.0 {
                        rc -= cost[self.basis[i]] * aij;
                    }
                }
                if bland {
                    if rc < -COST_EPS {
                        entering = Some(j);
                        break;
                    }
                } else if rc < best {
                    best = rc;
                    entering = Some(j);
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };

            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let aij = self.a[i][col];
                if aij > PIVOT_EPS {
                    let ratio = self.a[i][cols] / aij;
                    let replace = match leaving {
                        None => true,
                        Some((r, best_ratio)) => {
                            ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[r])
                        }
                    };
                    if replace {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leaving else {
                return Err(LpError::Unbounded);
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
        Err(LpError::IterationLimit)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.cols + 1;
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for j in 0..width {
                    r[j] -= f * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }
}
