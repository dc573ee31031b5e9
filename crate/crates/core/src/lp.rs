//! Dense two-phase simplex for the small linear programs used by the certificates.
//!
//! All variables are non-negative. The objective is maximized.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
const PIVOT_EPS: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    /// Adds `sum coeffs[k].1 * x[coeffs[k].0]  rel  rhs`.
    pub fn add_constraint(&mut self, coeffs: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut row = vec![0.0; self.n_vars];
        for &(v, c) in coeffs {
            row[v] += c;
        }
        self.rows.push((row, rel, rhs));
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).solve(&self.objective, self.n_vars)
    }
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    artificial_start: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars;
        let mut n_slack = 0;
        let mut n_art = 0;
        let mut normalized = Vec::with_capacity(lp.rows.len());
        for (row, rel, rhs) in &lp.rows {
            let (row, rel, rhs) = if *rhs < 0.0 {
                let flipped = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (row.iter().map(|v| -v).collect::<Vec<_>>(), flipped, -rhs)
            } else {
                (row.clone(), *rel, *rhs)
            };
            match rel {
                Relation::Le => n_slack += 1,
                Relation::Ge => {
                    n_slack += 1;
                    n_art += 1;
                }
                Relation::Eq => n_art += 1,
            }
            normalized.push((row, rel, rhs));
        }
        let cols = n + n_slack + n_art;
        let artificial_start = n + n_slack;
        let mut a = Vec::with_capacity(normalized.len());
        let mut b = Vec::with_capacity(normalized.len());
        let mut basis = Vec::with_capacity(normalized.len());
        let (mut s, mut t) = (n, artificial_start);
        for (row, rel, rhs) in normalized {
            let mut r = row;
            r.resize(cols, 0.0);
            match rel {
                Relation::Le => {
                    r[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    r[s] = -1.0;
                    s += 1;
                    r[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
                Relation::Eq => {
                    r[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
            }
            a.push(r);
            b.push(rhs);
        }
        Tableau {
            a,
            b,
            basis,
            cols,
            artificial_start,
        }
    }

    fn pivot(&mut self, z: &mut [f64], z0: &mut f64, row: usize, col: usize) {
        let piv = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= piv;
        }
        self.b[row] /= piv;
        let pivot_row = self.a[row].clone();
        let pivot_b = self.b[row];
        for r in 0..self.a.len() {
            if r == row {
                continue;
            }
            let f = self.a[r][col];
            if f != 0.0 {
                for (v, p) in self.a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.b[r] -= f * pivot_b;
                if self.b[r].abs() < 1e-15 {
                    self.b[r] = 0.0;
                }
            }
        }
        let f = z[col];
        if f != 0.0 {
            for (v, p) in z.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            *z0 -= f * pivot_b;
        }
        self.basis[row] = col;
    }

    /// Maximizes with reduced costs `z` over columns `< limit`.
    fn optimize(&mut self, z: &mut [f64], z0: &mut f64, limit: usize) -> Result<()> {
        let max_iter = 50 * (self.cols + self.a.len()) + 1000;
        let bland_after = 10 * (self.cols + self.a.len());
        for it in 0..max_iter {
            let bland = it >= bland_after;
            let mut enter = None;
            let mut best = EPS;
            for (j, &zj) in z.iter().enumerate().take(limit) {
                if zj > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = zj;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let arc = self.a[r][col];
                if arc > PIVOT_EPS {
                    let ratio = self.b[r] / arc;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-14
                                || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Lp("unbounded"));
            };
            self.pivot(z, z0, row, col);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }

    fn solve(mut self, objective: &[f64], n_vars: usize) -> Result<LpSolution> {
        // Phase one: maximize minus the sum of artificial variables.
        let mut z = vec![0.0; self.cols];
        let mut z0 = 0.0;
        for j in self.artificial_start..self.cols {
            z[j] = -1.0;
        }
        for r in 0..self.a.len() {
            if self.basis[r] >= self.artificial_start {
                for j in 0..self.cols {
                    z[j] += self.a[r][j];
                }
                z0 += self.b[r];
            }
        }
        let cols = self.cols;
        self.optimize(&mut z, &mut z0, cols)?;
        let infeas: f64 = (0..self.a.len())
            .filter(|&r| self.basis[r] >= self.artificial_start)
            .map(|r| self.b[r])
            .sum();
        if infeas > FEAS_TOL {
            return Err(Error::Lp("infeasible"));
        }
        // Drive remaining artificials out of the basis or drop redundant rows.
        let mut r = 0;
        while r < self.a.len() {
            if self.basis[r] >= self.artificial_start {
                let col = (0..self.artificial_start).find(|&j| self.a[r][j].abs() > 1e-9);
                match col {
                    Some(col) => {
                        self.pivot(&mut z, &mut z0, r, col);
                        r += 1;
                    }
                    None => {
                        self.a.remove(r);
                        self.b.remove(r);
                        self.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        // Phase two.
        let mut z = vec![0.0; self.cols];
        let mut z0 = 0.0;
        z[..n_vars].copy_from_slice(objective);
        for r in 0..self.a.len() {
            let cb = if self.basis[r] < n_vars {
                objective[self.basis[r]]
            } else {
                0.0
            };
            if cb != 0.0 {
                for j in 0..self.cols {
                    z[j] -= cb * self.a[r][j];
                }
                z0 -= cb * self.b[r];
            }
        }
        let limit = self.artificial_start;
        self.optimize(&mut z, &mut z0, limit)?;
        let mut x = vec![0.0; n_vars];
        for (r, &bv) in self.basis.iter().enumerate() {
            if bv < n_vars {
                x[bv] = self.b[r].max(0.0);
            }
        }
        let objective_value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective: objective_value,
        })
    }
}
