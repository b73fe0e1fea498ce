//! Dense two-phase simplex for small linear programs in nonnegative variables.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize c·x subject to rows, x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let names = (0..objective.len()).map(|j| format!("x{j}")).collect();
        Self {
            objective,
            constraints: Vec::new(),
            names,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coefficients.len(), self.num_vars());
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
    }

    /// Add a row from sparse `(index, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, v) in terms {
            row[j] += v;
        }
        self.add(row, relation, rhs);
    }

    /// Largest constraint or sign violation at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let sign = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        self.constraints.iter().fold(sign, |worst, row| {
            let lhs: f64 = row.coefficients.iter().zip(x).map(|(a, b)| a * b).sum();
            let gap = match row.relation {
                Relation::Le => (lhs - row.rhs).max(0.0),
                Relation::Ge => (row.rhs - lhs).max(0.0),
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst.max(gap)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Smallest phase-2 reduced cost over nonbasic columns; nonnegative up to
    /// rounding at an optimum.
    pub min_reduced_cost: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.a[r][c];
        for j in 0..width {
            self.a[r][j] /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for j in 0..width {
                    row[j] -= factor * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        (0..allowed)
            .map(|j| {
                let z: f64 = self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.a[i][j]).sum();
                cost[j] - z
            })
            .collect()
    }

    /// Bland's rule: lowest-index improving column, lowest-index basic
    /// variable among minimum-ratio rows.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::NonConvergence {
                    what: "simplex",
                    iterations: self.pivots,
                });
            }
            let reduced = self.reduced_costs(cost, allowed);
            let Some(enter) = (0..allowed).find(|&j| reduced[j] < -COST_TOL && !self.basis.contains(&j)) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let coef = self.a[i][enter];
                if coef > PIVOT_TOL {
                    let ratio = self.rhs(i) / coef;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(Error::LpUnbounded),
            }
        }
    }
}

/// Solve by phase 1 on artificial variables, then phase 2 on the objective.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    for row in &lp.constraints {
        if row.coefficients.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: row.coefficients.len(),
            });
        }
    }
    // Normalise to nonnegative right-hand sides.
    let rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|row| {
            if row.rhs < 0.0 {
                let flipped = match row.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (row.coefficients.iter().map(|v| -v).collect(), flipped, -row.rhs)
            } else {
                (row.coefficients.clone(), row.relation, row.rhs)
            }
        })
        .collect();

    let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let real = n + slacks;
    let cols = real + artificials;
    let mut a = Vec::with_capacity(rows.len());
    let mut basis = Vec::with_capacity(rows.len());
    let (mut s, mut t) = (n, real);
    for (coef, rel, rhs) in &rows {
        let mut line = vec![0.0; cols + 1];
        line[..n].copy_from_slice(coef);
        line[cols] = *rhs;
        match rel {
            Relation::Le => {
                line[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                line[s] = -1.0;
                s += 1;
                line[t] = 1.0;
                basis.push(t);
                t += 1;
            }
            Relation::Eq => {
                line[t] = 1.0;
                basis.push(t);
                t += 1;
            }
        }
        a.push(line);
    }
    let mut tab = Tableau {
        a,
        basis,
        cols,
        pivots: 0,
    };

    if artificials > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[real..].iter_mut().for_each(|v| *v = 1.0);
        tab.optimize(&phase1, cols)?;
        let residual: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= real)
            .map(|(i, _)| tab.rhs(i))
            .sum();
        if residual > FEAS_TOL * (1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
            return Err(Error::LpInfeasible { residual });
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.a.len() {
            if tab.basis[i] >= real {
                match (0..real).find(|&j| tab.a[i][j].abs() > 1e-9) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.a.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.optimize(&cost, real)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i).max(0.0);
        }
    }
    let reduced = tab.reduced_costs(&cost, real);
    let min_reduced_cost = (0..real)
        .filter(|j| !tab.basis.contains(j))
        .map(|j| reduced[j])
        .fold(f64::INFINITY, f64::min);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        min_reduced_cost,
        pivots: tab.pivots,
    })
}
