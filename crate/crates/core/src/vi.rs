//! Hyperplane-projection (Solodov-Svaiter) solver for the slot variational
//! inequality `VI(F, Omega)`, and a KKT checker for the resulting equilibrium.
//!
//! Each iteration computes the projected residual
//! `nu = x - P(x - mu F(x))`, backtracks along `-nu` until
//! `<F(x - eta nu), nu> >= (gamma2 / mu) |nu|^2`, and projects `x` onto the
//! slot set cut by the halfspace `<F(y), z - y> <= 0` with `y = x - eta nu`.
//! Because every player's utility depends only on its own strategy, the
//! solution is the maximizer of the summed utilities over the slot set,
//! which is the normalized equilibrium with unit weights.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pseudo_gradient_unchecked, utility_curvature, utility_unchecked, GameParams, PvGroup};
use crate::projection::{clamp_demand, dot, project_feasible, project_intersection, ClampReport, FeasibleSet, Halfspace};

pub const DEFAULT_MAX_ITERATIONS: usize = 5_000;
pub const LINE_SEARCH_CAP: u32 = 100;

/// Per-iteration record of a solver run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SspmTrace {
    pub iterates: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    pub mus: Vec<f64>,
    /// Accepted step per completed iteration (one fewer than `iterates`).
    pub etas: Vec<f64>,
    pub zetas: Vec<u32>,
    pub utilities: Vec<Vec<f64>>,
    /// Projections performed inside the iteration loop.
    pub projections: usize,
    /// Extra unit-step residuals taken to confirm a small-step stop.
    pub confirmations: usize,
}

impl SspmTrace {
    /// Completed update steps.
    pub fn iterations(&self) -> usize {
        self.etas.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_norms.last().copied()
    }

    /// CSV with one row per residual evaluation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let groups = self.iterates.first().map_or(0, Vec::len);
        let mut header = vec!["iteration".to_string(), "residual".into(), "mu".into(), "eta".into(), "zeta".into()];
        header.extend((0..groups).map(|i| format!("x_{i}")));
        header.extend((0..groups).map(|i| format!("u_{i}")));
        w.write_record(&header)?;
        for k in 0..self.iterates.len() {
            let mut row = vec![
                k.to_string(),
                self.residual_norms[k].to_string(),
                self.mus[k].to_string(),
                self.etas.get(k).map(f64::to_string).unwrap_or_default(),
                self.zetas.get(k).map(u32::to_string).unwrap_or_default(),
            ];
            row.extend(self.iterates[k].iter().map(f64::to_string));
            row.extend(self.utilities[k].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Projected residual `x - P(x - mu F(x))`.
pub fn residual<F>(x: &[f64], mu: f64, field: F, set: &FeasibleSet) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let fx = field(x);
    let step: Vec<f64> = x.iter().zip(&fx).map(|(xi, fi)| xi - mu * fi).collect();
    let proj = project_feasible(&step, set)?;
    Ok(x.iter().zip(&proj).map(|(a, b)| a - b).collect())
}

/// Smallest `zeta >= 0` with `<F(x - gamma1^zeta mu nu), nu> >= (gamma2/mu) |nu|^2`;
/// returns `(zeta, gamma1^zeta mu)`.
pub fn line_search<F>(x: &[f64], nu: &[f64], mu: f64, field: F, params: &GameParams) -> Result<(u32, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let target = params.gamma2 / mu * dot(nu, nu);
    let mut eta = mu;
    for zeta in 0..=LINE_SEARCH_CAP {
        let probe: Vec<f64> = x.iter().zip(nu).map(|(xi, ni)| xi - eta * ni).collect();
        if dot(&field(&probe), nu) >= target {
            return Ok((zeta, eta));
        }
        eta *= params.gamma1;
    }
    Err(Error::LineSearch(LINE_SEARCH_CAP as usize))
}

/// The feasible start `P(d_i / m_i)`: each group's unconstrained transport optimum.
pub fn default_start(groups: &[PvGroup], set: &FeasibleSet) -> Result<Vec<f64>> {
    let raw: Vec<f64> = groups
        .iter()
        .map(|g| if g.m == 0 { 1.0 } else { f64::from(g.d) / f64::from(g.m) })
        .collect();
    project_feasible(&raw, set)
}

/// Solve the slot VI from `x0` (projected first when infeasible).
pub fn sspm_solve(
    groups: &[PvGroup],
    set: &FeasibleSet,
    price: f64,
    params: &GameParams,
    x0: &[f64],
) -> Result<(Vec<f64>, SspmTrace)> {
    sspm_solve_capped(groups, set, price, params, x0, DEFAULT_MAX_ITERATIONS)
}

pub fn sspm_solve_capped(
    groups: &[PvGroup],
    set: &FeasibleSet,
    price: f64,
    params: &GameParams,
    x0: &[f64],
    max_iterations: usize,
) -> Result<(Vec<f64>, SspmTrace)> {
    if groups.len() != set.dim() {
        return Err(Error::LengthMismatch {
            expected: set.dim(),
            got: groups.len(),
        });
    }
    if x0.len() != groups.len() {
        return Err(Error::LengthMismatch {
            expected: groups.len(),
            got: x0.len(),
        });
    }
    let field = |x: &[f64]| pseudo_gradient_unchecked(groups, x, price, params);
    let utilities = |x: &[f64]| -> Vec<f64> {
        groups.iter().zip(x).map(|(g, &xi)| utility_unchecked(g, xi, price, params)).collect()
    };

    let mut x = if set.violation(x0) > 1e-9 {
        project_feasible(x0, set)?
    } else {
        x0.to_vec()
    };
    let mut trace = SspmTrace::default();
    let mut eta_prev = params.eta_init;
    for k in 0..=max_iterations {
        let mu = (params.gamma3 * eta_prev).min(params.mu_init);
        let nu = residual(&x, mu, field, set)?;
        trace.projections += 1;
        let res = norm(&nu);
        trace.iterates.push(x.clone());
        trace.residual_norms.push(res);
        trace.mus.push(mu);
        trace.utilities.push(utilities(&x));
        if res < params.epsilon {
            // A collapsed step length shrinks the residual without the iterate
            // being close, so confirm at the initial step.
            let nat = if mu == params.mu_init {
                res
            } else {
                trace.confirmations += 1;
                norm(&residual(&x, params.mu_init, field, set)?)
            };
            if nat < params.epsilon {
                return Ok((x, trace));
            }
        }
        if k == max_iterations {
            break;
        }
        let (zeta, eta) = line_search(&x, &nu, mu, field, params)?;
        let y: Vec<f64> = x.iter().zip(&nu).map(|(xi, ni)| xi - eta * ni).collect();
        let cut = Halfspace::new(field(&y), y);
        x = project_intersection(&x, set, &cut)?;
        trace.projections += 1;
        trace.etas.push(eta);
        trace.zetas.push(zeta);
        eta_prev = eta;
    }
    Err(Error::NonConvergence {
        what: "SSPM",
        iterations: max_iterations,
    })
}

/// Result of solving one slot game with empty groups removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSolution {
    /// One strategy per input group; groups with `m = 0` get 1.
    pub x: Vec<f64>,
    pub clamp: ClampReport,
    pub trace: SspmTrace,
    /// The clamped set over the participating groups.
    pub set: FeasibleSet,
    /// Indices of the participating groups.
    pub players: Vec<usize>,
}

/// Clamp the charging demand, drop groups with no unfully charged vehicles,
/// solve from the default start, and scatter the strategies back.
pub fn solve_slot(
    groups: &[PvGroup],
    e_plus: f64,
    d_total: u32,
    price: f64,
    params: &GameParams,
) -> Result<SlotSolution> {
    let players: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].m > 0).collect();
    let active: Vec<PvGroup> = players.iter().map(|&i| groups[i].clone()).collect();
    let raw = FeasibleSet::new(active.iter().map(|g| g.m).collect(), d_total, e_plus, params.r);
    let (set, clamp) = clamp_demand(&raw)?;
    let mut x = vec![1.0; groups.len()];
    if active.is_empty() {
        return Ok(SlotSolution {
            x,
            clamp,
            trace: SspmTrace::default(),
            set,
            players,
        });
    }
    let x0 = default_start(&active, &set)?;
    let (sol, trace) = sspm_solve(&active, &set, price, params, &x0)?;
    for (&i, v) in players.iter().zip(sol) {
        x[i] = v;
    }
    Ok(SlotSolution {
        x,
        clamp,
        trace,
        set,
        players,
    })
}

/// Residuals of the shared-multiplier KKT system at a candidate point.
///
/// Stationarity and dual residuals are divided by each player's utility
/// curvature, so they read as strategy displacements rather than raw
/// gradient units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Common multipliers: `[charging equality, transport demand]`.
    pub lambda_bar: Vec<f64>,
    /// Fitted multipliers of the lower and upper strategy bounds.
    pub lower_bound_multipliers: Vec<f64>,
    pub upper_bound_multipliers: Vec<f64>,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub primal_violation: f64,
    pub dual_violation: f64,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.stationarity_residual
            .max(self.complementarity_residual)
            .max(self.primal_violation)
            .max(self.dual_violation)
    }
}

const BOUND_TOL: f64 = 1e-6;

/// Fit one multiplier vector shared by all groups and report the KKT residuals.
pub fn kkt_verify(x: &[f64], groups: &[PvGroup], set: &FeasibleSet, price: f64, params: &GameParams) -> KktReport {
    let n = x.len();
    let m = set.weights();
    let field = pseudo_gradient_unchecked(groups, x, price, params);
    let curvature: Vec<f64> = groups
        .iter()
        .zip(x)
        .map(|(g, &xi)| utility_curvature(g, xi, params).abs().max(f64::MIN_POSITIVE))
        .collect();
    let at_lower: Vec<bool> = x.iter().map(|&v| v <= BOUND_TOL).collect();
    let at_upper: Vec<bool> = x.iter().map(|&v| v >= 1.0 - BOUND_TOL).collect();
    let interior: Vec<usize> = (0..n).filter(|&i| !at_lower[i] && !at_upper[i]).collect();

    // Stationarity per player: F_i + theta m_i - beta_lo_i + beta_hi_i = 0.
    let theta = if !interior.is_empty() {
        let num: f64 = interior.iter().map(|&i| field[i] * m[i]).sum();
        let den: f64 = interior.iter().map(|&i| m[i] * m[i]).sum();
        -num / den
    } else {
        let floor = (0..n)
            .filter(|&i| at_lower[i])
            .map(|i| -field[i] / m[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let ceil = (0..n)
            .filter(|&i| at_upper[i])
            .map(|i| -field[i] / m[i])
            .fold(f64::INFINITY, f64::min);
        match (floor.is_finite(), ceil.is_finite()) {
            (true, true) => 0.5 * (floor + ceil),
            (true, false) => floor,
            (false, true) => ceil,
            (false, false) => 0.0,
        }
    };

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut stationarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for i in 0..n {
        let slack = field[i] + theta * m[i];
        if at_lower[i] {
            lower[i] = slack;
            dual = dual.max((-slack).max(0.0) / curvature[i]);
            complementarity = complementarity.max(slack.abs() / curvature[i] * x[i].max(0.0));
        } else if at_upper[i] {
            upper[i] = -slack;
            dual = dual.max(slack.max(0.0) / curvature[i]);
            complementarity = complementarity.max(slack.abs() / curvature[i] * (1.0 - x[i]).max(0.0));
        } else {
            stationarity = stationarity.max(slack.abs() / curvature[i]);
        }
    }

    let population = f64::from(set.population()).max(1.0);
    let level = dot(&m, x);
    let demand_gap = (f64::from(set.d_total) - level).max(0.0) / population;
    let primal = set.violation(x).max(demand_gap);

    KktReport {
        lambda_bar: vec![-theta / set.r, 0.0],
        lower_bound_multipliers: lower,
        upper_bound_multipliers: upper,
        stationarity_residual: stationarity,
        complementarity_residual: complementarity,
        primal_violation: primal,
        dual_violation: dual,
    }
}
