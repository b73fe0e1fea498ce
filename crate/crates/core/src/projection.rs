//! Euclidean projections onto the per-slot strategy polyhedron.
//!
//! The feasible set of a slot is the unit box intersected with the charging
//! hyperplane `sum_i m_i x_i = S`, where `S = sum_i m_i - E+ / r`. The demand
//! inequality `sum_i m_i x_i >= d` is implied once `S >= d`, which
//! [`clamp_demand`] establishes before any projection runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HYPERPLANE_TOL: f64 = 1e-10;
const BISECTION_ROUNDS: usize = 200;
const CUT_BISECTION_ROUNDS: usize = 300;
const ILLINOIS_ROUNDS: usize = 60;
const CUT_TOL: f64 = 64.0 * f64::EPSILON;
const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_ROUNDS: usize = 10_000;

/// The slot polyhedron: box, charging hyperplane and demand halfspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    /// Unfully charged vehicles per group; all entries positive.
    pub m: Vec<u32>,
    /// Total transportation demand (vehicles).
    pub d_total: u32,
    /// Energy to be charged this slot (kwh).
    pub e_plus: f64,
    /// Energy gained per charging vehicle (kwh).
    pub r: f64,
}

impl FeasibleSet {
    pub fn new(m: Vec<u32>, d_total: u32, e_plus: f64, r: f64) -> Self {
        Self { m, d_total, e_plus, r }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.m.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn population(&self) -> u32 {
        self.m.iter().sum()
    }

    /// Right-hand side of the charging hyperplane in vehicle units.
    pub fn rhs(&self) -> f64 {
        f64::from(self.population()) - self.e_plus / self.r
    }

    pub fn is_feasible(&self) -> bool {
        let s = self.rhs();
        let total = f64::from(self.population());
        let tol = 1e-9 * total.max(1.0);
        self.r > 0.0 && s >= f64::from(self.d_total) - tol && s <= total + tol && s >= -tol
    }

    /// Largest violation of the box and hyperplane constraints at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let hyper = (dot(&self.weights(), x) - self.rhs()).abs() / f64::from(self.population()).max(1.0);
        x.iter()
            .map(|&v| (-v).max(v - 1.0).max(0.0))
            .fold(hyper, f64::max)
    }
}

/// Outcome of the feasibility preflight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampReport {
    pub requested: f64,
    pub granted: f64,
}

impl ClampReport {
    pub fn clamped(&self) -> bool {
        self.requested != self.granted
    }

    /// Requested minus granted energy (kwh); positive when charging was cut.
    pub fn shortfall(&self) -> f64 {
        self.requested - self.granted
    }
}

/// Clamp the charging demand into `[0, r (sum m - d)]` so the slot set is nonempty.
pub fn clamp_demand(set: &FeasibleSet) -> Result<(FeasibleSet, ClampReport)> {
    if set.r <= 0.0 {
        return Err(Error::Domain("charged energy per slot r must be positive".into()));
    }
    let population = set.population();
    if set.d_total > population {
        return Err(Error::Infeasible(format!(
            "transportation demand {} exceeds group population {}",
            set.d_total, population
        )));
    }
    let cap = set.r * f64::from(population - set.d_total);
    let granted = set.e_plus.max(0.0).min(cap);
    let report = ClampReport {
        requested: set.e_plus,
        granted,
    };
    Ok((
        FeasibleSet {
            e_plus: granted,
            ..set.clone()
        },
        report,
    ))
}

/// A closed halfspace `{z : <normal, z - anchor> <= 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, anchor: Vec<f64>) -> Self {
        Self { normal, anchor }
    }

    pub fn offset(&self) -> f64 {
        dot(&self.normal, &self.anchor)
    }

    /// Signed value `<normal, z - anchor>`.
    pub fn slack(&self, z: &[f64]) -> f64 {
        dot(&self.normal, z) - self.offset()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.slack(z) <= tol
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let excess = self.slack(z);
        let nn = dot(&self.normal, &self.normal);
        if excess <= 0.0 || nn == 0.0 {
            return z.to_vec();
        }
        let step = excess / nn;
        z.iter().zip(&self.normal).map(|(zi, gi)| zi - step * gi).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Projection onto `{z in [0,1]^I : sum_i m_i z_i = s}` by bisection on the
/// hyperplane multiplier, followed by an exact solve on the final active set.
pub fn project_box_hyperplane(point: &[f64], m: &[f64], s: f64) -> Result<Vec<f64>> {
    if point.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: point.len(),
        });
    }
    if let Some(w) = m.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Domain(format!("projection weight {w} must be positive")));
    }
    let total: f64 = m.iter().sum();
    let tol = HYPERPLANE_TOL * total.max(1.0);
    if !(s >= -tol && s <= total + tol) {
        return Err(Error::Infeasible(format!(
            "hyperplane level {s} outside [0, {total}]"
        )));
    }
    let s = s.clamp(0.0, total);

    let at = |lambda: f64| -> f64 { point.iter().zip(m).map(|(p, w)| w * clip01(p + lambda * w)).sum() };

    let mut lo = point.iter().zip(m).map(|(p, w)| -p / w).fold(f64::INFINITY, f64::min);
    let mut hi = point.iter().zip(m).map(|(p, w)| (1.0 - p) / w).fold(f64::NEG_INFINITY, f64::max);
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..BISECTION_ROUNDS {
        lambda = 0.5 * (lo + hi);
        if lambda <= lo || lambda >= hi {
            break;
        }
        // The level is piecewise linear in lambda; once the clipping pattern
        // at the midpoint is the final one, the exact solve ends the search.
        if let Some(exact) = polish_multiplier(point, m, s, lambda) {
            lambda = exact;
            break;
        }
        let level = at(lambda);
        if level == s {
            break;
        }
        if level < s {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    if at(lambda) != s {
        lambda = polish_multiplier(point, m, s, lambda).unwrap_or(lambda);
    }
    Ok(point.iter().zip(m).map(|(p, w)| clip01(p + lambda * w)).collect())
}

/// Solve for the multiplier exactly given the clipping pattern at `lambda`;
/// returns `None` if the exact multiplier changes that pattern.
fn polish_multiplier(point: &[f64], m: &[f64], s: f64, lambda: f64) -> Option<f64> {
    let mut fixed = 0.0;
    let mut free_mass = 0.0;
    let mut free_sq = 0.0;
    let mut pattern = Vec::with_capacity(m.len());
    for (p, w) in point.iter().zip(m) {
        let v = p + lambda * w;
        if v <= 0.0 {
            pattern.push(0i8);
        } else if v >= 1.0 {
            fixed += w;
            pattern.push(1);
        } else {
            free_mass += w * p;
            free_sq += w * w;
            pattern.push(-1);
        }
    }
    if free_sq == 0.0 {
        return None;
    }
    let exact = (s - fixed - free_mass) / free_sq;
    let consistent = point.iter().zip(m).zip(&pattern).all(|((p, w), &state)| {
        let v = p + exact * w;
        match state {
            0 => v <= 0.0,
            1 => v >= 1.0,
            _ => (0.0..=1.0).contains(&v),
        }
    });
    consistent.then_some(exact)
}

/// Projection onto the slot feasible set.
pub fn project_feasible(point: &[f64], set: &FeasibleSet) -> Result<Vec<f64>> {
    if !set.is_feasible() {
        return Err(Error::Infeasible(format!(
            "empty slot set: S = {:.6}, demand {}, population {}",
            set.rhs(),
            set.d_total,
            set.population()
        )));
    }
    project_box_hyperplane(point, &set.weights(), set.rhs())
}

/// Projection onto the slot feasible set cut by a halfspace.
///
/// With `z(k) = P(point - k g)` the projection onto box and hyperplane, the
/// cut level `<g, z(k)>` is nonincreasing in the cut multiplier `k >= 0`, and
/// the answer is `z(k*)` at the smallest `k*` that satisfies the cut. `k*` is
/// bracketed by doubling and then bisected, so degenerate cuts (nearly
/// parallel to the hyperplane, or touching the set at a vertex) cost no more
/// than generic ones.
pub fn project_intersection(point: &[f64], set: &FeasibleSet, half: &Halfspace) -> Result<Vec<f64>> {
    if half.normal.len() != point.len() {
        return Err(Error::LengthMismatch {
            expected: point.len(),
            got: half.normal.len(),
        });
    }
    let base = project_feasible(point, set)?;
    let g = &half.normal;
    let scale = dot(g, g).sqrt() * (1.0 + dot(point, point).sqrt() + dot(&half.anchor, &half.anchor).sqrt());
    let inside = CUT_TOL * scale;
    if half.slack(&base) <= 0.0 {
        return Ok(base);
    }
    let weights = set.weights();
    let level = set.rhs();
    let at = |kappa: f64| -> Result<Vec<f64>> {
        let shifted: Vec<f64> = point.iter().zip(g).map(|(p, gi)| p - kappa * gi).collect();
        project_box_hyperplane(&shifted, &weights, level)
    };

    let mut lo = 0.0;
    let mut slack_lo = half.slack(&base);
    let mut hi = 1.0 / dot(g, g).max(f64::MIN_POSITIVE);
    let mut z_hi = at(hi)?;
    let mut slack_hi = half.slack(&z_hi);
    let mut doublings = 0;
    while slack_hi > 0.0 {
        lo = hi;
        slack_lo = slack_hi;
        hi *= 2.0;
        let z = at(hi)?;
        let stalled = dist(&z, &z_hi) == 0.0;
        z_hi = z;
        slack_hi = half.slack(&z_hi);
        if stalled && slack_hi <= inside {
            // The set does not move along the cut normal; the slack is rounding.
            return Ok(z_hi);
        }
        doublings += 1;
        if doublings > 1_100 {
            return Err(Error::Infeasible("halfspace misses the slot feasible set".into()));
        }
    }

    // Illinois false position on the piecewise linear, nonincreasing slack,
    // falling back to bisection if it stalls.
    let mut side = 0i8;
    let mut true_hi = slack_hi;
    for round in 0..CUT_BISECTION_ROUNDS {
        if true_hi == 0.0 {
            break;
        }
        let mut kappa = 0.5 * (lo + hi);
        if round < ILLINOIS_ROUNDS {
            let secant = hi - slack_hi * (hi - lo) / (slack_hi - slack_lo);
            if secant > lo && secant < hi {
                kappa = secant;
            }
        }
        if kappa <= lo || kappa >= hi {
            break;
        }
        let z = at(kappa)?;
        let value = half.slack(&z);
        if value > 0.0 {
            lo = kappa;
            slack_lo = value;
            if side == -1 {
                slack_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = kappa;
            z_hi = z;
            slack_hi = value;
            true_hi = value;
            if side == 1 {
                slack_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(z_hi)
}

/// Dykstra's alternating projections between box-and-hyperplane and the
/// halfspace. Converges for any nonempty intersection but only sublinearly
/// when the cut is nearly parallel to the hyperplane; kept as an
/// independent route to [`project_intersection`].
pub fn project_intersection_dykstra(point: &[f64], set: &FeasibleSet, half: &Halfspace) -> Result<Vec<f64>> {
    if half.normal.len() != point.len() {
        return Err(Error::LengthMismatch {
            expected: point.len(),
            got: half.normal.len(),
        });
    }
    if !set.is_feasible() {
        return project_feasible(point, set);
    }
    let weights = set.weights();
    let level = set.rhs();
    let n = point.len();
    let mut x = point.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..DYKSTRA_MAX_ROUNDS {
        let shifted: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = project_box_hyperplane(&shifted, &weights, level)?;
        for i in 0..n {
            p[i] = shifted[i] - y[i];
        }
        let shifted: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next = half.project(&shifted);
        for i in 0..n {
            q[i] = shifted[i] - next[i];
        }
        let moved = dist(&next, &x);
        let gap = dist(&next, &y);
        x = next;
        if moved < DYKSTRA_TOL && gap < DYKSTRA_TOL {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        what: "Dykstra projection",
        iterations: DYKSTRA_MAX_ROUNDS,
    })
}
