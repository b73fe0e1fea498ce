//! Day-ahead fleet charging plan: a cost-minimising LP over per-slot charged
//! energy, subject to the energy recursion, reserves and capacity limits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpSolution, Relation};
use crate::model::{GameParams, PriceCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayAheadInputs {
    /// `E⁻_t`, fleet energy consumed per slot in the infinite-energy dry run.
    pub consumed: Vec<f64>,
    /// `d_t`, vehicles transporting per slot in the same run.
    pub demand_counts: Vec<u32>,
    pub prices: PriceCurve,
    /// `Eʳ_0`.
    pub e_init: f64,
    pub params: GameParams,
    /// Right side of the terminal constraint; `e_init` when unset.
    #[serde(default)]
    pub terminal_reserve_kwh: Option<f64>,
}

impl DayAheadInputs {
    pub fn slots(&self) -> usize {
        self.consumed.len()
    }

    pub fn fleet_capacity(&self) -> f64 {
        self.params.fleet_size as f64 * self.params.c
    }

    /// `(1 + rho) max(E⁻_t, J e_min)`.
    pub fn reserve(&self, t: usize) -> f64 {
        let floor = self.params.fleet_size as f64 * self.params.e_min;
        (1.0 + self.params.rho) * self.consumed[t].max(floor)
    }

    /// `(J - d_t) r`.
    pub fn charge_cap(&self, t: usize) -> f64 {
        let idle = (self.params.fleet_size as f64 - f64::from(self.demand_counts[t])).max(0.0);
        idle * self.params.r
    }

    pub fn terminal_target(&self) -> f64 {
        self.terminal_reserve_kwh.unwrap_or(self.e_init)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let t = self.slots();
        if t == 0 {
            return Err(Error::InvalidParams("day-ahead horizon is empty".into()));
        }
        for len in [self.demand_counts.len(), self.prices.len()] {
            if len != t {
                return Err(Error::LengthMismatch { expected: t, got: len });
            }
        }
        if let Some(v) = self.consumed.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParams(format!("consumed energy {v} is negative")));
        }
        if let Some(d) = self.demand_counts.iter().find(|&&d| d as usize > self.params.fleet_size) {
            return Err(Error::InvalidParams(format!(
                "demand {d} exceeds fleet size {}",
                self.params.fleet_size
            )));
        }
        if !(self.e_init >= 0.0 && self.e_init <= self.fleet_capacity()) {
            return Err(Error::InvalidParams(format!(
                "initial energy {} outside [0, {}]",
                self.e_init,
                self.fleet_capacity()
            )));
        }
        if let Some(v) = self.terminal_reserve_kwh {
            if !(v >= 0.0) {
                return Err(Error::InvalidParams(format!("terminal reserve {v} is negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingPlan {
    pub e_plus: Vec<f64>,
    /// `Eʳ_t` at the start of each slot; entry 0 is the initial energy.
    pub e_remaining: Vec<f64>,
    /// Energy left after the last slot.
    pub e_final: f64,
    pub cost: f64,
}

impl ChargingPlan {
    pub fn write_csv<W: Write>(&self, inputs: &DayAheadInputs, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "price", "E_minus", "E_plus", "E_remaining"])?;
        for t in 0..self.e_plus.len() {
            w.write_record([
                t.to_string(),
                inputs.prices.at(t).to_string(),
                inputs.consumed[t].to_string(),
                self.e_plus[t].to_string(),
                self.e_remaining[t].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("charging plan", e))?;
        Ok(())
    }
}

/// Column of `E⁺_t`.
pub fn e_plus_index(t: usize) -> usize {
    t
}

/// Column of `Eʳ_t` for `t >= 1`.
pub fn e_remaining_index(slots: usize, t: usize) -> usize {
    debug_assert!(t >= 1 && t < slots);
    slots + t - 1
}

/// Variables `E⁺_0..E⁺_{T-1}` then `Eʳ_1..Eʳ_{T-1}`.
pub fn build_lp(inputs: &DayAheadInputs) -> LinearProgram {
    let t_len = inputs.slots();
    let n = 2 * t_len - 1;
    let mut objective = vec![0.0; n];
    for t in 0..t_len {
        objective[e_plus_index(t)] = inputs.prices.at(t);
    }
    let mut lp = LinearProgram::new(objective);
    for t in 0..t_len {
        lp.names[e_plus_index(t)] = format!("E_plus_{t}");
    }
    for t in 1..t_len {
        lp.names[e_remaining_index(t_len, t)] = format!("E_remaining_{t}");
    }

    // Recursion, with the fixed Eʳ_0 moved to the right side.
    for t in 0..t_len - 1 {
        let mut terms = vec![(e_remaining_index(t_len, t + 1), 1.0), (e_plus_index(t), -1.0)];
        let mut rhs = -inputs.consumed[t];
        if t == 0 {
            rhs += inputs.e_init;
        } else {
            terms.push((e_remaining_index(t_len, t), -1.0));
        }
        lp.add_sparse(&terms, Relation::Eq, rhs);
    }
    for t in 1..t_len {
        lp.add_sparse(&[(e_remaining_index(t_len, t), 1.0)], Relation::Ge, inputs.reserve(t));
    }
    // Terminal: Eʳ_{T-1} - E⁻_{T-1} + E⁺_{T-1} >= target.
    let last = t_len - 1;
    let mut terms = vec![(e_plus_index(last), 1.0)];
    let mut rhs = inputs.terminal_target() + inputs.consumed[last];
    if last == 0 {
        rhs -= inputs.e_init;
    } else {
        terms.push((e_remaining_index(t_len, last), 1.0));
    }
    lp.add_sparse(&terms, Relation::Ge, rhs);
    for t in 0..t_len {
        lp.add_sparse(&[(e_plus_index(t), 1.0)], Relation::Le, inputs.charge_cap(t));
    }
    for t in 1..t_len {
        lp.add_sparse(&[(e_remaining_index(t_len, t), 1.0)], Relation::Le, inputs.fleet_capacity());
    }
    lp
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp::solve(lp)
}

/// Build, solve, and unpack the day-ahead plan.
pub fn schedule_charging(inputs: &DayAheadInputs) -> Result<ChargingPlan> {
    inputs.validate()?;
    let lp = build_lp(inputs);
    let sol = match solve_lp(&lp) {
        Ok(sol) => sol,
        Err(Error::LpInfeasible { residual }) => {
            return Err(Error::Infeasible(format!(
                "{} (phase-1 residual {residual:.3e})",
                diagnose(inputs)
            )))
        }
        Err(e) => return Err(e),
    };
    let t_len = inputs.slots();
    let e_plus: Vec<f64> = (0..t_len).map(|t| sol.x[e_plus_index(t)]).collect();
    // Rebuild the remaining energy from the recursion so it holds exactly.
    let mut e_remaining = Vec::with_capacity(t_len);
    let mut level = inputs.e_init;
    for (used, added) in inputs.consumed.iter().zip(&e_plus) {
        e_remaining.push(level);
        level = level - used + added;
    }
    let cost = e_plus.iter().enumerate().map(|(t, e)| inputs.prices.at(t) * e).sum();
    log::debug!("charging LP solved in {} pivots, cost {cost:.4}", sol.pivots);
    Ok(ChargingPlan {
        e_plus,
        e_remaining,
        e_final: level,
        cost,
    })
}

/// Name the first constraint that fails even when every slot charges as much
/// as capacity allows.
fn diagnose(inputs: &DayAheadInputs) -> String {
    let cap = inputs.fleet_capacity();
    let mut level = inputs.e_init;
    for t in 0..inputs.slots() {
        if t >= 1 && level < inputs.reserve(t) {
            return format!(
                "slot {t} reserve of {:.3} kWh exceeds the attainable {:.3} kWh",
                inputs.reserve(t),
                level
            );
        }
        let next = level - inputs.consumed[t] + inputs.charge_cap(t);
        level = if t + 1 < inputs.slots() { next.min(cap) } else { next };
        if t + 1 < inputs.slots() && level < 0.0 {
            return format!("fleet energy runs out during slot {t}");
        }
    }
    if level < inputs.terminal_target() {
        return format!(
            "terminal energy {:.3} kWh cannot reach the target {:.3} kWh",
            level,
            inputs.terminal_target()
        );
    }
    "charging constraints are jointly infeasible".into()
}
