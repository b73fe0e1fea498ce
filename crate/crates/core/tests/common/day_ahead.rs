//! Reference checks for the day-ahead charging plan, built straight from the
//! inputs rather than from the library's LP.

use pvjtcs::charging::{ChargingPlan, DayAheadInputs};
use pvjtcs::model::{GameParams, PriceCurve};
use rand::Rng;

use super::solve_dense;

struct Rows {
    /// `a x <= b`
    le: Vec<(Vec<f64>, f64)>,
    /// `a x = b`
    eq: Vec<(Vec<f64>, f64)>,
}

/// Variables: `E⁺_0..E⁺_{T-1}`, then `Eʳ_1..Eʳ_{T-1}`.
fn rows(inputs: &DayAheadInputs) -> Rows {
    let t_len = inputs.consumed.len();
    let n = 2 * t_len - 1;
    let p = &inputs.params;
    let j = p.fleet_size as f64;
    let er = |t: usize| t_len + t - 1;
    let unit = |k: usize, v: f64| {
        let mut a = vec![0.0; n];
        a[k] = v;
        a
    };
    let mut le = Vec::new();
    let mut eq = Vec::new();
    for t in 0..t_len - 1 {
        // Eʳ_{t+1} - Eʳ_t - E⁺_t = -E⁻_t
        let mut a = unit(er(t + 1), 1.0);
        a[t] = -1.0;
        let mut b = -inputs.consumed[t];
        if t == 0 {
            b += inputs.e_init;
        } else {
            a[er(t)] = -1.0;
        }
        eq.push((a, b));
    }
    for t in 1..t_len {
        let need = (1.0 + p.rho) * inputs.consumed[t].max(j * p.e_min);
        le.push((unit(er(t), -1.0), -need));
        le.push((unit(er(t), 1.0), j * p.c));
        le.push((unit(er(t), -1.0), 0.0));
    }
    let target = inputs.terminal_reserve_kwh.unwrap_or(inputs.e_init);
    let last = t_len - 1;
    let mut a = unit(last, -1.0);
    let mut b = -inputs.consumed[last] - target;
    if last == 0 {
        b += inputs.e_init;
    } else {
        a[er(last)] = -1.0;
    }
    le.push((a, b));
    for t in 0..t_len {
        let cap = (j - f64::from(inputs.demand_counts[t])) * p.r;
        le.push((unit(t, 1.0), cap));
        le.push((unit(t, -1.0), 0.0));
    }
    Rows { le, eq }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = combinations(n - 1, k);
    for mut c in combinations(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Minimum cost over all basic feasible solutions, with the argmin.
pub fn vertex_oracle(inputs: &DayAheadInputs) -> Option<(f64, Vec<f64>)> {
    let t_len = inputs.consumed.len();
    let n = 2 * t_len - 1;
    let rows = rows(inputs);
    let cost: Vec<f64> = (0..n).map(|k| if k < t_len { inputs.prices.prices[k] } else { 0.0 }).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for pick in combinations(rows.le.len(), n - rows.eq.len()) {
        let mut a: Vec<Vec<f64>> = rows.eq.iter().map(|r| r.0.clone()).collect();
        let mut b: Vec<f64> = rows.eq.iter().map(|r| r.1).collect();
        for &k in &pick {
            a.push(rows.le[k].0.clone());
            b.push(rows.le[k].1);
        }
        let Some(x) = solve_dense(a, b) else { continue };
        let ok = rows.le.iter().all(|(a, b)| super::dot(a, &x) <= b + 1e-9)
            && rows.eq.iter().all(|(a, b)| (super::dot(a, &x) - b).abs() <= 1e-9);
        if ok {
            let value = super::dot(&cost, &x);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, x));
            }
        }
    }
    best
}

/// Worst violation of the plan against every constraint family, plus the
/// worst recursion gap reported separately.
pub fn plan_violation(inputs: &DayAheadInputs, plan: &ChargingPlan) -> (f64, f64) {
    let t_len = inputs.consumed.len();
    let p = &inputs.params;
    let j = p.fleet_size as f64;
    let mut worst = 0.0f64;
    let mut recursion = 0.0f64;
    if (plan.e_remaining[0] - inputs.e_init).abs() > 0.0 {
        recursion = recursion.max((plan.e_remaining[0] - inputs.e_init).abs());
    }
    for t in 0..t_len {
        let next = if t + 1 < t_len { plan.e_remaining[t + 1] } else { plan.e_final };
        recursion = recursion.max((next - (plan.e_remaining[t] - inputs.consumed[t] + plan.e_plus[t])).abs());
        let cap = (j - f64::from(inputs.demand_counts[t])) * p.r;
        worst = worst.max(-plan.e_plus[t]).max(plan.e_plus[t] - cap);
        if t >= 1 {
            let need = (1.0 + p.rho) * inputs.consumed[t].max(j * p.e_min);
            worst = worst.max(need - plan.e_remaining[t]);
            worst = worst.max(plan.e_remaining[t] - j * p.c).max(-plan.e_remaining[t]);
        }
    }
    let target = inputs.terminal_reserve_kwh.unwrap_or(inputs.e_init);
    worst = worst.max(target - plan.e_final);
    let cost: f64 = plan.e_plus.iter().zip(&inputs.prices.prices).map(|(e, p)| e * p).sum();
    worst = worst.max((cost - plan.cost).abs());
    (worst, recursion)
}

/// Charge every slot as much as the cap and fleet capacity allow.
pub fn greedy_plan(inputs: &DayAheadInputs) -> ChargingPlan {
    let p = &inputs.params;
    let j = p.fleet_size as f64;
    let mut level = inputs.e_init;
    let mut e_plus = Vec::new();
    let mut e_remaining = Vec::new();
    for t in 0..inputs.consumed.len() {
        e_remaining.push(level);
        let cap = (j - f64::from(inputs.demand_counts[t])) * p.r;
        let room = j * p.c - (level - inputs.consumed[t]);
        let charge = cap.min(room).max(0.0);
        e_plus.push(charge);
        level = level - inputs.consumed[t] + charge;
    }
    let cost = e_plus.iter().zip(&inputs.prices.prices).map(|(e, p)| e * p).sum();
    ChargingPlan {
        e_plus,
        e_remaining,
        e_final: level,
        cost,
    }
}

/// Small random day: `T <= 4`, `J <= 3`.
pub fn random_day(rng: &mut impl Rng) -> DayAheadInputs {
    let t_len = rng.gen_range(1..=4);
    let fleet = rng.gen_range(1..=3usize);
    let c = rng.gen_range(10.0..=45.0);
    let params = GameParams {
        fleet_size: fleet,
        c,
        r: rng.gen_range(1.0..=c / 3.0),
        e_min: rng.gen_range(0.0..=3.0),
        ..GameParams::default()
    };
    let j = fleet as f64;
    let consumed = (0..t_len).map(|_| rng.gen_range(0.0..=0.6 * j * params.r)).collect();
    let demand_counts = (0..t_len).map(|_| rng.gen_range(0..=fleet as u32)).collect();
    let prices = PriceCurve::new((0..t_len).map(|_| rng.gen_range(1.0..=10.0)).collect()).unwrap();
    DayAheadInputs {
        consumed,
        demand_counts,
        prices,
        e_init: rng.gen_range(0.3..=0.9) * j * c,
        params,
        terminal_reserve_kwh: None,
    }
}
