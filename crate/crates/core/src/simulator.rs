//! Day-long fleet simulation under joint transport/charging scheduling
//! (JTCS) or the greedy-charging baseline (TGC).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charging::{schedule_charging, ChargingPlan, DayAheadInputs};
use crate::error::{Error, Result};
use crate::model::{GameParams, PriceCurve, PvGroup, PvStatus};
use crate::network::{RegionMap, RoadGraph, StationSet};
use crate::transport::{dry_run_demand, group_census, TransportState, TripRequest, Vehicle};
use crate::vi::{kkt_verify, solve_slot, SspmTrace};

/// Energy given to every vehicle in the day-ahead dry run, so no route is
/// ever refused for lack of charge.
const UNLIMITED_KWH: f64 = 1e9;
/// Rounding guard when converting `m x` to a vehicle count.
const CEIL_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Jtcs,
    Tgc,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Jtcs => "jtcs",
            Mode::Tgc => "tgc",
        }
    }
}

#[derive(Debug)]
pub struct Scenario {
    pub graph: RoadGraph,
    pub stations: StationSet,
    pub regions: RegionMap,
    /// Sorted by request time, then id.
    pub requests: Vec<TripRequest>,
    pub prices: PriceCurve,
    pub params: GameParams,
    pub seed: u64,
    /// Epoch seconds at the start of slot 0.
    pub start_time: i64,
    pub slots: usize,
    pub initial_energy: Vec<f64>,
    pub initial_nodes: Vec<u64>,
    pub batch_minutes: f64,
    /// Replaces the initial fleet energy on the right of the terminal constraint.
    pub terminal_reserve_kwh: Option<f64>,
    /// Carry unmet planned charging into the next slot.
    pub rollover_shortfall: bool,
}

impl Scenario {
    /// Fleet of `params.fleet_size` vehicles on random nodes with energy
    /// drawn uniformly from `energy_range`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: RoadGraph,
        stations: StationSet,
        regions: RegionMap,
        mut requests: Vec<TripRequest>,
        prices: PriceCurve,
        params: GameParams,
        seed: u64,
        start_time: i64,
        slots: usize,
        energy_range: (f64, f64),
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial_energy = (0..params.fleet_size)
            .map(|_| rng.gen_range(energy_range.0..=energy_range.1))
            .collect();
        let nodes = graph.nodes();
        let initial_nodes = (0..params.fleet_size)
            .map(|_| nodes[rng.gen_range(0..nodes.len())].id)
            .collect();
        requests.sort_by_key(|r| (r.request_time, r.id));
        let scenario = Self {
            graph,
            stations,
            regions,
            requests,
            prices,
            params,
            seed,
            start_time,
            slots,
            initial_energy,
            initial_nodes,
            batch_minutes: 5.0,
            terminal_reserve_kwh: None,
            rollover_shortfall: false,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn slot_seconds(&self) -> f64 {
        self.params.slot_hours * 3600.0
    }

    pub fn slot_window(&self, t: usize) -> (f64, f64) {
        let start = self.start_time as f64 + t as f64 * self.slot_seconds();
        (start, start + self.slot_seconds())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.slots == 0 {
            return Err(Error::InvalidParams("scenario has no slots".into()));
        }
        if self.prices.len() < self.slots {
            return Err(Error::LengthMismatch {
                expected: self.slots,
                got: self.prices.len(),
            });
        }
        for list in [self.initial_energy.len(), self.initial_nodes.len()] {
            if list != self.params.fleet_size {
                return Err(Error::LengthMismatch {
                    expected: self.params.fleet_size,
                    got: list,
                });
            }
        }
        if let Some(e) = self.initial_energy.iter().find(|e| !(**e >= 0.0 && **e <= self.params.c)) {
            return Err(Error::InvalidParams(format!("initial energy {e} outside [0, c]")));
        }
        for &n in &self.initial_nodes {
            self.graph.node(n)?;
        }
        if self.requests.windows(2).any(|w| (w[0].request_time, w[0].id) > (w[1].request_time, w[1].id)) {
            return Err(Error::InvalidParams("requests are not sorted by time".into()));
        }
        let (first, _) = self.slot_window(0);
        let (_, last) = self.slot_window(self.slots - 1);
        for r in &self.requests {
            r.validate()?;
            self.graph.node(r.origin)?;
            self.graph.node(r.destination)?;
            let t = r.request_time as f64;
            if t < first || t >= last {
                return Err(Error::InvalidParams(format!(
                    "request {} at {} falls outside the simulated day",
                    r.id, r.request_time
                )));
            }
        }
        if !(self.batch_minutes > 0.0) {
            return Err(Error::InvalidParams("batch_minutes must be positive".into()));
        }
        Ok(())
    }

    fn initial_state(&self) -> TransportState {
        let fleet = (0..self.params.fleet_size)
            .map(|k| Vehicle::new(k as u32, self.initial_nodes[k], self.initial_energy[k], self.start_time as f64))
            .collect();
        TransportState::new(fleet)
    }
}

/// Realized per-slot energy flows of the fleet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Fleet energy at each slot boundary (`T + 1` entries).
    pub remaining: Vec<f64>,
    pub consumed: Vec<f64>,
    pub charged: Vec<f64>,
    pub payment: Vec<f64>,
}

impl EnergyLedger {
    /// Largest `|Eʳ_{t+1} - (Eʳ_t - E⁻_t + E⁺_t)|`.
    pub fn max_gap(&self) -> f64 {
        (0..self.consumed.len())
            .map(|t| (self.remaining[t + 1] - (self.remaining[t] - self.consumed[t] + self.charged[t])).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub price: f64,
    pub transport_pvs: usize,
    pub charging_pvs: usize,
    pub consumed_kwh: f64,
    pub charged_kwh: f64,
    pub payment_cents: f64,
    /// Fleet energy at the end of the slot.
    pub fleet_energy_kwh: f64,
    /// Trips completed in the slot.
    pub served: usize,
    /// Requests still unassigned at the end of the slot.
    pub waiting: usize,
    /// Planned charging for the slot (JTCS).
    pub planned_kwh: Option<f64>,
    /// Planned charging after clamping to what the groups can absorb (JTCS).
    pub granted_kwh: Option<f64>,
    pub vi_iterations: Option<usize>,
    pub kkt_residual: Option<f64>,
}

/// Invariant counters collected during a run; all zero on a healthy run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub energy_out_of_bounds: usize,
    pub full_pv_charged: usize,
    pub transported_and_charged: usize,
    pub strategy_violations: usize,
    pub dry_run_hash_mismatches: usize,
    /// Charging vehicles that could not reach a station and stayed idle.
    pub stranded: usize,
    pub ledger_max_gap: f64,
    /// Largest `|Σ per-vehicle energy - ledger|` over slot boundaries.
    pub fleet_sum_max_gap: f64,
    pub min_energy_kwh: f64,
    pub max_energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub fleet_size: usize,
    pub slots: Vec<SlotMetrics>,
    pub total_charged_kwh: f64,
    pub total_payment_cents: f64,
    /// Payment over charged energy; absent when nothing was charged.
    pub average_price: Option<f64>,
    pub served: usize,
    pub waiting: usize,
    pub requests: usize,
    pub mean_trip_minutes: Option<f64>,
    pub ledger: EnergyLedger,
    pub audit: Audit,
    pub charging_plan: Option<ChargingPlan>,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-slot table behind the energy and payment plots.
    pub fn write_slots_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "slot",
            "transport_pvs",
            "consumed_kwh",
            "charged_kwh",
            "payment_cents",
            "fleet_energy_kwh",
            "served",
            "waiting",
        ])?;
        for s in &self.slots {
            w.write_record([
                s.slot.to_string(),
                s.transport_pvs.to_string(),
                s.consumed_kwh.to_string(),
                s.charged_kwh.to_string(),
                s.payment_cents.to_string(),
                s.fleet_energy_kwh.to_string(),
                s.served.to_string(),
                s.waiting.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("slot metrics", e))?;
        Ok(())
    }
}

/// Summary plus the artefacts some callers export.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub day_ahead: Option<(DayAheadInputs, ChargingPlan)>,
    pub vi_traces: Vec<(usize, SspmTrace)>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_vi_traces: bool,
}

/// Vehicles with at least one slot's worth of driving energy.
pub fn eligibility_filter(fleet: &[Vehicle], params: &GameParams) -> Vec<bool> {
    let need = params.slot_consumption();
    fleet.iter().map(|v| v.pv.energy >= need).collect()
}

/// `(φ, ψ)` with `φ = ⌈m x⌉` transporting and `ψ = m - φ` charging.
pub fn split_group(m: u32, x: f64) -> (u32, u32) {
    let phi = ((f64::from(m) * x - CEIL_GUARD).ceil().max(0.0) as u32).min(m);
    (phi, m - phi)
}

/// Activities chosen for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// Vehicles that may take requests.
    pub pool: Vec<bool>,
    /// Vehicles sent to charge.
    pub charging: Vec<bool>,
    /// Per group: `(region, φ)` caps on transporting unfully charged vehicles.
    pub phi: Vec<(usize, u32)>,
    pub planned_kwh: Option<f64>,
    pub granted_kwh: Option<f64>,
    pub vi_iterations: Option<usize>,
    pub kkt_residual: Option<f64>,
}

pub struct Simulation<'a> {
    scenario: &'a Scenario,
    pub state: TransportState,
    pub ledger: EnergyLedger,
    pub audit: Audit,
    pub metrics: Vec<SlotMetrics>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let state = scenario.initial_state();
        let start: f64 = state.fleet.iter().map(|v| v.pv.energy).sum();
        Self {
            scenario,
            state,
            ledger: EnergyLedger {
                remaining: vec![start],
                ..EnergyLedger::default()
            },
            audit: Audit {
                min_energy_kwh: f64::INFINITY,
                max_energy_kwh: f64::NEG_INFINITY,
                ..Audit::default()
            },
            metrics: Vec::new(),
        }
    }

    fn fleet_energy(&self) -> f64 {
        self.state.fleet.iter().map(|v| v.pv.energy).sum()
    }

    fn census(&self) -> Result<Vec<PvGroup>> {
        group_census(&self.state.fleet, &self.scenario.regions, &self.scenario.params)
    }

    fn demand(&mut self, t: usize, pool: &[bool], groups: &[PvGroup]) -> Result<crate::transport::DemandReport> {
        let sc = self.scenario;
        let before = self.state.state_hash();
        let report = dry_run_demand(
            &self.state,
            &sc.requests,
            pool,
            groups,
            sc.slot_window(t),
            sc.batch_minutes * 60.0,
            &sc.graph,
            &sc.regions,
            &sc.params,
        )?;
        if self.state.state_hash() != before {
            self.audit.dry_run_hash_mismatches += 1;
        }
        Ok(report)
    }

    /// Unfully charged vehicles of each region, most energy first.
    fn members_by_region(&self) -> Result<Vec<Vec<usize>>> {
        let p = &self.scenario.params;
        let mut members = vec![Vec::new(); self.scenario.regions.count()];
        for (k, v) in self.state.fleet.iter().enumerate() {
            if !p.is_fully_charged(v.pv.energy) {
                members[self.scenario.regions.region_of(v.pv.node)?].push(k);
            }
        }
        for list in &mut members {
            list.sort_by(|&a, &b| {
                let (va, vb) = (&self.state.fleet[a], &self.state.fleet[b]);
                vb.pv.energy.total_cmp(&va.pv.energy).then(va.pv.id.cmp(&vb.pv.id))
            });
        }
        Ok(members)
    }

    fn begin_slot(&mut self, t: usize) {
        let (start, _) = self.scenario.slot_window(t);
        for v in &mut self.state.fleet {
            v.clock = v.clock.max(start);
            v.pv.status = PvStatus::Idle;
        }
    }

    /// JTCS decision: solve the slot game for the planned charging energy
    /// and split each group into transporting and charging vehicles.
    pub fn decide_jtcs(&mut self, t: usize, planned_kwh: f64, trace: Option<&mut Vec<(usize, SspmTrace)>>) -> Result<SlotDecision> {
        let sc = self.scenario;
        let p = &sc.params;
        let eligible = eligibility_filter(&self.state.fleet, p);
        let mut groups = self.census()?;
        let dry = self.demand(t, &eligible, &groups)?;
        for (i, g) in groups.iter_mut().enumerate() {
            g.n = dry.n[i];
            g.d = dry.d[i].min(g.m);
        }
        let d_total: u32 = groups.iter().map(|g| g.d).sum();
        let price = sc.prices.at(t);
        let sol = solve_slot(&groups, planned_kwh, d_total, price, p)?;
        let active: Vec<PvGroup> = sol.players.iter().map(|&i| groups[i].clone()).collect();
        let x_active: Vec<f64> = sol.players.iter().map(|&i| sol.x[i]).collect();
        let kkt = if active.is_empty() {
            None
        } else {
            Some(kkt_verify(&x_active, &active, &sol.set, price, p).worst())
        };
        let iterations = sol.trace.iterations();
        if let Some(traces) = trace {
            traces.push((t, sol.trace.clone()));
        }

        let members = self.members_by_region()?;
        let n = self.state.fleet.len();
        let mut pool: Vec<bool> = self
            .state
            .fleet
            .iter()
            .zip(&eligible)
            .map(|(v, &ok)| ok && p.is_fully_charged(v.pv.energy))
            .collect();
        let mut charging = vec![false; n];
        let mut phi = Vec::new();
        for (i, g) in groups.iter().enumerate() {
            let (f_i, _) = split_group(g.m, sol.x[i]);
            phi.push((i, f_i));
            for (rank, &k) in members[i].iter().enumerate() {
                if rank < f_i as usize {
                    pool[k] = eligible[k];
                } else {
                    charging[k] = true;
                }
            }
        }
        Ok(SlotDecision {
            pool,
            charging,
            phi,
            planned_kwh: Some(planned_kwh),
            granted_kwh: Some(sol.clamp.granted),
            vi_iterations: Some(iterations),
            kkt_residual: kkt,
        })
    }

    /// TGC decision: whoever transports in the dry run transports; every
    /// other unfully charged vehicle charges.
    pub fn decide_tgc(&mut self, t: usize) -> Result<SlotDecision> {
        let p = &self.scenario.params;
        let eligible = eligibility_filter(&self.state.fleet, p);
        let groups = self.census()?;
        let dry = self.demand(t, &eligible, &groups)?;
        let full: Vec<bool> = self.state.fleet.iter().map(|v| p.is_fully_charged(v.pv.energy)).collect();
        let pool = (0..full.len()).map(|k| eligible[k] && (full[k] || dry.transported[k])).collect();
        let charging = (0..full.len()).map(|k| !full[k] && !dry.transported[k]).collect();
        Ok(SlotDecision {
            pool,
            charging,
            phi: Vec::new(),
            planned_kwh: None,
            granted_kwh: None,
            vi_iterations: None,
            kkt_residual: None,
        })
    }

    /// Execute one slot: charging trips, request service, bookkeeping.
    pub fn step_slot(&mut self, t: usize, decision: &SlotDecision) -> Result<SlotMetrics> {
        let sc = self.scenario;
        let p = &sc.params;
        let (start, end) = sc.slot_window(t);
        let e_start = self.fleet_energy();
        let served_before = self.state.completed.len();
        let mut consumed = 0.0;
        let mut charged = 0.0;
        let mut charging_pvs = 0;
        let mut charged_flag = vec![false; self.state.fleet.len()];

        for (k, v) in self.state.fleet.iter_mut().enumerate() {
            if !decision.charging[k] {
                continue;
            }
            if p.is_fully_charged(v.pv.energy) {
                self.audit.full_pv_charged += 1;
                continue;
            }
            let (station, km) = sc.graph.nearest_station(v.pv.node, &sc.stations)?;
            let km = km + v.lag_km;
            let need = km * p.consume_rate;
            if need > v.pv.energy {
                log::warn!("vehicle {} cannot reach a station in slot {t}; held idle", v.pv.id);
                self.audit.stranded += 1;
                continue;
            }
            v.pv.energy -= need;
            v.odometer_km += km;
            v.lag_km = 0.0;
            v.pv.node = station;
            v.pv.status = PvStatus::Charging;
            let gain = p.r.min(p.c - v.pv.energy).max(0.0);
            v.pv.energy += gain;
            v.clock = v.clock.max(start + km / p.speed * 3600.0);
            consumed += need;
            charged += gain;
            charging_pvs += 1;
            charged_flag[k] = true;
        }

        let report = self.state.serve_window(
            &sc.requests,
            &decision.pool,
            start,
            end,
            sc.batch_minutes * 60.0,
            &sc.graph,
            p,
        )?;
        let tail = self.state.finish_routes(&sc.graph, p)?;
        consumed += (report.km.iter().sum::<f64>() + tail.iter().sum::<f64>()) * p.consume_rate;

        let transported = &report.transported;
        for (k, _) in transported.iter().enumerate().filter(|(_, &busy)| busy) {
            if charged_flag[k] {
                self.audit.transported_and_charged += 1;
            }
            if !decision.pool[k] {
                self.audit.strategy_violations += 1;
            }
        }
        for v in &mut self.state.fleet {
            let e = v.pv.energy;
            self.audit.min_energy_kwh = self.audit.min_energy_kwh.min(e);
            self.audit.max_energy_kwh = self.audit.max_energy_kwh.max(e);
            if !(e >= -1e-9 && e <= p.c + 1e-9) {
                self.audit.energy_out_of_bounds += 1;
            }
            v.pv.status = PvStatus::Idle;
        }

        let e_end = self.fleet_energy();
        let price = sc.prices.at(t);
        let expected = e_start - consumed + charged;
        self.audit.fleet_sum_max_gap = self.audit.fleet_sum_max_gap.max((e_end - expected).abs());
        self.ledger.consumed.push(consumed);
        self.ledger.charged.push(charged);
        self.ledger.payment.push(price * charged);
        self.ledger.remaining.push(e_end);

        let metrics = SlotMetrics {
            slot: t,
            price,
            transport_pvs: transported.iter().filter(|&&b| b).count(),
            charging_pvs,
            consumed_kwh: consumed,
            charged_kwh: charged,
            payment_cents: price * charged,
            fleet_energy_kwh: e_end,
            served: self.state.completed.len() - served_before,
            waiting: self.state.pending.len(),
            planned_kwh: decision.planned_kwh,
            granted_kwh: decision.granted_kwh,
            vi_iterations: decision.vi_iterations,
            kkt_residual: decision.kkt_residual,
        };
        self.metrics.push(metrics.clone());
        Ok(metrics)
    }

    fn into_summary(self, mode: Mode, plan: Option<ChargingPlan>) -> RunSummary {
        let sc = self.scenario;
        let total_charged_kwh: f64 = self.ledger.charged.iter().sum();
        let total_payment_cents: f64 = self.ledger.payment.iter().sum();
        let trips = &self.state.completed;
        let mean_trip_minutes = if trips.is_empty() {
            None
        } else {
            Some(trips.iter().map(|t| t.trip_seconds()).sum::<f64>() / trips.len() as f64 / 60.0)
        };
        let mut audit = self.audit;
        audit.ledger_max_gap = self.ledger.max_gap();
        RunSummary {
            mode,
            seed: sc.seed,
            fleet_size: sc.params.fleet_size,
            slots: self.metrics,
            total_charged_kwh,
            total_payment_cents,
            average_price: (total_charged_kwh > 0.0).then(|| total_payment_cents / total_charged_kwh),
            served: trips.len(),
            waiting: self.state.pending.len() + (sc.requests.len() - self.state.next_arrival),
            requests: sc.requests.len(),
            mean_trip_minutes,
            ledger: self.ledger,
            audit,
            charging_plan: plan,
        }
    }
}

/// Serve the whole day with unlimited energy and every vehicle available;
/// returns per-slot consumed energy and transporting vehicle counts.
pub fn day_ahead_dry_run(scenario: &Scenario) -> Result<(Vec<f64>, Vec<u32>)> {
    let p = &scenario.params;
    let mut state = scenario.initial_state();
    for v in &mut state.fleet {
        v.pv.energy = UNLIMITED_KWH;
    }
    let pool = vec![true; state.fleet.len()];
    let mut consumed = Vec::with_capacity(scenario.slots);
    let mut counts = Vec::with_capacity(scenario.slots);
    for t in 0..scenario.slots {
        let (start, end) = scenario.slot_window(t);
        for v in &mut state.fleet {
            v.clock = v.clock.max(start);
        }
        let report = state.serve_window(
            &scenario.requests,
            &pool,
            start,
            end,
            scenario.batch_minutes * 60.0,
            &scenario.graph,
            p,
        )?;
        let tail = state.finish_routes(&scenario.graph, p)?;
        consumed.push((report.km.iter().sum::<f64>() + tail.iter().sum::<f64>()) * p.consume_rate);
        counts.push(report.transported.iter().filter(|&&b| b).count() as u32);
    }
    Ok((consumed, counts))
}

/// Day-ahead inputs for the charging plan of a scenario.
pub fn day_ahead_inputs(scenario: &Scenario) -> Result<DayAheadInputs> {
    let (consumed, demand_counts) = day_ahead_dry_run(scenario)?;
    Ok(DayAheadInputs {
        consumed,
        demand_counts,
        prices: PriceCurve::new(scenario.prices.prices[..scenario.slots].to_vec())?,
        e_init: scenario.initial_energy.iter().sum(),
        params: scenario.params.clone(),
        terminal_reserve_kwh: scenario.terminal_reserve_kwh,
    })
}

pub fn run_jtcs(scenario: &Scenario, options: RunOptions) -> Result<RunOutput> {
    scenario.validate()?;
    let inputs = day_ahead_inputs(scenario)?;
    let plan = schedule_charging(&inputs)?;
    let mut sim = Simulation::new(scenario);
    let mut traces = Vec::new();
    let mut carry = 0.0;
    for t in 0..scenario.slots {
        sim.begin_slot(t);
        let planned = plan.e_plus[t] + carry;
        let decision = sim.decide_jtcs(t, planned, options.keep_vi_traces.then_some(&mut traces))?;
        let granted = decision.granted_kwh.unwrap_or(planned);
        if granted < planned - 1e-9 {
            log::info!("slot {t}: planned {planned:.3} kwh, groups can absorb {granted:.3} kwh");
        }
        check_strategy(&mut sim, &decision);
        let m = sim.step_slot(t, &decision)?;
        if scenario.rollover_shortfall {
            carry = (planned - m.charged_kwh).max(0.0);
        }
    }
    let summary = sim.into_summary(Mode::Jtcs, Some(plan.clone()));
    Ok(RunOutput {
        summary,
        day_ahead: Some((inputs, plan)),
        vi_traces: traces,
    })
}

/// Count decisions whose group split disagrees with `(φ, ψ)`.
fn check_strategy(sim: &mut Simulation<'_>, decision: &SlotDecision) {
    let Ok(members) = sim.members_by_region() else { return };
    for &(i, phi) in &decision.phi {
        let m = members[i].len() as u32;
        let in_pool = members[i].iter().filter(|&&k| decision.pool[k]).count() as u32;
        let charging = members[i].iter().filter(|&&k| decision.charging[k]).count() as u32;
        if in_pool > phi || charging != m - phi.min(m) {
            sim.audit.strategy_violations += 1;
        }
    }
}

pub fn run_tgc(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let mut sim = Simulation::new(scenario);
    for t in 0..scenario.slots {
        sim.begin_slot(t);
        let decision = sim.decide_tgc(t)?;
        sim.step_slot(t, &decision)?;
    }
    Ok(RunOutput {
        summary: sim.into_summary(Mode::Tgc, None),
        day_ahead: None,
        vi_traces: Vec::new(),
    })
}

pub fn run(scenario: &Scenario, mode: Mode, options: RunOptions) -> Result<RunOutput> {
    match mode {
        Mode::Jtcs => run_jtcs(scenario, options),
        Mode::Tgc => run_tgc(scenario),
    }
}
