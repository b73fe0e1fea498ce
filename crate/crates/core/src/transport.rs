//! Ride matching by cheapest feasible insertion, vehicle movement along
//! shortest paths, and the per-slot dry run that measures transport demand.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameParams, PvGroup, PvState, PvStatus};
use crate::network::{RegionMap, RoadGraph};

/// Slack on the detour and energy comparisons.
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: u64,
    /// Epoch seconds.
    pub request_time: i64,
    pub earliest_start: i64,
    pub origin: u64,
    pub destination: u64,
    pub passengers: u32,
}

impl TripRequest {
    pub fn validate(&self) -> Result<()> {
        if self.passengers == 0 {
            return Err(Error::InvalidParams(format!("request {} has no passengers", self.id)));
        }
        if self.origin == self.destination {
            return Err(Error::InvalidParams(format!(
                "request {} starts and ends at node {}",
                self.id, self.origin
            )));
        }
        if self.earliest_start < self.request_time {
            return Err(Error::InvalidParams(format!(
                "request {} starts before it is made",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stop {
    pub node: u64,
    pub request: u64,
    pub kind: StopKind,
}

/// A request assigned to a vehicle and not yet dropped off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rider {
    pub request: u64,
    pub passengers: u32,
    pub direct_km: f64,
    /// Distance ridden so far (zero until picked up).
    pub ridden_km: f64,
    pub onboard: bool,
    pub request_time: i64,
    pub earliest_start: i64,
    pub pickup_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehiclePlan {
    pub stops: Vec<Stop>,
    /// Seats in use right now.
    pub onboard: u32,
    /// Sorted by request id.
    pub riders: Vec<Rider>,
}

impl VehiclePlan {
    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn rider(&self, request: u64) -> Option<&Rider> {
        self.riders
            .binary_search_by_key(&request, |r| r.request)
            .ok()
            .map(|k| &self.riders[k])
    }

    fn rider_mut(&mut self, request: u64) -> Option<&mut Rider> {
        self.riders
            .binary_search_by_key(&request, |r| r.request)
            .ok()
            .map(move |k| &mut self.riders[k])
    }

    /// Seat load after each stop.
    pub fn loads(&self) -> Vec<u32> {
        let mut load = self.onboard;
        self.stops
            .iter()
            .map(|s| {
                let p = self.rider(s.request).map_or(0, |r| r.passengers);
                match s.kind {
                    StopKind::Pickup => load += p,
                    StopKind::Dropoff => load = load.saturating_sub(p),
                }
                load
            })
            .collect()
    }
}

/// A vehicle together with its route. While driving, `pv.node` is the next
/// node on the path and `lag_km` the distance still to cover to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub pv: PvState,
    pub lag_km: f64,
    /// Time (epoch seconds) up to which the vehicle has been simulated.
    pub clock: f64,
    pub plan: VehiclePlan,
    pub odometer_km: f64,
}

impl Vehicle {
    pub fn new(id: u32, node: u64, energy: f64, clock: f64) -> Self {
        Self {
            pv: PvState {
                id,
                node,
                energy,
                status: PvStatus::Idle,
            },
            lag_km: 0.0,
            clock,
            plan: VehiclePlan::default(),
            odometer_km: 0.0,
        }
    }

    /// Distance of the remaining route, starting from the current position.
    pub fn route_km(&self, graph: &RoadGraph) -> Result<f64> {
        let mut prev = self.pv.node;
        let mut total = self.lag_km;
        for s in &self.plan.stops {
            total += graph.distance(prev, s.node)?;
            prev = s.node;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub delta_km: f64,
    pub pickup_index: usize,
    pub dropoff_index: usize,
    pub plan: VehiclePlan,
}

/// Route length if the stop order satisfies seats, detour and energy.
fn route_if_feasible(
    vehicle: &Vehicle,
    stops: &[Stop],
    riders: &[Rider],
    graph: &RoadGraph,
    params: &GameParams,
) -> Result<Option<f64>> {
    let find = |id: u64| {
        riders
            .binary_search_by_key(&id, |r| r.request)
            .map(|k| &riders[k])
            .map_err(|_| Error::Fault(format!("stop for unknown request {id}")))
    };
    let mut load = vehicle.plan.onboard;
    let mut cum = vehicle.lag_km;
    let mut prev = vehicle.pv.node;
    let mut picked: Vec<(u64, f64)> = Vec::new();
    for s in stops {
        cum += graph.distance(prev, s.node)?;
        prev = s.node;
        let rider = find(s.request)?;
        match s.kind {
            StopKind::Pickup => {
                load += rider.passengers;
                if load > params.seats {
                    return Ok(None);
                }
                picked.push((s.request, cum));
            }
            StopKind::Dropoff => {
                load = load.saturating_sub(rider.passengers);
                let ride = if rider.onboard {
                    rider.ridden_km + cum
                } else {
                    let start = picked
                        .iter()
                        .find(|(id, _)| *id == s.request)
                        .map(|(_, km)| *km)
                        .ok_or_else(|| Error::Fault(format!("dropoff before pickup for request {}", s.request)))?;
                    cum - start
                };
                if ride > params.detour_max * rider.direct_km + FEAS_EPS {
                    return Ok(None);
                }
            }
        }
    }
    if cum * params.consume_rate > vehicle.pv.energy - params.e_min + FEAS_EPS {
        return Ok(None);
    }
    Ok(Some(cum))
}

/// Cheapest feasible way to add `request` to the vehicle's route, over all
/// pickup/dropoff position pairs; ties keep the earliest positions.
pub fn insertion_cost(
    vehicle: &Vehicle,
    request: &TripRequest,
    graph: &RoadGraph,
    params: &GameParams,
) -> Result<Option<Insertion>> {
    if request.passengers > params.seats {
        return Ok(None);
    }
    let direct_km = graph.distance(request.origin, request.destination)?;
    let mut riders = vehicle.plan.riders.clone();
    let slot = match riders.binary_search_by_key(&request.id, |r| r.request) {
        Ok(_) => return Err(Error::Fault(format!("request {} assigned twice", request.id))),
        Err(k) => k,
    };
    riders.insert(
        slot,
        Rider {
            request: request.id,
            passengers: request.passengers,
            direct_km,
            ridden_km: 0.0,
            onboard: false,
            request_time: request.request_time,
            earliest_start: request.earliest_start,
            pickup_time: None,
        },
    );
    let old = &vehicle.plan.stops;
    let base = vehicle.route_km(graph)?;
    let pickup = Stop {
        node: request.origin,
        request: request.id,
        kind: StopKind::Pickup,
    };
    let dropoff = Stop {
        node: request.destination,
        request: request.id,
        kind: StopKind::Dropoff,
    };
    let mut best: Option<(f64, usize, usize, Vec<Stop>)> = None;
    let mut stops = Vec::with_capacity(old.len() + 2);
    for i in 0..=old.len() {
        for j in i..=old.len() {
            stops.clear();
            stops.extend_from_slice(&old[..i]);
            stops.push(pickup);
            stops.extend_from_slice(&old[i..j]);
            stops.push(dropoff);
            stops.extend_from_slice(&old[j..]);
            if let Some(total) = route_if_feasible(vehicle, &stops, &riders, graph, params)? {
                let delta = total - base;
                if best.as_ref().is_none_or(|b| delta < b.0) {
                    best = Some((delta, i, j + 1, stops.clone()));
                }
            }
        }
    }
    Ok(best.map(|(delta_km, pickup_index, dropoff_index, stops)| Insertion {
        delta_km,
        pickup_index,
        dropoff_index,
        plan: VehiclePlan {
            stops,
            onboard: vehicle.plan.onboard,
            riders: riders.clone(),
        },
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub request: u64,
    pub pv: u32,
    /// Position of the vehicle in the fleet slice.
    pub vehicle: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PciOutcome {
    pub assigned: Vec<Assignment>,
    pub waiting: Vec<TripRequest>,
}

/// Serve the longest-waiting requests first (ties by id), each with the
/// vehicle of least added distance (ties by vehicle id); unservable requests
/// go to the waiting list. Only vehicles with `pool[k]` set are considered.
pub fn pci_assign(
    mut pending: Vec<TripRequest>,
    fleet: &mut [Vehicle],
    pool: &[bool],
    graph: &RoadGraph,
    params: &GameParams,
    now: f64,
) -> Result<PciOutcome> {
    if pool.len() != fleet.len() {
        return Err(Error::LengthMismatch {
            expected: fleet.len(),
            got: pool.len(),
        });
    }
    pending.sort_by(|a, b| {
        let wait = |r: &TripRequest| now - r.request_time as f64;
        wait(b).total_cmp(&wait(a)).then(a.id.cmp(&b.id))
    });
    let mut order: Vec<usize> = (0..fleet.len()).filter(|&k| pool[k]).collect();
    order.sort_by_key(|&k| fleet[k].pv.id);
    let mut out = PciOutcome::default();
    for request in pending {
        let mut best: Option<(usize, Insertion)> = None;
        for &k in &order {
            if let Some(ins) = insertion_cost(&fleet[k], &request, graph, params)? {
                if best.as_ref().is_none_or(|(_, b)| ins.delta_km < b.delta_km) {
                    best = Some((k, ins));
                }
            }
        }
        match best {
            Some((k, ins)) => {
                fleet[k].plan = ins.plan;
                fleet[k].pv.status = PvStatus::Serving;
                out.assigned.push(Assignment {
                    request: request.id,
                    pv: fleet[k].pv.id,
                    vehicle: k,
                });
            }
            None => out.waiting.push(request),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub request: u64,
    pub pv: u32,
    pub request_time: i64,
    pub earliest_start: i64,
    pub pickup_time: f64,
    pub dropoff_time: f64,
    pub ride_km: f64,
    pub direct_km: f64,
}

impl TripRecord {
    /// Waiting plus riding, from the earliest start to the dropoff.
    pub fn trip_seconds(&self) -> f64 {
        self.dropoff_time - self.earliest_start as f64
    }
}

fn drive(v: &mut Vehicle, km: f64, params: &GameParams) -> Result<()> {
    v.pv.energy -= km * params.consume_rate;
    v.odometer_km += km;
    for r in v.plan.riders.iter_mut().filter(|r| r.onboard) {
        r.ridden_km += km;
    }
    if v.pv.energy < 0.0 {
        return Err(Error::Fault(format!(
            "vehicle {} ran out of energy ({:.6} kwh)",
            v.pv.id, v.pv.energy
        )));
    }
    Ok(())
}

/// Follow the route until time `until` (may be infinite to finish the
/// route). Returns the distance driven.
pub fn advance(
    v: &mut Vehicle,
    until: f64,
    graph: &RoadGraph,
    params: &GameParams,
    done: &mut Vec<TripRecord>,
) -> Result<f64> {
    let km_per_sec = params.speed / 3600.0;
    let mut moved = 0.0;
    loop {
        if v.lag_km > 0.0 {
            let need = v.lag_km / km_per_sec;
            if v.clock + need <= until {
                let km = v.lag_km;
                drive(v, km, params)?;
                moved += km;
                v.lag_km = 0.0;
                v.clock += need;
            } else {
                let km = ((until - v.clock).max(0.0) * km_per_sec).min(v.lag_km);
                drive(v, km, params)?;
                moved += km;
                v.lag_km -= km;
                v.clock = v.clock.max(until);
                return Ok(moved);
            }
            continue;
        }
        let Some(stop) = v.plan.stops.first().copied() else {
            if until.is_finite() {
                v.clock = v.clock.max(until);
            }
            if v.pv.status == PvStatus::Serving {
                v.pv.status = PvStatus::Idle;
            }
            return Ok(moved);
        };
        if stop.node != v.pv.node {
            let (_, path) = graph.shortest_path(v.pv.node, stop.node)?;
            let next = path[1];
            v.lag_km = graph.distance(v.pv.node, next)?;
            v.pv.node = next;
            continue;
        }
        match stop.kind {
            StopKind::Pickup => {
                let ready = v
                    .plan
                    .rider(stop.request)
                    .map(|r| r.earliest_start as f64)
                    .ok_or_else(|| Error::Fault(format!("pickup of unknown request {}", stop.request)))?;
                if v.clock < ready {
                    if until <= ready {
                        v.clock = v.clock.max(until);
                        return Ok(moved);
                    }
                    v.clock = ready;
                }
                let clock = v.clock;
                let rider = v.plan.rider_mut(stop.request).expect("rider checked above");
                rider.onboard = true;
                rider.pickup_time = Some(clock);
                let p = rider.passengers;
                v.plan.onboard += p;
            }
            StopKind::Dropoff => {
                let k = v
                    .plan
                    .riders
                    .binary_search_by_key(&stop.request, |r| r.request)
                    .map_err(|_| Error::Fault(format!("dropoff of unknown request {}", stop.request)))?;
                let rider = v.plan.riders.remove(k);
                v.plan.onboard -= rider.passengers;
                done.push(TripRecord {
                    request: rider.request,
                    pv: v.pv.id,
                    request_time: rider.request_time,
                    earliest_start: rider.earliest_start,
                    pickup_time: rider.pickup_time.unwrap_or(v.clock),
                    dropoff_time: v.clock,
                    ride_km: rider.ridden_km,
                    direct_km: rider.direct_km,
                });
            }
        }
        v.plan.stops.remove(0);
    }
}

/// Everything the transport side of the simulation mutates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportState {
    /// Sorted by vehicle id.
    pub fleet: Vec<Vehicle>,
    /// Arrived requests not yet assigned.
    pub pending: Vec<TripRequest>,
    /// Index of the next request to arrive.
    pub next_arrival: usize,
    pub completed: Vec<TripRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    /// Per vehicle: received at least one request in the window.
    pub transported: Vec<bool>,
    /// Per vehicle: distance driven in the window.
    pub km: Vec<f64>,
    pub assigned: usize,
}

impl TransportState {
    pub fn new(mut fleet: Vec<Vehicle>) -> Self {
        fleet.sort_by_key(|v| v.pv.id);
        Self {
            fleet,
            pending: Vec::new(),
            next_arrival: 0,
            completed: Vec::new(),
        }
    }

    /// Fingerprint of the full state, sensitive to every float bit.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.fleet {
            v.pv.id.hash(&mut h);
            v.pv.node.hash(&mut h);
            v.pv.energy.to_bits().hash(&mut h);
            v.pv.status.hash(&mut h);
            v.lag_km.to_bits().hash(&mut h);
            v.clock.to_bits().hash(&mut h);
            v.odometer_km.to_bits().hash(&mut h);
            v.plan.stops.hash(&mut h);
            v.plan.onboard.hash(&mut h);
            for r in &v.plan.riders {
                r.request.hash(&mut h);
                r.passengers.hash(&mut h);
                r.direct_km.to_bits().hash(&mut h);
                r.ridden_km.to_bits().hash(&mut h);
                r.onboard.hash(&mut h);
                r.pickup_time.map(f64::to_bits).hash(&mut h);
            }
        }
        self.pending.hash(&mut h);
        self.next_arrival.hash(&mut h);
        for t in &self.completed {
            t.request.hash(&mut h);
            t.pv.hash(&mut h);
            t.pickup_time.to_bits().hash(&mut h);
            t.dropoff_time.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Dispatch requests arriving before `end` in batches of `batch_secs`
    /// starting at `start`, moving vehicles in between.
    #[allow(clippy::too_many_arguments)]
    pub fn serve_window(
        &mut self,
        requests: &[TripRequest],
        pool: &[bool],
        start: f64,
        end: f64,
        batch_secs: f64,
        graph: &RoadGraph,
        params: &GameParams,
    ) -> Result<WindowReport> {
        if !(batch_secs > 0.0) {
            return Err(Error::InvalidParams("batch length must be positive".into()));
        }
        let n = self.fleet.len();
        let mut report = WindowReport {
            transported: vec![false; n],
            km: vec![0.0; n],
            assigned: 0,
        };
        let mut k = 0u32;
        loop {
            let now = start + f64::from(k) * batch_secs;
            if now >= end {
                break;
            }
            for (j, v) in self.fleet.iter_mut().enumerate() {
                report.km[j] += advance(v, now, graph, params, &mut self.completed)?;
            }
            while self.next_arrival < requests.len() && requests[self.next_arrival].request_time as f64 <= now {
                self.pending.push(requests[self.next_arrival].clone());
                self.next_arrival += 1;
            }
            if !self.pending.is_empty() {
                let pending = std::mem::take(&mut self.pending);
                let out = pci_assign(pending, &mut self.fleet, pool, graph, params, now)?;
                for a in &out.assigned {
                    report.transported[a.vehicle] = true;
                }
                report.assigned += out.assigned.len();
                self.pending = out.waiting;
            }
            k += 1;
        }
        for (j, v) in self.fleet.iter_mut().enumerate() {
            report.km[j] += advance(v, end, graph, params, &mut self.completed)?;
        }
        Ok(report)
    }

    /// Complete every route immediately; returns distance per vehicle.
    pub fn finish_routes(&mut self, graph: &RoadGraph, params: &GameParams) -> Result<Vec<f64>> {
        self.fleet
            .iter_mut()
            .map(|v| advance(v, f64::INFINITY, graph, params, &mut self.completed))
            .collect()
    }
}

/// Saved copy of the transport state for what-if runs.
#[derive(Debug, Clone)]
pub struct Snapshot {
    state: TransportState,
    hash: u64,
}

impl Snapshot {
    pub fn capture(state: &TransportState) -> Self {
        Self {
            state: state.clone(),
            hash: state.state_hash(),
        }
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn restore(&self) -> Result<TransportState> {
        let state = self.state.clone();
        if state.state_hash() != self.hash {
            return Err(Error::Fault("snapshot restore changed the state".into()));
        }
        Ok(state)
    }
}

/// Per-region counts of unfully charged vehicles.
pub fn group_census(fleet: &[Vehicle], regions: &RegionMap, params: &GameParams) -> Result<Vec<PvGroup>> {
    let mut all = vec![0u32; regions.count()];
    let mut full = vec![0u32; regions.count()];
    for v in fleet {
        let i = regions.region_of(v.pv.node)?;
        all[i] += 1;
        if params.is_fully_charged(v.pv.energy) {
            full[i] += 1;
        }
    }
    Ok((0..regions.count()).map(|i| PvGroup::new(i, all[i], full[i], 0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandReport {
    /// Vehicles that transported, by slot-start region.
    pub n: Vec<u32>,
    /// `max(n_i - f_i, 0)`.
    pub d: Vec<u32>,
    pub d_total: u32,
    /// Per vehicle: transported in the dry run.
    pub transported: Vec<bool>,
    pub consumed_kwh: f64,
}

/// `d_i = max(n_i - f_i, 0)`.
pub fn demand_from_counts(n: &[u32], f: &[u32]) -> Vec<u32> {
    n.iter().zip(f).map(|(&a, &b)| a.saturating_sub(b)).collect()
}

/// Serve the slot on a copy of the state with `pool`, count the vehicles
/// that transported per region, and check the original is untouched.
#[allow(clippy::too_many_arguments)]
pub fn dry_run_demand(
    state: &TransportState,
    requests: &[TripRequest],
    pool: &[bool],
    groups: &[PvGroup],
    window: (f64, f64),
    batch_secs: f64,
    graph: &RoadGraph,
    regions: &RegionMap,
    params: &GameParams,
) -> Result<DemandReport> {
    let snapshot = Snapshot::capture(state);
    let mut scratch = snapshot.restore()?;
    let start_regions: Vec<usize> = scratch
        .fleet
        .iter()
        .map(|v| regions.region_of(v.pv.node))
        .collect::<Result<_>>()?;
    let report = scratch.serve_window(requests, pool, window.0, window.1, batch_secs, graph, params)?;
    let mut n = vec![0u32; regions.count()];
    for (k, &went) in report.transported.iter().enumerate() {
        if went {
            n[start_regions[k]] += 1;
        }
    }
    let f: Vec<u32> = groups.iter().map(|g| g.f).collect();
    let d = demand_from_counts(&n, &f);
    if state.state_hash() != snapshot.hash() {
        return Err(Error::Fault("dry run changed the live state".into()));
    }
    Ok(DemandReport {
        d_total: d.iter().sum(),
        n,
        d,
        transported: report.transported,
        consumed_kwh: report.km.iter().sum::<f64>() * params.consume_rate,
    })
}
