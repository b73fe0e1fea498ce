//! CSV data files, scenario configuration and atomic output.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameParams, PriceCurve, PricingModel};
use crate::network::{Edge, Node, RegionMap, RoadGraph, StationSet};
use crate::simulator::{Mode, Scenario};
use crate::transport::TripRequest;

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Every row with its 1-based file line, or the first row that fails to parse.
fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut reader = open_reader(path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize::<T>() {
        match rec {
            Ok(row) => rows.push((rows.len() + 2, row)),
            Err(e) => {
                let line = e.position().map_or(rows.len() + 2, |p| p.line() as usize);
                return Err(parse_error(path, line, e.to_string()));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub from_id: u64,
    pub to_id: u64,
    pub length_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: u64,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationRow {
    pub node_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub node_id: u64,
    pub region_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRow {
    pub id: u64,
    pub request_time: i64,
    pub earliest_start: i64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub dest_lon: f64,
    pub dest_lat: f64,
    pub passengers: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub hour: u32,
    pub price_cents_per_kwh: f64,
}

/// Road graph from an edge list, with coordinates when a node file is given.
pub fn load_network(edges_path: &Path, nodes_path: Option<&Path>) -> Result<RoadGraph> {
    let rows: Vec<(usize, EdgeRow)> = read_rows(edges_path)?;
    if rows.is_empty() {
        return Err(parse_error(edges_path, 1, "no edges"));
    }
    for (line, r) in &rows {
        if !(r.length_km > 0.0 && r.length_km.is_finite()) {
            return Err(parse_error(edges_path, *line, format!("length_km {} must be positive", r.length_km)));
        }
    }
    let edges: Vec<Edge> = rows
        .iter()
        .map(|(_, r)| Edge {
            from: r.from_id,
            to: r.to_id,
            length_km: r.length_km,
        })
        .collect();
    let graph = match nodes_path {
        Some(p) => {
            let nodes: Vec<(usize, NodeRow)> = read_rows(p)?;
            RoadGraph::new(
                nodes
                    .into_iter()
                    .map(|(_, n)| Node {
                        id: n.id,
                        lon: n.lon,
                        lat: n.lat,
                    })
                    .collect(),
                &edges,
            )?
        }
        None => RoadGraph::from_edges(&edges)?,
    };
    graph.validate_connected()?;
    Ok(graph)
}

pub fn load_stations(path: &Path, graph: &RoadGraph) -> Result<StationSet> {
    let rows: Vec<(usize, StationRow)> = read_rows(path)?;
    for (line, r) in &rows {
        if !graph.contains(r.node_id) {
            return Err(parse_error(path, *line, format!("station {} is not a graph node", r.node_id)));
        }
    }
    StationSet::new(rows.into_iter().map(|(_, r)| r.node_id).collect(), graph)
}

pub fn load_regions(path: &Path, graph: &RoadGraph) -> Result<RegionMap> {
    let rows: Vec<(usize, RegionRow)> = read_rows(path)?;
    let mut map = HashMap::with_capacity(rows.len());
    for (line, r) in rows {
        if !graph.contains(r.node_id) {
            return Err(parse_error(path, line, format!("unknown node {}", r.node_id)));
        }
        if map.insert(r.node_id, r.region_id).is_some() {
            return Err(parse_error(path, line, format!("node {} listed twice", r.node_id)));
        }
    }
    RegionMap::new(map, graph)
}

/// What `load_trips` discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TripLoadReport {
    pub kept: usize,
    pub malformed: usize,
    pub same_node: usize,
    pub too_short: usize,
    pub unreachable: usize,
}

/// Trips snapped to their nearest nodes, short trips dropped, sorted by time.
pub fn load_trips(path: &Path, filter_km: f64, graph: &RoadGraph) -> Result<(Vec<TripRequest>, TripLoadReport)> {
    let mut reader = open_reader(path)?;
    let mut report = TripLoadReport::default();
    let mut requests = Vec::new();
    let mut rows = 0usize;
    for rec in reader.deserialize::<TripRow>() {
        rows += 1;
        let row = match rec {
            Ok(r) if r.passengers > 0 && r.earliest_start >= r.request_time => r,
            Ok(_) | Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        let origin = graph.nearest_node(row.origin_lon, row.origin_lat)?;
        let destination = graph.nearest_node(row.dest_lon, row.dest_lat)?;
        if origin == destination {
            report.same_node += 1;
            continue;
        }
        match graph.distance(origin, destination) {
            Ok(d) if d < filter_km => {
                report.too_short += 1;
                continue;
            }
            Ok(_) => {}
            Err(Error::NoPath { .. }) => {
                report.unreachable += 1;
                continue;
            }
            Err(e) => return Err(e),
        }
        requests.push(TripRequest {
            id: row.id,
            request_time: row.request_time,
            earliest_start: row.earliest_start,
            origin,
            destination,
            passengers: row.passengers,
        });
    }
    if rows > 0 && report.malformed == rows {
        return Err(parse_error(path, 2, "every trip row is malformed"));
    }
    if report.malformed > 0 {
        log::warn!("{}: skipped {} malformed trip rows", path.display(), report.malformed);
    }
    requests.sort_by_key(|r| (r.request_time, r.id));
    report.kept = requests.len();
    Ok((requests, report))
}

/// Hourly prices rotated so slot 0 carries the price of `start_hour`.
pub fn load_prices(path: &Path, slots: usize, start_hour: u32) -> Result<PriceCurve> {
    let mut rows: Vec<(usize, PriceRow)> = read_rows(path)?;
    for (line, r) in &rows {
        if !(r.price_cents_per_kwh >= 0.0 && r.price_cents_per_kwh.is_finite()) {
            return Err(parse_error(path, *line, format!("price {} must be nonnegative", r.price_cents_per_kwh)));
        }
    }
    if rows.len() < slots {
        return Err(parse_error(
            path,
            rows.len() + 1,
            format!("{} price rows cover fewer than {slots} slots", rows.len()),
        ));
    }
    rows.sort_by_key(|(_, r)| r.hour);
    if let Some(w) = rows.windows(2).find(|w| w[0].1.hour == w[1].1.hour) {
        return Err(parse_error(path, w[1].0, format!("hour {} listed twice", w[1].1.hour)));
    }
    let first = rows
        .iter()
        .position(|(_, r)| r.hour == start_hour)
        .ok_or_else(|| parse_error(path, 1, format!("no price for start hour {start_hour}")))?;
    let n = rows.len();
    PriceCurve::new((0..slots).map(|t| rows[(first + t) % n].1.price_cents_per_kwh).collect())
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn write_network<W: Write>(graph: &RoadGraph, out: W) -> Result<()> {
    let mut rows = Vec::new();
    for n in graph.nodes() {
        for (to, length_km) in graph.neighbours(n.id)? {
            rows.push(EdgeRow {
                from_id: n.id,
                to_id: to,
                length_km,
            });
        }
    }
    write_rows(&rows, out)
}

pub fn write_nodes<W: Write>(graph: &RoadGraph, out: W) -> Result<()> {
    let rows: Vec<NodeRow> = graph
        .nodes()
        .iter()
        .map(|n| NodeRow {
            id: n.id,
            lon: n.lon,
            lat: n.lat,
        })
        .collect();
    write_rows(&rows, out)
}

pub fn write_stations<W: Write>(stations: &StationSet, out: W) -> Result<()> {
    let rows: Vec<StationRow> = stations.ids().iter().map(|&node_id| StationRow { node_id }).collect();
    write_rows(&rows, out)
}

pub fn write_regions<W: Write>(regions: &RegionMap, graph: &RoadGraph, out: W) -> Result<()> {
    let rows = graph
        .nodes()
        .iter()
        .map(|n| {
            Ok(RegionRow {
                node_id: n.id,
                region_id: regions.region_of(n.id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&rows, out)
}

/// Trips with endpoints written at their node coordinates.
pub fn write_trips<W: Write>(requests: &[TripRequest], graph: &RoadGraph, out: W) -> Result<()> {
    let rows = requests
        .iter()
        .map(|r| {
            let (o, d) = (graph.node(r.origin)?, graph.node(r.destination)?);
            Ok(TripRow {
                id: r.id,
                request_time: r.request_time,
                earliest_start: r.earliest_start,
                origin_lon: o.lon,
                origin_lat: o.lat,
                dest_lon: d.lon,
                dest_lat: d.lat,
                passengers: r.passengers,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&rows, out)
}

pub fn write_prices<W: Write>(hourly: &[f64], out: W) -> Result<()> {
    let rows: Vec<PriceRow> = hourly
        .iter()
        .enumerate()
        .map(|(h, &p)| PriceRow {
            hour: h as u32,
            price_cents_per_kwh: p,
        })
        .collect();
    write_rows(&rows, out)
}

/// Write through a sibling temporary file and rename it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelect {
    Jtcs,
    Tgc,
    #[default]
    Both,
}

impl ModeSelect {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelect::Jtcs => vec![Mode::Jtcs],
            ModeSelect::Tgc => vec![Mode::Tgc],
            ModeSelect::Both => vec![Mode::Jtcs, Mode::Tgc],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub network: PathBuf,
    pub nodes: Option<PathBuf>,
    pub stations: PathBuf,
    pub regions: PathBuf,
    pub trips: PathBuf,
    /// Required unless the price model is configured.
    pub prices: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub files: DataFiles,
    #[serde(default)]
    pub params: GameParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Overrides `params.fleet_size`.
    #[serde(default)]
    pub fleet_size: Option<usize>,
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_start_hour")]
    pub start_hour: u32,
    /// Epoch seconds of midnight; defaults to the midnight (UTC) before the first trip.
    #[serde(default)]
    pub day_start: Option<i64>,
    #[serde(default = "default_filter_km")]
    pub filter_km: f64,
    #[serde(default)]
    pub mode: ModeSelect,
    #[serde(default = "default_batch_minutes")]
    pub batch_minutes: f64,
    #[serde(default = "default_energy_range")]
    pub initial_energy_kwh: [f64; 2],
    #[serde(default)]
    pub terminal_reserve_kwh: Option<f64>,
    #[serde(default)]
    pub rollover_shortfall: bool,
    /// Load-driven prices; replaces the price file when present.
    #[serde(default)]
    pub price_model: Option<PricingModel>,
}

fn default_seed() -> u64 {
    1
}
fn default_slots() -> usize {
    24
}
fn default_start_hour() -> u32 {
    3
}
fn default_filter_km() -> f64 {
    2.0
}
fn default_batch_minutes() -> f64 {
    5.0
}
fn default_energy_range() -> [f64; 2] {
    [32.0, 41.0]
}

impl ScenarioConfig {
    /// Parse a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            parse_error(path, line, e.message())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let f = &mut self.files;
        join(&mut f.network);
        join(&mut f.stations);
        join(&mut f.regions);
        join(&mut f.trips);
        if let Some(p) = f.nodes.as_mut() {
            join(p);
        }
        if let Some(p) = f.prices.as_mut() {
            join(p);
        }
    }

    /// Game parameters with the fleet-size override applied.
    pub fn effective_params(&self) -> GameParams {
        let mut p = self.params.clone();
        if let Some(j) = self.fleet_size {
            p.fleet_size = j;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_params().validate()?;
        if self.slots == 0 {
            return Err(Error::InvalidParams("slots must be positive".into()));
        }
        if self.start_hour >= 24 {
            return Err(Error::InvalidParams("start_hour must lie in 0..24".into()));
        }
        if !(self.filter_km >= 0.0) {
            return Err(Error::InvalidParams("filter_km must be nonnegative".into()));
        }
        let [lo, hi] = self.initial_energy_kwh;
        if !(lo >= 0.0 && lo <= hi && hi <= self.params.c) {
            return Err(Error::InvalidParams("initial_energy_kwh must be a range inside [0, c]".into()));
        }
        if self.price_model.is_none() && self.files.prices.is_none() {
            return Err(Error::InvalidParams("either files.prices or price_model is required".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidParams(e.to_string()))
    }

    /// Load every data file and assemble the simulation scenario.
    pub fn build_scenario(&self, seed: u64) -> Result<Scenario> {
        let f = &self.files;
        let graph = load_network(&f.network, f.nodes.as_deref())?;
        let stations = load_stations(&f.stations, &graph)?;
        let regions = load_regions(&f.regions, &graph)?;
        let (mut requests, report) = load_trips(&f.trips, self.filter_km, &graph)?;
        log::info!(
            "trips: kept {}, malformed {}, same node {}, shorter than {} km {}, unreachable {}",
            report.kept,
            report.malformed,
            report.same_node,
            self.filter_km,
            report.too_short,
            report.unreachable
        );
        let prices = match &self.price_model {
            Some(model) => model.curve()?,
            None => load_prices(f.prices.as_deref().expect("validated"), self.slots, self.start_hour)?,
        };
        let day = match self.day_start {
            Some(d) => d,
            None => requests.first().map_or(0, |r| r.request_time.div_euclid(86_400) * 86_400),
        };
        let params = self.effective_params();
        let start = day + i64::from(self.start_hour) * 3600;
        let end = start as f64 + self.slots as f64 * params.slot_hours * 3600.0;
        let before = requests.len();
        requests.retain(|r| r.request_time >= start && (r.request_time as f64) < end);
        if requests.len() < before {
            log::info!("dropped {} trips outside the simulated day", before - requests.len());
        }
        let mut scenario = Scenario::new(
            graph,
            stations,
            regions,
            requests,
            prices,
            params,
            seed,
            start,
            self.slots,
            (self.initial_energy_kwh[0], self.initial_energy_kwh[1]),
        )?;
        scenario.batch_minutes = self.batch_minutes;
        scenario.terminal_reserve_kwh = self.terminal_reserve_kwh;
        scenario.rollover_shortfall = self.rollover_shortfall;
        scenario.validate()?;
        Ok(scenario)
    }
}
