//! Synthetic desk-scale scenario: a rectangular street grid, row-band
//! regions, two-peak trip demand and an hourly price curve with a
//! late-afternoon peak.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{write_atomic, write_network, write_nodes, write_prices, write_regions, write_stations, write_trips};
use crate::network::{Edge, Node, RegionMap, RoadGraph, StationSet};
use crate::transport::TripRequest;

const KM_PER_DEG_LAT: f64 = 111.0;
const KM_PER_DEG_LON: f64 = 84.3;

/// Hourly prices (cents/kwh) indexed by hour of day.
pub const HOURLY_PRICES: [f64; 24] = [
    2.1, 1.9, 1.8, 1.7, 1.7, 1.9, 2.3, 2.8, 3.1, 3.3, 3.5, 3.8, 4.1, 4.4, 4.7, 4.9, 5.0, 4.6, 4.0, 3.5, 3.1, 2.8, 2.5,
    2.3,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// East-west node count.
    pub columns: usize,
    /// North-south node count.
    pub rows: usize,
    pub column_km: f64,
    pub row_km: f64,
    pub regions: usize,
    pub requests: usize,
    pub fleet_size: usize,
    pub filter_km: f64,
    /// Epoch seconds of midnight on the simulated day.
    pub day_start: i64,
    pub start_hour: u32,
    pub slots: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 2016,
            columns: 4,
            rows: 15,
            column_km: 0.6,
            row_km: 0.5,
            regions: 5,
            requests: 200,
            fleet_size: 20,
            filter_km: 2.0,
            day_start: 1_451_865_600,
            start_hour: 3,
            slots: 24,
        }
    }
}

#[derive(Debug)]
pub struct SyntheticScenario {
    pub graph: RoadGraph,
    pub stations: StationSet,
    pub regions: RegionMap,
    pub requests: Vec<TripRequest>,
    pub hourly_prices: Vec<f64>,
}

fn node_id(row: usize, col: usize, columns: usize) -> u64 {
    (row * columns + col + 1) as u64
}

/// Relative request intensity at a (fractional) hour of day.
fn demand_weight(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
    0.25 + bump(8.5, 1.5) + 0.9 * bump(18.5, 2.0)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticScenario> {
    if spec.columns < 2 || spec.rows < spec.regions || spec.regions == 0 {
        return Err(Error::InvalidParams("grid too small for the requested regions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lon0, lat0) = (-74.01, 40.70);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for row in 0..spec.rows {
        for col in 0..spec.columns {
            nodes.push(Node {
                id: node_id(row, col, spec.columns),
                lon: lon0 + col as f64 * spec.column_km / KM_PER_DEG_LON,
                lat: lat0 + row as f64 * spec.row_km / KM_PER_DEG_LAT,
            });
            let here = node_id(row, col, spec.columns);
            if col + 1 < spec.columns {
                let east = node_id(row, col + 1, spec.columns);
                edges.push(Edge { from: here, to: east, length_km: spec.column_km });
                edges.push(Edge { from: east, to: here, length_km: spec.column_km });
            }
            if row + 1 < spec.rows {
                let north = node_id(row + 1, col, spec.columns);
                edges.push(Edge { from: here, to: north, length_km: spec.row_km });
                edges.push(Edge { from: north, to: here, length_km: spec.row_km });
            }
        }
    }
    let graph = RoadGraph::new(nodes, &edges)?;

    let band = |row: usize| (row * spec.regions / spec.rows).min(spec.regions - 1);
    let mut region_map = HashMap::new();
    let mut band_rows: Vec<Vec<usize>> = vec![Vec::new(); spec.regions];
    for row in 0..spec.rows {
        band_rows[band(row)].push(row);
        for col in 0..spec.columns {
            region_map.insert(node_id(row, col, spec.columns), band(row));
        }
    }
    let regions = RegionMap::new(region_map, &graph)?;
    // One station per band, alternating sides of the grid.
    let stations = band_rows
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            let col = if i % 2 == 0 { 0 } else { spec.columns - 1 };
            node_id(rows[rows.len() / 2], col, spec.columns)
        })
        .collect();
    let stations = StationSet::new(stations, &graph)?;

    let horizon = spec.slots as f64;
    let weights: Vec<f64> = (0..spec.slots * 4)
        .map(|q| demand_weight(f64::from(spec.start_hour) + q as f64 / 4.0 + 0.125))
        .collect();
    let total: f64 = weights.iter().sum();
    let start = spec.day_start + i64::from(spec.start_hour) * 3600;
    let ids: Vec<u64> = graph.nodes().iter().map(|n| n.id).collect();
    let mut requests = Vec::with_capacity(spec.requests);
    let mut attempts = 0;
    while requests.len() < spec.requests {
        attempts += 1;
        if attempts > 1000 * spec.requests {
            return Err(Error::InvalidParams("grid cannot host trips of the filter length".into()));
        }
        let origin = ids[rng.gen_range(0..ids.len())];
        let destination = ids[rng.gen_range(0..ids.len())];
        if origin == destination || graph.distance(origin, destination)? < spec.filter_km {
            continue;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut quarter = weights.len() - 1;
        for (q, w) in weights.iter().enumerate() {
            if pick < *w {
                quarter = q;
                break;
            }
            pick -= w;
        }
        let offset = (quarter as f64 * 900.0 + rng.gen::<f64>() * 900.0).min(horizon * 3600.0 - 1.0);
        let request_time = start + offset as i64;
        let passengers = match rng.gen::<f64>() {
            u if u < 0.7 => 1,
            u if u < 0.9 => 2,
            _ => 3,
        };
        requests.push(TripRequest {
            id: 0,
            request_time,
            earliest_start: request_time + rng.gen_range(0..=600),
            origin,
            destination,
            passengers,
        });
    }
    requests.sort_by_key(|r| (r.request_time, r.origin, r.destination));
    for (k, r) in requests.iter_mut().enumerate() {
        r.id = k as u64 + 1;
    }
    Ok(SyntheticScenario {
        graph,
        stations,
        regions,
        requests,
        hourly_prices: HOURLY_PRICES.to_vec(),
    })
}

/// Write the data files and a `scenario.toml` that runs them.
pub fn write_scenario(spec: &SyntheticSpec, dir: &Path) -> Result<()> {
    let s = generate(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("network.csv"), |b| write_network(&s.graph, b))?;
    write_atomic(&dir.join("nodes.csv"), |b| write_nodes(&s.graph, b))?;
    write_atomic(&dir.join("stations.csv"), |b| write_stations(&s.stations, b))?;
    write_atomic(&dir.join("regions.csv"), |b| write_regions(&s.regions, &s.graph, b))?;
    write_atomic(&dir.join("trips.csv"), |b| write_trips(&s.requests, &s.graph, b))?;
    write_atomic(&dir.join("prices.csv"), |b| write_prices(&s.hourly_prices, b))?;
    let config = format!(
        "seed = 7\nfleet_size = {}\nslots = {}\nstart_hour = {}\nday_start = {}\nfilter_km = {}\nmode = \"both\"\n\n\
         [files]\nnetwork = \"network.csv\"\nnodes = \"nodes.csv\"\nstations = \"stations.csv\"\n\
         regions = \"regions.csv\"\ntrips = \"trips.csv\"\nprices = \"prices.csv\"\n",
        spec.fleet_size, spec.slots, spec.start_hour, spec.day_start, spec.filter_km
    );
    write_atomic(&dir.join("scenario.toml"), |b| {
        b.extend_from_slice(config.as_bytes());
        Ok(())
    })
}
