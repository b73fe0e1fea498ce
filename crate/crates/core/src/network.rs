//! Road graph, shortest paths, station and region lookup.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GameParams;

const NONE: usize = usize::MAX;
/// Cached single-source trees kept before the cache is flushed.
const CACHE_SOURCES: usize = 4_096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: u64,
    pub to: u64,
    pub length_km: f64,
}

struct Tree {
    dist: Vec<f64>,
    pred: Vec<usize>,
}

/// Directed road graph with external node ids.
pub struct RoadGraph {
    nodes: Vec<Node>,
    index: HashMap<u64, usize>,
    out: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
    cache: Mutex<HashMap<usize, Arc<Tree>>>,
}

impl fmt::Debug for RoadGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoadGraph")
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edge_count)
            .finish()
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    id: u64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node id.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadGraph {
    /// Nodes are sorted by id; every edge endpoint must be listed.
    pub fn new(mut nodes: Vec<Node>, edges: &[Edge]) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Graph(format!("duplicate node {}", w[0].id)));
        }
        let index: HashMap<u64, usize> = nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect();
        let mut out = vec![Vec::new(); nodes.len()];
        for e in edges {
            if !(e.length_km > 0.0 && e.length_km.is_finite()) {
                return Err(Error::Graph(format!(
                    "edge {} -> {} has length {}",
                    e.from, e.to, e.length_km
                )));
            }
            let a = *index.get(&e.from).ok_or(Error::UnknownNode(e.from))?;
            let b = *index.get(&e.to).ok_or(Error::UnknownNode(e.to))?;
            out[a].push((b, e.length_km));
        }
        for list in &mut out {
            list.sort_by(|x, y| nodes[x.0].id.cmp(&nodes[y.0].id).then(x.1.total_cmp(&y.1)));
        }
        Ok(Self {
            nodes,
            index,
            out,
            edge_count: edges.len(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Graph whose nodes are exactly the edge endpoints, at the origin.
    pub fn from_edges(edges: &[Edge]) -> Result<Self> {
        let mut ids: Vec<u64> = edges.iter().flat_map(|e| [e.from, e.to]).collect();
        ids.sort_unstable();
        ids.dedup();
        let nodes = ids.into_iter().map(|id| Node { id, lon: 0.0, lat: 0.0 }).collect();
        Self::new(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node(&self, id: u64) -> Result<&Node> {
        Ok(&self.nodes[self.idx(id)?])
    }

    /// Outgoing `(to, length)` pairs, by target id.
    pub fn neighbours(&self, id: u64) -> Result<Vec<(u64, f64)>> {
        Ok(self.out[self.idx(id)?].iter().map(|&(b, w)| (self.nodes[b].id, w)).collect())
    }

    fn idx(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    /// Require every node to reach and be reached from every other node.
    pub fn validate_connected(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        let forward = self.reach(&self.out);
        let mut rev = vec![Vec::new(); self.nodes.len()];
        for (a, list) in self.out.iter().enumerate() {
            for &(b, w) in list {
                rev[b].push((a, w));
            }
        }
        let backward = self.reach(&rev);
        let orphans: Vec<u64> = (0..self.nodes.len())
            .filter(|&k| !(forward[k] && backward[k]))
            .map(|k| self.nodes[k].id)
            .collect();
        if orphans.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = orphans.iter().take(20).map(u64::to_string).collect();
        Err(Error::Graph(format!(
            "graph is not strongly connected; {} orphan node(s) relative to node {}: {}{}",
            orphans.len(),
            self.nodes[0].id,
            shown.join(", "),
            if orphans.len() > 20 { ", ..." } else { "" }
        )))
    }

    fn reach(&self, adj: &[Vec<(usize, f64)>]) -> Vec<bool> {
        let mut seen = vec![false; adj.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &(b, _) in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }

    fn tree(&self, source: usize) -> Arc<Tree> {
        if let Some(t) = self.cache.lock().expect("path cache poisoned").get(&source) {
            return Arc::clone(t);
        }
        let tree = Arc::new(self.dijkstra(source));
        let mut cache = self.cache.lock().expect("path cache poisoned");
        if cache.len() >= CACHE_SOURCES {
            cache.clear();
        }
        cache.insert(source, Arc::clone(&tree));
        tree
    }

    /// Ties between equal-length routes go to the smaller predecessor id.
    fn dijkstra(&self, source: usize) -> Tree {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry {
            dist: 0.0,
            id: self.nodes[source].id,
            node: source,
        });
        while let Some(Entry { dist: d, node: a, .. }) = heap.pop() {
            if done[a] {
                continue;
            }
            done[a] = true;
            for &(b, w) in &self.out[a] {
                let nd = d + w;
                if nd < dist[b] {
                    dist[b] = nd;
                    pred[b] = a;
                    heap.push(Entry {
                        dist: nd,
                        id: self.nodes[b].id,
                        node: b,
                    });
                } else if nd == dist[b] && !done[b] && self.nodes[a].id < self.nodes[pred[b]].id {
                    pred[b] = a;
                }
            }
        }
        Tree { dist, pred }
    }

    pub fn distance(&self, from: u64, to: u64) -> Result<f64> {
        let (a, b) = (self.idx(from)?, self.idx(to)?);
        let d = self.tree(a).dist[b];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NoPath { from, to })
        }
    }

    /// Distance and node sequence, both endpoints included.
    pub fn shortest_path(&self, from: u64, to: u64) -> Result<(f64, Vec<u64>)> {
        let (a, b) = (self.idx(from)?, self.idx(to)?);
        let tree = self.tree(a);
        if !tree.dist[b].is_finite() {
            return Err(Error::NoPath { from, to });
        }
        let mut path = vec![to];
        let mut k = b;
        while k != a {
            k = tree.pred[k];
            path.push(self.nodes[k].id);
        }
        path.reverse();
        Ok((tree.dist[b], path))
    }

    /// Station closest by road; equal distances go to the smaller id.
    pub fn nearest_station(&self, node: u64, stations: &StationSet) -> Result<(u64, f64)> {
        let tree = self.tree(self.idx(node)?);
        let mut best: Option<(u64, f64)> = None;
        for &s in stations.ids() {
            let d = tree.dist[self.idx(s)?];
            if d.is_finite() && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((s, d));
            }
        }
        best.ok_or_else(|| Error::Graph(format!("no charging station reachable from node {node}")))
    }

    /// Node closest to a coordinate in the plane; ties go to the smaller id.
    pub fn nearest_node(&self, lon: f64, lat: f64) -> Result<u64> {
        self.nodes
            .iter()
            .map(|n| ((n.lon - lon).powi(2) + (n.lat - lat).powi(2), n.id))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
            .map(|(_, id)| id)
            .ok_or_else(|| Error::Graph("graph has no nodes".into()))
    }
}

pub fn travel_energy(distance_km: f64, params: &GameParams) -> f64 {
    distance_km * params.consume_rate
}

pub fn travel_time(distance_km: f64, params: &GameParams) -> f64 {
    distance_km / params.speed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationSet {
    ids: Vec<u64>,
}

impl StationSet {
    pub fn new(mut ids: Vec<u64>, graph: &RoadGraph) -> Result<Self> {
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::Graph("no charging stations".into()));
        }
        if let Some(&id) = ids.iter().find(|&&id| !graph.contains(id)) {
            return Err(Error::Graph(format!("station {id} is not a graph node")));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMap {
    regions: HashMap<u64, usize>,
    count: usize,
}

impl RegionMap {
    /// Every graph node must be mapped; regions are `0..I`.
    pub fn new(regions: HashMap<u64, usize>, graph: &RoadGraph) -> Result<Self> {
        if let Some(n) = graph.nodes().iter().find(|n| !regions.contains_key(&n.id)) {
            return Err(Error::Graph(format!("node {} has no region", n.id)));
        }
        if let Some(id) = regions.keys().find(|id| !graph.contains(**id)) {
            return Err(Error::Graph(format!("region file names unknown node {id}")));
        }
        let count = regions.values().max().map_or(0, |m| m + 1);
        if count == 0 {
            return Err(Error::Graph("no regions".into()));
        }
        Ok(Self { regions, count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn region_of(&self, node: u64) -> Result<usize> {
        self.regions.get(&node).copied().ok_or(Error::UnknownNode(node))
    }
}
