//! r-hop ego graphs around labeled nodes.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Csr, Graph};

/// Induced subgraph on every node within `radius` hops of a center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgoGraph {
    pub center_global: usize,
    pub radius: usize,
    /// Ascending global ids, center included.
    pub nodes_global: Vec<usize>,
    /// Induced edges over positions in `nodes_global`.
    pub local_edges: Csr,
    pub center_local: usize,
}

impl EgoGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes_global.len()
    }

    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.nodes_global.binary_search(&global).ok()
    }

    pub fn contains(&self, global: usize) -> bool {
        self.local_of(global).is_some()
    }

    /// Induced edges as global `(u, v)` pairs with `u < v`.
    pub fn global_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.local_edges
            .edges()
            .map(|(a, b)| (self.nodes_global[a], self.nodes_global[b]))
    }
}

pub fn extract_ego(graph: &Graph, center: usize, radius: usize) -> Result<EgoGraph> {
    let n = graph.num_nodes();
    if center >= n {
        return Err(Error::validation(format!(
            "center {center} out of range for {n} nodes"
        )));
    }
    let adj = graph.adjacency();
    let mut seen = HashMap::new();
    seen.insert(center, ());
    let mut frontier = vec![center];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in adj.neighbors(u) {
                if seen.insert(v, ()).is_none() {
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let mut nodes: Vec<usize> = seen.into_keys().collect();
    nodes.sort_unstable();

    let mut local = Vec::new();
    for (a, &u) in nodes.iter().enumerate() {
        for &v in adj.neighbors(u) {
            if v > u {
                if let Ok(b) = nodes.binary_search(&v) {
                    local.push((a, b));
                }
            }
        }
    }
    let local_edges = Csr::from_edges(nodes.len(), local)?;
    let center_local = nodes.binary_search(&center).expect("center is a member");
    Ok(EgoGraph {
        center_global: center,
        radius,
        nodes_global: nodes,
        local_edges,
        center_local,
    })
}

/// `extract_ego` for every center, in input order, computed in parallel.
pub fn extract_all(graph: &Graph, centers: &[usize], radius: usize) -> Result<Vec<EgoGraph>> {
    centers
        .par_iter()
        .map(|&c| extract_ego(graph, c, radius))
        .collect()
}

/// Ego graphs computed once per run, keyed by `(center, radius)`.
#[derive(Clone, Debug, Default)]
pub struct EgoCache {
    map: HashMap<(usize, usize), EgoGraph>,
}

impl EgoCache {
    pub fn build(graph: &Graph, centers: &[usize], radius: usize) -> Result<Self> {
        let egos = extract_all(graph, centers, radius)?;
        Ok(Self {
            map: egos
                .into_iter()
                .map(|e| ((e.center_global, e.radius), e))
                .collect(),
        })
    }

    pub fn get(&self, center: usize, radius: usize) -> Option<&EgoGraph> {
        self.map.get(&(center, radius))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
