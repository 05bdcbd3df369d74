//! Subgraph-centric mixup: pair sampling, mixed ego graphs with a virtual
//! center node, and their disjoint union as one batch.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ego::EgoGraph;
use crate::error::{Error, Result};
use crate::graph::{Csr, Graph, NodeRole};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixupPair {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
    pub label_i: usize,
    pub label_j: usize,
}

impl MixupPair {
    /// Pair of two distinct training nodes with mixing ratio `lambda`.
    pub fn new(graph: &Graph, i: usize, j: usize, lambda: f64) -> Result<Self> {
        let n = graph.num_nodes();
        if i >= n || j >= n {
            return Err(Error::validation(format!("pair ({i},{j}) out of range")));
        }
        if i == j {
            return Err(Error::validation("pair endpoints must differ"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::validation(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(Self {
            i,
            j,
            lambda,
            label_i: graph.labels()[i],
            label_j: graph.labels()[j],
        })
    }

    /// Like [`MixupPair::new`] but also requires both endpoints to be
    /// train-masked.
    pub fn new_train(graph: &Graph, i: usize, j: usize, lambda: f64) -> Result<Self> {
        let pair = Self::new(graph, i, j, lambda)?;
        let roles = graph.roles();
        if roles[i] != NodeRole::Train || roles[j] != NodeRole::Train {
            return Err(Error::validation(format!(
                "pair ({i},{j}) includes a node outside the training mask"
            )));
        }
        Ok(pair)
    }
}

/// Pairs consecutive entries of a random permutation of `labeled` and keeps
/// the first `⌊ε·|labeled|/2⌋`.
pub fn sample_pairs(
    labeled: &[usize],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    if labeled.len() < 2 {
        return Err(Error::validation("need at least two labeled nodes to pair"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::validation(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    let mut perm = labeled.to_vec();
    perm.shuffle(rng);
    let keep = pair_count(labeled.len(), epsilon);
    Ok(perm
        .chunks_exact(2)
        .take(keep)
        .map(|c| (c[0], c[1]))
        .collect())
}

pub fn pair_count(labeled: usize, epsilon: f64) -> usize {
    // nudge so products like 0.7·10 that land a hair under an integer floor up
    ((epsilon * labeled as f64 / 2.0) + 1e-9).floor() as usize
}

/// `λ·x_i + (1−λ)·x_j`, elementwise in f32.
pub fn mix_features(x_i: &[f32], x_j: &[f32], lambda: f64) -> Result<Vec<f32>> {
    if x_i.len() != x_j.len() {
        return Err(Error::validation(format!(
            "feature lengths differ: {} vs {}",
            x_i.len(),
            x_j.len()
        )));
    }
    let l = lambda as f32;
    let m = 1.0 - l;
    Ok(x_i.iter().zip(x_j).map(|(&a, &b)| l * a + m * b).collect())
}

/// One mixed ego graph. Local index 0 is the virtual node; local index
/// `k + 1` is `nodes_global[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSubgraph {
    pub pair: MixupPair,
    pub nodes_global: Vec<usize>,
    pub virtual_features: Vec<f32>,
    pub local_edges: Csr,
    pub radius: usize,
}

impl MixedSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes_global.len() + 1
    }

    pub fn virtual_degree(&self) -> usize {
        self.local_edges.degree(0)
    }

    /// Edges with the virtual node written as `None`, sorted.
    pub fn canonical_edges(&self) -> Vec<(Option<usize>, Option<usize>)> {
        let name = |k: usize| {
            if k == 0 {
                None
            } else {
                Some(self.nodes_global[k - 1])
            }
        };
        let mut out: Vec<_> = self
            .local_edges
            .edges()
            .map(|(a, b)| {
                let (x, y) = (name(a), name(b));
                if x <= y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn build_mixed_subgraph(
    ego_i: &EgoGraph,
    ego_j: &EgoGraph,
    graph: &Graph,
    pair: &MixupPair,
) -> Result<MixedSubgraph> {
    if ego_i.radius != ego_j.radius {
        return Err(Error::Usage(format!(
            "ego radii differ: {} vs {}",
            ego_i.radius, ego_j.radius
        )));
    }
    if ego_i.center_global != pair.i || ego_j.center_global != pair.j {
        return Err(Error::Usage(format!(
            "ego centers ({},{}) do not match pair ({},{})",
            ego_i.center_global, ego_j.center_global, pair.i, pair.j
        )));
    }
    let (ci, cj) = (pair.i, pair.j);
    let centers = |v: &usize| *v != ci && *v != cj;

    let nodes: Vec<usize> = ego_i
        .nodes_global
        .iter()
        .chain(&ego_j.nodes_global)
        .copied()
        .filter(centers)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let local = |g: usize| nodes.binary_search(&g).ok().map(|k| k + 1);

    let adj = graph.adjacency();
    let mut edges = BTreeSet::new();
    for &v in adj.neighbors(ci).iter().chain(adj.neighbors(cj)) {
        if let Some(k) = local(v) {
            edges.insert((0, k));
        }
    }
    for (u, v) in ego_i.global_edges().chain(ego_j.global_edges()) {
        if u == ci || u == cj || v == ci || v == cj {
            continue;
        }
        let (a, b) = (local(u), local(v));
        if let (Some(a), Some(b)) = (a, b) {
            edges.insert((a, b));
        }
    }
    let local_edges = Csr::from_edges(nodes.len() + 1, edges)?;

    let feats = graph.features();
    let virtual_features = mix_features(feats.row(ci), feats.row(cj), pair.lambda)?;
    Ok(MixedSubgraph {
        pair: *pair,
        nodes_global: nodes,
        virtual_features,
        local_edges,
        radius: ego_i.radius,
    })
}

/// Disjoint union of mixed subgraphs.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualGraphBatch {
    pub block_offsets: Vec<usize>,
    pub features: Matrix<f32>,
    pub adjacency: Csr,
    pub virtual_indices: Vec<usize>,
    pub pairs: Vec<MixupPair>,
}

impl VirtualGraphBatch {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let end = self
            .block_offsets
            .get(k + 1)
            .copied()
            .unwrap_or_else(|| self.num_nodes());
        self.block_offsets[k]..end
    }
}

pub fn assemble_batch(mixed: &[MixedSubgraph], graph: &Graph) -> Result<VirtualGraphBatch> {
    if mixed.is_empty() {
        return Err(Error::validation("cannot batch zero mixed subgraphs"));
    }
    let f = graph.num_features();
    if let Some(m) = mixed.iter().find(|m| m.virtual_features.len() != f) {
        return Err(Error::validation(format!(
            "virtual feature width {} does not match graph width {f}",
            m.virtual_features.len()
        )));
    }
    let total: usize = mixed.iter().map(MixedSubgraph::num_nodes).sum();
    let mut data = Vec::with_capacity(total * f);
    let mut block_offsets = Vec::with_capacity(mixed.len());
    let src = graph.features();
    let mut at = 0;
    for m in mixed {
        block_offsets.push(at);
        at += m.num_nodes();
        data.extend_from_slice(&m.virtual_features);
        for &g in &m.nodes_global {
            data.extend_from_slice(src.row(g));
        }
    }
    let features = Matrix::from_vec(total, f, data)?;
    let adjacency = Csr::block_diagonal(mixed.iter().map(|m| &m.local_edges));
    Ok(VirtualGraphBatch {
        virtual_indices: block_offsets.clone(),
        block_offsets,
        features,
        adjacency,
        pairs: mixed.iter().map(|m| m.pair).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ego::extract_ego;
    use crate::rng::{stream, Stream};

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        let feats = (0..n * 2).map(|v| v as f32).collect();
        Graph::new(
            "g",
            Matrix::from_vec(n, 2, feats).unwrap(),
            2,
            edges.iter().copied(),
            (0..n).map(|i| i % 2).collect(),
            vec![NodeRole::Train; n],
        )
        .unwrap()
    }

    #[test]
    fn pair_counts() {
        let labeled: Vec<usize> = (0..140).collect();
        let mut rng = stream(1, Stream::PairSampling);
        let pairs = sample_pairs(&labeled, 1.0, &mut rng).unwrap();
        assert_eq!(pairs.len(), 70);
        let mut seen: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 140);
        assert_eq!(sample_pairs(&labeled, 0.5, &mut rng).unwrap().len(), 35);
        assert_eq!(sample_pairs(&[4, 5, 6], 1.0, &mut rng).unwrap().len(), 1);
        assert!(sample_pairs(&[4], 1.0, &mut rng).is_err());
        assert!(sample_pairs(&labeled, 0.0, &mut rng).is_err());
        assert_eq!(pair_count(10, 0.7), 3);
    }

    #[test]
    fn mix_examples() {
        let xi = [1.0, 0.0];
        let xj = [0.0, 2.0];
        assert_eq!(mix_features(&xi, &xj, 1.0).unwrap(), xi.to_vec());
        assert_eq!(mix_features(&xi, &xj, 0.25).unwrap(), vec![0.25, 1.5]);
        assert!(mix_features(&xi, &[1.0], 0.5).is_err());
    }

    #[test]
    fn disjoint_stars() {
        // i=0 with leaves 1,2; j=3 with leaf 4
        let g = graph(5, &[(0, 1), (0, 2), (3, 4)]);
        let pair = MixupPair::new(&g, 0, 3, 0.5).unwrap();
        let m = build_mixed_subgraph(
            &extract_ego(&g, 0, 1).unwrap(),
            &extract_ego(&g, 3, 1).unwrap(),
            &g,
            &pair,
        )
        .unwrap();
        assert_eq!(m.nodes_global, vec![1, 2, 4]);
        assert_eq!(
            m.canonical_edges(),
            vec![(None, Some(1)), (None, Some(2)), (None, Some(4))]
        );
        assert_eq!(m.virtual_features, vec![3.0, 4.0]);
    }

    #[test]
    fn adjacent_centers_collapse() {
        // a=0 - i=1 - j=2 - b=3
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let pair = MixupPair::new(&g, 1, 2, 0.3).unwrap();
        let m = build_mixed_subgraph(
            &extract_ego(&g, 1, 1).unwrap(),
            &extract_ego(&g, 2, 1).unwrap(),
            &g,
            &pair,
        )
        .unwrap();
        assert_eq!(m.nodes_global, vec![0, 3]);
        assert_eq!(m.canonical_edges(), vec![(None, Some(0)), (None, Some(3))]);
    }

    #[test]
    fn radius_zero_is_single_virtual_node() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let pair = MixupPair::new(&g, 0, 3, 0.5).unwrap();
        let m = build_mixed_subgraph(
            &extract_ego(&g, 0, 0).unwrap(),
            &extract_ego(&g, 3, 0).unwrap(),
            &g,
            &pair,
        )
        .unwrap();
        assert_eq!(m.num_nodes(), 1);
        assert_eq!(m.local_edges.num_edges(), 0);
    }

    #[test]
    fn radius_mismatch_is_usage_error() {
        let g = graph(4, &[(0, 1)]);
        let pair = MixupPair::new(&g, 0, 3, 0.5).unwrap();
        let r = build_mixed_subgraph(
            &extract_ego(&g, 0, 1).unwrap(),
            &extract_ego(&g, 3, 2).unwrap(),
            &g,
            &pair,
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn batch_offsets() {
        // blocks of 4 and 3 nodes
        let g = graph(9, &[(0, 1), (0, 2), (3, 4), (5, 6), (7, 8)]);
        let egos = |c| extract_ego(&g, c, 1).unwrap();
        let a = build_mixed_subgraph(
            &egos(0),
            &egos(3),
            &g,
            &MixupPair::new(&g, 0, 3, 0.5).unwrap(),
        )
        .unwrap();
        let b = build_mixed_subgraph(
            &egos(5),
            &egos(7),
            &g,
            &MixupPair::new(&g, 5, 7, 0.5).unwrap(),
        )
        .unwrap();
        assert_eq!((a.num_nodes(), b.num_nodes()), (4, 3));
        let batch = assemble_batch(&[a.clone(), b], &g).unwrap();
        assert_eq!(batch.num_nodes(), 7);
        assert_eq!(batch.virtual_indices, vec![0, 4]);
        assert_eq!(batch.block_range(1), 4..7);
        assert_eq!(batch.features.row(1), g.features().row(1));

        let single = assemble_batch(std::slice::from_ref(&a), &g).unwrap();
        assert_eq!(single.adjacency, a.local_edges);
        assert_eq!(single.block_offsets, vec![0]);
        assert!(assemble_batch(&[], &g).is_err());
    }
}
