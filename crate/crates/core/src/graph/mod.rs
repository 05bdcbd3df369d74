//! Node-attributed undirected graphs, symmetric GCN normalization, the
//! on-disk bundle format and a stochastic block model generator.

mod bundle;
mod sbm;

use std::collections::BTreeSet;

pub use bundle::{load_bundle, save_bundle, BundleMeta};
pub use sbm::{generate_sbm, SbmParams};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Compressed sparse rows over an unweighted, symmetric, loop-free edge set.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            offsets: vec![0; num_nodes + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a symmetric CSR from undirected edges given in either
    /// orientation. Duplicates collapse; self-loops and out-of-range ids
    /// are rejected.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_nodes];
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::validation(format!(
                    "edge ({u},{v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::validation(format!("self-loop on node {u}")));
            }
            rows[u].insert(v);
            rows[v].insert(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for row in rows {
            indices.extend(row);
            offsets.push(indices.len());
        }
        Ok(Self { offsets, indices })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.indices[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Stacks `blocks` along the diagonal, shifting each block's ids by the
    /// total size of the blocks before it.
    pub fn block_diagonal<'a>(blocks: impl IntoIterator<Item = &'a Csr>) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut base = 0;
        for b in blocks {
            for u in 0..b.num_nodes() {
                indices.extend(b.neighbors(u).iter().map(|&v| v + base));
                offsets.push(indices.len());
            }
            base += b.num_nodes();
        }
        Self { offsets, indices }
    }
}

/// `D^{-1/2}(A+I)D^{-1/2}` in CSR form with sorted columns. Degrees count
/// the added self-loop.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn row(&self, u: usize) -> (&[usize], &[f64]) {
        let span = self.offsets[u]..self.offsets[u + 1];
        (&self.indices[span.clone()], &self.weights[span])
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let (cols, w) = self.row(u);
        cols.binary_search(&v).ok().map(|k| w[k])
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> Matrix<f64> {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for u in 0..n {
            let (cols, w) = self.row(u);
            for (&v, &x) in cols.iter().zip(w) {
                m.set(u, v, x);
            }
        }
        m
    }
}

/// Symmetric normalization with self-loops of an unweighted adjacency.
pub fn normalize_csr(adj: &Csr) -> NormalizedAdjacency {
    let n = adj.num_nodes();
    let deg: Vec<usize> = (0..n).map(|u| adj.degree(u) + 1).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.indices.len() + n);
    let mut weights = Vec::with_capacity(adj.indices.len() + n);
    offsets.push(0);
    for u in 0..n {
        let nbrs = adj.neighbors(u);
        let split = nbrs.partition_point(|&v| v < u);
        let cols = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(u))
            .chain(nbrs[split..].iter().copied());
        for v in cols {
            indices.push(v);
            // product first so weight(u,v) and weight(v,u) round identically
            weights.push(1.0 / ((deg[u] * deg[v]) as f64).sqrt());
        }
        offsets.push(indices.len());
    }
    NormalizedAdjacency {
        offsets,
        indices,
        weights,
    }
}

/// Mask role of a node. Roles are mutually exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum NodeRole {
    #[default]
    Unlabeled,
    Train,
    Val,
    Test,
}

impl NodeRole {
    pub(crate) fn to_bits(self) -> u8 {
        match self {
            NodeRole::Unlabeled => 0,
            NodeRole::Train => 1,
            NodeRole::Val => 2,
            NodeRole::Test => 4,
        }
    }

    pub(crate) fn from_bits(b: u8) -> Option<Self> {
        match b {
            0 => Some(NodeRole::Unlabeled),
            1 => Some(NodeRole::Train),
            2 => Some(NodeRole::Val),
            4 => Some(NodeRole::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    name: String,
    num_classes: usize,
    adjacency: Csr,
    features: Matrix<f32>,
    labels: Vec<usize>,
    roles: Vec<NodeRole>,
}

impl Graph {
    /// Validates and builds a graph. Edges may be listed in either
    /// orientation and with repeats.
    pub fn new<I>(
        name: impl Into<String>,
        features: Matrix<f32>,
        num_classes: usize,
        edges: I,
        labels: Vec<usize>,
        roles: Vec<NodeRole>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = features.rows();
        let adjacency = Csr::from_edges(n, edges)?;
        Self::from_parts(name.into(), features, num_classes, adjacency, labels, roles)
    }

    pub(crate) fn from_parts(
        name: String,
        features: Matrix<f32>,
        num_classes: usize,
        adjacency: Csr,
        labels: Vec<usize>,
        roles: Vec<NodeRole>,
    ) -> Result<Self> {
        let n = features.rows();
        if num_classes == 0 {
            return Err(Error::validation("num_classes must be positive"));
        }
        if adjacency.num_nodes() != n || labels.len() != n || roles.len() != n {
            return Err(Error::validation(format!(
                "inconsistent node counts: features {n}, adjacency {}, labels {}, masks {}",
                adjacency.num_nodes(),
                labels.len(),
                roles.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::validation(format!(
                "label {y} of node {i} is not below num_classes {num_classes}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::validation("non-finite feature value"));
        }
        Ok(Self {
            name,
            num_classes,
            adjacency,
            features,
            labels,
            roles,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.roles[i] == role)
            .collect()
    }

    /// Labeled training nodes, ascending.
    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes_with_role(NodeRole::Train)
    }

    pub fn normalize(&self) -> NormalizedAdjacency {
        normalize_csr(&self.adjacency)
    }

    /// Same graph with a different role assignment.
    pub fn with_roles(&self, roles: Vec<NodeRole>) -> Result<Self> {
        Self::from_parts(
            self.name.clone(),
            self.features.clone(),
            self.num_classes,
            self.adjacency.clone(),
            self.labels.clone(),
            roles,
        )
    }
}

pub fn normalize(graph: &Graph) -> NormalizedAdjacency {
    graph.normalize()
}
