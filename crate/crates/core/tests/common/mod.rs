#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use agmixup::ego::extract_ego;
use agmixup::gnn::{
    backward, forward, loss_main, loss_mixup, sample_dropout_mask, GcnModel, Gradients, MainBranch,
    MixupBranch,
};
use agmixup::graph::{normalize_csr, Graph, NodeRole, NormalizedAdjacency};
use agmixup::linalg::Matrix;
use agmixup::mixup::{
    assemble_batch, build_mixed_subgraph, MixedSubgraph, MixupPair, VirtualGraphBatch,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with Gaussian features and uniform labels. The first
/// `n_train` nodes (after a shuffle) are Train, the next one Val, the rest
/// Test.
pub fn random_graph(
    r: &mut impl Rng,
    n: usize,
    p: f64,
    f: usize,
    c: usize,
    n_train: usize,
) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let feats: Vec<f32> = (0..n * f).map(|_| r.random::<f32>() * 2.0 - 1.0).collect();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let mut roles = vec![NodeRole::Test; n];
    for (k, &u) in order.iter().enumerate() {
        if k < n_train {
            roles[u] = NodeRole::Train;
        } else if k == n_train {
            roles[u] = NodeRole::Val;
        }
    }
    Graph::new(
        "random",
        Matrix::from_vec(n, f, feats).unwrap(),
        c,
        edges,
        labels,
        roles,
    )
    .unwrap()
}

/// Every node within `radius` hops of `center`, by plain BFS over the
/// graph's neighbor lists.
pub fn bfs_ball(graph: &Graph, center: usize, radius: usize) -> BTreeSet<usize> {
    let adj = graph.adjacency();
    let mut dist = vec![usize::MAX; graph.num_nodes()];
    dist[center] = 0;
    let mut q = VecDeque::from([center]);
    while let Some(u) = q.pop_front() {
        if dist[u] == radius {
            continue;
        }
        for &v in adj.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    (0..graph.num_nodes())
        .filter(|&v| dist[v] != usize::MAX)
        .collect()
}

/// Mixed batch over random pairs of distinct training nodes.
pub fn random_batch(
    graph: &Graph,
    r: &mut impl Rng,
    pairs: usize,
    radius: usize,
) -> VirtualGraphBatch {
    assemble_batch(&random_mixed(graph, r, pairs, radius), graph).unwrap()
}

pub fn random_mixed(
    graph: &Graph,
    r: &mut impl Rng,
    pairs: usize,
    radius: usize,
) -> Vec<MixedSubgraph> {
    let train = graph.train_nodes();
    (0..pairs)
        .map(|_| {
            let mut pick = train.clone();
            pick.shuffle(r);
            let (i, j) = (pick[0], pick[1]);
            let pair = MixupPair::new(graph, i, j, r.random::<f64>()).unwrap();
            let ei = extract_ego(graph, i, radius).unwrap();
            let ej = extract_ego(graph, j, radius).unwrap();
            build_mixed_subgraph(&ei, &ej, graph, &pair).unwrap()
        })
        .collect()
}

/// A fixed instance of the full objective in f64: frozen dropout masks on
/// both branches so it is a deterministic function of the weights.
pub struct Objective {
    pub adj: NormalizedAdjacency,
    pub x: Matrix<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub mask: Option<Matrix<f64>>,
    pub mix: Option<MixTerm>,
    pub mu: f64,
}

pub struct MixTerm {
    pub adj: NormalizedAdjacency,
    pub x: Matrix<f64>,
    pub batch: VirtualGraphBatch,
    pub mask: Option<Matrix<f64>>,
}

impl Objective {
    pub fn new(
        graph: &Graph,
        batch: Option<VirtualGraphBatch>,
        mu: f64,
        hidden: usize,
        dropout: f64,
        r: &mut impl Rng,
    ) -> Self {
        let mask = sample_dropout_mask(graph.num_nodes(), hidden, dropout, r);
        let mix = batch.map(|b| MixTerm {
            adj: normalize_csr(&b.adjacency),
            x: b.features.cast(),
            mask: sample_dropout_mask(b.num_nodes(), hidden, dropout, r),
            batch: b,
        });
        Self {
            adj: graph.normalize(),
            x: graph.features().cast(),
            labels: graph.labels().to_vec(),
            train: graph.train_nodes(),
            mask,
            mix,
            mu,
        }
    }

    pub fn value(&self, model: &GcnModel<f64>) -> f64 {
        let t = forward(model, &self.adj, &self.x, self.mask.as_ref()).unwrap();
        let mut total = loss_main(&t, &self.labels, &self.train).unwrap();
        if let Some(m) = &self.mix {
            let tm = forward(model, &m.adj, &m.x, m.mask.as_ref()).unwrap();
            total += self.mu * loss_mixup(&tm, &m.batch).unwrap();
        }
        total
    }

    pub fn gradient(&self, model: &GcnModel<f64>) -> Gradients<f64> {
        let t = forward(model, &self.adj, &self.x, self.mask.as_ref()).unwrap();
        let main = MainBranch {
            adj: &self.adj,
            features: &self.x,
            trace: &t,
            labels: &self.labels,
            train: &self.train,
        };
        match &self.mix {
            Some(m) => {
                let tm = forward(model, &m.adj, &m.x, m.mask.as_ref()).unwrap();
                let branch = MixupBranch {
                    adj: &m.adj,
                    features: &m.x,
                    trace: &tm,
                    batch: &m.batch,
                };
                backward(model, &main, Some(&branch), self.mu).unwrap()
            }
            None => backward(model, &main, None, self.mu).unwrap(),
        }
    }
}

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over every weight.
pub fn max_grad_error(obj: &Objective, model: &GcnModel<f64>, h: f64) -> f64 {
    let g = obj.gradient(model);
    let mut worst = 0.0f64;
    for layer in 0..2 {
        let len = if layer == 0 {
            model.w0.as_slice().len()
        } else {
            model.w1.as_slice().len()
        };
        for k in 0..len {
            let probe = |delta: f64| {
                let mut m = model.clone();
                let w = if layer == 0 { &mut m.w0 } else { &mut m.w1 };
                w.as_mut_slice()[k] += delta;
                obj.value(&m)
            };
            let numeric = (probe(h) - probe(-h)) / (2.0 * h);
            let analytic = if layer == 0 {
                g.w0.as_slice()[k]
            } else {
                g.w1.as_slice()[k]
            };
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

/// Dense `(A + I)` of the graph, for matrix-power reachability.
pub fn dense_a_plus_i(graph: &Graph) -> Vec<Vec<u64>> {
    let n = graph.num_nodes();
    let mut m = vec![vec![0u64; n]; n];
    for (u, row) in m.iter_mut().enumerate() {
        row[u] = 1;
        for &v in graph.adjacency().neighbors(u) {
            row[v] = 1;
        }
    }
    m
}

pub fn bool_matmul(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    let mut out = vec![vec![0u64; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0 {
                continue;
            }
            for j in 0..n {
                if b[k][j] != 0 {
                    out[i][j] = 1;
                }
            }
        }
    }
    out
}
