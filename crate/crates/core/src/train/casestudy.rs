use rand::Rng;

use crate::ego::EgoCache;
use crate::error::{Error, Result};
use crate::gnn::{forward, GcnModel};
use crate::graph::{normalize_csr, Graph};
use crate::mixup::{assemble_batch, build_mixed_subgraph, MixupPair};
use crate::rng::{stream, Stream};

/// Number of synthesized pairs in the miss-rate study.
pub const CASESTUDY_PAIRS: usize = 500;

/// `count` random training-node pairs with different labels, drawn with
/// replacement.
pub fn casestudy_pairs(graph: &Graph, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let train = graph.train_nodes();
    let labels = graph.labels();
    let distinct = train
        .iter()
        .any(|&a| train.iter().any(|&b| labels[a] != labels[b]));
    if !distinct {
        return Err(Error::validation(
            "miss-rate study needs training nodes from at least two classes",
        ));
    }
    let mut rng = stream(seed, Stream::CaseStudy);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = train[rng.random_range(0..train.len())];
        let j = train[rng.random_range(0..train.len())];
        if labels[i] != labels[j] {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// Fraction of mixed subgraphs whose virtual node is predicted as neither
/// source label, for each λ in `lambda_grid`.
pub fn miss_rate_experiment(
    model: &GcnModel<f32>,
    graph: &Graph,
    pairs: &[(usize, usize)],
    radius: usize,
    lambda_grid: &[f64],
) -> Result<Vec<f64>> {
    if lambda_grid.is_empty() {
        return Err(Error::validation("lambda grid is empty"));
    }
    if pairs.is_empty() {
        return Err(Error::validation("no pairs for the miss-rate study"));
    }
    let mut centers: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    centers.sort_unstable();
    centers.dedup();
    let cache = EgoCache::build(graph, &centers, radius)?;
    let ego = |c| {
        cache
            .get(c, radius)
            .ok_or_else(|| Error::Internal(format!("no ego graph for {c}")))
    };
    lambda_grid
        .iter()
        .map(|&lambda| {
            let mixed = pairs
                .iter()
                .map(|&(i, j)| {
                    let pair = MixupPair::new(graph, i, j, lambda)?;
                    build_mixed_subgraph(ego(i)?, ego(j)?, graph, &pair)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = assemble_batch(&mixed, graph)?;
            let adj = normalize_csr(&batch.adjacency);
            let trace = forward(model, &adj, &batch.features, None)?;
            let misses = batch
                .virtual_indices
                .iter()
                .zip(&batch.pairs)
                .filter(|(&v, p)| {
                    let pred = trace.probs.argmax_row(v);
                    pred != p.label_i && pred != p.label_j
                })
                .count();
            Ok(misses as f64 / pairs.len() as f64)
        })
        .collect()
}
