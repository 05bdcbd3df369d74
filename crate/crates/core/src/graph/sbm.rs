use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Csr, Graph, NodeRole};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, Stream};

/// Stochastic block model with Gaussian block-mean features.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of per-node noise around the block mean.
    pub feature_noise: f64,
    pub seed: u64,
    pub train_per_class: usize,
    /// Upper bound on validation nodes; never more than half of what is
    /// left after the training draw.
    pub val_size: usize,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            block_sizes: vec![50, 50],
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            feature_noise: 1.0,
            seed: 0,
            train_per_class: 20,
            val_size: 500,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(Error::validation("block_sizes is empty"));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::validation("every block needs at least one node"));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(Error::validation("edge probabilities must lie in [0, 1]"));
        }
        if self.p_out > self.p_in {
            return Err(Error::validation("p_out must not exceed p_in"));
        }
        if !self.feature_noise.is_finite() || self.feature_noise < 0.0 {
            return Err(Error::validation("feature_noise must be finite and >= 0"));
        }
        if self.block_sizes.len() > u16::MAX as usize + 1 {
            return Err(Error::validation("too many blocks"));
        }
        Ok(())
    }
}

pub fn generate_sbm(spec: &SbmParams) -> Result<Graph> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Generator);
    let classes = spec.block_sizes.len();
    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();

    let means: Vec<f64> = (0..classes * spec.feature_dim)
        .map(|_| rng.sample(StandardNormal))
        .collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let adjacency = Csr::from_edges(n, edges)?;

    let f = spec.feature_dim;
    let mut feats = Vec::with_capacity(n * f);
    for &y in &labels {
        for d in 0..f {
            let noise: f64 = rng.sample(StandardNormal);
            feats.push((means[y * f + d] + spec.feature_noise * noise) as f32);
        }
    }
    let features = Matrix::from_vec(n, f, feats)?;

    let roles = assign_roles(&labels, classes, spec, &mut rng);
    Graph::from_parts(
        format!("sbm-{}", spec.seed),
        features,
        classes,
        adjacency,
        labels,
        roles,
    )
}

fn assign_roles(
    labels: &[usize],
    classes: usize,
    spec: &SbmParams,
    rng: &mut impl Rng,
) -> Vec<NodeRole> {
    let mut roles = vec![NodeRole::Test; labels.len()];
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        pools[y].push(i);
    }
    let mut rest: Vec<std::vec::IntoIter<usize>> = Vec::with_capacity(classes);
    let mut remaining = 0;
    for pool in &mut pools {
        pool.shuffle(rng);
        let k = spec.train_per_class.min(pool.len());
        for &i in &pool[..k] {
            roles[i] = NodeRole::Train;
        }
        remaining += pool.len() - k;
        rest.push(pool.split_off(k).into_iter());
    }
    let mut val_left = spec.val_size.min(remaining / 2);
    // round-robin over classes
    while val_left > 0 {
        for it in &mut rest {
            if val_left == 0 {
                break;
            }
            if let Some(i) = it.next() {
                roles[i] = NodeRole::Val;
                val_left -= 1;
            }
        }
    }
    roles
}
