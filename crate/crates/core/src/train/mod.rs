//! End-to-end training with the mixup branch, evaluation metrics, the
//! miss-rate case study, sweeps and significance testing.

mod casestudy;
pub mod report;
mod stats;
mod sweep;

pub use casestudy::{casestudy_pairs, miss_rate_experiment, CASESTUDY_PAIRS};
pub use stats::{mean_std, paired_t_test, PairedT};
pub use sweep::{sweep, SweepCell, SweepDim, SweepRow, SweepTable};

use rayon::prelude::*;

use crate::ego::EgoCache;
use crate::error::{Error, Result};
use crate::gnn::{
    backward, cross_entropy, forward, forward_train, loss_main, loss_mixup, loss_total, AdamConfig,
    AdamState, ForwardTrace, GcnModel, MainBranch, MixupBranch, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
use crate::graph::{normalize_csr, Graph, NodeRole, NormalizedAdjacency};
use crate::lambda::{draw_lambda, LambdaPolicy, PairContext};
use crate::linalg::Matrix;
use crate::mixup::{assemble_batch, build_mixed_subgraph, sample_pairs, MixupPair};
use crate::rng::{stream, Stream};

/// How mixing ratios are produced, or no mixup branch at all.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyKind {
    Vanilla,
    /// Uses the config's `gamma` and `beta`.
    Adaptive,
    RandomBeta {
        alpha: f64,
    },
    Fixed {
        value: f64,
    },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Vanilla => "vanilla",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::RandomBeta { .. } => "random-beta",
            PolicyKind::Fixed { .. } => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub radius: usize,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    /// Fraction of labeled nodes paired per epoch; 0 disables mixup.
    pub epsilon: f64,
    pub policy: PolicyKind,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            gamma: 1.0,
            beta: 1.0,
            mu: 1.0,
            epsilon: 1.0,
            policy: PolicyKind::Adaptive,
            hidden: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            lr: 0.01,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(m));
        if !(self.mu >= 0.0 && self.mu <= 1.0) {
            return bad("mu must lie in [0, 1]");
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be >= 0");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be >= 1");
        }
        if let Some(p) = self.lambda_policy() {
            p.validate()?;
        }
        Ok(())
    }

    pub fn lambda_policy(&self) -> Option<LambdaPolicy> {
        match self.policy {
            PolicyKind::Vanilla => None,
            PolicyKind::Adaptive => Some(LambdaPolicy::Adaptive {
                gamma: self.gamma,
                beta: self.beta,
            }),
            PolicyKind::RandomBeta { alpha } => Some(LambdaPolicy::RandomBeta { alpha }),
            PolicyKind::Fixed { value } => Some(LambdaPolicy::Fixed { value }),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoleMetrics {
    pub accuracy: f64,
    pub loss: f64,
}

/// Eval-mode metrics; a role with no nodes is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub train: Option<RoleMetrics>,
    pub val: Option<RoleMetrics>,
    pub test: Option<RoleMetrics>,
    /// Mean max-probability over test nodes.
    pub confidence: Option<f64>,
    /// Test loss minus train loss.
    pub gap: Option<f64>,
}

fn role_metrics(
    trace: &ForwardTrace<f32>,
    labels: &[usize],
    nodes: &[usize],
) -> Option<RoleMetrics> {
    if nodes.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut loss = 0.0f64;
    for &i in nodes {
        if trace.probs.argmax_row(i) == labels[i] {
            hits += 1;
        }
        let z: Vec<f64> = trace.logits.row(i).iter().map(|&v| v as f64).collect();
        loss += cross_entropy(&z, labels[i]);
    }
    let n = nodes.len() as f64;
    Some(RoleMetrics {
        accuracy: hits as f64 / n,
        loss: loss / n,
    })
}

/// Metrics from an existing eval-mode trace on `graph`.
pub fn evaluate_trace(trace: &ForwardTrace<f32>, graph: &Graph) -> Evaluation {
    let labels = graph.labels();
    let role = |r| role_metrics(trace, labels, &graph.nodes_with_role(r));
    let train = role(NodeRole::Train);
    let val = role(NodeRole::Val);
    let test = role(NodeRole::Test);
    let test_nodes = graph.nodes_with_role(NodeRole::Test);
    let confidence = (!test_nodes.is_empty()).then(|| {
        let total: f64 = test_nodes
            .iter()
            .map(|&i| {
                let row = trace.probs.row(i);
                row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64
            })
            .sum();
        total / test_nodes.len() as f64
    });
    let gap = match (&train, &test) {
        (Some(a), Some(b)) => Some(b.loss - a.loss),
        _ => None,
    };
    Evaluation {
        train,
        val,
        test,
        confidence,
        gap,
    }
}

/// Eval-mode forward plus per-role accuracy, loss and confidence.
pub fn evaluate(model: &GcnModel<f32>, graph: &Graph) -> Result<Evaluation> {
    let adj = graph.normalize();
    let trace = forward(model, &adj, graph.features(), None)?;
    Ok(evaluate_trace(&trace, graph))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Train-mode `loss_main` of the step.
    pub loss_main: f64,
    /// Train-mode `loss_mixup`, absent without a mixup branch.
    pub loss_mixup: Option<f64>,
    pub objective: f64,
    /// Eval-mode metrics after the update.
    pub eval: Evaluation,
    /// Mixing ratio of every pair used in this epoch.
    pub lambdas: Vec<f64>,
}

impl EpochMetrics {
    pub fn mean_lambda(&self) -> Option<f64> {
        (!self.lambdas.is_empty())
            .then(|| self.lambdas.iter().sum::<f64>() / self.lambdas.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub config: TrainConfig,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Metrics of the best-validation checkpoint.
    pub best: Evaluation,
    pub epochs_ran: usize,
    pub trace: Vec<EpochMetrics>,
    pub model: GcnModel<f32>,
}

impl RunResult {
    pub fn test_acc(&self) -> Option<f64> {
        self.best.test.map(|m| m.accuracy)
    }

    pub fn confidence(&self) -> Option<f64> {
        self.best.confidence
    }

    pub fn gap(&self) -> Option<f64> {
        self.best.gap
    }

    /// Mean mixing ratio over every pair of the whole run.
    pub fn mean_lambda(&self) -> Option<f64> {
        let all: Vec<f64> = self
            .trace
            .iter()
            .flat_map(|e| e.lambdas.iter().copied())
            .collect();
        (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// Ego-graph means of hidden embeddings and predicted probabilities.
pub fn pair_context(
    trace: &ForwardTrace<f32>,
    cache: &EgoCache,
    radius: usize,
    i: usize,
    j: usize,
) -> Result<PairContext> {
    let summarize = |c: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let ego = cache
            .get(c, radius)
            .ok_or_else(|| Error::Internal(format!("no cached ego graph for node {c}")))?;
        Ok((
            mean_rows(&trace.hidden, &ego.nodes_global),
            mean_rows(&trace.probs, &ego.nodes_global),
        ))
    };
    let (hi, pi) = summarize(i)?;
    let (hj, pj) = summarize(j)?;
    Ok(PairContext {
        mean_embedding_i: hi,
        mean_embedding_j: hj,
        mean_probs_i: pi,
        mean_probs_j: pj,
        num_classes: trace.probs.cols(),
    })
}

fn mean_rows(m: &Matrix<f32>, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0f64; m.cols()];
    for &r in rows {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a += v as f64;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

struct MixupInputs {
    policy: LambdaPolicy,
    cache: EgoCache,
}

/// Runs the training loop with early stopping on validation accuracy and
/// returns the best-validation checkpoint with its metrics.
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<RunResult> {
    config.validate()?;
    let train_nodes = graph.train_nodes();
    if train_nodes.is_empty() {
        return Err(Error::validation("graph has no training nodes"));
    }
    if graph.nodes_with_role(NodeRole::Val).is_empty() {
        return Err(Error::validation("graph has no validation nodes"));
    }
    let seed = config.seed;
    let adj = graph.normalize();
    let features = graph.features();
    let labels = graph.labels();

    let mut init_rng = stream(seed, Stream::Init);
    let mut model = GcnModel::<f32>::new(
        graph.num_features(),
        config.hidden,
        graph.num_classes(),
        config.dropout,
        &mut init_rng,
    )?;
    let mut adam = AdamState::for_model(config.adam(), &model);
    let mut drop_main = stream(seed, Stream::DropoutMain);
    let mut drop_mix = stream(seed, Stream::DropoutMix);
    let mut pair_rng = stream(seed, Stream::PairSampling);
    let mut beta_rng = stream(seed, Stream::BetaSampling);

    let mixup = match config.lambda_policy() {
        Some(policy) if config.epsilon > 0.0 && train_nodes.len() >= 2 => {
            if matches!(policy, LambdaPolicy::Adaptive { .. }) && graph.num_classes() < 2 {
                return Err(Error::validation(
                    "adaptive lambda needs at least two classes",
                ));
            }
            Some(MixupInputs {
                policy,
                cache: EgoCache::build(graph, &train_nodes, config.radius)?,
            })
        }
        _ => None,
    };

    let mut eval_trace = forward(&model, &adj, features, None)?;
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, GcnModel<f32>, Evaluation)> = None;

    for epoch in 1..=config.max_epochs {
        let mut lambdas = Vec::new();
        let batch = match &mixup {
            Some(mx) => {
                let idx = sample_pairs(&train_nodes, config.epsilon, &mut pair_rng)?;
                if idx.is_empty() {
                    None
                } else {
                    let mut pairs = Vec::with_capacity(idx.len());
                    for &(i, j) in &idx {
                        let ctx = match mx.policy {
                            LambdaPolicy::Adaptive { .. } => {
                                Some(pair_context(&eval_trace, &mx.cache, config.radius, i, j)?)
                            }
                            _ => None,
                        };
                        let lambda = draw_lambda(&mx.policy, ctx.as_ref(), &mut beta_rng)?;
                        lambdas.push(lambda);
                        pairs.push(MixupPair::new_train(graph, i, j, lambda)?);
                    }
                    let mixed = pairs
                        .par_iter()
                        .map(|p| {
                            let ego = |c| {
                                mx.cache.get(c, config.radius).ok_or_else(|| {
                                    Error::Internal(format!("no cached ego graph for {c}"))
                                })
                            };
                            build_mixed_subgraph(ego(p.i)?, ego(p.j)?, graph, p)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(assemble_batch(&mixed, graph)?)
                }
            }
            None => None,
        };

        let main_trace = forward_train(&model, &adj, features, &mut drop_main)?;
        let l_main = loss_main(&main_trace, labels, &train_nodes)?;
        let main = MainBranch {
            adj: &adj,
            features,
            trace: &main_trace,
            labels,
            train: &train_nodes,
        };
        let mu = config.mu as f32;
        let (grads, l_mix) = match &batch {
            Some(b) => {
                let b_adj: NormalizedAdjacency = normalize_csr(&b.adjacency);
                let mix_trace = forward_train(&model, &b_adj, &b.features, &mut drop_mix)?;
                let l_mix = loss_mixup(&mix_trace, b)?;
                let branch = MixupBranch {
                    adj: &b_adj,
                    features: &b.features,
                    trace: &mix_trace,
                    batch: b,
                };
                (backward(&model, &main, Some(&branch), mu)?, Some(l_mix))
            }
            None => (backward(&model, &main, None, mu)?, None),
        };
        let objective = loss_total(l_main, l_mix.unwrap_or(0.0), mu);
        if !objective.is_finite() {
            return Err(Error::Numeric(format!(
                "objective diverged at epoch {epoch}"
            )));
        }
        adam.step_model(&mut model, &grads)?;

        eval_trace = forward(&model, &adj, features, None)?;
        let eval = evaluate_trace(&eval_trace, graph);
        let val_acc = eval.val.map_or(0.0, |m| m.accuracy);
        if best.as_ref().is_none_or(|b| val_acc > b.1) {
            best = Some((epoch, val_acc, model.clone(), eval.clone()));
        }
        trace.push(EpochMetrics {
            epoch,
            loss_main: l_main as f64,
            loss_mixup: l_mix.map(|v| v as f64),
            objective: objective as f64,
            eval,
            lambdas,
        });
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let (best_epoch, best_val_acc, best_model, best_eval) = best.expect("at least one epoch ran");
    Ok(RunResult {
        config: config.clone(),
        best_epoch,
        best_val_acc,
        best: best_eval,
        epochs_ran: trace.len(),
        trace,
        model: best_model,
    })
}
