//! Mixing-ratio generation: similarity-aware initialization with
//! uncertainty-aware adjustment, random Beta draws, or a constant.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaPolicy {
    /// `gamma` scales the similarity kernel, `beta` the uncertainty shift.
    Adaptive {
        gamma: f64,
        beta: f64,
    },
    RandomBeta {
        alpha: f64,
    },
    Fixed {
        value: f64,
    },
}

impl LambdaPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaPolicy::Adaptive { gamma, beta } => {
                if !(gamma >= 0.0 && gamma.is_finite() && beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::validation("gamma and beta must be finite and >= 0"));
                }
            }
            LambdaPolicy::RandomBeta { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::validation("alpha must be finite and > 0"));
                }
            }
            LambdaPolicy::Fixed { value } => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::validation("fixed lambda must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LambdaPolicy::Adaptive { .. } => "adaptive",
            LambdaPolicy::RandomBeta { .. } => "random-beta",
            LambdaPolicy::Fixed { .. } => "fixed",
        }
    }
}

/// Ego-graph summaries of one mixup pair under the current model.
#[derive(Clone, Debug, PartialEq)]
pub struct PairContext {
    pub mean_embedding_i: Vec<f64>,
    pub mean_embedding_j: Vec<f64>,
    pub mean_probs_i: Vec<f64>,
    pub mean_probs_j: Vec<f64>,
    pub num_classes: usize,
}

impl PairContext {
    pub fn swapped(&self) -> Self {
        Self {
            mean_embedding_i: self.mean_embedding_j.clone(),
            mean_embedding_j: self.mean_embedding_i.clone(),
            mean_probs_i: self.mean_probs_j.clone(),
            mean_probs_j: self.mean_probs_i.clone(),
            num_classes: self.num_classes,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "embedding lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `0.5 · exp(−γ‖h̄_i − h̄_j‖²)`, floored at the smallest normal f64 so
/// the result stays strictly positive.
pub fn init_lambda(ctx: &PairContext, gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::validation("gamma must be >= 0"));
    }
    let d2 = squared_distance(&ctx.mean_embedding_i, &ctx.mean_embedding_j)?;
    Ok((0.5 * (-gamma * d2).exp()).max(f64::MIN_POSITIVE))
}

/// Natural-log Shannon entropy, with `0 · ln 0 = 0`.
pub fn entropy(probs: &[f64], num_classes: usize) -> Result<f64> {
    if probs.len() != num_classes {
        return Err(Error::validation(format!(
            "probability vector has {} entries, expected {num_classes}",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(Error::validation(format!("negative probability {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::validation(format!("probabilities sum to {total}")));
    }
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// Adjusted ratio before and after clipping to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adjusted {
    pub unclipped: f64,
    pub lambda: f64,
}

/// `Clip(λ⁰ + β(ū_i − ū_j)/ln C, 0, 1)`.
pub fn adjust_lambda(lambda0: f64, ctx: &PairContext, beta: f64) -> Result<Adjusted> {
    if ctx.num_classes < 2 {
        return Err(Error::validation(
            "uncertainty adjustment needs at least two classes",
        ));
    }
    let u_i = entropy(&ctx.mean_probs_i, ctx.num_classes)?;
    let u_j = entropy(&ctx.mean_probs_j, ctx.num_classes)?;
    let u_max = (ctx.num_classes as f64).ln();
    let unclipped = lambda0 + beta * ((u_i - u_j) / u_max);
    Ok(Adjusted {
        unclipped,
        lambda: unclipped.clamp(0.0, 1.0),
    })
}

/// Beta(α, α) from two Gamma(α, 1) draws.
pub fn sample_symmetric_beta(alpha: f64, rng: &mut impl Rng) -> Result<f64> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::validation(e.to_string()))?;
    let a: f64 = gamma.sample(rng);
    let b: f64 = gamma.sample(rng);
    if a + b == 0.0 {
        // both draws underflowed; only reachable for tiny alpha
        return Ok(if rng.random::<bool>() { 1.0 } else { 0.0 });
    }
    Ok(a / (a + b))
}

pub fn draw_lambda<R: Rng>(
    policy: &LambdaPolicy,
    ctx: Option<&PairContext>,
    rng: &mut R,
) -> Result<f64> {
    match *policy {
        LambdaPolicy::Adaptive { gamma, beta } => {
            let ctx =
                ctx.ok_or_else(|| Error::Usage("adaptive lambda requires a pair context".into()))?;
            let l0 = init_lambda(ctx, gamma)?;
            Ok(adjust_lambda(l0, ctx, beta)?.lambda)
        }
        LambdaPolicy::RandomBeta { alpha } => sample_symmetric_beta(alpha, rng),
        LambdaPolicy::Fixed { value } => Ok(value),
    }
}
