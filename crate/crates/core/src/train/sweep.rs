use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::stats::mean_std;
use super::{train, RunResult, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Hyperparameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepDim {
    Radius,
    Gamma,
    Beta,
    Mu,
    Epsilon,
}

impl SweepDim {
    pub fn name(&self) -> &'static str {
        match self {
            SweepDim::Radius => "r",
            SweepDim::Gamma => "gamma",
            SweepDim::Beta => "beta",
            SweepDim::Mu => "mu",
            SweepDim::Epsilon => "epsilon",
        }
    }

    pub fn apply(&self, cfg: &mut TrainConfig, value: f64) -> Result<()> {
        match self {
            SweepDim::Radius => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Usage(format!(
                        "radius {value} is not a whole number"
                    )));
                }
                cfg.radius = value as usize;
            }
            SweepDim::Gamma => cfg.gamma = value,
            SweepDim::Beta => cfg.beta = value,
            SweepDim::Mu => cfg.mu = value,
            SweepDim::Epsilon => cfg.epsilon = value,
        }
        Ok(())
    }
}

impl fmt::Display for SweepDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "r" | "radius" => SweepDim::Radius,
            "gamma" => SweepDim::Gamma,
            "beta" => SweepDim::Beta,
            "mu" => SweepDim::Mu,
            "epsilon" | "eps" => SweepDim::Epsilon,
            other => {
                return Err(Error::Usage(format!(
                    "unknown sweep dimension {other:?}; expected r, gamma, beta, mu or epsilon"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub result: RunResult,
}

/// Aggregate over seeds for one swept value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_val_acc: f64,
    pub std_val_acc: f64,
    pub mean_confidence: f64,
    pub mean_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub dim: SweepDim,
    /// Ordered by value (as given) then ascending seed.
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

/// Trains every `(value, seed)` combination. Each cell is seeded by its own
/// seed alone, so results do not depend on the order of `seeds`.
pub fn sweep(
    graph: &Graph,
    base: &TrainConfig,
    dim: SweepDim,
    values: &[f64],
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<SweepTable> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Usage(
            "sweep needs at least one value and one seed".into(),
        ));
    }
    let mut uniq: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if !uniq.contains(&v) {
            uniq.push(v);
        }
    }
    let values = &uniq[..];
    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    sorted_seeds.dedup();

    let mut configs = Vec::new();
    for &v in values {
        for &s in &sorted_seeds {
            let mut cfg = base.clone();
            dim.apply(&mut cfg, v)?;
            cfg.seed = s;
            cfg.validate()?;
            configs.push((v, s, cfg));
        }
    }

    let run = || {
        configs
            .par_iter()
            .map(|(v, s, cfg)| {
                Ok(SweepCell {
                    value: *v,
                    seed: *s,
                    result: train(graph, cfg)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let cells = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    let rows = values
        .iter()
        .map(|&v| {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.value == v).collect();
            let col = |f: &dyn Fn(&RunResult) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|c| f(&c.result)).collect()
            };
            let (mean_test_acc, std_test_acc) = mean_std(&col(&|r| r.test_acc()));
            let (mean_val_acc, std_val_acc) = mean_std(&col(&|r| Some(r.best_val_acc)));
            let (mean_confidence, _) = mean_std(&col(&|r| r.confidence()));
            let (mean_gap, _) = mean_std(&col(&|r| r.gap()));
            SweepRow {
                value: v,
                runs: group.len(),
                mean_test_acc,
                std_test_acc,
                mean_val_acc,
                std_val_acc,
                mean_confidence,
                mean_gap,
            }
        })
        .collect();
    Ok(SweepTable { dim, cells, rows })
}
