//! CSV layouts for run traces, run summaries, sweep aggregates and the
//! case study. Column order is stable; absent values are empty fields.

use std::io::Write;

use super::{RunResult, SweepTable};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Label printed for a λ grid value, e.g. `0.3`.
pub fn grid_label(lambda: f64) -> String {
    lambda.to_string()
}

const CONFIG_COLUMNS: [&str; 8] = [
    "run_id", "seed", "policy", "r", "gamma", "beta", "mu", "epsilon",
];

fn config_fields(run_id: &str, r: &RunResult) -> Vec<String> {
    let c = &r.config;
    vec![
        run_id.to_string(),
        c.seed.to_string(),
        c.policy.name().to_string(),
        c.radius.to_string(),
        c.gamma.to_string(),
        c.beta.to_string(),
        c.mu.to_string(),
        c.epsilon.to_string(),
    ]
}

pub fn write_trace<W: Write>(out: W, runs: &[(String, &RunResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CONFIG_COLUMNS.to_vec();
    header.extend([
        "epoch",
        "train_loss",
        "val_loss",
        "test_loss",
        "train_acc",
        "val_acc",
        "test_acc",
        "confidence",
        "gap",
        "mean_lambda",
    ]);
    w.write_record(&header)?;
    for (id, run) in runs {
        for e in &run.trace {
            let mut rec = config_fields(id, run);
            let ev = &e.eval;
            rec.extend([
                e.epoch.to_string(),
                opt(ev.train.map(|m| m.loss)),
                opt(ev.val.map(|m| m.loss)),
                opt(ev.test.map(|m| m.loss)),
                opt(ev.train.map(|m| m.accuracy)),
                opt(ev.val.map(|m| m.accuracy)),
                opt(ev.test.map(|m| m.accuracy)),
                opt(ev.confidence),
                opt(ev.gap),
                opt(e.mean_lambda()),
            ]);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per run. `miss` pairs each run with its miss rates over `grid`
/// (an empty slice leaves those columns blank).
pub fn write_summary<W: Write>(
    out: W,
    runs: &[(String, &RunResult, Vec<f64>)],
    grid: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = CONFIG_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(
        [
            "epochs_ran",
            "best_epoch",
            "best_val_acc",
            "test_acc",
            "train_loss",
            "val_loss",
            "test_loss",
            "confidence",
            "gap",
            "mean_lambda",
        ]
        .map(String::from),
    );
    header.extend(grid.iter().map(|&l| format!("miss_{}", grid_label(l))));
    w.write_record(&header)?;
    for (id, run, miss) in runs {
        let b = &run.best;
        let mut rec = config_fields(id, run);
        rec.extend([
            run.epochs_ran.to_string(),
            run.best_epoch.to_string(),
            run.best_val_acc.to_string(),
            opt(run.test_acc()),
            opt(b.train.map(|m| m.loss)),
            opt(b.val.map(|m| m.loss)),
            opt(b.test.map(|m| m.loss)),
            opt(b.confidence),
            opt(b.gap),
            opt(run.mean_lambda()),
        ]);
        for k in 0..grid.len() {
            rec.push(opt(miss.get(k).copied()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dimension",
        "value",
        "runs",
        "mean_test_acc",
        "std_test_acc",
        "mean_val_acc",
        "std_val_acc",
        "mean_confidence",
        "mean_gap",
    ])?;
    for r in &table.rows {
        w.write_record([
            table.dim.name().to_string(),
            r.value.to_string(),
            r.runs.to_string(),
            r.mean_test_acc.to_string(),
            r.std_test_acc.to_string(),
            r.mean_val_acc.to_string(),
            r.std_val_acc.to_string(),
            r.mean_confidence.to_string(),
            r.mean_gap.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Case-study row: one per (policy, λ) with the run's confidence and gap.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudyRow {
    pub policy: String,
    pub lambda: f64,
    pub miss_rate: f64,
    pub num_pairs: usize,
    pub test_acc: Option<f64>,
    pub confidence: Option<f64>,
    pub gap: Option<f64>,
    /// Mean training λ; absent for runs without a mixup branch.
    pub train_mean_lambda: Option<f64>,
}

pub const CASESTUDY_HEADER: [&str; 8] = [
    "policy",
    "lambda",
    "miss_rate",
    "num_pairs",
    "test_acc",
    "confidence",
    "gap",
    "train_mean_lambda",
];

pub fn write_casestudy<W: Write>(out: W, rows: &[CaseStudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CASESTUDY_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            grid_label(r.lambda),
            r.miss_rate.to_string(),
            r.num_pairs.to_string(),
            opt(r.test_acc),
            opt(r.confidence),
            opt(r.gap),
            opt(r.train_mean_lambda),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
