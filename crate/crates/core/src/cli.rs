//! Command-line front end: `train`, `sweep`, `casestudy`, `gen-sbm` and
//! `validate-bundle`.
//!
//! Every command validates its arguments and inputs before it creates any
//! output. Exit codes: 0 success, 1 usage, 2 data/validation, 3 numeric.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gnn::{load_checkpoint, save_checkpoint, Checkpoint, GcnModel};
use crate::graph::{generate_sbm, load_bundle, save_bundle, Graph, NodeRole, SbmParams};
use crate::train::report::{
    write_casestudy, write_summary, write_sweep, write_trace, CaseStudyRow,
};
use crate::train::{
    casestudy_pairs, evaluate, miss_rate_experiment, sweep, train, PolicyKind, RunResult, SweepDim,
    TrainConfig, CASESTUDY_PAIRS,
};

#[derive(Parser, Debug)]
#[command(
    name = "agmixup",
    version,
    about = "Graph mixup with adaptive mixing ratios on a GCN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write summary.csv, trace.csv and model.ckpt.
    Train(TrainArgs),
    /// Train over a grid of one hyperparameter and several seeds.
    Sweep(SweepArgs),
    /// Miss rate of mixed virtual nodes across a λ grid, per policy.
    Casestudy(CaseStudyArgs),
    /// Write a stochastic block model graph as a bundle directory.
    GenSbm(GenSbmArgs),
    /// Load a bundle, check it, and print its counts.
    ValidateBundle(ValidateArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// Bundle directory holding meta.json, edges.bin, features.bin, labels.bin, masks.bin
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Seed for every random stream (required, here or in --config)
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with the same keys as the flags; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: agmixup-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
struct Hyper {
    /// Mixing policy: adaptive, random-beta, fixed or vanilla [default: adaptive]
    #[arg(long)]
    policy: Option<String>,
    /// Ego-graph radius r [default: 2]
    #[arg(long, visible_alias = "r")]
    radius: Option<usize>,
    /// Similarity temperature γ, required by the adaptive policy
    #[arg(long)]
    gamma: Option<f64>,
    /// Uncertainty weight β, required by the adaptive policy
    #[arg(long)]
    beta: Option<f64>,
    /// Weight μ of the mixup loss [default: 1.0]
    #[arg(long)]
    mu: Option<f64>,
    /// Fraction ε of training nodes paired each epoch [default: 1.0]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Beta(α, α) shape for the random-beta policy [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Constant λ for the fixed policy [default: 0.5]
    #[arg(long)]
    lambda: Option<f64>,
    /// Hidden width H [default: 128]
    #[arg(long)]
    hidden: Option<usize>,
    /// Dropout on the hidden layer [default: 0.5]
    #[arg(long)]
    dropout: Option<f64>,
    /// Adam learning rate [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight decay [default: 0.0005]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Epoch cap [default: 500]
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Early-stopping patience on validation accuracy [default: 50]
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    /// Swept hyperparameter: r, gamma, beta, mu or epsilon
    #[arg(long)]
    dim: String,
    /// Values as `a..b:step`, `a..b` (step 1) or a comma list
    #[arg(long)]
    values: String,
    /// Number of seeds counted up from --seed [default: 1]
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<usize>,
    /// Explicit comma-separated seeds; replaces --seeds
    #[arg(long)]
    seed_list: Option<String>,
    /// Worker threads for concurrent runs [default: all cores]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct CaseStudyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    /// Measure this checkpoint instead of training the four policies
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// λ grid in the same syntax as sweep values [default: 0..1:0.1]
    #[arg(long)]
    grid: Option<String>,
    /// Number of synthesized pairs [default: 500]
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Args, Debug)]
struct GenSbmArgs {
    /// Comma-separated block sizes, one per class
    #[arg(long)]
    blocks: String,
    /// Within-block edge probability
    #[arg(long)]
    p_in: f64,
    /// Between-block edge probability
    #[arg(long)]
    p_out: f64,
    /// Feature dimension
    #[arg(long, default_value_t = 16)]
    features: usize,
    /// Feature noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Training nodes per class
    #[arg(long, default_value_t = 20)]
    train_per_class: usize,
    /// Validation node cap
    #[arg(long, default_value_t = 500)]
    val_size: usize,
    /// Generator seed
    #[arg(long)]
    seed: u64,
    /// Bundle directory to create
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Bundle directory
    path: PathBuf,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    policy: Option<String>,
    radius: Option<usize>,
    gamma: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    lambda: Option<f64>,
    hidden: Option<usize>,
    dropout: Option<f64>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
}

/// Resolved command-line settings after merging flags, config file and
/// defaults.
#[derive(Clone, Debug)]
struct Resolved {
    dataset: PathBuf,
    out: PathBuf,
    seed: u64,
    config: TrainConfig,
    alpha: f64,
    lambda: f64,
}

const DEFAULT_OUT: &str = "agmixup-out";

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    let res = match cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout, stderr),
        Command::Casestudy(a) => cmd_casestudy(a, stdout),
        Command::GenSbm(a) => cmd_gen_sbm(a, stdout),
        Command::ValidateBundle(a) => cmd_validate(a, stdout),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// When γ and β must be given explicitly.
#[derive(Clone, Copy, PartialEq, Eq)]
enum NeedGammaBeta {
    /// Only if the selected policy is adaptive.
    ForPolicy,
    Always,
    Never,
}

fn resolve(common: &Common, hyper: &Hyper, need: NeedGammaBeta) -> Result<Resolved> {
    let file = match &common.config {
        Some(p) => read_config(p)?,
        None => FileConfig::default(),
    };
    let d = TrainConfig::default();
    let dataset = common
        .dataset
        .clone()
        .or(file.dataset)
        .ok_or_else(|| usage("--dataset is required"))?;
    let seed = common
        .seed
        .or(file.seed)
        .ok_or_else(|| usage("--seed is required"))?;
    let out = common
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let gamma = hyper.gamma.or(file.gamma);
    let beta = hyper.beta.or(file.beta);
    let alpha = hyper.alpha.or(file.alpha).unwrap_or(1.0);
    let lambda = hyper.lambda.or(file.lambda).unwrap_or(0.5);
    let policy_name = hyper
        .policy
        .clone()
        .or(file.policy)
        .unwrap_or_else(|| "adaptive".into());
    let policy = match policy_name.as_str() {
        "adaptive" => PolicyKind::Adaptive,
        "random-beta" => PolicyKind::RandomBeta { alpha },
        "fixed" => PolicyKind::Fixed { value: lambda },
        "vanilla" => PolicyKind::Vanilla,
        other => {
            return Err(usage(format!(
                "unknown policy {other:?}; expected adaptive, random-beta, fixed or vanilla"
            )))
        }
    };
    let required = match need {
        NeedGammaBeta::ForPolicy => policy == PolicyKind::Adaptive,
        NeedGammaBeta::Always => true,
        NeedGammaBeta::Never => false,
    };
    if required && (gamma.is_none() || beta.is_none()) {
        return Err(usage("the adaptive policy needs both --gamma and --beta"));
    }
    let config = TrainConfig {
        radius: hyper.radius.or(file.radius).unwrap_or(d.radius),
        gamma: gamma.unwrap_or(d.gamma),
        beta: beta.unwrap_or(d.beta),
        mu: hyper.mu.or(file.mu).unwrap_or(d.mu),
        epsilon: hyper.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
        policy,
        hidden: hyper.hidden.or(file.hidden).unwrap_or(d.hidden),
        dropout: hyper.dropout.or(file.dropout).unwrap_or(d.dropout),
        lr: hyper.lr.or(file.lr).unwrap_or(d.lr),
        weight_decay: hyper
            .weight_decay
            .or(file.weight_decay)
            .unwrap_or(d.weight_decay),
        max_epochs: hyper.max_epochs.or(file.max_epochs).unwrap_or(d.max_epochs),
        patience: hyper.patience.or(file.patience).unwrap_or(d.patience),
        seed,
    };
    config.validate().map_err(as_usage)?;
    Ok(Resolved {
        dataset,
        out,
        seed,
        config,
        alpha,
        lambda,
    })
}

fn as_usage(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Usage(m),
        other => other,
    }
}

/// Parses `a..b:step`, `a..b` or `x,y,z`. Range endpoints are inclusive and
/// values are rounded to 10 decimals so `0.1..1.0:0.1` yields exactly ten
/// clean values.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| usage(format!("not a number: {s:?}")))?;
        if !v.is_finite() {
            return Err(usage(format!("not a finite number: {s:?}")));
        }
        Ok(v)
    };
    if let Some((a, rest)) = spec.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (num(b)?, num(s)?),
            None => (num(rest)?, 1.0),
        };
        let a = num(a)?;
        if step <= 0.0 || b < a {
            return Err(usage(format!("empty or malformed range {spec:?}")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        if n > 100_000 {
            return Err(usage(format!("range {spec:?} has too many values")));
        }
        return Ok((0..n)
            .map(|k| ((a + k as f64 * step) * 1e10).round() / 1e10)
            .collect());
    }
    let vals = spec.split(',').map(num).collect::<Result<Vec<_>>>()?;
    if vals.is_empty() {
        return Err(usage("empty value list"));
    }
    Ok(vals)
}

fn dedup_values(values: Vec<f64>, stderr: &mut dyn Write) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        if out.contains(&v) {
            let _ = writeln!(stderr, "warning: duplicate value {v} dropped");
        } else {
            out.push(v);
        }
    }
    out
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| usage(format!("not a seed: {t:?}")))
        })
        .collect()
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Miss rates of `model` over `grid`; `None` when the graph has no pair of
/// differently labeled training nodes.
fn miss_rates(
    model: &GcnModel<f32>,
    graph: &Graph,
    radius: usize,
    count: usize,
    seed: u64,
    grid: &[f64],
) -> Result<Option<Vec<f64>>> {
    let pairs = match casestudy_pairs(graph, count, seed) {
        Ok(p) => p,
        Err(Error::Validation(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    miss_rate_experiment(model, graph, &pairs, radius, grid).map(Some)
}

fn summary_line(run: &RunResult) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    format!(
        "policy={} seed={} epochs={} best_epoch={} val_acc={:.4} test_acc={} confidence={} gap={}",
        run.config.policy.name(),
        run.config.seed,
        run.epochs_ran,
        run.best_epoch,
        run.best_val_acc,
        f(run.test_acc()),
        f(run.confidence()),
        f(run.gap()),
    )
}

fn cmd_train(a: TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let r = resolve(&a.common, &a.hyper, NeedGammaBeta::ForPolicy)?;
    let graph = load_bundle(&r.dataset)?;
    let run = train(&graph, &r.config)?;
    let grid = default_grid();
    let miss = miss_rates(
        &run.model,
        &graph,
        r.config.radius,
        CASESTUDY_PAIRS,
        r.seed,
        &grid,
    )?
    .unwrap_or_default();

    create_out(&r.out)?;
    let id = format!("{}-{}", run.config.policy.name(), r.seed);
    write_summary(
        create_file(&r.out.join("summary.csv"))?,
        &[(id.clone(), &run, miss)],
        &grid,
    )?;
    write_trace(create_file(&r.out.join("trace.csv"))?, &[(id, &run)])?;
    save_checkpoint(
        &Checkpoint {
            seed: r.seed,
            model: run.model.clone(),
        },
        r.out.join("model.ckpt"),
    )?;
    let _ = writeln!(stdout, "{}", summary_line(&run));
    Ok(())
}

fn cmd_sweep(a: SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let r = resolve(&a.common, &a.hyper, NeedGammaBeta::ForPolicy)?;
    let dim: SweepDim = a.dim.parse()?;
    let values = dedup_values(parse_values(&a.values)?, stderr);
    let seeds: Vec<u64> = match (&a.seed_list, a.seeds) {
        (Some(list), _) => parse_seed_list(list)?,
        (None, n) => {
            let n = n.unwrap_or(1);
            if n == 0 {
                return Err(usage("--seeds must be at least 1"));
            }
            (0..n as u64).map(|k| r.seed.wrapping_add(k)).collect()
        }
    };
    if a.jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    for &v in &values {
        let mut cfg = r.config.clone();
        dim.apply(&mut cfg, v)?;
        cfg.validate().map_err(as_usage)?;
    }
    let graph = load_bundle(&r.dataset)?;
    let table = sweep(&graph, &r.config, dim, &values, &seeds, a.jobs)?;

    create_out(&r.out)?;
    write_sweep(create_file(&r.out.join("sweep.csv"))?, &table)?;
    let ids: Vec<String> = table
        .cells
        .iter()
        .map(|c| format!("{}={}-{}", dim.name(), c.value, c.seed))
        .collect();
    let summary: Vec<(String, &RunResult, Vec<f64>)> = table
        .cells
        .iter()
        .zip(&ids)
        .map(|(c, id)| (id.clone(), &c.result, Vec::new()))
        .collect();
    write_summary(create_file(&r.out.join("runs.csv"))?, &summary, &[])?;
    let traces: Vec<(String, &RunResult)> = table
        .cells
        .iter()
        .zip(ids)
        .map(|(c, id)| (id, &c.result))
        .collect();
    write_trace(create_file(&r.out.join("trace.csv"))?, &traces)?;
    let _ = writeln!(
        stdout,
        "dimension={} runs={} rows={}",
        dim.name(),
        table.cells.len(),
        table.rows.len()
    );
    Ok(())
}

fn cmd_casestudy(a: CaseStudyArgs, stdout: &mut dyn Write) -> Result<()> {
    let need = if a.checkpoint.is_some() {
        NeedGammaBeta::Never
    } else {
        NeedGammaBeta::Always
    };
    let r = resolve(&a.common, &a.hyper, need)?;
    let grid = match &a.grid {
        Some(s) => parse_values(s)?,
        None => default_grid(),
    };
    if grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(usage("λ grid values must lie in [0, 1]"));
    }
    let count = a.pairs.unwrap_or(CASESTUDY_PAIRS);
    if count == 0 {
        return Err(usage("--pairs must be at least 1"));
    }
    let graph = load_bundle(&r.dataset)?;
    let ckpt = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    if let Some(c) = &ckpt {
        if c.model.num_features() != graph.num_features()
            || c.model.num_classes() != graph.num_classes()
        {
            return Err(Error::Validation(format!(
                "checkpoint expects {} features and {} classes, graph has {} and {}",
                c.model.num_features(),
                c.model.num_classes(),
                graph.num_features(),
                graph.num_classes()
            )));
        }
    }

    let mut rows = Vec::new();
    let mut push = |policy: &str, model: &GcnModel<f32>, train_lambda: Option<f64>| -> Result<()> {
        let eval = evaluate(model, &graph)?;
        let miss =
            miss_rates(model, &graph, r.config.radius, count, r.seed, &grid)?.ok_or_else(|| {
                Error::validation("miss-rate study needs training nodes from two classes")
            })?;
        for (&lambda, &miss_rate) in grid.iter().zip(&miss) {
            rows.push(CaseStudyRow {
                policy: policy.to_string(),
                lambda,
                miss_rate,
                num_pairs: count,
                test_acc: eval.test.map(|m| m.accuracy),
                confidence: eval.confidence,
                gap: eval.gap,
                train_mean_lambda: train_lambda,
            });
        }
        Ok(())
    };
    match &ckpt {
        Some(c) => push("checkpoint", &c.model, None)?,
        None => {
            for policy in [
                PolicyKind::Adaptive,
                PolicyKind::RandomBeta { alpha: r.alpha },
                PolicyKind::Fixed { value: r.lambda },
                PolicyKind::Vanilla,
            ] {
                let cfg = TrainConfig {
                    policy,
                    ..r.config.clone()
                };
                cfg.validate().map_err(as_usage)?;
                let run = train(&graph, &cfg)?;
                push(policy.name(), &run.model, run.mean_lambda())?;
            }
        }
    }

    create_out(&r.out)?;
    write_casestudy(create_file(&r.out.join("casestudy.csv"))?, &rows)?;
    let _ = writeln!(stdout, "rows={} pairs={count}", rows.len());
    Ok(())
}

fn parse_blocks(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| usage(format!("not a block size: {t:?}")))
        })
        .collect()
}

fn cmd_gen_sbm(a: GenSbmArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = SbmParams {
        block_sizes: parse_blocks(&a.blocks)?,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.features,
        feature_noise: a.noise,
        seed: a.seed,
        train_per_class: a.train_per_class,
        val_size: a.val_size,
    };
    spec.validate().map_err(as_usage)?;
    let graph = generate_sbm(&spec)?;
    save_bundle(&graph, &a.out)?;
    let _ = writeln!(
        stdout,
        "nodes={} edges={}",
        graph.num_nodes(),
        graph.adjacency().num_edges()
    );
    Ok(())
}

fn cmd_validate(a: ValidateArgs, stdout: &mut dyn Write) -> Result<()> {
    let g = load_bundle(&a.path)?;
    let count = |r| g.nodes_with_role(r).len();
    let _ = writeln!(
        stdout,
        "name={} nodes={} edges={} features={} classes={} train={} val={} test={}",
        g.name(),
        g.num_nodes(),
        g.adjacency().num_edges(),
        g.num_features(),
        g.num_classes(),
        count(NodeRole::Train),
        count(NodeRole::Val),
        count(NodeRole::Test),
    );
    Ok(())
}
