//! Two-layer GCN with hand-written reverse mode.
//!
//! Layer one is `ReLU(Â·X·W0)` followed by inverted dropout, layer two is
//! `softmax(Â·H·W1)`. Every normalized adjacency this crate builds is
//! symmetric, so `Âᵀ = Â` is used directly on the backward pass.
//!
//! The engine is generic over [`Real`]: training runs in `f32` while the
//! gradient checks run the same code in `f64`.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{Matrix, Real};
use crate::mixup::VirtualGraphBatch;

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Sparse–dense product `adj · dense`, accumulated row by row in column
/// order.
pub fn spmm<T: Real>(adj: &NormalizedAdjacency, dense: &Matrix<T>) -> Result<Matrix<T>> {
    if adj.num_nodes() != dense.rows() {
        return Err(Error::validation(format!(
            "spmm: adjacency has {} columns, dense has {} rows",
            adj.num_nodes(),
            dense.rows()
        )));
    }
    let cols = dense.cols();
    let mut out = Matrix::zeros(dense.rows(), cols);
    if cols == 0 {
        return Ok(out);
    }
    let kernel = |(u, out_row): (usize, &mut [T])| {
        let (idx, w) = adj.row(u);
        for (&v, &wv) in idx.iter().zip(w) {
            let wv = T::of(wv);
            for (o, &x) in out_row.iter_mut().zip(dense.row(v)) {
                *o += wv * x;
            }
        }
    };
    if out.as_slice().len() >= 1 << 14 {
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(kernel);
    } else {
        out.as_mut_slice()
            .chunks_mut(cols)
            .enumerate()
            .for_each(kernel);
    }
    Ok(out)
}

/// Uniform Glorot initialization in `±√(6/(fan_in+fan_out))`.
pub fn glorot_init<T: Real>(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of((rng.random::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel<T> {
    /// Layer-one weights, `F × H`.
    pub w0: Matrix<T>,
    /// Classifier weights, `H × C`.
    pub w1: Matrix<T>,
    pub dropout: f64,
}

impl<T: Real> GcnModel<T> {
    /// Glorot-initialized model; `w0` is drawn before `w1`.
    pub fn new(
        features: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if features == 0 || hidden == 0 || classes == 0 {
            return Err(Error::validation("model dimensions must be positive"));
        }
        let w0 = glorot_init(features, hidden, rng);
        let w1 = glorot_init(hidden, classes, rng);
        Self::from_weights(w0, w1, dropout)
    }

    pub fn from_weights(w0: Matrix<T>, w1: Matrix<T>, dropout: f64) -> Result<Self> {
        if w0.cols() != w1.rows() {
            return Err(Error::validation(format!(
                "hidden widths differ: w0 {:?}, w1 {:?}",
                w0.shape(),
                w1.shape()
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::validation(format!(
                "dropout {dropout} outside [0, 1)"
            )));
        }
        Ok(Self { w0, w1, dropout })
    }

    pub fn num_features(&self) -> usize {
        self.w0.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w0.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w1.cols()
    }

    pub fn cast<U: Real>(&self) -> GcnModel<U> {
        GcnModel {
            w0: self.w0.cast(),
            w1: self.w1.cast(),
            dropout: self.dropout,
        }
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    /// `Â·X·W0`.
    pub pre: Matrix<T>,
    /// `ReLU(pre)`; the embeddings served to the lambda policy.
    pub hidden: Matrix<T>,
    /// Inverted-dropout multipliers (`0` or `1/(1−p)`), absent in eval mode.
    pub mask: Option<Matrix<T>>,
    pub dropped: Matrix<T>,
    pub logits: Matrix<T>,
    pub probs: Matrix<T>,
}

impl<T: Real> ForwardTrace<T> {
    /// Trace carrying only an output layer, for scoring precomputed logits.
    pub fn from_logits(logits: Matrix<T>) -> Self {
        let probs = softmax_rows(&logits);
        Self {
            pre: Matrix::zeros(0, 0),
            hidden: Matrix::zeros(0, 0),
            mask: None,
            dropped: Matrix::zeros(0, 0),
            logits,
            probs,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.logits.rows()
    }
}

pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// `−log softmax(z)[y]` via log-sum-exp.
pub fn cross_entropy<T: Real>(logits: &[T], y: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&z| (z - max).exp()).sum();
    max + sum.ln() - logits[y]
}

/// Inverted-dropout multipliers for a `rows × cols` activation, drawn row
/// by row. `None` when `p == 0`.
pub fn sample_dropout_mask<T: Real>(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut impl Rng,
) -> Option<Matrix<T>> {
    if p == 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - p));
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Some(Matrix::from_vec(rows, cols, data).expect("sized by construction"))
}

/// Forward pass with an explicit dropout mask (`None` is eval mode).
pub fn forward<T: Real>(
    model: &GcnModel<T>,
    adj: &NormalizedAdjacency,
    features: &Matrix<T>,
    mask: Option<&Matrix<T>>,
) -> Result<ForwardTrace<T>> {
    if features.cols() != model.num_features() {
        return Err(Error::validation(format!(
            "features have width {}, model expects {}",
            features.cols(),
            model.num_features()
        )));
    }
    if !features.is_finite() || !model.w0.is_finite() || !model.w1.is_finite() {
        return Err(Error::Numeric("non-finite input to forward".into()));
    }
    let xw = features.matmul(&model.w0)?;
    let pre = spmm(adj, &xw)?;
    let hidden = pre.map(|v| v.max(T::zero()));
    let dropped = match mask {
        Some(m) => {
            if m.shape() != hidden.shape() {
                return Err(Error::Internal(format!(
                    "dropout mask {:?} does not match hidden {:?}",
                    m.shape(),
                    hidden.shape()
                )));
            }
            hidden.hadamard(m)
        }
        None => hidden.clone(),
    };
    let hw = dropped.matmul(&model.w1)?;
    let logits = spmm(adj, &hw)?;
    let probs = softmax_rows(&logits);
    Ok(ForwardTrace {
        pre,
        hidden,
        mask: mask.cloned(),
        dropped,
        logits,
        probs,
    })
}

/// Train-mode forward drawing a fresh dropout mask from `rng`.
pub fn forward_train<T: Real>(
    model: &GcnModel<T>,
    adj: &NormalizedAdjacency,
    features: &Matrix<T>,
    rng: &mut impl Rng,
) -> Result<ForwardTrace<T>> {
    let mask = sample_dropout_mask(features.rows(), model.hidden(), model.dropout, rng);
    forward(model, adj, features, mask.as_ref())
}

/// Mean cross-entropy over `train` nodes.
pub fn loss_main<T: Real>(trace: &ForwardTrace<T>, labels: &[usize], train: &[usize]) -> Result<T> {
    if train.is_empty() {
        return Err(Error::validation("no training nodes"));
    }
    let mut total = T::zero();
    for &i in train {
        total += cross_entropy(trace.logits.row(i), labels[i]);
    }
    Ok(total / T::of(train.len() as f64))
}

fn check_virtual<T: Real>(trace: &ForwardTrace<T>, batch: &VirtualGraphBatch) -> Result<()> {
    if batch.pairs.is_empty() {
        return Err(Error::validation("mixup batch has no pairs"));
    }
    if batch.virtual_indices.len() != batch.pairs.len() {
        return Err(Error::Internal(
            "virtual index / pair count mismatch".into(),
        ));
    }
    if let Some(&v) = batch
        .virtual_indices
        .iter()
        .find(|&&v| v >= trace.num_nodes())
    {
        return Err(Error::Internal(format!(
            "virtual index {v} outside trace of {} nodes",
            trace.num_nodes()
        )));
    }
    Ok(())
}

/// Mean over pairs of `λ·CE(y_i) + (1−λ)·CE(y_j)` at each virtual node.
pub fn loss_mixup<T: Real>(trace: &ForwardTrace<T>, batch: &VirtualGraphBatch) -> Result<T> {
    check_virtual(trace, batch)?;
    let mut total = T::zero();
    for (&v, p) in batch.virtual_indices.iter().zip(&batch.pairs) {
        let z = trace.logits.row(v);
        let l = T::of(p.lambda);
        total += l * cross_entropy(z, p.label_i) + (T::one() - l) * cross_entropy(z, p.label_j);
    }
    Ok(total / T::of(batch.pairs.len() as f64))
}

pub fn loss_total<T: Real>(main: T, mixup: T, mu: T) -> T {
    main + mu * mixup
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub w0: Matrix<T>,
    pub w1: Matrix<T>,
}

impl<T: Real> Gradients<T> {
    pub fn norm(&self) -> T {
        let a = self.w0.frobenius_norm();
        let b = self.w1.frobenius_norm();
        (a * a + b * b).sqrt()
    }
}

/// Original-graph branch of the objective.
pub struct MainBranch<'a, T> {
    pub adj: &'a NormalizedAdjacency,
    pub features: &'a Matrix<T>,
    pub trace: &'a ForwardTrace<T>,
    pub labels: &'a [usize],
    pub train: &'a [usize],
}

/// Virtual-graph branch of the objective.
pub struct MixupBranch<'a, T> {
    pub adj: &'a NormalizedAdjacency,
    pub features: &'a Matrix<T>,
    pub trace: &'a ForwardTrace<T>,
    pub batch: &'a VirtualGraphBatch,
}

/// ∂loss_main/∂logits.
pub fn main_logit_grad<T: Real>(
    trace: &ForwardTrace<T>,
    labels: &[usize],
    train: &[usize],
) -> Result<Matrix<T>> {
    if train.is_empty() {
        return Err(Error::validation("no training nodes"));
    }
    let scale = T::one() / T::of(train.len() as f64);
    let mut g = Matrix::zeros(trace.probs.rows(), trace.probs.cols());
    for &i in train {
        let row = g.row_mut(i);
        for (c, (o, &p)) in row.iter_mut().zip(trace.probs.row(i)).enumerate() {
            let target = if c == labels[i] { T::one() } else { T::zero() };
            *o = (p - target) * scale;
        }
    }
    Ok(g)
}

/// ∂(μ·loss_mixup)/∂logits.
pub fn mixup_logit_grad<T: Real>(
    trace: &ForwardTrace<T>,
    batch: &VirtualGraphBatch,
    mu: T,
) -> Result<Matrix<T>> {
    check_virtual(trace, batch)?;
    let scale = mu / T::of(batch.pairs.len() as f64);
    let mut g = Matrix::zeros(trace.probs.rows(), trace.probs.cols());
    for (&v, pair) in batch.virtual_indices.iter().zip(&batch.pairs) {
        let l = T::of(pair.lambda);
        let row = g.row_mut(v);
        for (c, (o, &p)) in row.iter_mut().zip(trace.probs.row(v)).enumerate() {
            let mut target = T::zero();
            if c == pair.label_i {
                target += l;
            }
            if c == pair.label_j {
                target += T::one() - l;
            }
            *o = (p - target) * scale;
        }
    }
    Ok(g)
}

/// Pulls `dlogits` back through one forward pass.
pub fn backward_branch<T: Real>(
    model: &GcnModel<T>,
    adj: &NormalizedAdjacency,
    features: &Matrix<T>,
    trace: &ForwardTrace<T>,
    dlogits: &Matrix<T>,
) -> Result<Gradients<T>> {
    let (n, h) = trace.hidden.shape();
    if dlogits.shape() != trace.logits.shape()
        || features.rows() != n
        || h != model.hidden()
        || trace.logits.cols() != model.num_classes()
    {
        return Err(Error::Internal(format!(
            "trace/weight shape mismatch: hidden {:?}, logits {:?}, dlogits {:?}",
            trace.hidden.shape(),
            trace.logits.shape(),
            dlogits.shape()
        )));
    }
    let g2 = spmm(adj, dlogits)?;
    let w1 = trace.dropped.t_matmul(&g2)?;
    let mut d_hidden = g2.matmul_t(&model.w1)?;
    if let Some(mask) = &trace.mask {
        d_hidden = d_hidden.hadamard(mask);
    }
    for (d, &p) in d_hidden.as_mut_slice().iter_mut().zip(trace.pre.as_slice()) {
        if p <= T::zero() {
            *d = T::zero();
        }
    }
    let g1 = spmm(adj, &d_hidden)?;
    let w0 = features.t_matmul(&g1)?;
    Ok(Gradients { w0, w1 })
}

/// Gradients of `loss_main + μ·loss_mixup` with respect to both weight
/// matrices, summing the two branches.
pub fn backward<T: Real>(
    model: &GcnModel<T>,
    main: &MainBranch<'_, T>,
    mixup: Option<&MixupBranch<'_, T>>,
    mu: T,
) -> Result<Gradients<T>> {
    let d_main = main_logit_grad(main.trace, main.labels, main.train)?;
    let mut grads = backward_branch(model, main.adj, main.features, main.trace, &d_main)?;
    if let Some(mix) = mixup {
        let d_mix = mixup_logit_grad(mix.trace, mix.batch, mu)?;
        let g = backward_branch(model, mix.adj, mix.features, mix.trace, &d_mix)?;
        grads.w0.add_assign(&g.w0)?;
        grads.w1.add_assign(&g.w1)?;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_csr, Csr};
    use crate::rng::{stream, Stream};

    fn isolated(n: usize) -> NormalizedAdjacency {
        normalize_csr(&Csr::empty(n))
    }

    #[test]
    fn spmm_examples() {
        let x = Matrix::from_rows(&[vec![1.5f64, -2.0]]).unwrap();
        assert_eq!(spmm(&isolated(1), &x).unwrap(), x);
        let a = normalize_csr(&Csr::from_edges(2, [(0, 1)]).unwrap());
        let d = Matrix::from_rows(&[vec![1.0f64], vec![3.0]]).unwrap();
        assert_eq!(spmm(&a, &d).unwrap().as_slice(), &[2.0, 2.0]);
        assert!(spmm(&a, &Matrix::<f64>::zeros(3, 1)).is_err());
    }

    #[test]
    fn one_node_softmax() {
        let model = GcnModel::from_weights(Matrix::identity(2), Matrix::identity(2), 0.0).unwrap();
        let x = Matrix::from_rows(&[vec![1.0f64, 2.0]]).unwrap();
        let t = forward(&model, &isolated(1), &x, None).unwrap();
        assert!((t.probs.get(0, 0) - 0.26894).abs() < 1e-5);
        assert!((t.probs.get(0, 1) - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut rng = stream(3, Stream::Init);
        let model = GcnModel::<f32>::new(3, 4, 2, 0.0, &mut rng).unwrap();
        let adj = normalize_csr(&Csr::from_edges(3, [(0, 1), (1, 2)]).unwrap());
        let x = Matrix::from_vec(3, 3, (0..9).map(|v| v as f32 * 0.1).collect()).unwrap();
        let eval = forward(&model, &adj, &x, None).unwrap();
        let train = forward_train(&model, &adj, &x, &mut rng).unwrap();
        assert_eq!(eval.probs, train.probs);
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let model = GcnModel::from_weights(Matrix::identity(1), Matrix::identity(1), 0.0).unwrap();
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(matches!(
            forward(&model, &isolated(1), &x, None),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn loss_examples() {
        let logits = Matrix::from_rows(&[vec![0.0f64; 7], vec![0.0; 7]]).unwrap();
        let t = ForwardTrace::from_logits(logits);
        let l = loss_main(&t, &[3, 5], &[0, 1]).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!((l - 1.94591).abs() < 1e-5);
        assert!(loss_main(&t, &[3, 5], &[]).is_err());

        let sharp = Matrix::from_rows(&[vec![800.0f64, 0.0, 0.0]]).unwrap();
        let t = ForwardTrace::from_logits(sharp);
        assert!(loss_main(&t, &[0], &[0]).unwrap() < 1e-6);
    }

    #[test]
    fn total_examples() {
        assert_eq!(loss_total(0.7f64, 3.0, 0.0), 0.7);
        assert_eq!(loss_total(0.5f64, 0.25, 1.0), 0.75);
        assert!((loss_total(1.0f64, 2.0, 0.3) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn glorot_bounds_and_variance() {
        let mut rng = stream(5, Stream::Init);
        let w: Matrix<f64> = glorot_init(300, 400, &mut rng);
        let bound = (6.0f64 / 700.0).sqrt();
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
        let n = w.as_slice().len() as f64;
        let mean = w.as_slice().iter().sum::<f64>() / n;
        let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expect = 2.0 / 700.0;
        assert!((var - expect).abs() < 0.05 * expect, "var {var}");

        let a: Matrix<f32> = glorot_init(4, 5, &mut stream(9, Stream::Init));
        let b: Matrix<f32> = glorot_init(4, 5, &mut stream(9, Stream::Init));
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_mask_values() {
        let mut rng = stream(1, Stream::DropoutMain);
        let m: Matrix<f64> = sample_dropout_mask(50, 40, 0.5, &mut rng).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.as_slice().iter().filter(|&&v| v > 0.0).count();
        assert!((800..1200).contains(&kept));
        assert!(sample_dropout_mask::<f64>(5, 5, 0.0, &mut rng).is_none());
    }
}
