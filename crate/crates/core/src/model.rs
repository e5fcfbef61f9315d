//! Two-layer graph convolutional network with hand-derived gradients.
//!
//! `Z0 = Â X W0`, `H1 = dropout(ReLU(Z0))`, `Z1 = Â H1 W1`; softmax lives in
//! the loss. No bias terms.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::NormalizedAdjacency;
use crate::rng::SeededRng;

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Weights of both layers in one flat buffer: `W0` (`d × f`, row-major)
/// followed by `W1` (`f × K`, row-major). [`GradientVector`] uses the same
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    input_dim: usize,
    hidden: usize,
    num_classes: usize,
    values: Vec<f64>,
}

impl GcnParams {
    pub fn from_matrices(w0: &Array2<f64>, w1: &Array2<f64>) -> Result<Self> {
        if w0.ncols() != w1.nrows() {
            return Err(Error::shape(format!(
                "W0 is {}x{}, W1 is {}x{}",
                w0.nrows(),
                w0.ncols(),
                w1.nrows(),
                w1.ncols()
            )));
        }
        let mut values: Vec<f64> = w0.iter().copied().collect();
        values.extend(w1.iter().copied());
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(Self {
            input_dim: w0.nrows(),
            hidden: w0.ncols(),
            num_classes: w1.ncols(),
            values,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn split(&self) -> usize {
        self.input_dim * self.hidden
    }

    pub fn w0(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.input_dim, self.hidden), &self.values[..self.split()])
            .expect("W0 shape")
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.hidden, self.num_classes), &self.values[self.split()..])
            .expect("W1 shape")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Glorot-uniform initialization with bound `√(6 / (fan_in + fan_out))`.
pub fn init_params(input_dim: usize, hidden: usize, num_classes: usize, rng: &mut SeededRng) -> Result<GcnParams> {
    if input_dim == 0 || hidden == 0 || num_classes == 0 {
        return Err(Error::invalid("layer dimensions must be positive"));
    }
    let mut values = Vec::with_capacity(input_dim * hidden + hidden * num_classes);
    for (fan_in, fan_out) in [(input_dim, hidden), (hidden, num_classes)] {
        let bound = glorot_bound(fan_in, fan_out);
        values.extend((0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)));
    }
    Ok(GcnParams {
        input_dim,
        hidden,
        num_classes,
        values,
    })
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Flattened `∂L/∂W0` then `∂L/∂W1`, matching [`GcnParams`] layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for GradientVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `Â X W0`
    pub z0: Array2<f64>,
    /// ReLU of `z0` after dropout.
    pub h1: Array2<f64>,
    /// `Â H1 W1`
    pub z1: Array2<f64>,
    /// Per-unit dropout multiplier: 0 or `1/(1-p)`. `None` in evaluation mode.
    pub dropout_mask: Option<Array2<f64>>,
}

fn check_inputs(params: &GcnParams, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<()> {
    if x.num_rows() != adj.num_nodes() {
        return Err(Error::shape(format!(
            "adjacency has {} nodes, features have {} rows",
            adj.num_nodes(),
            x.num_rows()
        )));
    }
    if x.dim() != params.input_dim() {
        return Err(Error::shape(format!(
            "features have dimension {}, model expects {}",
            x.dim(),
            params.input_dim()
        )));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters"));
    }
    Ok(())
}

/// Runs both layers. In training mode hidden units are dropped with
/// probability `dropout` and survivors scaled by `1/(1-dropout)`; in
/// evaluation mode the hidden layer passes through unchanged.
pub fn forward(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    dropout: f64,
    training: bool,
    rng: &mut SeededRng,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::invalid(format!("dropout {dropout} not in [0, 1)")));
    }
    check_inputs(params, adj, x)?;
    let xw = x.matmul(&params.w0().to_owned())?;
    let z0 = adj.spmm(&xw)?;
    let mut h1 = z0.mapv(|v| v.max(0.0));
    let dropout_mask = if training && dropout > 0.0 {
        let scale = 1.0 / (1.0 - dropout);
        let mask = Array2::from_shape_simple_fn(h1.raw_dim(), || {
            if rng.bernoulli(dropout) {
                0.0
            } else {
                scale
            }
        });
        h1 *= &mask;
        Some(mask)
    } else {
        None
    };
    let z1 = adj.spmm(&h1.dot(&params.w1()))?;
    Ok(ForwardTrace {
        z0,
        h1,
        z1,
        dropout_mask,
    })
}

fn check_mask(labels: &[usize], mask: &[usize], n: usize, num_classes: usize) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} nodes", labels.len())));
    }
    for &i in mask {
        if i >= n {
            return Err(Error::IndexOutOfRange {
                what: "nodes",
                index: i,
                bound: n,
            });
        }
        if labels[i] >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: labels[i],
                num_classes,
            });
        }
    }
    Ok(())
}

fn log_softmax_row(row: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v - log_sum).collect()
}

/// Mean negative log-likelihood of `labels` over the nodes in `mask`.
pub fn masked_cross_entropy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_mask(labels, mask, logits.nrows(), logits.ncols())?;
    let total: f64 = mask
        .iter()
        .map(|&i| -log_softmax_row(logits.row(i))[labels[i]])
        .sum();
    Ok(total / mask.len() as f64)
}

/// Exact gradient of [`masked_cross_entropy`] with respect to both weight
/// matrices, given the trace of the forward pass that produced the logits.
pub fn backward(
    trace: &ForwardTrace,
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<GradientVector> {
    check_inputs(params, adj, x)?;
    let n = adj.num_nodes();
    let k = params.num_classes();
    let f = params.hidden();
    if trace.z1.dim() != (n, k) || trace.h1.dim() != (n, f) || trace.z0.dim() != (n, f) {
        return Err(Error::shape("forward trace does not match inputs"));
    }
    check_mask(labels, mask, n, k)?;

    // dL/dZ1: (softmax - onehot) / |mask| on masked rows.
    let scale = 1.0 / mask.len() as f64;
    let mut g1 = Array2::<f64>::zeros((n, k));
    for &i in mask {
        let log_p = log_softmax_row(trace.z1.row(i));
        let mut row = g1.row_mut(i);
        for (c, lp) in log_p.into_iter().enumerate() {
            row[c] = lp.exp() * scale;
        }
        row[labels[i]] -= scale;
    }
    // Â is symmetric, so Âᵀ G = Â G.
    let a_g1 = adj.spmm(&g1)?;
    let grad_w1 = trace.h1.t().dot(&a_g1);
    let mut grad_z0 = a_g1.dot(&params.w1().t());
    if let Some(m) = &trace.dropout_mask {
        grad_z0 *= m;
    }
    grad_z0.zip_mut_with(&trace.z0, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let grad_w0 = x.transpose_matmul(&adj.spmm(&grad_z0)?)?;

    let mut flat = Vec::with_capacity(params.len());
    flat.extend(grad_w0.iter().copied());
    flat.extend(grad_w1.iter().copied());
    Ok(GradientVector(flat))
}

/// Forward in training mode followed by backward; returns loss and gradient.
pub fn loss_and_gradient(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    mask: &[usize],
    dropout: f64,
    rng: &mut SeededRng,
) -> Result<(f64, GradientVector)> {
    let trace = forward(params, adj, x, dropout, true, rng)?;
    let loss = masked_cross_entropy(&trace.z1, labels, mask)?;
    let grad = backward(&trace, params, adj, x, labels, mask)?;
    Ok((loss, grad))
}

/// Classification quality on a node subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Misclassified nodes, ascending.
    pub errors: Vec<usize>,
}

impl Metrics {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], mask: &[usize], num_classes: usize) -> Result<Self> {
        check_mask(labels, mask, labels.len(), num_classes)?;
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        let mut errors = Vec::new();
        for &i in mask {
            let (t, p) = (labels[i], predictions[i]);
            confusion[t][p] += 1;
            if t != p {
                errors.push(i);
            }
        }
        errors.sort_unstable();
        let total = mask.len() as f64;
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();

        let mut f1_sum = 0.0;
        let mut present = 0usize;
        for c in 0..num_classes {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            if support == 0 && predicted == 0 {
                continue;
            }
            present += 1;
            let fp = predicted as f64 - tp;
            let fn_ = support as f64 - tp;
            f1_sum += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
        Ok(Self {
            micro_f1: correct as f64 / total,
            macro_f1: f1_sum / present as f64,
            confusion,
            errors,
        })
    }

    pub fn evaluated(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

pub fn predict(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            // First maximum wins ties.
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Evaluation-mode forward pass, argmax prediction, and metrics over `mask`.
pub fn evaluate(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    // Evaluation mode draws nothing from the generator.
    let trace = forward(params, adj, x, 0.0, false, &mut SeededRng::new(0))?;
    Metrics::from_predictions(&predict(&trace.z1), labels, mask, params.num_classes())
}

/// Metrics of the constant predictor that always outputs the most frequent
/// class among `reference` nodes.
pub fn majority_baseline(labels: &[usize], reference: &[usize], mask: &[usize], num_classes: usize) -> Result<Metrics> {
    if reference.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut counts = vec![0usize; num_classes];
    for &i in reference {
        counts[labels[i]] += 1;
    }
    let majority = (0..num_classes)
        .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
        .expect("at least one class");
    Metrics::from_predictions(&vec![majority; labels.len()], labels, mask, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;
    use ndarray::array;

    fn rng() -> SeededRng {
        SeededRng::new(11)
    }

    #[test]
    fn init_shapes_and_bounds() {
        let p = init_params(4, 32, 3, &mut rng()).unwrap();
        assert_eq!(p.w0().dim(), (4, 32));
        assert_eq!(p.w1().dim(), (32, 3));
        let bound = glorot_bound(4, 32);
        assert!((bound - (6.0f64 / 36.0).sqrt()).abs() < 1e-15);
        assert!((bound - 0.408).abs() < 1e-3);
        assert!(p.w0().iter().all(|v| v.abs() <= bound));
        assert!(p.w1().iter().all(|v| v.abs() <= glorot_bound(32, 3)));
        assert_eq!(p, init_params(4, 32, 3, &mut rng()).unwrap());
        assert!(init_params(0, 32, 3, &mut rng()).is_err());
    }

    #[test]
    fn zero_features_zero_logits() {
        let g = SparseGraph::from_edges(3, &[(0, 1)]).unwrap();
        let x = FeatureMatrix::new(Array2::zeros((3, 4))).unwrap();
        let p = init_params(4, 5, 2, &mut rng()).unwrap();
        let t = forward(&p, &g.normalize(), &x, 0.5, true, &mut rng()).unwrap();
        assert!(t.z1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_node_is_mlp() {
        let g = SparseGraph::from_edges(1, &[]).unwrap();
        let x = FeatureMatrix::new(array![[1.0, -2.0]]).unwrap();
        let w0 = array![[0.5, -1.0, 2.0], [0.25, 0.5, -0.5]];
        let w1 = array![[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]];
        let p = GcnParams::from_matrices(&w0, &w1).unwrap();
        let t = forward(&p, &g.normalize(), &x, 0.0, false, &mut rng()).unwrap();
        let hidden = x.view().dot(&w0).mapv(|v| v.max(0.0));
        assert_eq!(t.z1, hidden.dot(&w1));
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = Array2::zeros((3, 4));
        let l = masked_cross_entropy(&uniform, &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);

        let peaked = array![[10.0, 0.0, 0.0]];
        let expected = (1.0 + 2.0 * (-10f64).exp()).ln();
        let l = masked_cross_entropy(&peaked, &[0], &[0]).unwrap();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 9.08e-5).abs() < 1e-6);

        let twice = array![[1.0, 2.0], [1.0, 2.0]];
        let one = masked_cross_entropy(&twice, &[1, 1], &[0]).unwrap();
        let both = masked_cross_entropy(&twice, &[1, 1], &[0, 1]).unwrap();
        assert_eq!(one, both);
    }

    #[test]
    fn cross_entropy_errors() {
        let z = Array2::zeros((2, 2));
        assert!(matches!(masked_cross_entropy(&z, &[0, 1], &[]), Err(Error::EmptyMask)));
        assert!(matches!(
            masked_cross_entropy(&z, &[0, 2], &[1]),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn saturated_softmax_gradient_vanishes() {
        // One isolated node, identity-like weights, logit margin 30.
        let g = SparseGraph::from_edges(1, &[]).unwrap();
        let x = FeatureMatrix::new(array![[1.0]]).unwrap();
        let p = GcnParams::from_matrices(&array![[1.0]], &array![[30.0, 0.0]]).unwrap();
        let t = forward(&p, &g.normalize(), &x, 0.0, false, &mut rng()).unwrap();
        let grad = backward(&t, &p, &g.normalize(), &x, &[0], &[0]).unwrap();
        assert!(grad.l2_norm() < 1e-6, "{}", grad.l2_norm());
    }

    #[test]
    fn stale_trace_rejected() {
        let g = SparseGraph::from_edges(2, &[(0, 1)]).unwrap();
        let x = FeatureMatrix::new(Array2::ones((2, 3))).unwrap();
        let p = init_params(3, 4, 2, &mut rng()).unwrap();
        let mut t = forward(&p, &g.normalize(), &x, 0.0, false, &mut rng()).unwrap();
        t.z1 = Array2::zeros((3, 2));
        assert!(matches!(
            backward(&t, &p, &g.normalize(), &x, &[0, 1], &[0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn metrics_extremes() {
        let labels = [0, 1, 2, 1];
        let all = [0, 1, 2, 3];
        let perfect = Metrics::from_predictions(&labels, &labels, &all, 3).unwrap();
        assert_eq!(perfect.micro_f1, 1.0);
        assert_eq!(perfect.macro_f1, 1.0);
        assert!(perfect.errors.is_empty());

        let wrong = Metrics::from_predictions(&[1, 2, 0, 0], &labels, &all, 3).unwrap();
        assert_eq!(wrong.micro_f1, 0.0);
        assert_eq!(wrong.errors, vec![0, 1, 2, 3]);
        assert_eq!(wrong.evaluated(), 4);
    }

    #[test]
    fn confusion_rows_match_support() {
        let labels = [0, 0, 1, 1, 1, 2];
        let preds = [0, 1, 1, 2, 1, 0];
        let mask = [0, 1, 2, 3, 4, 5];
        let m = Metrics::from_predictions(&preds, &labels, &mask, 3).unwrap();
        let rows: Vec<usize> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 3, 1]);
        let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
        assert_eq!(m.micro_f1, trace as f64 / 6.0);
    }

    #[test]
    fn majority_predictor() {
        let labels = [2, 2, 1, 0, 2, 1, 0, 2];
        let m = majority_baseline(&labels, &[0, 1, 2, 3], &[4, 5, 6, 7], 3).unwrap();
        assert_eq!(m.micro_f1, 0.5);
    }
}
