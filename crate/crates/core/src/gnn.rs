//! Forward-pass inference for two message-passing models whose aggregation
//! is either the exact or the sampled SpMM kernel.
//!
//! * GCN: `H' = act(Â H Θ + b)` with `Â` from [`gcn_normalize`].
//! * GraphSAGE (mean): `H' = act([H | Ā H] Θ + b)` with `Ā` from
//!   [`row_mean_normalize`]. `Θ` stacks the self weights on top of the
//!   neighbor weights.
//!
//! ReLU is applied between layers, never after the last one.
//!
//! [`gcn_normalize`]: crate::graph::gcn_normalize
//! [`row_mean_normalize`]: crate::graph::row_mean_normalize

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{CsrMatrix, DenseError, DenseMatrix};
use crate::kernels::{spmm_exact_instrumented, spmm_sampled_instrumented, KernelError, WorkCounter};
use crate::sampling::SamplePlanSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("label {label} at node {node} is not below the class count {n_classes}")]
    LabelOutOfRange { node: usize, label: usize, n_classes: usize },
    #[error("model kind {0} cannot run this forward pass")]
    WrongKind(ModelKind),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
}

impl From<DenseError> for GnnError {
    fn from(e: DenseError) -> Self {
        GnnError::ShapeMismatch(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gcn,
    SageMean,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::SageMean => "sage_mean",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gcn" => Ok(ModelKind::Gcn),
            "sage_mean" | "sage" | "graphsage" => Ok(ModelKind::SageMean),
            other => Err(GnnError::UnknownKind(other.to_string())),
        }
    }
}

/// One dense combination step.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Option<Vec<f32>>,
}

impl Layer {
    pub fn new(weight: DenseMatrix, bias: Option<Vec<f32>>) -> Result<Self, GnnError> {
        if let Some(b) = &bias {
            if b.len() != weight.n_cols() {
                return Err(GnnError::ShapeMismatch(format!(
                    "bias of length {} for {} outputs",
                    b.len(),
                    weight.n_cols()
                )));
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.n_rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.n_cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    kind: ModelKind,
    layers: Vec<Layer>,
}

impl GnnModel {
    /// Checks that layer dimensions chain. For `sage_mean` every layer takes
    /// twice the width of its input features.
    pub fn new(kind: ModelKind, layers: Vec<Layer>) -> Result<Self, GnnError> {
        if layers.is_empty() {
            return Err(GnnError::ShapeMismatch("model has no layers".into()));
        }
        let fan_in = |l: &Layer| match kind {
            ModelKind::Gcn => Ok(l.in_dim()),
            ModelKind::SageMean if l.in_dim().is_multiple_of(2) => Ok(l.in_dim() / 2),
            ModelKind::SageMean => Err(GnnError::ShapeMismatch(format!(
                "sage_mean layer input width {} is odd",
                l.in_dim()
            ))),
        };
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != fan_in(&pair[1])? {
                return Err(GnnError::ShapeMismatch(format!(
                    "layer {i} emits {} features, layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    fan_in(&pair[1])?
                )));
            }
        }
        fan_in(&layers[0])?;
        Ok(Self { kind, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input feature width the model accepts.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            ModelKind::Gcn => self.layers[0].in_dim(),
            ModelKind::SageMean => self.layers[0].in_dim() / 2,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map(Layer::out_dim).unwrap_or(0)
    }

    /// Hidden widths, for reporting.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.feature_dim()];
        d.extend(self.layers.iter().map(Layer::out_dim));
        d
    }
}

/// Logits together with the SpMM work performed to produce them.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: DenseMatrix,
    pub work: WorkCounter,
}

fn aggregate(
    adj: &CsrMatrix,
    h: &DenseMatrix,
    plans: Option<&SamplePlanSet>,
) -> Result<(DenseMatrix, WorkCounter), GnnError> {
    Ok(match plans {
        Some(p) => spmm_sampled_instrumented(adj, h, p)?,
        None => spmm_exact_instrumented(adj, h)?,
    })
}

fn check_inputs(adj: &CsrMatrix, features: &DenseMatrix, model: &GnnModel) -> Result<(), GnnError> {
    if !adj.is_square() || adj.n_rows() != features.n_rows() {
        return Err(GnnError::ShapeMismatch(format!(
            "adjacency {}x{} with {} feature rows",
            adj.n_rows(),
            adj.n_cols(),
            features.n_rows()
        )));
    }
    if features.n_cols() != model.feature_dim() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} feature columns, model expects {}",
            features.n_cols(),
            model.feature_dim()
        )));
    }
    Ok(())
}

fn combine(mut h: DenseMatrix, layer: &Layer, last: bool) -> Result<DenseMatrix, GnnError> {
    h = h.matmul(&layer.weight)?;
    if let Some(b) = &layer.bias {
        h.add_row_bias(b)?;
    }
    if !last {
        h.relu_in_place();
    }
    Ok(h)
}

/// GCN forward pass. `adj` is expected to be GCN-normalized.
pub fn gcn_forward(
    adj: &CsrMatrix,
    features: &DenseMatrix,
    model: &GnnModel,
    plans: Option<&SamplePlanSet>,
) -> Result<DenseMatrix, GnnError> {
    gcn_forward_instrumented(adj, features, model, plans).map(|o| o.logits)
}

pub fn gcn_forward_instrumented(
    adj: &CsrMatrix,
    features: &DenseMatrix,
    model: &GnnModel,
    plans: Option<&SamplePlanSet>,
) -> Result<ForwardOutput, GnnError> {
    if model.kind != ModelKind::Gcn {
        return Err(GnnError::WrongKind(model.kind));
    }
    check_inputs(adj, features, model)?;
    let mut work = WorkCounter::default();
    let mut h = features.clone();
    let n = model.layers.len();
    for (i, layer) in model.layers.iter().enumerate() {
        let (agg, w) = aggregate(adj, &h, plans)?;
        work += w;
        h = combine(agg, layer, i + 1 == n)?;
    }
    Ok(ForwardOutput { logits: h, work })
}

/// GraphSAGE-mean forward pass. `adj_mean` is expected to be
/// row-mean-normalized.
pub fn sage_forward(
    adj_mean: &CsrMatrix,
    features: &DenseMatrix,
    model: &GnnModel,
    plans: Option<&SamplePlanSet>,
) -> Result<DenseMatrix, GnnError> {
    sage_forward_instrumented(adj_mean, features, model, plans).map(|o| o.logits)
}

pub fn sage_forward_instrumented(
    adj_mean: &CsrMatrix,
    features: &DenseMatrix,
    model: &GnnModel,
    plans: Option<&SamplePlanSet>,
) -> Result<ForwardOutput, GnnError> {
    if model.kind != ModelKind::SageMean {
        return Err(GnnError::WrongKind(model.kind));
    }
    check_inputs(adj_mean, features, model)?;
    let mut work = WorkCounter::default();
    let mut h = features.clone();
    let n = model.layers.len();
    for (i, layer) in model.layers.iter().enumerate() {
        let (agg, w) = aggregate(adj_mean, &h, plans)?;
        work += w;
        h = combine(h.concat_cols(&agg)?, layer, i + 1 == n)?;
    }
    Ok(ForwardOutput { logits: h, work })
}

/// Dispatches on the model kind.
pub fn forward(
    adj: &CsrMatrix,
    features: &DenseMatrix,
    model: &GnnModel,
    plans: Option<&SamplePlanSet>,
) -> Result<ForwardOutput, GnnError> {
    match model.kind {
        ModelKind::Gcn => gcn_forward_instrumented(adj, features, model, plans),
        ModelKind::SageMean => sage_forward_instrumented(adj, features, model, plans),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Fraction of evaluated nodes whose argmax equals the label.
    pub accuracy: f64,
    /// Fraction of evaluated nodes whose argmax equals the reference argmax.
    pub agreement: Option<f64>,
    /// Indexed by label.
    pub per_class: Vec<ClassCounts>,
    pub evaluated: usize,
}

/// Scores `logits` against `labels` on the nodes selected by `mask` (all
/// nodes when `None`). Argmax ties resolve to the lowest class index.
pub fn evaluate(
    logits: &DenseMatrix,
    labels: &[usize],
    reference_logits: Option<&DenseMatrix>,
    mask: Option<&[bool]>,
) -> Result<EvalResult, GnnError> {
    let n = logits.n_rows();
    if labels.len() != n {
        return Err(GnnError::ShapeMismatch(format!("{} labels for {n} nodes", labels.len())));
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(GnnError::ShapeMismatch(format!("mask of {} for {n} nodes", m.len())));
        }
    }
    if let Some(r) = reference_logits {
        if r.n_rows() != n {
            return Err(GnnError::ShapeMismatch(format!("reference has {} rows", r.n_rows())));
        }
    }
    let n_classes = logits.n_cols();
    if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(GnnError::LabelOutOfRange { node, label, n_classes });
    }

    let pred = logits.argmax_rows();
    let reference = reference_logits.map(DenseMatrix::argmax_rows);
    let mut per_class = vec![ClassCounts::default(); n_classes];
    let (mut evaluated, mut correct, mut agree) = (0usize, 0usize, 0usize);
    for i in (0..n).filter(|&i| mask.is_none_or(|m| m[i])) {
        evaluated += 1;
        let hit = pred[i] == labels[i];
        per_class[labels[i]].total += 1;
        if hit {
            per_class[labels[i]].correct += 1;
            correct += 1;
        }
        if reference.as_ref().is_some_and(|r| r[i] == pred[i]) {
            agree += 1;
        }
    }
    let frac = |k: usize| if evaluated == 0 { 1.0 } else { k as f64 / evaluated as f64 };
    Ok(EvalResult {
        accuracy: frac(correct),
        agreement: reference.map(|_| frac(agree)),
        per_class,
        evaluated,
    })
}
