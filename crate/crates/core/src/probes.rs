//! Linear probing classifiers over embeddings and attention weights.
//!
//! Token tasks (binding sites, secondary structure) use each residue's layer
//! vector directly. The contact task uses residue pairs `i < j` at least
//! `seq_sep` apart with both coordinates known; pair features are either
//! `[h_i - h_j, h_i * h_j]` from embeddings or the per-head weights
//! `[a_ij..., a_ji...]` from attention.
//!
//! Metrics: macro F1 for secondary structure, precision@L/5 for contacts and
//! precision@L/20 for binding sites, averaged over proteins.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ProteinRecord};
use crate::scalar::{CompensatedSum, Scalar};
use crate::structure::{derive_contacts, ContactParams};
use crate::tensors::{AttentionSet, AttentionTensor, EmbeddingSet, EmbeddingTensor};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_L2: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;
/// Number of secondary structure classes (helix, strand, turn/bend, other).
pub const SS_CLASSES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("invalid probe spec: {0}")]
    InvalidSpec(String),
    #[error("training labels contain a single class")]
    SingleClassLabels,
    #[error("no training examples")]
    EmptyTrain,
    #[error("no evaluation examples")]
    EmptyEval,
    #[error("need at least two usable proteins for a train/validation split, found {0}")]
    TooFewProteins(usize),
    #[error("no {kind} tensor for protein {id}")]
    MissingTensor { kind: &'static str, id: String },
    #[error("protein {id}: tensor has {residues} residue tokens, record has length {len}")]
    ShapeMismatch { id: String, residues: usize, len: usize },
    #[error("layer {layer} out of range ({n_layers} layers)")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("invalid residue pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("feature vectors have inconsistent lengths")]
    RaggedFeatures,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTask {
    SecondaryStructure,
    BindingSite,
    Contact,
}

impl ProbeTask {
    pub fn n_classes(self) -> usize {
        match self {
            ProbeTask::SecondaryStructure => SS_CLASSES,
            ProbeTask::BindingSite | ProbeTask::Contact => 2,
        }
    }

    /// Divisor `d` of the precision@L/d metric, for ranking tasks.
    pub fn precision_divisor(self) -> Option<usize> {
        match self {
            ProbeTask::Contact => Some(5),
            ProbeTask::BindingSite => Some(20),
            ProbeTask::SecondaryStructure => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeTask::SecondaryStructure => "secondary_structure",
            ProbeTask::BindingSite => "binding_site",
            ProbeTask::Contact => "contact",
        }
    }
}

impl std::str::FromStr for ProbeTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "secondary_structure" | "ss" => Ok(ProbeTask::SecondaryStructure),
            "binding_site" => Ok(ProbeTask::BindingSite),
            "contact" => Ok(ProbeTask::Contact),
            other => Err(format!("unknown probe task {other:?}; expected secondary_structure, binding_site or contact")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Embedding,
    Attention,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Embedding => "embedding",
            Representation::Attention => "attention",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "embedding" => Ok(Representation::Embedding),
            "attention" => Ok(Representation::Attention),
            other => Err(format!("unknown representation {other:?}; expected embedding or attention")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            l2: DEFAULT_L2,
            seed: DEFAULT_SEED,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub task: ProbeTask,
    pub representation: Representation,
    /// 0-based layer.
    pub layer: usize,
    pub params: TrainParams,
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.representation == Representation::Attention && self.task != ProbeTask::Contact {
            return Err(ProbeError::InvalidSpec(format!(
                "attention features are pairwise and only support the contact task, not {}",
                self.task.as_str()
            )));
        }
        let p = &self.params;
        if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) || !(p.l2 >= 0.0) || p.epochs == 0 || p.batch_size == 0 {
            return Err(ProbeError::InvalidSpec(format!("bad training parameters {p:?}")));
        }
        Ok(())
    }
}

/// Residue-level features: the layer vector of every residue token, in
/// sequence order. Special and padding tokens are skipped.
pub fn build_token_features(emb: &EmbeddingTensor, layer: usize) -> Result<Vec<Vec<f32>>, ProbeError> {
    if layer >= emb.n_layers() {
        return Err(ProbeError::LayerOutOfRange { layer, n_layers: emb.n_layers() });
    }
    Ok(emb.residue_tokens().iter().map(|&t| emb.vector(layer, t).to_vec()).collect())
}

/// `[h_i - h_j, h_i * h_j]` for residues `i != j`.
pub fn build_pair_features_embedding(emb: &EmbeddingTensor, layer: usize, i: usize, j: usize) -> Result<Vec<f32>, ProbeError> {
    if layer >= emb.n_layers() {
        return Err(ProbeError::LayerOutOfRange { layer, n_layers: emb.n_layers() });
    }
    if i == j || i >= emb.n_residues() || j >= emb.n_residues() {
        return Err(ProbeError::InvalidPair(i, j));
    }
    let (hi, hj) = (emb.residue_vector(layer, i), emb.residue_vector(layer, j));
    let mut out = Vec::with_capacity(2 * hi.len());
    out.extend(hi.iter().zip(hj).map(|(a, b)| a - b));
    out.extend(hi.iter().zip(hj).map(|(a, b)| a * b));
    Ok(out)
}

/// `[a_ij for each head, a_ji for each head]` for residues `i != j`.
pub fn build_pair_features_attention(attn: &AttentionTensor, layer: usize, i: usize, j: usize) -> Result<Vec<f32>, ProbeError> {
    if layer >= attn.n_layers() {
        return Err(ProbeError::LayerOutOfRange { layer, n_layers: attn.n_layers() });
    }
    if i == j || i >= attn.n_residues() || j >= attn.n_residues() {
        return Err(ProbeError::InvalidPair(i, j));
    }
    let (ti, tj) = (attn.residue_tokens()[i], attn.residue_tokens()[j]);
    let heads = 0..attn.n_heads();
    let mut out = Vec::with_capacity(2 * attn.n_heads());
    out.extend(heads.clone().map(|h| attn.weight(layer, h, ti, tj)));
    out.extend(heads.map(|h| attn.weight(layer, h, tj, ti)));
    Ok(out)
}

/// Linear model: one sigmoid output for binary tasks, softmax otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T: Scalar> {
    pub n_features: usize,
    pub n_outputs: usize,
    /// Row-major `n_outputs x n_features`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        let n_outputs = if n_classes == 2 { 1 } else { n_classes };
        Self {
            n_features,
            n_outputs,
            weights: vec![T::zero(); n_outputs * n_features],
            bias: vec![T::zero(); n_outputs],
        }
    }

    pub fn n_classes(&self) -> usize {
        if self.n_outputs == 1 {
            2
        } else {
            self.n_outputs
        }
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        (0..self.n_outputs)
            .map(|k| {
                let w = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                w.iter().zip(x).fold(self.bias[k], |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Class probabilities.
    pub fn predict_proba(&self, x: &[T]) -> Vec<T> {
        let z = self.logits(x);
        if self.n_outputs == 1 {
            let p = sigmoid(z[0]);
            vec![T::one() - p, p]
        } else {
            let lse = log_sum_exp(&z);
            z.iter().map(|&v| (v - lse).exp()).collect()
        }
    }

    /// Score used for ranking: the positive-class logit for binary models.
    pub fn decision_score(&self, x: &[T]) -> T {
        let z = self.logits(x);
        if self.n_outputs == 1 {
            z[0]
        } else {
            z[z.len() - 1]
        }
    }

    pub fn predict(&self, x: &[T]) -> usize {
        let z = self.logits(x);
        if self.n_outputs == 1 {
            (z[0] > T::zero()) as usize
        } else {
            z.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        }
    }

    /// Mean cross-entropy over the batch plus `l2 / 2 * |W|^2`, and its
    /// gradient with respect to weights and bias.
    pub fn loss_and_grad(&self, xs: &[&[T]], ys: &[usize], l2: T) -> (T, LinearModel<T>) {
        let mut grad = LinearModel {
            n_features: self.n_features,
            n_outputs: self.n_outputs,
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.n_outputs],
        };
        let mut loss = CompensatedSum::new();
        let mut dz = vec![T::zero(); self.n_outputs];
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.logits(x);
            if self.n_outputs == 1 {
                let yf = if y == 1 { T::one() } else { T::zero() };
                loss.add(softplus(z[0]) - yf * z[0]);
                dz[0] = sigmoid(z[0]) - yf;
            } else {
                let lse = log_sum_exp(&z);
                loss.add(lse - z[y]);
                for k in 0..self.n_outputs {
                    dz[k] = (z[k] - lse).exp() - if k == y { T::one() } else { T::zero() };
                }
            }
            for k in 0..self.n_outputs {
                grad.bias[k] += dz[k];
                let row = &mut grad.weights[k * self.n_features..(k + 1) * self.n_features];
                for (g, &xv) in row.iter_mut().zip(x.iter()) {
                    *g += dz[k] * xv;
                }
            }
        }
        let n = T::from_usize(xs.len().max(1)).expect("batch size fits");
        let half = T::of(0.5);
        let reg: T = self.weights.iter().map(|&w| w * w).sum::<T>() * l2 * half;
        for (g, &w) in grad.weights.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        for g in grad.bias.iter_mut() {
            *g = *g / n;
        }
        (loss.value() / n + reg, grad)
    }
}

/// A trained probe: per-feature standardisation followed by a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe<T: Scalar> {
    pub model: LinearModel<T>,
    pub feature_mean: Vec<T>,
    pub feature_scale: Vec<T>,
    pub converged: bool,
    pub final_loss: T,
}

impl<T: Scalar> LinearProbe<T> {
    fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[T]) -> usize {
        self.model.predict(&self.standardize(x))
    }

    pub fn predict_proba(&self, x: &[T]) -> Vec<T> {
        self.model.predict_proba(&self.standardize(x))
    }

    pub fn decision_score(&self, x: &[T]) -> T {
        self.model.decision_score(&self.standardize(x))
    }
}

/// Relative epoch-loss change below which training is reported converged.
const CONVERGENCE_TOLERANCE: f64 = 1e-4;

/// Trains a probe by mini-batch gradient descent on the cross-entropy
/// loss. Deterministic given `params.seed`.
pub fn train_probe<T: Scalar>(
    features: &[Vec<T>],
    labels: &[usize],
    n_classes: usize,
    params: &TrainParams,
) -> Result<LinearProbe<T>, ProbeError> {
    if features.is_empty() {
        return Err(ProbeError::EmptyTrain);
    }
    if features.len() != labels.len() {
        return Err(ProbeError::RaggedFeatures);
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(ProbeError::RaggedFeatures);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ProbeError::LabelOutOfRange { label, n_classes });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ProbeError::SingleClassLabels);
    }
    if params.batch_size == 0 || params.epochs == 0 {
        return Err(ProbeError::InvalidSpec(format!("bad training parameters {params:?}")));
    }

    let n = T::from_usize(features.len()).expect("count fits");
    let mut mean = vec![T::zero(); d];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); d];
    for f in features {
        for ((s, &v), &m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let tiny = T::of(1e-12);
    let scale: Vec<T> = var.iter().map(|&s| (s / n).sqrt()).map(|s| if s > tiny { s } else { T::one() }).collect();
    let standardized: Vec<Vec<T>> = features
        .iter()
        .map(|f| f.iter().zip(&mean).zip(&scale).map(|((&v, &m), &s)| (v - m) / s).collect())
        .collect();

    let mut model = LinearModel::<T>::zeros(d, n_classes);
    let lr = T::of(params.learning_rate);
    let l2 = T::of(params.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut prev_loss: Option<T> = None;
    let mut last_loss = T::zero();
    let mut converged = false;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = CompensatedSum::new();
        for batch in order.chunks(params.batch_size) {
            let xs: Vec<&[T]> = batch.iter().map(|&i| standardized[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.loss_and_grad(&xs, &ys, l2);
            epoch_loss.add(loss * T::from_usize(batch.len()).expect("batch fits"));
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * *g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * *g;
            }
        }
        last_loss = epoch_loss.value() / n;
        if let Some(prev) = prev_loss {
            let rel = ((prev - last_loss).abs() / prev.abs().max(tiny)).as_f64();
            converged = rel < CONVERGENCE_TOLERANCE;
        }
        prev_loss = Some(last_loss);
    }
    Ok(LinearProbe { model, feature_mean: mean, feature_scale: scale, converged, final_loss: last_loss })
}

/// Fraction of true labels among the `k` highest scores. Ties are broken by
/// lower index first. When fewer than `k` candidates exist, all are used.
pub fn precision_at_k(scores: &[f64], labels: &[bool], k: usize) -> Option<f64> {
    if scores.is_empty() || k == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let take = k.min(idx.len());
    let hits = idx[..take].iter().filter(|&&i| labels[i]).count();
    Some(hits as f64 / take as f64)
}

/// `max(1, floor(len / divisor))`.
pub fn top_k_for_length(len: usize, divisor: usize) -> usize {
    (len / divisor).max(1)
}

/// Macro-averaged F1 over classes that occur in either the gold labels or
/// the predictions.
pub fn macro_f1(predicted: &[usize], gold: &[usize], n_classes: usize) -> Option<f64> {
    if predicted.is_empty() || predicted.len() != gold.len() {
        return None;
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fneg = vec![0usize; n_classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let scores: Vec<f64> = (0..n_classes)
        .filter(|&c| tp[c] + fp[c] + fneg[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64)
        .collect();
    Some(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Examples from one protein, kept together for per-protein metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinExamples<T> {
    pub protein_id: String,
    /// Sequence length L used for precision@L/d.
    pub len: usize,
    pub features: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

/// Scores a trained probe on grouped examples.
pub fn evaluate_probe<T: Scalar>(model: &LinearProbe<T>, eval: &[ProteinExamples<T>], task: ProbeTask) -> Result<f64, ProbeError> {
    match task.precision_divisor() {
        Some(divisor) => {
            let per_protein: Vec<f64> = eval
                .iter()
                .filter_map(|p| {
                    let scores: Vec<f64> = p.features.iter().map(|x| model.decision_score(x).as_f64()).collect();
                    let labels: Vec<bool> = p.labels.iter().map(|&l| l == 1).collect();
                    precision_at_k(&scores, &labels, top_k_for_length(p.len, divisor))
                })
                .collect();
            if per_protein.is_empty() {
                return Err(ProbeError::EmptyEval);
            }
            Ok(per_protein.iter().sum::<f64>() / per_protein.len() as f64)
        }
        None => {
            let (mut pred, mut gold) = (Vec::new(), Vec::new());
            for p in eval {
                for (x, &y) in p.features.iter().zip(&p.labels) {
                    pred.push(model.predict(x));
                    gold.push(y);
                }
            }
            macro_f1(&pred, &gold, task.n_classes()).ok_or(ProbeError::EmptyEval)
        }
    }
}

/// Inputs for a sweep: whichever dump the representation needs.
#[derive(Debug, Clone, Copy)]
pub enum ProbeInputs<'a> {
    Embeddings(&'a EmbeddingSet),
    Attention(&'a AttentionSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub task: ProbeTask,
    pub representation: Representation,
    pub params: TrainParams,
    pub validation_fraction: f64,
    pub contact: ContactParamsConfig,
    /// 0-based layers to probe; all layers when `None`.
    pub layers: Option<Vec<usize>>,
}

/// Serializable mirror of [`ContactParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParamsConfig {
    pub dist_cutoff: f64,
    pub seq_sep: usize,
}

impl Default for ContactParamsConfig {
    fn default() -> Self {
        let p = ContactParams::default();
        Self { dist_cutoff: p.dist_cutoff, seq_sep: p.seq_sep }
    }
}

impl From<ContactParamsConfig> for ContactParams {
    fn from(c: ContactParamsConfig) -> Self {
        ContactParams { dist_cutoff: c.dist_cutoff, seq_sep: c.seq_sep }
    }
}

impl SweepConfig {
    pub fn new(task: ProbeTask, representation: Representation) -> Self {
        Self {
            task,
            representation,
            params: TrainParams::default(),
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            contact: ContactParamsConfig::default(),
            layers: None,
        }
    }
}

/// One point of a layer sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub task: ProbeTask,
    pub representation: Representation,
    /// 1-based layer, matching report display indices.
    pub layer: usize,
    pub metric: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub converged: bool,
}

/// Per-protein label source for a task; `None` when the protein lacks the
/// annotation.
enum TaskLabels {
    Token(Vec<usize>),
    Pairs(Vec<((usize, usize), usize)>),
}

fn task_labels(record: &ProteinRecord, task: ProbeTask, contact: ContactParams) -> Option<TaskLabels> {
    match task {
        ProbeTask::BindingSite => Some(TaskLabels::Token(
            (0..record.len()).map(|i| record.binding_sites.contains(&i) as usize).collect(),
        )),
        ProbeTask::SecondaryStructure => record
            .ss_labels
            .as_ref()
            .map(|ss| TaskLabels::Token(ss.iter().map(|s| s.class_index()).collect())),
        ProbeTask::Contact => {
            let map = derive_contacts(record, contact).ok()?;
            let mut pairs = Vec::new();
            for i in 0..record.len() {
                for j in (i + contact.seq_sep)..record.len() {
                    if map.is_resolved_pair(i, j) {
                        pairs.push(((i, j), map.contact(i, j) as usize));
                    }
                }
            }
            Some(TaskLabels::Pairs(pairs))
        }
    }
}

fn to_scalar<T: Scalar>(v: Vec<f32>) -> Vec<T> {
    v.into_iter().map(|x| T::of(f64::from(x))).collect()
}

fn protein_examples<T: Scalar>(
    record: &ProteinRecord,
    labels: &TaskLabels,
    inputs: ProbeInputs<'_>,
    representation: Representation,
    layer: usize,
) -> Result<ProteinExamples<T>, ProbeError> {
    let (features, ys): (Vec<Vec<T>>, Vec<usize>) = match (labels, representation, inputs) {
        (TaskLabels::Token(ys), Representation::Embedding, ProbeInputs::Embeddings(set)) => {
            let emb = embedding_for(set, record)?;
            let feats = build_token_features(emb, layer)?.into_iter().map(to_scalar).collect();
            (feats, ys.clone())
        }
        (TaskLabels::Pairs(pairs), Representation::Embedding, ProbeInputs::Embeddings(set)) => {
            let emb = embedding_for(set, record)?;
            let feats = pairs
                .iter()
                .map(|&((i, j), _)| build_pair_features_embedding(emb, layer, i, j).map(to_scalar))
                .collect::<Result<_, _>>()?;
            (feats, pairs.iter().map(|&(_, y)| y).collect())
        }
        (TaskLabels::Pairs(pairs), Representation::Attention, ProbeInputs::Attention(set)) => {
            let attn = attention_for(set, record)?;
            let feats = pairs
                .iter()
                .map(|&((i, j), _)| build_pair_features_attention(attn, layer, i, j).map(to_scalar))
                .collect::<Result<_, _>>()?;
            (feats, pairs.iter().map(|&(_, y)| y).collect())
        }
        _ => {
            return Err(ProbeError::InvalidSpec(format!(
                "{} representation does not match the supplied inputs or task",
                representation.as_str()
            )))
        }
    };
    Ok(ProteinExamples { protein_id: record.id.clone(), len: record.len(), features, labels: ys })
}

fn embedding_for<'a>(set: &'a EmbeddingSet, record: &ProteinRecord) -> Result<&'a EmbeddingTensor, ProbeError> {
    let t = set
        .get(&record.id)
        .ok_or_else(|| ProbeError::MissingTensor { kind: "embedding", id: record.id.clone() })?;
    if t.n_residues() != record.len() {
        return Err(ProbeError::ShapeMismatch { id: record.id.clone(), residues: t.n_residues(), len: record.len() });
    }
    Ok(t)
}

fn attention_for<'a>(set: &'a AttentionSet, record: &ProteinRecord) -> Result<&'a AttentionTensor, ProbeError> {
    let t = set
        .get(&record.id)
        .ok_or_else(|| ProbeError::MissingTensor { kind: "attention", id: record.id.clone() })?;
    if t.n_residues() != record.len() {
        return Err(ProbeError::ShapeMismatch { id: record.id.clone(), residues: t.n_residues(), len: record.len() });
    }
    Ok(t)
}

/// Keeps every positive and an equal number of negatives drawn with `seed`.
fn balance_pairs<T: Clone>(features: Vec<Vec<T>>, labels: Vec<usize>, seed: u64) -> (Vec<Vec<T>>, Vec<usize>) {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == 1);
    if pos.is_empty() || neg.len() <= pos.len() {
        return (features, labels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba1a_7ce0_0001);
    let mut chosen: Vec<usize> = neg.choose_multiple(&mut rng, pos.len()).copied().collect();
    chosen.extend(pos);
    chosen.sort_unstable();
    log::debug!("contact probe: kept {} of {} training pairs after balancing", chosen.len(), labels.len());
    let f = chosen.iter().map(|&i| features[i].clone()).collect();
    let l = chosen.iter().map(|&i| labels[i]).collect();
    (f, l)
}

/// Deterministic protein-level split: ids sorted, then shuffled with `seed`.
/// Returns `(train ids, eval ids)`.
pub fn split_proteins(ids: &[String], validation_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>), ProbeError> {
    if ids.len() < 2 {
        return Err(ProbeError::TooFewProteins(ids.len()));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(ProbeError::InvalidSpec(format!("validation fraction {validation_fraction} not in (0, 1)")));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_911d_a7a5_e7ed);
    sorted.shuffle(&mut rng);
    let n_eval = ((ids.len() as f64 * validation_fraction).round() as usize).clamp(1, ids.len() - 1);
    let eval = sorted.split_off(ids.len() - n_eval);
    Ok((sorted, eval))
}

/// Trains and evaluates one probe per layer.
pub fn layer_sweep(config: &SweepConfig, corpus: &Corpus, inputs: ProbeInputs<'_>) -> Result<Vec<ProbeResult>, ProbeError> {
    ProbeSpec { task: config.task, representation: config.representation, layer: 0, params: config.params }.validate()?;
    let contact: ContactParams = config.contact.into();

    let usable: Vec<(&ProteinRecord, TaskLabels)> = corpus
        .records()
        .iter()
        .filter_map(|r| task_labels(r, config.task, contact).map(|l| (r, l)))
        .collect();
    let ids: Vec<String> = usable.iter().map(|(r, _)| r.id.clone()).collect();
    let (train_ids, _) = split_proteins(&ids, config.validation_fraction, config.params.seed)?;
    let train_set: std::collections::HashSet<&str> = train_ids.iter().map(String::as_str).collect();

    let n_layers = match inputs {
        ProbeInputs::Embeddings(set) => set.values().map(|t| t.n_layers()).min(),
        ProbeInputs::Attention(set) => set.values().map(|t| t.n_layers()).min(),
    }
    .ok_or(ProbeError::EmptyTrain)?;
    let layers = config.layers.clone().unwrap_or_else(|| (0..n_layers).collect());

    let mut results = Vec::with_capacity(layers.len());
    for layer in layers {
        if layer >= n_layers {
            return Err(ProbeError::LayerOutOfRange { layer, n_layers });
        }
        let examples = usable
            .par_iter()
            .map(|(r, labels)| protein_examples::<f64>(r, labels, inputs, config.representation, layer))
            .collect::<Result<Vec<_>, _>>()?;
        let (train, eval): (Vec<_>, Vec<_>) =
            examples.into_iter().partition(|e| train_set.contains(e.protein_id.as_str()));

        let mut features = Vec::new();
        let mut labels = Vec::new();
        for e in &train {
            features.extend(e.features.iter().cloned());
            labels.extend(e.labels.iter().copied());
        }
        if config.task == ProbeTask::Contact {
            (features, labels) = balance_pairs(features, labels, config.params.seed);
        }
        let n_train = labels.len();
        let probe = train_probe(&features, &labels, config.task.n_classes(), &config.params)?;
        let metric = evaluate_probe(&probe, &eval, config.task)?;
        results.push(ProbeResult {
            task: config.task,
            representation: config.representation,
            layer: layer + 1,
            metric,
            n_train,
            n_eval: eval.iter().map(|e| e.labels.len()).sum(),
            seed: config.params.seed,
            converged: probe.converged,
        });
    }
    Ok(results)
}
