//! Per-head alignment between attention and a property.
//!
//! Two scores are computed per `(layer, head)` over a corpus:
//!
//! * high-confidence: among arcs with weight strictly above `theta`, the
//!   fraction whose endpoints satisfy the property;
//! * weighted: total attention on pairs satisfying the property divided by
//!   total attention.
//!
//! An arc is admissible when it starts at a residue token and ends at a token
//! that is neither padding nor in `exclude_flags`. Inadmissible arcs are
//! dropped from both numerator and denominator; remaining weights are not
//! renormalised.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ProteinRecord};
use crate::properties::{IndicatorKind, IndicatorSource, PropertyIndicator};
use crate::scalar::CompensatedSum;
use crate::tensors::{AttentionSet, AttentionTensor, TokenFlag};

pub const DEFAULT_THETA: f64 = 0.3;
pub const DEFAULT_MIN_ARCS: u64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no attention tensor for protein {0}")]
    MissingTensor(String),
    #[error("protein {id}: tensor has {residues} residue tokens, record has length {len}")]
    ShapeMismatch { id: String, residues: usize, len: usize },
    #[error("protein {id}: tensor is {found:?} (layers, heads), corpus uses {expected:?}")]
    InconsistentHeads { id: String, expected: (usize, usize), found: (usize, usize) },
    #[error("invalid analysis config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("protein {0} appears in more than one shard")]
    DuplicateProtein(String),
    #[error("cannot merge accumulators for different head layouts")]
    LayoutMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "high")]
    HighConfidence,
    #[serde(rename = "weighted")]
    Weighted,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::HighConfidence => "high",
            Metric::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(Metric::HighConfidence),
            "weighted" => Ok(Metric::Weighted),
            other => Err(format!("unknown metric {other:?}; expected high or weighted")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub theta: f64,
    pub min_arcs: u64,
    pub exclude_flags: BTreeSet<TokenFlag>,
    pub metric: Metric,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            min_arcs: DEFAULT_MIN_ARCS,
            exclude_flags: BTreeSet::from([TokenFlag::Cls, TokenFlag::Sep, TokenFlag::Pad]),
            metric: Metric::HighConfidence,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(MetricsError::InvalidConfig(format!("theta {} not in (0, 1)", self.theta)));
        }
        if self.min_arcs == 0 {
            return Err(MetricsError::InvalidConfig("min_arcs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    /// Stable textual key for caching tables computed under this config.
    pub fn cache_key(&self) -> String {
        let flags: Vec<&str> = self
            .exclude_flags
            .iter()
            .map(|f| match f {
                TokenFlag::Residue => "R",
                TokenFlag::Cls => "C",
                TokenFlag::Sep => "S",
                TokenFlag::Pad => "P",
            })
            .collect();
        format!("{}|{:016x}|{}|{}", self.metric.as_str(), self.theta.to_bits(), self.min_arcs, flags.concat())
    }
}

/// Tokens an arc may end on: `(token position, residue index if a residue)`.
pub fn admissible_targets(tensor: &AttentionTensor, exclude: &BTreeSet<TokenFlag>) -> Vec<(usize, Option<usize>)> {
    tensor
        .flags()
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != TokenFlag::Pad && !exclude.contains(f))
        .map(|(t, _)| (t, tensor.residue_of(t)))
        .collect()
}

/// Calls `visit(from_residue, to_token, to_residue, weight)` for every
/// admissible arc of one head, in `(from, to)` token order.
#[inline]
pub fn for_each_admissible_arc(
    tensor: &AttentionTensor,
    layer: usize,
    head: usize,
    targets: &[(usize, Option<usize>)],
    mut visit: impl FnMut(usize, usize, Option<usize>, f32),
) {
    for (i, &from_token) in tensor.residue_tokens().iter().enumerate() {
        let row = tensor.row(layer, head, from_token);
        for &(to_token, to_residue) in targets {
            visit(i, to_token, to_residue, row[to_token]);
        }
    }
}

/// Thresholds are compared in the weights' own precision, so a stored
/// `0.3f32` is not above a threshold of `0.3`.
#[inline]
pub fn threshold_f32(threshold: f64) -> f32 {
    threshold as f32
}

/// A single attention arc between residues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f32,
}

/// Admissible residue-to-residue arcs with weight strictly above `threshold`.
/// This is the same arc set the high-confidence score counts.
pub fn high_confidence_arcs(
    tensor: &AttentionTensor,
    layer: usize,
    head: usize,
    threshold: f64,
    exclude: &BTreeSet<TokenFlag>,
) -> Vec<Arc> {
    let targets = admissible_targets(tensor, exclude);
    let threshold = threshold_f32(threshold);
    let mut arcs = Vec::new();
    for_each_admissible_arc(tensor, layer, head, &targets, |from, _, to, w| {
        if let Some(to) = to {
            if w > threshold {
                arcs.push(Arc { from, to, weight: w });
            }
        }
    });
    arcs
}

/// Running totals for one head.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeadTally {
    pub hits: u64,
    pub arcs: u64,
    pub weighted_hits: CompensatedSum<f64>,
    pub mass: CompensatedSum<f64>,
}

impl HeadTally {
    fn merge(&mut self, other: &HeadTally) {
        self.hits += other.hits;
        self.arcs += other.arcs;
        self.weighted_hits.merge(&other.weighted_hits);
        self.mass.merge(&other.mass);
    }
}

/// Tallies every head of one protein.
pub fn tally_protein(
    tensor: &AttentionTensor,
    indicator: &PropertyIndicator,
    config: &AnalysisConfig,
) -> Vec<HeadTally> {
    let targets = admissible_targets(tensor, &config.exclude_flags);
    let theta = threshold_f32(config.theta);
    let mut out = Vec::with_capacity(tensor.n_layers() * tensor.n_heads());
    for layer in 0..tensor.n_layers() {
        for head in 0..tensor.n_heads() {
            let mut t = HeadTally::default();
            for_each_admissible_arc(tensor, layer, head, &targets, |i, _, j, w| {
                let hit = j.is_some_and(|j| indicator.eval(i, j));
                let above = w > theta;
                let w = f64::from(w);
                t.mass.add(w);
                if hit {
                    t.weighted_hits.add(w);
                }
                if above {
                    t.arcs += 1;
                    t.hits += hit as u64;
                }
            });
            out.push(t);
        }
    }
    out
}

/// Positives and population size behind a background frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Background {
    pub positives: u64,
    pub total: u64,
}

impl Background {
    pub fn frequency(&self) -> Option<f64> {
        (self.total > 0).then(|| self.positives as f64 / self.total as f64)
    }

    fn merge(&mut self, other: Background) {
        self.positives += other.positives;
        self.total += other.total;
    }
}

/// Fraction of known pairs (pairwise properties) or positions (token
/// properties) where the property holds, over every record it applies to.
pub fn background_frequency(corpus: &Corpus, source: &dyn IndicatorSource) -> Background {
    let mut bg = Background::default();
    for record in corpus {
        if let Some(ind) = source.indicator(record) {
            let (positives, total) = ind.population_counts();
            bg.merge(Background { positives, total });
        }
    }
    bg
}

/// Per-protein tallies for a shard of the corpus. Merging is a keyed union;
/// [`ScoreAccumulator::finish`] folds proteins in id order, so the result is
/// independent of sharding and processing order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreAccumulator {
    layout: Option<(usize, usize)>,
    proteins: BTreeMap<String, Vec<HeadTally>>,
    background: Background,
    skipped: BTreeSet<String>,
}

impl ScoreAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_layout(&mut self, id: &str, found: (usize, usize)) -> Result<(), MetricsError> {
        match self.layout {
            None => {
                self.layout = Some(found);
                Ok(())
            }
            Some(expected) if expected == found => Ok(()),
            Some(expected) => Err(MetricsError::InconsistentHeads { id: id.to_string(), expected, found }),
        }
    }

    /// Adds one protein. Proteins the property doesn't apply to are recorded
    /// as skipped.
    pub fn add_protein(
        &mut self,
        record: &ProteinRecord,
        tensor: &AttentionTensor,
        source: &dyn IndicatorSource,
        config: &AnalysisConfig,
    ) -> Result<(), MetricsError> {
        let partial = tally_record(record, tensor, source, config)?;
        self.merge(partial)
    }

    pub fn merge(&mut self, other: ScoreAccumulator) -> Result<(), MetricsError> {
        if let Some(layout) = other.layout {
            match self.layout {
                None => self.layout = Some(layout),
                Some(l) if l == layout => {}
                Some(_) => return Err(MetricsError::LayoutMismatch),
            }
        }
        for (id, tallies) in other.proteins {
            if self.proteins.contains_key(&id) || self.skipped.contains(&id) {
                return Err(MetricsError::DuplicateProtein(id));
            }
            self.proteins.insert(id, tallies);
        }
        for id in other.skipped {
            if self.proteins.contains_key(&id) || !self.skipped.insert(id.clone()) {
                return Err(MetricsError::DuplicateProtein(id));
            }
        }
        self.background.merge(other.background);
        Ok(())
    }

    pub fn n_proteins(&self) -> usize {
        self.proteins.len()
    }

    pub fn skipped(&self) -> &BTreeSet<String> {
        &self.skipped
    }

    /// Produces the score table.
    pub fn finish(&self, property: &str, kind: IndicatorKind, config: &AnalysisConfig) -> HeadScoreTable {
        let (n_layers, n_heads) = self.layout.unwrap_or((0, 0));
        let mut totals = vec![HeadTally::default(); n_layers * n_heads];
        for tallies in self.proteins.values() {
            for (acc, t) in totals.iter_mut().zip(tallies) {
                acc.merge(t);
            }
        }
        let heads = totals
            .iter()
            .enumerate()
            .map(|(idx, t)| {
                let score = match config.metric {
                    Metric::HighConfidence => {
                        (t.arcs >= config.min_arcs).then(|| t.hits as f64 / t.arcs as f64)
                    }
                    Metric::Weighted => {
                        let mass = t.mass.value();
                        (mass > 0.0).then(|| (t.weighted_hits.value() / mass).clamp(0.0, 1.0))
                    }
                };
                HeadScore {
                    layer: idx / n_heads,
                    head: idx % n_heads,
                    score,
                    hits: t.hits,
                    arc_count: t.arcs,
                    weighted_hits: t.weighted_hits.value(),
                    attention_mass: t.mass.value(),
                }
            })
            .collect();
        HeadScoreTable {
            property: property.to_string(),
            kind,
            metric: config.metric,
            theta: config.theta,
            min_arcs: config.min_arcs,
            n_layers,
            n_heads,
            n_proteins: self.proteins.len(),
            heads,
            background: self.background,
        }
    }
}

fn tally_record(
    record: &ProteinRecord,
    tensor: &AttentionTensor,
    source: &dyn IndicatorSource,
    config: &AnalysisConfig,
) -> Result<ScoreAccumulator, MetricsError> {
    if tensor.n_residues() != record.len() {
        return Err(MetricsError::ShapeMismatch {
            id: record.id.clone(),
            residues: tensor.n_residues(),
            len: record.len(),
        });
    }
    let mut acc = ScoreAccumulator {
        layout: Some((tensor.n_layers(), tensor.n_heads())),
        ..Default::default()
    };
    match source.indicator(record) {
        Some(ind) => {
            let (positives, total) = ind.population_counts();
            acc.background = Background { positives, total };
            acc.proteins.insert(record.id.clone(), tally_protein(tensor, &ind, config));
        }
        None => {
            acc.skipped.insert(record.id.clone());
        }
    }
    Ok(acc)
}

fn lookup<'a>(tensors: &'a AttentionSet, record: &ProteinRecord) -> Result<&'a AttentionTensor, MetricsError> {
    tensors.get(&record.id).ok_or_else(|| MetricsError::MissingTensor(record.id.clone()))
}

/// Accumulates a shard sequentially.
pub fn accumulate<'a>(
    records: impl IntoIterator<Item = &'a ProteinRecord>,
    tensors: &AttentionSet,
    source: &dyn IndicatorSource,
    config: &AnalysisConfig,
) -> Result<ScoreAccumulator, MetricsError> {
    config.validate()?;
    let mut acc = ScoreAccumulator::new();
    for record in records {
        let partial = tally_record(record, lookup(tensors, record)?, source, config)?;
        acc.check_layout(&record.id, partial.layout.expect("set by tally_record"))?;
        acc.merge(partial)?;
    }
    Ok(acc)
}

/// Accumulates a shard with one rayon task per protein.
pub fn accumulate_parallel(
    records: &[&ProteinRecord],
    tensors: &AttentionSet,
    source: &dyn IndicatorSource,
    config: &AnalysisConfig,
) -> Result<ScoreAccumulator, MetricsError> {
    config.validate()?;
    let partials = records
        .par_iter()
        .map(|record| tally_record(record, lookup(tensors, record)?, source, config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut acc = ScoreAccumulator::new();
    for (record, partial) in records.iter().zip(partials) {
        acc.check_layout(&record.id, partial.layout.expect("set by tally_record"))?;
        acc.merge(partial)?;
    }
    Ok(acc)
}

/// Scores every head against a property over the whole corpus, in parallel.
pub fn score_heads(
    corpus: &Corpus,
    tensors: &AttentionSet,
    source: &dyn IndicatorSource,
    config: &AnalysisConfig,
) -> Result<HeadScoreTable, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let records: Vec<&ProteinRecord> = corpus.records().iter().collect();
    let acc = accumulate_parallel(&records, tensors, source, config)?;
    Ok(acc.finish(&source.name(), source.kind(), config))
}

/// Single-threaded [`score_heads`]; produces an identical table.
pub fn score_heads_sequential(
    corpus: &Corpus,
    tensors: &AttentionSet,
    source: &dyn IndicatorSource,
    config: &AnalysisConfig,
) -> Result<HeadScoreTable, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let acc = accumulate(corpus, tensors, source, config)?;
    Ok(acc.finish(&source.name(), source.kind(), config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadScore {
    /// 0-based layer.
    pub layer: usize,
    /// 0-based head.
    pub head: usize,
    /// `None` when the head has too few arcs (high-confidence) or no
    /// admissible attention at all (weighted).
    pub score: Option<f64>,
    /// Arcs above threshold with the property present.
    pub hits: u64,
    /// Arcs above threshold.
    pub arc_count: u64,
    pub weighted_hits: f64,
    /// Total admissible attention.
    pub attention_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadScoreTable {
    pub property: String,
    pub kind: IndicatorKind,
    pub metric: Metric,
    pub theta: f64,
    pub min_arcs: u64,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Proteins that contributed (the property applied to them).
    pub n_proteins: usize,
    /// Layer-major, head-minor.
    pub heads: Vec<HeadScore>,
    pub background: Background,
}

impl HeadScoreTable {
    pub fn get(&self, layer: usize, head: usize) -> &HeadScore {
        &self.heads[layer * self.n_heads + head]
    }

    pub fn score(&self, layer: usize, head: usize) -> Option<f64> {
        self.get(layer, head).score
    }

    pub fn n_present(&self) -> usize {
        self.heads.iter().filter(|h| h.score.is_some()).count()
    }

    /// Contribution count shown in reports: arcs for the high-confidence
    /// metric, attention mass for the weighted one.
    pub fn arc_count_value(&self, h: &HeadScore) -> f64 {
        match self.metric {
            Metric::HighConfidence => h.arc_count as f64,
            Metric::Weighted => h.attention_mass,
        }
    }

    /// Scores as a `layers x heads` grid.
    pub fn grid(&self) -> Vec<Vec<Option<f64>>> {
        self.heads.chunks(self.n_heads.max(1)).map(|row| row.iter().map(|h| h.score).collect()).collect()
    }
}
