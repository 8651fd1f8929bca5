//! Shared, immutable inputs plus lazily computed results.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::OnceCell;

use protattn_core::aminoacid::{aa_attention_correlation, aa_profiles, blosum_agreement, AaCorrelation};
use protattn_core::structure::{derive_contacts, ContactMap, ContactParams};
use protattn_core::{load_blosum62, score_heads, AnalysisConfig, AttentionSet, Corpus, HeadScoreTable, Metric, Property};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("no attention dump for protein {0}")]
    MissingTensor(String),
    #[error("protein {id}: dump has {residues} residues, record has {len}")]
    LengthMismatch { id: String, residues: usize, len: usize },
    #[error("computation failed: {0}")]
    Compute(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaSummary {
    pub correlation: AaCorrelation,
    pub blosum_agreement: Option<f64>,
    pub retained_heads: usize,
}

type Slot<T> = Arc<OnceCell<T>>;

/// Corpus, tensors and caches for one server. Cached values are pure
/// functions of the inputs and the cache key; concurrent requests for the
/// same key share one computation.
pub struct SessionState {
    corpus: Arc<Corpus>,
    tensors: Arc<AttentionSet>,
    config: AnalysisConfig,
    tables: Mutex<HashMap<String, Slot<Arc<HeadScoreTable>>>>,
    contacts: Mutex<HashMap<String, Slot<Option<Arc<ContactMap>>>>>,
    aa: OnceCell<Arc<AaSummary>>,
    computations: AtomicUsize,
}

impl SessionState {
    pub fn new(corpus: Corpus, tensors: AttentionSet, config: AnalysisConfig) -> Result<Self, StateError> {
        for record in corpus.iter() {
            let t = tensors.get(&record.id).ok_or_else(|| StateError::MissingTensor(record.id.clone()))?;
            if t.n_residues() != record.len() {
                return Err(StateError::LengthMismatch {
                    id: record.id.clone(),
                    residues: t.n_residues(),
                    len: record.len(),
                });
            }
        }
        Ok(Self {
            corpus: Arc::new(corpus),
            tensors: Arc::new(tensors),
            config,
            tables: Mutex::default(),
            contacts: Mutex::default(),
            aa: OnceCell::new(),
            computations: AtomicUsize::new(0),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn tensors(&self) -> &AttentionSet {
        &self.tensors
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    /// Number of expensive computations run so far (tables and profiles).
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::SeqCst)
    }

    fn slot<T>(map: &Mutex<HashMap<String, Slot<T>>>, key: String) -> Slot<T> {
        map.lock().expect("cache lock").entry(key).or_default().clone()
    }

    /// Score table for `property` under the session config and `metric`.
    pub async fn table(&self, property: Property, metric: Metric) -> Result<Arc<HeadScoreTable>, StateError> {
        let config = self.config.clone().with_metric(metric);
        let slot = Self::slot(&self.tables, format!("{}|{}", property.name(), config.cache_key()));
        slot.get_or_try_init(|| async {
            self.computations.fetch_add(1, Ordering::SeqCst);
            let corpus = Arc::clone(&self.corpus);
            let tensors = Arc::clone(&self.tensors);
            tokio::task::spawn_blocking(move || score_heads(&corpus, &tensors, &property, &config))
                .await
                .map_err(|e| StateError::Compute(e.to_string()))?
                .map(Arc::new)
                .map_err(|e| StateError::Compute(e.to_string()))
        })
        .await
        .cloned()
    }

    /// Contact map for a protein, `None` when it has no coordinates.
    pub async fn contacts(&self, id: &str) -> Option<Arc<ContactMap>> {
        let record = self.corpus.get(id)?;
        let slot = Self::slot(&self.contacts, id.to_string());
        slot.get_or_init(|| async { derive_contacts(record, ContactParams::default()).ok().map(Arc::new) })
            .await
            .clone()
    }

    pub async fn aa_summary(&self) -> Result<Arc<AaSummary>, StateError> {
        self.aa
            .get_or_try_init(|| async {
                self.computations.fetch_add(1, Ordering::SeqCst);
                let corpus = Arc::clone(&self.corpus);
                let tensors = Arc::clone(&self.tensors);
                let config = self.config.clone();
                tokio::task::spawn_blocking(move || {
                    let profiles = aa_profiles(&corpus, &tensors, &config).map_err(|e| StateError::Compute(e.to_string()))?;
                    let correlation = aa_attention_correlation(&profiles);
                    let blosum_agreement = blosum_agreement(&correlation, &load_blosum62()).ok();
                    Ok(Arc::new(AaSummary { correlation, blosum_agreement, retained_heads: profiles.retained.len() }))
                })
                .await
                .map_err(|e| StateError::Compute(e.to_string()))?
            })
            .await
            .cloned()
    }
}
