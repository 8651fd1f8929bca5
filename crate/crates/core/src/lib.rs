//! Analysis engine relating Transformer attention over protein sequences to
//! structural and functional residue properties.
//!
//! The pipeline: load a [`corpus`] and per-protein [`tensors`], derive
//! [`structure`] contacts and [`properties`], score every attention head
//! ([`metrics`]), test the scores ([`stats`]), correlate amino-acid profiles
//! with BLOSUM62 ([`aminoacid`]), train linear [`probes`], and write a
//! [`report`].

pub mod aminoacid;
pub mod corpus;
pub mod metrics;
pub mod probes;
pub mod properties;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod structure;
pub mod synth;
pub mod tensors;

pub use corpus::{load_blosum62, load_corpus, AminoAcid, Corpus, ProteinRecord, SubstitutionMatrix};
pub use metrics::{score_heads, AnalysisConfig, HeadScoreTable, Metric};
pub use properties::{IndicatorSource, Property};
pub use scalar::{CompensatedSum, Scalar};
pub use tensors::{AttentionSet, AttentionTensor, EmbeddingSet, EmbeddingTensor, TokenFlag};

pub type LinearProbe32 = probes::LinearProbe<f32>;
pub type LinearProbe64 = probes::LinearProbe<f64>;
pub type LinearModel64 = probes::LinearModel<f64>;
