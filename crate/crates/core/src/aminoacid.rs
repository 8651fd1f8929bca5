//! Per-head amino-acid attention profiles and their agreement with a
//! substitution matrix.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AminoAcid, Corpus, SubstitutionMatrix};
use crate::metrics::{score_heads, AnalysisConfig, HeadScoreTable, MetricsError};
use crate::properties::Property;
use crate::stats::{pearson, StatsError};
use crate::tensors::AttentionSet;

#[derive(Debug, Error)]
pub enum AminoAcidError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("correlation entry ({0}, {1}) is undefined")]
    IncompleteMatrix(char, char),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Score tables for the 20 amino-acid properties, plus the heads that are
/// scored in every one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaProfileMatrix {
    pub n_layers: usize,
    pub n_heads: usize,
    /// One table per amino acid, in [`AminoAcid::STANDARD`] order.
    pub tables: Vec<HeadScoreTable>,
    /// `(layer, head)` pairs present in all 20 tables, layer-major.
    pub retained: Vec<(usize, usize)>,
}

impl AaProfileMatrix {
    /// Builds from per-amino-acid tables in [`AminoAcid::STANDARD`] order.
    pub fn from_tables(tables: Vec<HeadScoreTable>) -> Self {
        assert_eq!(tables.len(), 20, "one table per standard amino acid");
        let (n_layers, n_heads) = (tables[0].n_layers, tables[0].n_heads);
        let mut retained = Vec::new();
        for layer in 0..n_layers {
            for head in 0..n_heads {
                if tables.iter().all(|t| t.score(layer, head).is_some()) {
                    retained.push((layer, head));
                }
            }
        }
        Self { n_layers, n_heads, tables, retained }
    }

    pub fn table(&self, aa: AminoAcid) -> Option<&HeadScoreTable> {
        aa.index().map(|i| &self.tables[i])
    }

    /// Scores of one amino acid over the retained heads.
    pub fn profile(&self, aa: AminoAcid) -> Option<Vec<f64>> {
        let table = self.table(aa)?;
        Some(
            self.retained
                .iter()
                .map(|&(l, h)| table.score(l, h).expect("retained heads are present in every table"))
                .collect(),
        )
    }
}

/// Scores every head against each of the 20 residue-identity properties.
pub fn aa_profiles(corpus: &Corpus, tensors: &AttentionSet, config: &AnalysisConfig) -> Result<AaProfileMatrix, AminoAcidError> {
    let tables = AminoAcid::STANDARD
        .iter()
        .map(|&aa| score_heads(corpus, tensors, &Property::AminoAcid(aa), config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AaProfileMatrix::from_tables(tables))
}

/// Symmetric 20x20 correlation matrix; `None` where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaCorrelation {
    pub values: Vec<Vec<Option<f64>>>,
}

impl AaCorrelation {
    pub fn get(&self, a: AminoAcid, b: AminoAcid) -> Option<f64> {
        self.values[a.index()?][b.index()?]
    }

    /// CSV with a header row of one-letter codes and one row per residue.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AminoAcidError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::from("aa")];
        header.extend(AminoAcid::STANDARD.iter().map(|a| a.code().to_string()));
        out.write_record(&header)?;
        for (i, aa) in AminoAcid::STANDARD.iter().enumerate() {
            let mut row = vec![aa.code().to_string()];
            row.extend(self.values[i].iter().map(|v| v.map(crate::report::fmt_float).unwrap_or_default()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON object keyed by one-letter codes: `{"A": {"A": 1.0, ...}, ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut outer = serde_json::Map::new();
        for (i, a) in AminoAcid::STANDARD.iter().enumerate() {
            let mut inner = serde_json::Map::new();
            for (j, b) in AminoAcid::STANDARD.iter().enumerate() {
                inner.insert(b.code().to_string(), serde_json::json!(self.values[i][j]));
            }
            outer.insert(a.code().to_string(), serde_json::Value::Object(inner));
        }
        serde_json::Value::Object(outer)
    }
}

/// Pearson correlation between the head profiles of every amino-acid pair.
/// Pairs involving a zero-variance profile are left undefined.
pub fn aa_attention_correlation(profiles: &AaProfileMatrix) -> AaCorrelation {
    let vectors: Vec<Vec<f64>> = AminoAcid::STANDARD
        .iter()
        .map(|&aa| profiles.profile(aa).expect("standard amino acid"))
        .collect();
    let mut values = vec![vec![None; 20]; 20];
    for i in 0..20 {
        for j in i..20 {
            let r = pearson(&vectors[i], &vectors[j]).ok();
            let r = if i == j { r.map(|_| 1.0) } else { r };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    AaCorrelation { values }
}

/// Pearson correlation between attention correlations and substitution
/// scores over the 190 unordered pairs of distinct amino acids.
pub fn blosum_agreement(corr: &AaCorrelation, blosum: &SubstitutionMatrix) -> Result<f64, AminoAcidError> {
    let mut xs = Vec::with_capacity(190);
    let mut ys = Vec::with_capacity(190);
    for (i, &a) in AminoAcid::STANDARD.iter().enumerate() {
        for &b in &AminoAcid::STANDARD[i + 1..] {
            let c = corr.get(a, b).ok_or(AminoAcidError::IncompleteMatrix(a.code(), b.code()))?;
            xs.push(c);
            ys.push(f64::from(blosum.score(a, b).expect("standard amino acids")));
        }
    }
    Ok(pearson(&xs, &ys)?)
}
