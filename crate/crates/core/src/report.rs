//! Cross-layer profiles, head rankings and report files.
//!
//! Display indices (layers, heads, ranks) are 1-based everywhere in this
//! module's output; tables keep 0-based indices internally. ABSENT scores are
//! written as JSON `null` and as `ABSENT` or an empty cell in CSV.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aminoacid::AaCorrelation;
use crate::metrics::{AnalysisConfig, HeadScoreTable, Metric};
use crate::probes::ProbeResult;
use crate::properties::IndicatorKind;
use crate::stats::{significance, SignificanceResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TOP_N: usize = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("every head is ABSENT for property {0}")]
    AllAbsent(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Formats a float so that parsing it back yields the same value.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// Mean of the present entries, summed in order.
pub fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// `sum(l * m_l) / sum(m_l)` over layers with a mean, using 1-based `l`.
pub fn center_of_gravity(layer_means: &[Option<f64>]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (l, m) in layer_means.iter().enumerate() {
        if let Some(m) = m {
            num += (l + 1) as f64 * m;
            den += m;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub property: String,
    pub metric: Metric,
    /// Mean over each layer's non-ABSENT heads; `None` if all are ABSENT.
    pub layer_means: Vec<Option<f64>>,
    pub center_of_gravity: Option<f64>,
}

pub fn layer_profile(table: &HeadScoreTable) -> Result<LayerProfile, ReportError> {
    if table.n_present() == 0 {
        return Err(ReportError::AllAbsent(table.property.clone()));
    }
    let layer_means: Vec<Option<f64>> = table.grid().iter().map(|row| mean_present(row)).collect();
    Ok(LayerProfile {
        property: table.property.clone(),
        metric: table.metric,
        center_of_gravity: center_of_gravity(&layer_means),
        layer_means,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopHead {
    pub rank: usize,
    /// 1-based.
    pub layer: usize,
    /// 1-based.
    pub head: usize,
    pub score: f64,
    pub hits: u64,
    pub arc_count: u64,
    /// Against the table's background; `None` when either sample is empty.
    pub significance: Option<SignificanceResult>,
}

impl TopHead {
    pub fn label(&self) -> String {
        format!("{}-{}", self.layer, self.head)
    }
}

fn head_significance(table: &HeadScoreTable, hits: u64, arcs: u64) -> Option<SignificanceResult> {
    let m = table.n_layers * table.n_heads;
    significance(hits, arcs, table.background.positives, table.background.total, m).ok()
}

/// Heads ranked by score (descending), ties by `(layer, head)` ascending.
/// Each entry carries a z-test against the background with `m` equal to the
/// number of heads.
pub fn top_heads(table: &HeadScoreTable, n: usize) -> Result<Vec<TopHead>, ReportError> {
    let mut present: Vec<_> = table.heads.iter().filter_map(|h| h.score.map(|s| (s, h))).collect();
    if present.is_empty() {
        return Err(ReportError::AllAbsent(table.property.clone()));
    }
    present.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1.layer, a.1.head).cmp(&(b.1.layer, b.1.head))));
    Ok(present
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(rank, (score, h))| TopHead {
            rank: rank + 1,
            layer: h.layer + 1,
            head: h.head + 1,
            score,
            hits: h.hits,
            arc_count: h.arc_count,
            significance: head_significance(table, h.hits, h.arc_count),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub analysis: AnalysisConfig,
    pub null_seed: Option<u64>,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSummary {
    pub positives: u64,
    pub total: u64,
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub property: String,
    pub kind: IndicatorKind,
    pub metric: Metric,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_proteins: usize,
    pub background: BackgroundSummary,
    /// `layers x heads`, null for ABSENT.
    pub scores: Vec<Vec<Option<f64>>>,
    /// `layers x heads` arc counts (high) or attention mass (weighted).
    pub arc_counts: Vec<Vec<f64>>,
    pub top_heads: Vec<TopHead>,
}

impl TableSummary {
    pub fn from_table(table: &HeadScoreTable, top_n: usize) -> Self {
        Self {
            property: table.property.clone(),
            kind: table.kind,
            metric: table.metric,
            n_layers: table.n_layers,
            n_heads: table.n_heads,
            n_proteins: table.n_proteins,
            background: BackgroundSummary {
                positives: table.background.positives,
                total: table.background.total,
                frequency: table.background.frequency(),
            },
            scores: table.grid(),
            arc_counts: table
                .heads
                .chunks(table.n_heads.max(1))
                .map(|row| row.iter().map(|h| table.arc_count_value(h)).collect())
                .collect(),
            top_heads: top_heads(table, top_n).unwrap_or_default(),
        }
    }
}

/// Everything `report.json` contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub tables: Vec<TableSummary>,
    pub profiles: Vec<LayerProfile>,
    pub probes: Vec<ProbeResult>,
    pub aa_correlation: Option<AaCorrelation>,
    /// Pearson agreement between `aa_correlation` and BLOSUM62.
    pub blosum_agreement: Option<f64>,
}

impl Report {
    /// Assembles a report. Tables are ordered by property name; profiles
    /// are omitted for properties where every head is ABSENT.
    pub fn build(
        config: ReportConfig,
        tables: &[HeadScoreTable],
        probes: &[ProbeResult],
        aa_correlation: Option<&AaCorrelation>,
    ) -> Self {
        let mut sorted: Vec<&HeadScoreTable> = tables.iter().collect();
        sorted.sort_by(|a, b| a.property.cmp(&b.property));
        Self {
            schema_version: SCHEMA_VERSION,
            tables: sorted.iter().map(|t| TableSummary::from_table(t, config.top_n)).collect(),
            profiles: sorted.iter().filter_map(|t| layer_profile(t).ok()).collect(),
            probes: probes.to_vec(),
            aa_correlation: aa_correlation.cloned(),
            blosum_agreement: None,
            config,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

/// `layer,h1,...,hH` with one row per 1-based layer; ABSENT cells are empty.
pub fn heatmap_csv(table: &HeadScoreTable) -> Result<Vec<u8>, ReportError> {
    let mut rows = Vec::with_capacity(table.n_layers + 1);
    let mut header = vec!["layer".to_string()];
    header.extend((1..=table.n_heads).map(|h| format!("h{h}")));
    rows.push(header);
    for (l, scores) in table.grid().iter().enumerate() {
        let mut row = vec![(l + 1).to_string()];
        row.extend(scores.iter().map(|s| s.map(fmt_float).unwrap_or_default()));
        rows.push(row);
    }
    csv_bytes(rows)
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn topheads_csv(entries: &[TopHead]) -> Result<Vec<u8>, ReportError> {
    let mut rows = vec![["rank", "layer", "head", "score", "hits", "arc_count", "z", "p", "significant_bonferroni", "ci_lo", "ci_hi"]
        .map(String::from)
        .to_vec()];
    for e in entries {
        let s = e.significance.as_ref();
        rows.push(vec![
            e.rank.to_string(),
            e.layer.to_string(),
            e.head.to_string(),
            fmt_float(e.score),
            e.hits.to_string(),
            e.arc_count.to_string(),
            opt_cell(s.and_then(|s| s.z).map(fmt_float)),
            opt_cell(s.and_then(|s| s.p).map(fmt_float)),
            opt_cell(s.map(|s| s.significant_bonferroni)),
            opt_cell(s.map(|s| fmt_float(s.ci_lo))),
            opt_cell(s.map(|s| fmt_float(s.ci_hi))),
        ]);
    }
    csv_bytes(rows)
}

/// One row per head: `layer,head,property,mode,score,arc_count,background`
/// followed by the significance columns.
pub fn scores_csv(table: &HeadScoreTable) -> Result<Vec<u8>, ReportError> {
    let mut rows = vec![[
        "layer", "head", "property", "mode", "score", "arc_count", "background", "z", "p", "significant_bonferroni", "ci_lo",
        "ci_hi",
    ]
    .map(String::from)
    .to_vec()];
    let background = opt_cell(table.background.frequency().map(fmt_float));
    for h in &table.heads {
        let s = head_significance(table, h.hits, h.arc_count);
        rows.push(vec![
            (h.layer + 1).to_string(),
            (h.head + 1).to_string(),
            table.property.clone(),
            table.metric.as_str().to_string(),
            h.score.map(fmt_float).unwrap_or_else(|| "ABSENT".into()),
            fmt_float(table.arc_count_value(h)),
            background.clone(),
            opt_cell(s.and_then(|s| s.z).map(fmt_float)),
            opt_cell(s.and_then(|s| s.p).map(fmt_float)),
            opt_cell(s.map(|s| s.significant_bonferroni)),
            opt_cell(s.map(|s| fmt_float(s.ci_lo))),
            opt_cell(s.map(|s| fmt_float(s.ci_hi))),
        ]);
    }
    csv_bytes(rows)
}

/// Parses a heatmap CSV back into a `layers x heads` grid.
pub fn parse_heatmap_csv(bytes: &[u8]) -> Result<Vec<Vec<Option<f64>>>, ReportError> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut grid = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|c| if c.is_empty() { None } else { c.parse::<f64>().ok() })
            .collect();
        grid.push(row);
    }
    Ok(grid)
}

/// Writes `report.json` plus per-property `heatmap_`, `topheads_` and
/// `scores_` CSVs (and `aa_correlation.csv` when present) into `out_dir`.
/// Returns the written paths in a fixed order.
pub fn emit_report(out_dir: &Path, report: &Report, tables: &[HeadScoreTable]) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    let path = out_dir.join("report.json");
    write_file(&path, &json)?;
    written.push(path);

    let mut sorted: Vec<&HeadScoreTable> = tables.iter().collect();
    sorted.sort_by(|a, b| a.property.cmp(&b.property));
    for table in sorted {
        let name = &table.property;
        let top = top_heads(table, report.config.top_n).unwrap_or_default();
        for (file, bytes) in [
            (format!("heatmap_{name}.csv"), heatmap_csv(table)?),
            (format!("topheads_{name}.csv"), topheads_csv(&top)?),
            (format!("scores_{name}.csv"), scores_csv(table)?),
        ] {
            let path = out_dir.join(file);
            write_file(&path, &bytes)?;
            written.push(path);
        }
    }
    if let Some(corr) = &report.aa_correlation {
        let mut bytes = Vec::new();
        corr.write_csv(&mut bytes).map_err(|e| ReportError::Io {
            path: out_dir.join("aa_correlation.csv"),
            source: io::Error::new(io::ErrorKind::Other, e.to_string()),
        })?;
        let path = out_dir.join("aa_correlation.csv");
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
