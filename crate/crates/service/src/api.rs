//! HTTP routes consumed by the viewer. All responses are JSON; layer and
//! head indices are 1-based.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use protattn_core::corpus::{AminoAcid, SecondaryStructure};
use protattn_core::metrics::{high_confidence_arcs, Arc as AttentionArc};
use protattn_core::report::{layer_profile, TableSummary, DEFAULT_TOP_N};
use protattn_core::{Metric, Property};

use crate::state::{SessionState, StateError};

/// Display threshold for arc lists; the analysis default stays 0.3.
pub const DEFAULT_VIEW_THRESHOLD: f64 = 0.1;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

impl From<StateError> for ApiError {
    fn from(e: StateError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<SessionState>) -> Router {
    Router::new()
        .route("/api/proteins", get(list_proteins))
        .route("/api/proteins/:id", get(protein_detail))
        .route("/api/proteins/:id/attention", get(attention_arcs))
        .route("/api/heads/rankings", get(head_rankings))
        .route("/api/aa/correlation", get(aa_correlation))
        .route("/api/layers/profile", get(layers_profile))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ProteinSummary {
    pub id: String,
    pub length: usize,
    pub has_coords: bool,
}

async fn list_proteins(State(state): State<Arc<SessionState>>) -> Json<Vec<ProteinSummary>> {
    Json(
        state
            .corpus()
            .iter()
            .map(|r| ProteinSummary { id: r.id.clone(), length: r.len(), has_coords: r.has_coords() })
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ProteinDetail {
    pub id: String,
    pub length: usize,
    pub sequence: String,
    pub coords: Option<Vec<Option<[f64; 3]>>>,
    pub ss: Option<String>,
    pub binding_sites: Vec<usize>,
    pub ptm_sites: Vec<usize>,
    /// Residue pairs `(i, j)`, `i < j`; null without coordinates.
    pub contacts: Option<Vec<(usize, usize)>>,
}

async fn protein_detail(State(state): State<Arc<SessionState>>, Path(id): Path<String>) -> ApiResult<ProteinDetail> {
    let record = state.corpus().get(&id).ok_or_else(|| ApiError::NotFound(format!("unknown protein {id}")))?;
    let contacts = state.contacts(&id).await.map(|m| m.pairs().to_vec());
    Ok(Json(ProteinDetail {
        id: record.id.clone(),
        length: record.len(),
        sequence: record.sequence.iter().map(|a: &AminoAcid| a.code()).collect(),
        coords: record.coords.clone(),
        ss: record.ss_labels.as_ref().map(|l| l.iter().map(|s: &SecondaryStructure| s.as_char()).collect()),
        binding_sites: record.binding_sites.iter().copied().collect(),
        ptm_sites: record.ptm_sites.iter().copied().collect(),
        contacts,
    }))
}

#[derive(Debug, Deserialize)]
pub struct AttentionQuery {
    pub layer: Option<usize>,
    pub head: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ArcList {
    pub protein_id: String,
    pub layer: usize,
    pub head: usize,
    pub threshold: f64,
    pub arcs: Vec<AttentionArc>,
}

async fn attention_arcs(
    State(state): State<Arc<SessionState>>,
    Path(id): Path<String>,
    Query(q): Query<AttentionQuery>,
) -> ApiResult<ArcList> {
    let tensor = state.tensors().get(&id).filter(|_| state.corpus().get(&id).is_some());
    let tensor = tensor.ok_or_else(|| ApiError::NotFound(format!("unknown protein {id}")))?;
    let (layer, head) = match (q.layer, q.head) {
        (Some(l), Some(h)) => (l, h),
        _ => return Err(ApiError::BadRequest("layer and head are required (1-based)".into())),
    };
    if layer == 0 || layer > tensor.n_layers() || head == 0 || head > tensor.n_heads() {
        return Err(ApiError::BadRequest(format!(
            "layer must be in 1..={} and head in 1..={}",
            tensor.n_layers(),
            tensor.n_heads()
        )));
    }
    let threshold = q.threshold.unwrap_or(DEFAULT_VIEW_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ApiError::BadRequest(format!("threshold {threshold} not in [0, 1]")));
    }
    let arcs = high_confidence_arcs(tensor, layer - 1, head - 1, threshold, &state.config().exclude_flags);
    Ok(Json(ArcList { protein_id: id, layer, head, threshold, arcs }))
}

#[derive(Debug, Deserialize)]
pub struct PropertyQuery {
    pub property: Option<String>,
    pub metric: Option<String>,
    pub n: Option<usize>,
}

fn parse_query(q: &PropertyQuery) -> Result<(Property, Metric), ApiError> {
    let name = q.property.as_deref().ok_or_else(|| ApiError::BadRequest("property is required".into()))?;
    let property: Property = name.parse().map_err(|e: protattn_core::properties::UnknownProperty| ApiError::BadRequest(e.to_string()))?;
    let metric = match &q.metric {
        Some(m) => m.parse().map_err(ApiError::BadRequest)?,
        None => Metric::HighConfidence,
    };
    Ok((property, metric))
}

async fn head_rankings(State(state): State<Arc<SessionState>>, Query(q): Query<PropertyQuery>) -> ApiResult<TableSummary> {
    let (property, metric) = parse_query(&q)?;
    let table = state.table(property, metric).await?;
    Ok(Json(TableSummary::from_table(&table, q.n.unwrap_or(DEFAULT_TOP_N))))
}

async fn layers_profile(State(state): State<Arc<SessionState>>, Query(q): Query<PropertyQuery>) -> Result<Response, ApiError> {
    let (property, metric) = parse_query(&q)?;
    let table = state.table(property, metric).await?;
    let profile = layer_profile(&table).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    Ok(Json(profile).into_response())
}

async fn aa_correlation(State(state): State<Arc<SessionState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let summary = state.aa_summary().await?;
    let order: String = AminoAcid::STANDARD.iter().map(|a| a.code()).collect();
    Ok(Json(json!({
        "order": order,
        "matrix": summary.correlation.to_json(),
        "blosum_agreement": summary.blosum_agreement,
        "retained_heads": summary.retained_heads,
    })))
}
