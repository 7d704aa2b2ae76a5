use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nbs_core::catalogue::TaxonomyNode;
use nbs_core::query::{Explorer, RankingRequest};
use nbs_core::scoring::{facet_summary, FacetSummary};
use nbs_core::{FacetId, NbsId, TaxonomyCode};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::{ApiError, Service, Snapshot, VERSION_HEADER};

type ApiResult = Result<Response, ApiError>;

pub fn router(service: Service) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([axum::http::HeaderName::from_static(VERSION_HEADER)]);
    Router::new()
        .route("/nbs", get(list_nbs))
        .route("/nbs/{id}", get(get_nbs))
        .route("/nbs/{id}/profile", get(profile))
        .route("/taxonomy", get(taxonomy))
        .route("/facets", get(facets))
        .route("/scores", get(scores))
        .route("/evenness", get(evenness))
        .route("/pca", get(pca))
        .route("/names/{id}/decision", get(decision))
        .route("/rank", post(rank))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(cors)
        .with_state(service)
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    version: u64,
    data: &'a T,
}

fn respond<T: Serialize>(snap: &Snapshot, data: &T) -> Response {
    let mut resp = Json(Envelope {
        version: snap.version,
        data,
    })
    .into_response();
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(snap.version));
    resp
}

fn nbs_id(snap: &Snapshot, id: &str) -> Result<NbsId, ApiError> {
    let id = NbsId::from(id);
    snap.dataset
        .catalogue
        .entry(&id)
        .map(|_| id.clone())
        .map_err(|_| ApiError::not_found("NBS", id.as_str()).at(snap.version))
}

async fn list_nbs(State(svc): State<Service>) -> Response {
    let snap = svc.snapshot();
    respond(&snap, &snap.dataset.catalogue.entries())
}

async fn get_nbs(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult {
    let snap = svc.snapshot();
    let id = nbs_id(&snap, &id)?;
    Ok(respond(&snap, snap.dataset.catalogue.entry(&id).expect("checked")))
}

async fn profile(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult {
    let snap = svc.snapshot();
    let id = nbs_id(&snap, &id)?;
    let p = Explorer::new(&snap.dataset.catalogue, &snap.analysis.matrix)
        .profile(&id)
        .map_err(|e| ApiError::from(e).at(snap.version))?;
    Ok(respond(&snap, &p))
}

#[derive(Serialize)]
struct NodeView<'a> {
    #[serde(flatten)]
    node: &'a TaxonomyNode,
    children: &'a [TaxonomyCode],
    members: Vec<NbsId>,
}

async fn taxonomy(State(svc): State<Service>) -> Response {
    let snap = svc.snapshot();
    let cat = &snap.dataset.catalogue;
    let tax = cat.taxonomy();
    let nodes: Vec<NodeView> = tax
        .nodes()
        .map(|node| NodeView {
            node,
            children: tax.children(&node.code),
            members: cat.taxonomy_members(&node.code).unwrap_or_default(),
        })
        .collect();
    respond(&snap, &serde_json::json!({ "roots": tax.roots(), "nodes": nodes }))
}

async fn facets(State(svc): State<Service>) -> Response {
    let snap = svc.snapshot();
    respond(&snap, &snap.dataset.catalogue.facets())
}

#[derive(Deserialize)]
struct ScoresQuery {
    #[serde(default)]
    view: Option<String>,
}

#[derive(Serialize)]
struct ScoresView<'a> {
    rows: &'a [NbsId],
    columns: &'a [nbs_core::catalogue::FacetDef],
    /// `values[row][column]`, null where unassessed.
    values: Vec<&'a [Option<f64>]>,
    summaries: Vec<FacetSummary>,
}

async fn scores(State(svc): State<Service>, Query(q): Query<ScoresQuery>) -> ApiResult {
    let snap = svc.snapshot();
    let m = match q.view.as_deref() {
        None | Some("facets") => &snap.analysis.matrix,
        Some("categories") => &snap.analysis.category_matrix,
        Some(other) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_view", format!("unknown view `{other}`"))
                .with_detail(serde_json::json!({ "allowed": ["facets", "categories"] }))
                .at(snap.version))
        }
    };
    let summaries = m
        .columns()
        .iter()
        .filter_map(|c| facet_summary(m, &c.id).ok())
        .collect();
    Ok(respond(
        &snap,
        &ScoresView {
            rows: m.rows(),
            columns: m.columns(),
            values: (0..m.n_rows()).map(|r| m.row(r)).collect(),
            summaries,
        },
    ))
}

async fn evenness(State(svc): State<Service>) -> Response {
    let snap = svc.snapshot();
    respond(&snap, &snap.analysis.evenness)
}

#[derive(Deserialize)]
struct PcaQuery {
    x: Option<usize>,
    y: Option<usize>,
}

async fn pca(State(svc): State<Service>, Query(q): Query<PcaQuery>) -> ApiResult {
    let snap = svc.snapshot();
    let dims = (q.x.unwrap_or(1), q.y.unwrap_or(2));
    let points = Explorer::new(&snap.dataset.catalogue, &snap.analysis.matrix)
        .scatter_data(&snap.analysis.pca, dims)
        .map_err(|e| ApiError::from(e).at(snap.version))?;
    let dropped: Vec<&FacetId> = snap.analysis.pca_input.dropped.iter().collect();
    Ok(respond(
        &snap,
        &serde_json::json!({
            "result": snap.analysis.pca,
            "dropped_variables": dropped,
            "dims": [dims.0, dims.1],
            "scatter": points,
        }),
    ))
}

async fn decision(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult {
    let snap = svc.snapshot();
    let id = nbs_id(&snap, &id)?;
    let d = snap
        .analysis
        .names
        .iter()
        .find(|d| d.nbs == id)
        .ok_or_else(|| ApiError::not_found("decision", id.as_str()).at(snap.version))?;
    Ok(respond(&snap, d))
}

async fn rank(State(svc): State<Service>, body: Result<Json<RankingRequest>, JsonRejection>) -> ApiResult {
    let snap = svc.snapshot();
    let Json(req) = body.map_err(|e| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", "request body is not a valid ranking request")
            .with_detail(serde_json::Value::String(e.body_text()))
            .at(snap.version)
    })?;
    let list = Explorer::new(&snap.dataset.catalogue, &snap.analysis.matrix)
        .rank(&req)
        .map_err(|e| ApiError::from(e).at(snap.version))?;
    Ok(respond(&snap, &list))
}
