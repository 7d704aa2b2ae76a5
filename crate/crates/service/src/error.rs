use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use nbs_core::query::QueryError;
use serde::Serialize;

use crate::VERSION_HEADER;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: serde_json::Value,
    #[serde(skip)]
    pub version: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: serde_json::Value::Null,
            version: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn at(mut self, version: u64) -> Self {
        self.version = Some(version);
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
            .with_detail(serde_json::json!({ "id": id }))
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        use QueryError as Q;
        let (status, code) = match &e {
            Q::UnknownNbs(_) => (StatusCode::NOT_FOUND, "not_found"),
            Q::InvalidWeight { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_weight"),
            Q::NoPositiveWeight => (StatusCode::UNPROCESSABLE_ENTITY, "no_positive_weight"),
            Q::ZeroTopN => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_top_n"),
            Q::UnknownFacet(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_facet"),
            Q::UnknownCode(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_taxonomy_code"),
            Q::EmptyResult(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_result"),
            Q::DimOutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "dimension_out_of_range"),
            Q::Stats(_) => (StatusCode::INTERNAL_SERVER_ERROR, "statistics"),
        };
        let detail = match &e {
            Q::InvalidWeight { facet, weight } => serde_json::json!({ "facet": facet, "weight": weight }),
            Q::DimOutOfRange { dim, available } => serde_json::json!({ "dim": dim, "available": available }),
            _ => serde_json::Value::Null,
        };
        ApiError::new(status, code, e.to_string()).with_detail(detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(&self)).into_response();
        if let Some(v) = self.version {
            resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(v));
        }
        resp
    }
}
