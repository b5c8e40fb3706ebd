use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use reverso_core::analytics::AnalyticsError;
use reverso_core::doc::DocError;
use reverso_core::draft::DraftError;
use reverso_core::gateway::GatewayError;
use reverso_core::outline::OutlineError;
use reverso_core::store::StoreError;

/// Stable machine-readable error codes.
pub mod code {
    pub const NOT_FOUND: &str = "not_found";
    pub const STALE_VERSION: &str = "stale_version";
    pub const VALIDATION_FAILED: &str = "validation_failed";
    pub const PROVIDER_ERROR: &str = "provider_error";
    pub const NOT_READY: &str = "not_ready";
    pub const CANCELLED: &str = "cancelled";
    pub const STORAGE_ERROR: &str = "storage_error";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code::NOT_FOUND, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code::VALIDATION_FAILED, message)
    }

    pub fn stale(expected: u64, current: u64) -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            code::STALE_VERSION,
            format!("expected state version {expected}, current is {current}"),
        )
        .with_details(json!({ "current_version": current }))
    }

    pub fn not_ready(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code::NOT_READY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, message)
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let details = json!({ "purpose": e.purpose().as_str() });
        if matches!(e, GatewayError::Cancelled { .. }) {
            return ApiError::new(StatusCode::SERVICE_UNAVAILABLE, code::CANCELLED, e.to_string())
                .with_details(details);
        }
        ApiError::new(StatusCode::BAD_GATEWAY, code::PROVIDER_ERROR, e.to_string()).with_details(details)
    }
}

impl From<OutlineError> for ApiError {
    fn from(e: OutlineError) -> Self {
        match e {
            OutlineError::Provider { source, .. } | OutlineError::Selection { source, .. } => {
                source.into()
            }
            other => ApiError::validation(other.to_string()),
        }
    }
}

impl From<DraftError> for ApiError {
    fn from(e: DraftError) -> Self {
        match e {
            DraftError::SectionNotFound(_) | DraftError::HistoryIndex { .. } => {
                ApiError::not_found(e.to_string())
            }
            DraftError::Provider(g) => g.into(),
            DraftError::Outline(o) => o.into(),
            other => ApiError::validation(other.to_string()),
        }
    }
}

impl From<DocError> for ApiError {
    fn from(e: DocError) -> Self {
        let err = ApiError::validation(e.to_string());
        match e {
            DocError::Validation { field, .. } => err.with_details(json!({ "field": field })),
            _ => err,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::InvalidId(_) => ApiError::not_found(e.to_string()),
            other => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                code::STORAGE_ERROR,
                other.to_string(),
            ),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Store(s) => s.into(),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::validation(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::validation(e.body_text())
    }
}
