//! The uniform error envelope: `{code, message, detail}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use medos_core::docs::DocsError;
use medos_core::grounding::GroundingError;
use medos_core::store::StoreError;
use medos_core::viewer::ViewerError;
use medos_core::workflow::WorkflowError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::InvalidId(_) => Self::bad_request("InvalidId", msg),
            StoreError::DuplicatePatient(id) => {
                Self::new(StatusCode::CONFLICT, "DuplicatePatient", msg).with_detail(json!({ "patient_id": id }))
            }
            StoreError::UnknownPatient(id) => {
                Self::not_found("UnknownPatient", msg).with_detail(json!({ "patient_id": id }))
            }
            StoreError::UnknownSpecialty(_) => Self::bad_request("UnknownSpecialty", msg),
            StoreError::AlreadyCentral(_) => Self::new(StatusCode::CONFLICT, "AlreadyCentral", msg),
            StoreError::UnknownDocument { patient_id, filename } => Self::not_found("UnknownDocument", msg)
                .with_detail(json!({ "patient_id": patient_id, "filename": filename })),
            StoreError::EmptyQuery => Self::bad_request("EmptyQuery", msg),
            StoreError::InvalidFileName(_) => Self::bad_request("InvalidFileName", msg),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "StoreFailure", msg),
        }
    }
}

impl From<DocsError> for ApiError {
    fn from(e: DocsError) -> Self {
        let msg = e.to_string();
        match e {
            DocsError::EmptyInputs | DocsError::EmptyEvidence => Self::bad_request("EmptyInputs", msg),
            DocsError::InvalidAssessment(_) => Self::bad_request("InvalidAssessment", msg),
            DocsError::UnknownSpecialty(_) => Self::bad_request("UnknownSpecialty", msg),
            DocsError::UnknownSpecialtyProposed(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "UnknownSpecialtyProposed", msg)
            }
            DocsError::GenerationMalformed(_) => Self::new(StatusCode::BAD_GATEWAY, "GenerationMalformed", msg),
            DocsError::Backend(_) => Self::new(StatusCode::BAD_GATEWAY, "BackendFailure", msg),
        }
    }
}

impl From<GroundingError> for ApiError {
    fn from(e: GroundingError) -> Self {
        let msg = e.to_string();
        match e {
            GroundingError::EmptyTranscript | GroundingError::EmptyTerm => Self::bad_request("EmptyInput", msg),
            _ => Self::new(StatusCode::BAD_GATEWAY, "GroundingFailure", msg),
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let msg = e.to_string();
        let conflict = |code: &str| Self::new(StatusCode::CONFLICT, code, msg.clone());
        match e {
            WorkflowError::WrongStage { op, stage } => {
                conflict("WrongStage").with_detail(json!({ "op": op, "stage": stage }))
            }
            WorkflowError::BudgetExhausted { used, budget } => {
                conflict("BudgetExhausted").with_detail(json!({ "used": used, "budget": budget }))
            }
            WorkflowError::NoFinalAssessment => conflict("NoFinalAssessment"),
            WorkflowError::ActiveEpisode(_) => conflict("ActiveEpisode"),
            WorkflowError::NoReport => conflict("NoReport"),
            WorkflowError::UnknownPatient(id) => {
                Self::not_found("UnknownPatient", msg).with_detail(json!({ "patient_id": id }))
            }
            WorkflowError::NoEpisode(_) => Self::not_found("NoEpisode", msg),
            WorkflowError::EmptyTranscript => Self::bad_request("EmptyTranscript", msg),
            WorkflowError::InvalidExam(_) => Self::bad_request("InvalidExam", msg),
            WorkflowError::InvalidReferral(_) => Self::bad_request("InvalidReferral", msg),
            WorkflowError::InvalidPolicy(_) => Self::bad_request("InvalidPolicy", msg),
            WorkflowError::ApprovalRequired => Self::new(StatusCode::FORBIDDEN, "ApprovalRequired", msg),
            WorkflowError::CorruptReport(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "CorruptReport", msg),
            WorkflowError::Store(e) => e.into(),
            WorkflowError::Docs(e) => e.into(),
            WorkflowError::Grounding(e) => e.into(),
            WorkflowError::Episode(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "CorruptEpisode", msg),
        }
    }
}

impl From<ViewerError> for ApiError {
    fn from(e: ViewerError) -> Self {
        let code = match e {
            ViewerError::ZeroHeight => "ZeroHeight",
            ViewerError::EmptyKeyword => "EmptyKeyword",
            ViewerError::NotFound(_) => "KeywordNotFound",
        };
        let status = if matches!(e, ViewerError::NotFound(_)) { StatusCode::NOT_FOUND } else { StatusCode::BAD_REQUEST };
        Self::new(status, code, e.to_string())
    }
}
