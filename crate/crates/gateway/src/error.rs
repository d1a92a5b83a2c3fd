use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use confpaas_core::bench::BenchError;
use confpaas_core::handler::IaasError;
use confpaas_core::model::ValidationError;
use confpaas_core::registry::RegistryError;
use confpaas_core::OrchestratorError;

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.to_string(), message: message.into() }
    }

    pub fn not_found(code: &str, what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, what)
    }

    /// Body did not parse as the expected JSON document.
    pub fn from_json(e: serde_json::Error) -> Self {
        let msg = e.to_string();
        if msg.starts_with("unknown field") {
            ApiError::new(StatusCode::BAD_REQUEST, "UnknownParameter", msg)
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "MalformedJson", msg)
        }
    }
}

/// HTTP status for every machine code the gateway can emit.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "MissingModel" | "MissingMedia" | "MissingTechnology" | "MissingSignalingProtocol" | "MissingEncodings"
        | "InvalidConferenceSize" | "UnknownField" | "UnknownParameter" | "MalformedJson" | "InvalidOffer"
        | "UnknownProvider" | "SeedError" | "UnknownParticipant" | "InvalidParticipant" | "NotRuntimeMutable"
        | "InvalidModification" => StatusCode::BAD_REQUEST,
        "ConferenceNotFound" | "ParticipantNotFound" | "FloorNotFound" | "SubconferenceNotFound" | "OfferNotFound"
        | "NoSuchRoute" => StatusCode::NOT_FOUND,
        "MethodNotAllowed" => StatusCode::METHOD_NOT_ALLOWED,
        "ConferenceNotRunning" | "FloorControlUnavailable" | "SubconferenceDisabled" | "ProviderConflict" => {
            StatusCode::CONFLICT
        }
        "ActivationFailed" | "ProtocolError" | "RemoteError" => StatusCode::BAD_GATEWAY,
        "NoCapableIaaS" | "IaaSUnreachable" | "CapacityExhausted" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let code = match &e {
            OrchestratorError::Validation(ValidationError::UnknownField(_)) => "UnknownParameter",
            other => other.code(),
        };
        ApiError::new(status_for(code), code, e.to_string())
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        OrchestratorError::from(e).into()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        OrchestratorError::from(e).into()
    }
}

impl From<IaasError> for ApiError {
    fn from(e: IaasError) -> Self {
        ApiError::new(status_for(e.code()), e.code(), e.to_string())
    }
}

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Scenario(e) => e.into(),
            other => ApiError::new(StatusCode::BAD_REQUEST, "InvalidScenario", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code, message: self.message })).into_response()
    }
}
