//! The HTTP/JSON protocol shared by the server and every client.
//!
//! Request and response bodies are plain structs so both ends agree on the
//! exact key names. Request structs reject unknown keys: nothing besides the
//! listed fields can reach the server, which keeps display names and other
//! identity data out of its logs and storage.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkin::Millis;
use crate::id::ParticipantId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
        })
    }
}

/// Transport-neutral request: what would go over HTTP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub method: Method,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl WireRequest {
    pub fn get(path: &str) -> Self {
        WireRequest {
            method: Method::Get,
            path: path.to_owned(),
            query: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn post(path: &str) -> Self {
        WireRequest {
            method: Method::Post,
            ..Self::get(path)
        }
    }

    pub fn post_json<T: Serialize>(path: &str, body: &T) -> Self {
        WireRequest {
            body: serde_json::to_vec(body).expect("request bodies serialize"),
            ..Self::post(path)
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<String>) -> Self {
        self.query.push((key.to_owned(), value.into()));
        self
    }

    /// Every byte that would leave the client, for traffic inspection.
    pub fn transcript(&self) -> String {
        let mut out = format!("{} {}", self.method, self.path);
        for (i, (k, v)) in self.query.iter().enumerate() {
            out.push(if i == 0 { '?' } else { '&' });
            out.push_str(k);
            out.push('=');
            out.push_str(v);
        }
        out.push('\n');
        out.push_str(&String::from_utf8_lossy(&self.body));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl WireResponse {
    pub fn json<T: Serialize>(status: u16, body: &T) -> Self {
        WireResponse {
            status,
            body: serde_json::to_vec(body).expect("response bodies serialize"),
        }
    }

    pub fn error(code: ErrorCode) -> Self {
        Self::json(
            code.status(),
            &ErrorBody {
                error: code.as_str().to_owned(),
            },
        )
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("transport failure: {0}")]
    Other(String),
}

/// Something that can carry a [`WireRequest`] to a server.
pub trait Transport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        (**self).send(req)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        (**self).send(req)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, TransportError> {
        (**self).send(req)
    }
}

/// Stable error codes carried in `{"error": <code>}` bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    BadRequest,
    OutOfRange,
    MsgTooLong,
    BadToken,
    ExpiredToken,
    UsedToken,
    AuthFailed,
    NotShared,
    NotParty,
    UnknownParticipant,
    NotFound,
    MethodNotAllowed,
    SelfShare,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 14] = [
        ErrorCode::BadRequest,
        ErrorCode::OutOfRange,
        ErrorCode::MsgTooLong,
        ErrorCode::BadToken,
        ErrorCode::ExpiredToken,
        ErrorCode::UsedToken,
        ErrorCode::AuthFailed,
        ErrorCode::NotShared,
        ErrorCode::NotParty,
        ErrorCode::UnknownParticipant,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::SelfShare,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::OutOfRange => "out_of_range",
            ErrorCode::MsgTooLong => "msg_too_long",
            ErrorCode::BadToken => "bad_token",
            ErrorCode::ExpiredToken => "expired_token",
            ErrorCode::UsedToken => "used_token",
            ErrorCode::AuthFailed => "auth_failed",
            ErrorCode::NotShared => "not_shared",
            ErrorCode::NotParty => "not_party",
            ErrorCode::UnknownParticipant => "unknown_participant",
            ErrorCode::NotFound => "not_found",
            ErrorCode::MethodNotAllowed => "method_not_allowed",
            ErrorCode::SelfShare => "self_share",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn status(self) -> u16 {
        match self {
            ErrorCode::BadRequest
            | ErrorCode::OutOfRange
            | ErrorCode::MsgTooLong
            | ErrorCode::BadToken
            | ErrorCode::ExpiredToken
            | ErrorCode::UsedToken => 400,
            ErrorCode::AuthFailed => 401,
            ErrorCode::NotShared | ErrorCode::NotParty => 403,
            ErrorCode::UnknownParticipant | ErrorCode::NotFound => 404,
            ErrorCode::MethodNotAllowed => 405,
            ErrorCode::SelfShare => 409,
            ErrorCode::Internal => 500,
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthBody {
    pub id: ParticipantId,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckinRequest {
    pub id: ParticipantId,
    pub secret: String,
    pub lat: f64,
    pub lng: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckinResponse {
    pub ts: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InviteResponse {
    pub token: String,
    pub link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptRequest {
    pub token: String,
    pub id: ParticipantId,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptResponse {
    pub sharer: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevokeRequest {
    pub id: ParticipantId,
    pub secret: String,
    pub sharer: ParticipantId,
    pub reader: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OkResponse {
    pub ok: bool,
}
