//! A2A JSON-RPC 2.0 wire objects for `message/send`.
//!
//! Inbound requests are parsed into [`RpcRequest`]; answers on the UI path are
//! always built with [`build_text_response`], which yields a message carrying
//! exactly one text part.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::fmt;
use thiserror::Error;

pub const JSONRPC_VERSION: &str = "2.0";
pub const MESSAGE_SEND: &str = "message/send";

/// JSON-RPC error codes used on the UI channel.
pub mod codes {
    pub const PARSE_ERROR: i64 = -32700;
    pub const INVALID_REQUEST: i64 = -32600;
    pub const METHOD_NOT_FOUND: i64 = -32601;
    pub const INVALID_PARAMS: i64 = -32602;
}

/// Request identifier. The original JSON type is echoed back unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Num(i64),
    Str(String),
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestId::Num(n) => write!(f, "{n}"),
            RequestId::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for RequestId {
    fn from(value: i64) -> Self {
        RequestId::Num(value)
    }
}

impl From<&str> for RequestId {
    fn from(value: &str) -> Self {
        RequestId::Str(value.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl Part {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            kind: "text".to_string(),
            text: Some(text.into()),
            data: None,
        }
    }

    pub fn data(data: Value) -> Self {
        Self {
            kind: "data".to_string(),
            text: None,
            data: Some(data),
        }
    }

    pub fn is_text(&self) -> bool {
        self.kind == "text"
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Message {
    #[serde(default)]
    pub parts: Vec<Part>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    /// Fields such as `messageId` or `contextId`; kept for logging only.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Message {
    pub fn user_text(text: impl Into<String>) -> Self {
        Self {
            parts: vec![Part::text(text)],
            role: Some("user".to_string()),
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RpcParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<Message>,
    /// Recorded for observability; never enables non-text output.
    #[serde(
        rename = "acceptedOutputModes",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub accepted_output_modes: Option<Vec<String>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub jsonrpc: String,
    pub id: RequestId,
    pub method: String,
    #[serde(default)]
    pub params: RpcParams,
}

impl RpcRequest {
    /// A `message/send` request shaped like enterprise UI traffic: one text
    /// part and an empty `acceptedOutputModes`.
    pub fn message_send(id: impl Into<RequestId>, text: impl Into<String>) -> Self {
        Self {
            jsonrpc: JSONRPC_VERSION.to_string(),
            id: id.into(),
            method: MESSAGE_SEND.to_string(),
            params: RpcParams {
                text: None,
                message: Some(Message::user_text(text)),
                accepted_output_modes: Some(Vec::new()),
                extra: Map::new(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Body is not UTF-8 JSON.
    NotJson,
    /// JSON, but not a JSON-RPC 2.0 request object.
    InvalidRequest,
    /// Envelope is valid but `params` does not have the expected shape.
    InvalidParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("parse error: {detail}")]
    Parse {
        kind: ParseErrorKind,
        detail: String,
        /// Id recovered from the body when one was readable.
        id: Option<RequestId>,
    },
    #[error("method not supported: {method}")]
    MethodNotSupported { method: String, id: RequestId },
}

impl EnvelopeError {
    pub fn code(&self) -> i64 {
        match self {
            EnvelopeError::Parse { kind, .. } => match kind {
                ParseErrorKind::NotJson => codes::PARSE_ERROR,
                ParseErrorKind::InvalidRequest => codes::INVALID_REQUEST,
                ParseErrorKind::InvalidParams => codes::INVALID_PARAMS,
            },
            EnvelopeError::MethodNotSupported { .. } => codes::METHOD_NOT_FOUND,
        }
    }

    pub fn request_id(&self) -> Option<&RequestId> {
        match self {
            EnvelopeError::Parse { id, .. } => id.as_ref(),
            EnvelopeError::MethodNotSupported { id, .. } => Some(id),
        }
    }

    fn parse(kind: ParseErrorKind, detail: impl Into<String>, id: Option<RequestId>) -> Self {
        EnvelopeError::Parse {
            kind,
            detail: detail.into(),
            id,
        }
    }
}

/// Parses and structurally validates an inbound JSON-RPC request body.
pub fn parse_request(raw_body: &[u8]) -> Result<RpcRequest, EnvelopeError> {
    let text = std::str::from_utf8(raw_body)
        .map_err(|_| EnvelopeError::parse(ParseErrorKind::NotJson, "body is not UTF-8", None))?;
    let value: Value = serde_json::from_str(text)
        .map_err(|e| EnvelopeError::parse(ParseErrorKind::NotJson, e.to_string(), None))?;
    let Value::Object(mut obj) = value else {
        return Err(EnvelopeError::parse(
            ParseErrorKind::InvalidRequest,
            "request must be a JSON object",
            None,
        ));
    };

    let id = match obj.remove("id") {
        Some(Value::String(s)) => RequestId::Str(s),
        Some(Value::Number(n)) => match n.as_i64() {
            Some(n) => RequestId::Num(n),
            None => {
                return Err(EnvelopeError::parse(
                    ParseErrorKind::InvalidRequest,
                    "id must be a string or an integer",
                    None,
                ))
            }
        },
        Some(_) => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidRequest,
                "id must be a string or an integer",
                None,
            ))
        }
        None => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidRequest,
                "missing id",
                None,
            ))
        }
    };

    match obj.get("jsonrpc") {
        Some(Value::String(v)) if v == JSONRPC_VERSION => {}
        Some(_) => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidRequest,
                "jsonrpc must be \"2.0\"",
                Some(id),
            ))
        }
        None => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidRequest,
                "missing jsonrpc",
                Some(id),
            ))
        }
    }

    let method = match obj.get("method") {
        Some(Value::String(m)) => m.clone(),
        _ => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidRequest,
                "missing method",
                Some(id),
            ))
        }
    };
    if method != MESSAGE_SEND {
        return Err(EnvelopeError::MethodNotSupported { method, id });
    }

    let params = match obj.remove("params") {
        None | Some(Value::Null) => RpcParams::default(),
        Some(p @ Value::Object(_)) => serde_json::from_value::<RpcParams>(p).map_err(|e| {
            EnvelopeError::parse(
                ParseErrorKind::InvalidParams,
                e.to_string(),
                Some(id.clone()),
            )
        })?,
        Some(_) => {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidParams,
                "params must be an object",
                Some(id),
            ))
        }
    };
    if let Some(message) = &params.message {
        if message
            .parts
            .iter()
            .any(|p| p.is_text() && p.text.is_none())
        {
            return Err(EnvelopeError::parse(
                ParseErrorKind::InvalidParams,
                "text part without text",
                Some(id),
            ));
        }
    }

    Ok(RpcRequest {
        jsonrpc: JSONRPC_VERSION.to_string(),
        id,
        method,
        params,
    })
}

/// The request carried no usable user text; the hub answers with help text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no user text in request")]
pub struct NoUserText;

/// Text parts win over `params.text`. Multiple text parts are newline-joined
/// in order. Whitespace-only text falls through to the next source.
pub fn extract_user_text(params: &RpcParams) -> Result<String, NoUserText> {
    if let Some(message) = &params.message {
        let texts: Vec<&str> = message
            .parts
            .iter()
            .filter(|p| p.is_text())
            .filter_map(|p| p.text.as_deref())
            .collect();
        if !texts.is_empty() {
            let joined = texts.join("\n");
            if !joined.trim().is_empty() {
                return Ok(joined);
            }
        }
    }
    match params.text.as_deref() {
        Some(t) if !t.trim().is_empty() => Ok(t.to_string()),
        _ => Err(NoUserText),
    }
}

/// `result` of a `message/send` answer: an agent message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMessage {
    pub kind: String,
    pub role: String,
    #[serde(rename = "messageId")]
    pub message_id: String,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcResponse {
    pub jsonrpc: String,
    pub id: RequestId,
    pub result: ResultMessage,
}

impl RpcResponse {
    /// The single text part's content, if the response honours the
    /// text-only contract.
    pub fn single_text(&self) -> Option<&str> {
        match self.result.parts.as_slice() {
            [part] if part.is_text() => part.text.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("response text must not be empty")]
pub struct EmptyResponseText;

pub fn build_text_response(
    id: RequestId,
    text: impl Into<String>,
) -> Result<RpcResponse, EmptyResponseText> {
    let text = text.into();
    if text.is_empty() {
        return Err(EmptyResponseText);
    }
    Ok(RpcResponse {
        jsonrpc: JSONRPC_VERSION.to_string(),
        id,
        result: ResultMessage {
            kind: "message".to_string(),
            role: "agent".to_string(),
            message_id: uuid::Uuid::new_v4().to_string(),
            parts: vec![Part::text(text)],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcErrorObject {
    pub code: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcErrorResponse {
    pub jsonrpc: String,
    pub id: Option<RequestId>,
    pub error: RpcErrorObject,
}

impl RpcErrorResponse {
    pub fn from_error(err: &EnvelopeError) -> Self {
        Self {
            jsonrpc: JSONRPC_VERSION.to_string(),
            id: err.request_id().cloned(),
            error: RpcErrorObject {
                code: err.code(),
                message: err.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseParseError {
    #[error("response is not JSON: {0}")]
    NotJson(String),
    #[error("downstream returned JSON-RPC error {code}: {message}")]
    RpcError { code: i64, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Parses a `message/send` answer. Part-count checks are left to the caller.
pub fn parse_response(raw_body: &[u8]) -> Result<RpcResponse, ResponseParseError> {
    let value: Value =
        serde_json::from_slice(raw_body).map_err(|e| ResponseParseError::NotJson(e.to_string()))?;
    if let Some(err) = value.get("error") {
        let err: RpcErrorObject = serde_json::from_value(err.clone())
            .map_err(|e| ResponseParseError::Malformed(e.to_string()))?;
        return Err(ResponseParseError::RpcError {
            code: err.code,
            message: err.message,
        });
    }
    let resp: RpcResponse =
        serde_json::from_value(value).map_err(|e| ResponseParseError::Malformed(e.to_string()))?;
    if resp.jsonrpc != JSONRPC_VERSION {
        return Err(ResponseParseError::Malformed(
            "jsonrpc must be \"2.0\"".into(),
        ));
    }
    Ok(resp)
}
