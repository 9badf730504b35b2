//! HTTP surface of the hub.
//!
//! `POST /` is the UI channel: answers are always one text part and never a
//! 5xx. `POST /tools/query` runs the same pipeline and returns the full
//! structured record.

use crate::docqa::{Citation, EvidenceStatus};
use crate::downstream::{DebugEntry, Pipeline, PipelineOutcome};
use crate::envelope::{build_text_response, extract_user_text, parse_request, RpcErrorResponse};
use crate::router::{Route, RoutingRule, RuleTable};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::Arc;

pub const OPENAPI_YAML: &str = include_str!("../assets/openapi.yaml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSkill {
    pub id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentCard {
    pub name: String,
    pub description: String,
    pub url: String,
    pub version: String,
    pub protocol_version: String,
    pub default_input_modes: Vec<String>,
    pub default_output_modes: Vec<String>,
    pub capabilities: AgentCapabilities,
    pub skills: Vec<AgentSkill>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentCapabilities {
    pub streaming: bool,
}

impl AgentCard {
    /// Input and output modes are fixed to text.
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        url: impl Into<String>,
        version: impl Into<String>,
        skills: Vec<AgentSkill>,
    ) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            url: url.into(),
            version: version.into(),
            protocol_version: "0.3.0".to_string(),
            default_input_modes: vec!["text".to_string()],
            default_output_modes: vec!["text".to_string()],
            capabilities: AgentCapabilities::default(),
            skills,
        }
    }
}

/// Skills advertised when the config lists none, one per route.
pub fn default_skills() -> Vec<AgentSkill> {
    [
        (
            "expense",
            "Expense policy",
            "Questions about expense reimbursement rules and deadlines.",
        ),
        (
            "pm",
            "Project planning",
            "WBS drafting and task breakdowns for projects.",
        ),
        (
            "docqa",
            "Document QA",
            "Evidence-backed answers from internal runbooks and policies.",
        ),
        (
            "general",
            "General knowledge",
            "General questions answered by the hub.",
        ),
    ]
    .into_iter()
    .map(|(id, name, description)| AgentSkill {
        id: id.to_string(),
        name: name.to_string(),
        description: description.to_string(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolQueryRequest {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolQueryResponse {
    pub route: Route,
    pub matched_rule: Option<String>,
    pub normalized_query: String,
    pub agent_id: Option<String>,
    pub text: String,
    pub structured: Option<Value>,
    pub citations: Vec<Citation>,
    pub evidence_status: Option<EvidenceStatus>,
    pub degraded: bool,
    pub debug: Vec<DebugEntry>,
}

impl From<PipelineOutcome> for ToolQueryResponse {
    fn from(o: PipelineOutcome) -> Self {
        let (citations, evidence_status) = match o.docqa {
            Some(a) => (a.citations, Some(a.evidence_status)),
            None => (Vec::new(), None),
        };
        Self {
            route: o.answer.route,
            matched_rule: o.decision.matched_rule,
            normalized_query: o.decision.normalized_query,
            agent_id: o.answer.agent_id,
            text: o.answer.text,
            structured: o.structured,
            citations,
            evidence_status,
            degraded: o.answer.degraded,
            debug: o.answer.debug,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoutesView {
    pub rules: Vec<RoutingRule>,
    pub default_route: Route,
}

/// Immutable state shared by all handlers.
#[derive(Debug)]
pub struct HubState {
    pub pipeline: Pipeline,
    card_json: String,
    routes_json: String,
    version_json: String,
}

impl HubState {
    pub fn new(pipeline: Pipeline, card: &AgentCard, build: &str) -> Self {
        let routes = RoutesView {
            rules: pipeline.rules.rules().cloned().collect(),
            default_route: Route::General,
        };
        Self {
            card_json: serde_json::to_string_pretty(card).expect("card serializes"),
            routes_json: serde_json::to_string(&routes).expect("routes serialize"),
            version_json: serde_json::json!({ "build": build }).to_string(),
            pipeline,
        }
    }

    pub fn rules(&self) -> &RuleTable {
        &self.pipeline.rules
    }
}

pub fn router(state: Arc<HubState>) -> Router {
    Router::new()
        .route("/", post(handle_jsonrpc))
        .route("/tools/query", post(handle_tool_query))
        .route("/.well-known/agent-card.json", get(serve_agent_card))
        .route("/openapi.yaml", get(openapi))
        .route("/health", get(health))
        .route("/routes", get(routes))
        .route("/debug-version", get(debug_version))
        .with_state(state)
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Renders a raw body into the UI-channel answer. Always HTTP 200.
pub async fn handle_jsonrpc_body(state: &HubState, body: &[u8]) -> Response {
    let request = match parse_request(body) {
        Ok(r) => r,
        Err(e) => {
            tracing::info!(code = e.code(), error = %e, "rejected json-rpc request");
            let err = RpcErrorResponse::from_error(&e);
            return json(
                StatusCode::OK,
                serde_json::to_string(&err).expect("error serializes"),
            );
        }
    };
    let outcome = state
        .pipeline
        .handle_query_safely(extract_user_text(&request.params))
        .await;
    tracing::info!(
        id = %request.id,
        route = %outcome.answer.route,
        degraded = outcome.answer.degraded,
        accepted_output_modes = ?request.params.accepted_output_modes,
        extra_params = ?request.params.extra.keys().collect::<Vec<_>>(),
        "message/send"
    );
    let text = outcome.answer.text;
    let response = build_text_response(request.id.clone(), text).unwrap_or_else(|_| {
        build_text_response(request.id, "Sorry, no answer could be produced.")
            .expect("fallback text is non-empty")
    });
    json(StatusCode::OK, response.to_json())
}

async fn handle_jsonrpc(State(state): State<Arc<HubState>>, body: Bytes) -> Response {
    handle_jsonrpc_body(&state, &body).await
}

fn bad_request(reason: &str) -> Response {
    json(
        StatusCode::BAD_REQUEST,
        serde_json::json!({ "error": reason }).to_string(),
    )
}

async fn handle_tool_query(State(state): State<Arc<HubState>>, body: Bytes) -> Response {
    let request: ToolQueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&format!("invalid request body: {e}")),
    };
    if request.query.trim().is_empty() {
        return bad_request("query must not be empty");
    }
    let outcome = state.pipeline.handle_query_safely(Ok(request.query)).await;
    let response = ToolQueryResponse::from(outcome);
    json(
        StatusCode::OK,
        serde_json::to_string(&response).expect("tool response serializes"),
    )
}

async fn serve_agent_card(State(state): State<Arc<HubState>>) -> Response {
    json(StatusCode::OK, state.card_json.clone())
}

async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/yaml")], OPENAPI_YAML).into_response()
}

async fn health() -> Response {
    json(StatusCode::OK, r#"{"status":"ok"}"#.to_string())
}

async fn routes(State(state): State<Arc<HubState>>) -> Response {
    json(StatusCode::OK, state.routes_json.clone())
}

async fn debug_version(State(state): State<Arc<HubState>>) -> Response {
    json(StatusCode::OK, state.version_json.clone())
}
