//! Downstream invocation and the containment pipeline.
//!
//! [`Pipeline::handle_query_safely`] is total: every failure, including a
//! panic inside a stage, is turned into a readable text answer flagged as
//! degraded.

use crate::boundaries::{
    acquire_credential, attach_auth, AuthMaterial, DownstreamTarget, TokenCache, TokenProvider,
};
use crate::docqa::{self, DocQaAnswer, DocQaBackend, EvidenceAccess, SearchHit, StoreError};
use crate::envelope::{parse_response, NoUserText, RpcRequest};
use crate::generalqa::GeneralAnswerer;
use crate::router::{route_query, Route, RouteDecision, RuleTable};
use futures::FutureExt;
use http::header::CONTENT_TYPE;
use http::{HeaderMap, HeaderValue};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::Instant;

const BODY_EXCERPT_CHARS: usize = 200;
const REASON_CHARS: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DownstreamOutcome {
    Ok { text: String },
    HttpFailure { status: u16, body_excerpt: String },
    TransportFailure { reason: String },
    ProtocolFailure { reason: String },
}

impl DownstreamOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, DownstreamOutcome::Ok { .. })
    }

    fn short_reason(&self) -> String {
        match self {
            DownstreamOutcome::Ok { .. } => "ok".to_string(),
            DownstreamOutcome::HttpFailure { status, .. } => format!("HTTP {status}"),
            DownstreamOutcome::TransportFailure { reason } => reason.clone(),
            DownstreamOutcome::ProtocolFailure { reason } => reason.clone(),
        }
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => format!("{}…", &s[..idx]),
        None => s.to_string(),
    }
}

/// Sends one `message/send` to `target`. Never fails past its boundary: every
/// problem is one of the failure variants. Connection failures are retried
/// once; the whole call stays within `target.timeout`.
pub async fn invoke_agent(
    client: &reqwest::Client,
    target: &DownstreamTarget,
    user_text: &str,
    auth: &AuthMaterial,
) -> DownstreamOutcome {
    let deadline = Instant::now() + target.timeout;
    let body =
        RpcRequest::message_send(uuid::Uuid::new_v4().to_string().as_str(), user_text).to_json();
    let mut headers = HeaderMap::new();
    headers.insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    let headers = attach_auth(headers, auth);

    let mut last_reason = String::new();
    for attempt in 0..2 {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            break;
        }
        let sent = client
            .post(&target.url)
            .headers(headers.clone())
            .body(body.clone())
            .timeout(remaining)
            .send()
            .await;
        let response = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return DownstreamOutcome::TransportFailure {
                    reason: format!("timed out after {} ms", target.timeout.as_millis()),
                }
            }
            Err(e) if e.is_connect() && attempt == 0 => {
                tracing::debug!(target = %target.id, error = %e, "connect failed, retrying");
                last_reason = format!("connection failed: {e}");
                continue;
            }
            Err(e) => {
                return DownstreamOutcome::TransportFailure {
                    reason: if e.is_connect() {
                        format!("connection failed: {e}")
                    } else {
                        e.to_string()
                    },
                }
            }
        };
        let status = response.status();
        let bytes = match response.bytes().await {
            Ok(b) => b,
            Err(e) if e.is_timeout() => {
                return DownstreamOutcome::TransportFailure {
                    reason: format!("timed out after {} ms", target.timeout.as_millis()),
                }
            }
            Err(e) => {
                return DownstreamOutcome::TransportFailure {
                    reason: format!("reading body: {e}"),
                }
            }
        };
        return classify_response(status.as_u16(), &bytes);
    }
    DownstreamOutcome::TransportFailure {
        reason: if last_reason.is_empty() {
            format!("timed out after {} ms", target.timeout.as_millis())
        } else {
            last_reason
        },
    }
}

/// Maps a downstream HTTP answer onto an outcome. Downstreams are held to
/// the same single-text-part contract the hub exports.
pub fn classify_response(status: u16, body: &[u8]) -> DownstreamOutcome {
    if status >= 400 {
        return DownstreamOutcome::HttpFailure {
            status,
            body_excerpt: truncate_chars(&String::from_utf8_lossy(body), BODY_EXCERPT_CHARS),
        };
    }
    if !(200..300).contains(&status) {
        return DownstreamOutcome::ProtocolFailure {
            reason: format!("unexpected HTTP status {status}"),
        };
    }
    let response = match parse_response(body) {
        Ok(r) => r,
        Err(e) => {
            return DownstreamOutcome::ProtocolFailure {
                reason: e.to_string(),
            }
        }
    };
    match response.single_text() {
        Some(text) if !text.trim().is_empty() => DownstreamOutcome::Ok {
            text: text.to_string(),
        },
        Some(_) => DownstreamOutcome::ProtocolFailure {
            reason: "downstream returned an empty text part".to_string(),
        },
        None => DownstreamOutcome::ProtocolFailure {
            reason: format!(
                "expected exactly one text part, got {} part(s)",
                response.result.parts.len()
            ),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Routing,
    Dispatch,
    Credential,
    Invoke,
    Search,
    Evidence,
    Extract,
    General,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Routing => "routing",
            Stage::Dispatch => "dispatch",
            Stage::Credential => "credential",
            Stage::Invoke => "invoke",
            Stage::Search => "search",
            Stage::Evidence => "evidence",
            Stage::Extract => "extract",
            Stage::General => "general",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugEntry {
    pub stage: Stage,
    pub detail: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainedAnswer {
    pub text: String,
    pub route: Route,
    pub agent_id: Option<String>,
    pub degraded: bool,
    pub debug: Vec<DebugEntry>,
}

/// Everything one pass through the pipeline produced; both output channels
/// render from this.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub answer: ContainedAnswer,
    pub decision: RouteDecision,
    pub docqa: Option<DocQaAnswer>,
    pub structured: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Messages {
    pub help_text: String,
    /// `{stage}` and `{reason}` are substituted.
    pub degraded_template: String,
}

impl Default for Messages {
    fn default() -> Self {
        Self {
            help_text: "Hello! I can answer expense policy questions, help with project planning (WBS, task breakdowns), look up incident-response deadlines, and answer general questions. Please type your question.".to_string(),
            degraded_template: "I could not complete that request ({stage} failed: {reason}). Please retry or contact an administrator.".to_string(),
        }
    }
}

impl Messages {
    pub fn degraded(&self, stage: Stage, reason: &str) -> String {
        let reason = truncate_chars(reason.trim(), REASON_CHARS);
        let text = self
            .degraded_template
            .replace("{stage}", &stage.to_string())
            .replace("{reason}", &reason);
        if text.trim().is_empty() {
            Messages::default().degraded(stage, &reason)
        } else {
            text
        }
    }
}

#[derive(Default)]
struct Trace {
    entries: Vec<DebugEntry>,
    current: Option<Stage>,
}

impl Trace {
    fn enter(&mut self, stage: Stage) {
        self.current = Some(stage);
    }

    fn ok(&mut self, stage: Stage, detail: impl Into<String>) {
        self.entries.push(DebugEntry {
            stage,
            detail: detail.into(),
            ok: true,
        });
        self.current = None;
    }

    fn fail(&mut self, stage: Stage, detail: impl Into<String>) {
        self.entries.push(DebugEntry {
            stage,
            detail: detail.into(),
            ok: false,
        });
        self.current = None;
    }

    fn failed(&self) -> bool {
        self.entries.iter().any(|e| !e.ok)
    }
}

struct Dispatched {
    text: String,
    agent_id: Option<String>,
    docqa: Option<DocQaAnswer>,
    structured: Option<Value>,
}

/// Dependencies of the query pipeline. Immutable apart from the token cache.
#[derive(Clone)]
pub struct Pipeline {
    pub rules: Arc<RuleTable>,
    /// Agent-backed routes and their targets.
    pub targets: HashMap<Route, DownstreamTarget>,
    pub token_provider: Arc<dyn TokenProvider>,
    pub token_cache: Arc<TokenCache>,
    pub caller_identity: String,
    pub http: reqwest::Client,
    pub docqa: DocQaBackend,
    pub general: Arc<dyn GeneralAnswerer>,
    pub messages: Messages,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("rules", &self.rules.len())
            .field("targets", &self.targets)
            .field("caller_identity", &self.caller_identity)
            .finish_non_exhaustive()
    }
}

pub const DOCQA_AGENT_ID: &str = "docqa";
pub const GENERALQA_AGENT_ID: &str = "generalqa";

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "internal error".to_string()
    }
}

impl Pipeline {
    pub async fn handle_query_safely(
        &self,
        user_text: Result<String, NoUserText>,
    ) -> PipelineOutcome {
        let query = match user_text {
            Ok(q) => q,
            Err(NoUserText) => {
                return PipelineOutcome {
                    answer: ContainedAnswer {
                        text: self.help_text(),
                        route: Route::General,
                        agent_id: None,
                        degraded: false,
                        debug: vec![DebugEntry {
                            stage: Stage::Routing,
                            detail: "no user text; answered with help".to_string(),
                            ok: true,
                        }],
                    },
                    decision: RouteDecision {
                        route: Route::General,
                        matched_rule: None,
                        normalized_query: String::new(),
                    },
                    docqa: None,
                    structured: None,
                }
            }
        };

        let mut trace = Trace::default();
        trace.enter(Stage::Routing);
        let decision =
            match std::panic::catch_unwind(AssertUnwindSafe(|| route_query(&query, &self.rules))) {
                Ok(d) => {
                    trace.ok(
                        Stage::Routing,
                        format!(
                            "route={} rule={}",
                            d.route,
                            d.matched_rule.as_deref().unwrap_or("<default>")
                        ),
                    );
                    d
                }
                Err(payload) => {
                    let reason = panic_message(payload.as_ref());
                    trace.fail(Stage::Routing, reason.clone());
                    return self.degraded_outcome(
                        trace,
                        Stage::Routing,
                        &reason,
                        RouteDecision {
                            route: Route::General,
                            matched_rule: None,
                            normalized_query: String::new(),
                        },
                    );
                }
            };

        let dispatched = AssertUnwindSafe(self.dispatch(&query, decision.route, &mut trace))
            .catch_unwind()
            .await;
        let mut dispatched = match dispatched {
            Ok(d) => d,
            Err(payload) => {
                let stage = trace.current.unwrap_or(Stage::Dispatch);
                let reason = panic_message(payload.as_ref());
                tracing::error!(%stage, %reason, "stage panicked");
                trace.fail(stage, format!("panic: {reason}"));
                return self.degraded_outcome(trace, stage, &reason, decision);
            }
        };

        if dispatched.text.trim().is_empty() {
            trace.fail(Stage::Dispatch, "empty answer text");
            dispatched.text = self.messages.degraded(Stage::Dispatch, "empty answer");
        }
        let degraded = trace.failed();
        PipelineOutcome {
            answer: ContainedAnswer {
                text: dispatched.text,
                route: decision.route,
                agent_id: dispatched.agent_id,
                degraded,
                debug: trace.entries,
            },
            decision,
            docqa: dispatched.docqa,
            structured: dispatched.structured,
        }
    }

    fn help_text(&self) -> String {
        if self.messages.help_text.trim().is_empty() {
            Messages::default().help_text
        } else {
            self.messages.help_text.clone()
        }
    }

    fn degraded_outcome(
        &self,
        trace: Trace,
        stage: Stage,
        reason: &str,
        decision: RouteDecision,
    ) -> PipelineOutcome {
        PipelineOutcome {
            answer: ContainedAnswer {
                text: self.messages.degraded(stage, reason),
                route: decision.route,
                agent_id: None,
                degraded: true,
                debug: trace.entries,
            },
            decision,
            docqa: None,
            structured: None,
        }
    }

    async fn dispatch(&self, query: &str, route: Route, trace: &mut Trace) -> Dispatched {
        match route {
            Route::DocQa => self.dispatch_docqa(query, trace).await,
            Route::General => self.dispatch_general(query, trace).await,
            Route::Expense | Route::Pm => self.dispatch_agent(query, route, trace).await,
        }
    }

    async fn dispatch_agent(&self, query: &str, route: Route, trace: &mut Trace) -> Dispatched {
        trace.enter(Stage::Dispatch);
        let Some(target) = self.targets.get(&route) else {
            let reason = format!("no downstream target configured for route {route}");
            trace.fail(Stage::Dispatch, reason.clone());
            return Dispatched {
                text: self.messages.degraded(Stage::Dispatch, &reason),
                agent_id: None,
                docqa: None,
                structured: None,
            };
        };
        let agent_id = Some(target.id.clone());

        trace.enter(Stage::Credential);
        let auth = match acquire_credential(
            target,
            self.token_provider.as_ref(),
            &self.token_cache,
            &self.caller_identity,
        )
        .await
        {
            Ok(auth) => {
                let detail = match &auth {
                    AuthMaterial::None => "no credential attached".to_string(),
                    AuthMaterial::BearerIdToken(t) => {
                        format!("id token for audience {}", t.audience)
                    }
                };
                trace.ok(Stage::Credential, detail);
                auth
            }
            Err(e) => {
                trace.fail(Stage::Credential, e.to_string());
                return Dispatched {
                    text: self.messages.degraded(Stage::Credential, &e.0),
                    agent_id,
                    docqa: None,
                    structured: Some(json!({
                        "agent_id": target.id,
                        "boundary": target.boundary,
                        "error": e.to_string(),
                    })),
                };
            }
        };

        trace.enter(Stage::Invoke);
        let outcome = invoke_agent(&self.http, target, query, &auth).await;
        let structured = json!({
            "agent_id": target.id,
            "boundary": target.boundary,
            "downstream": outcome,
        });
        let text = match &outcome {
            DownstreamOutcome::Ok { text } => {
                trace.ok(Stage::Invoke, format!("{} answered", target.id));
                text.clone()
            }
            failure => {
                let reason = failure.short_reason();
                trace.fail(Stage::Invoke, format!("{}: {reason}", target.id));
                self.messages.degraded(Stage::Invoke, &reason)
            }
        };
        Dispatched {
            text,
            agent_id,
            docqa: None,
            structured: Some(structured),
        }
    }

    async fn dispatch_docqa(&self, query: &str, trace: &mut Trace) -> Dispatched {
        let backend = &self.docqa;
        let agent_id = Some(DOCQA_AGENT_ID.to_string());

        trace.enter(Stage::Search);
        let hits: Vec<SearchHit> =
            match docqa::search(query, backend.search.as_ref(), backend.top_k).await {
                Ok(hits) => {
                    trace.ok(Stage::Search, format!("{} hit(s)", hits.len()));
                    hits
                }
                Err(e) => {
                    trace.fail(Stage::Search, e.to_string());
                    return Dispatched {
                        text: self.messages.degraded(Stage::Search, &e.to_string()),
                        agent_id,
                        docqa: None,
                        structured: None,
                    };
                }
            };

        let evidence = match hits.first() {
            None => None,
            Some(top) => {
                trace.enter(Stage::Evidence);
                let access = match docqa::fetch_evidence(
                    &top.doc_uri,
                    backend.store.as_ref(),
                    &backend.reader_identity,
                )
                .await
                {
                    Ok(doc) => {
                        trace.ok(Stage::Evidence, format!("read {}", doc.uri));
                        EvidenceAccess::Fetched(doc)
                    }
                    Err(e @ StoreError::PermissionDenied { .. }) => {
                        trace.fail(Stage::Evidence, format!("HTTP {}: {e}", e.status()));
                        EvidenceAccess::Denied
                    }
                    Err(e) => {
                        trace.fail(Stage::Evidence, format!("HTTP {}: {e}", e.status()));
                        EvidenceAccess::Unavailable(e.to_string())
                    }
                };
                Some(access)
            }
        };

        trace.enter(Stage::Extract);
        let answer = docqa::extract_answer(
            query,
            &hits,
            evidence.as_ref().unwrap_or(&EvidenceAccess::Denied),
        );
        trace.ok(
            Stage::Extract,
            format!(
                "evidence_status={}",
                serde_json::to_value(answer.evidence_status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            ),
        );
        Dispatched {
            text: answer.text.clone(),
            agent_id,
            structured: Some(json!({ "answer": answer, "hits": hits })),
            docqa: Some(answer),
        }
    }

    async fn dispatch_general(&self, query: &str, trace: &mut Trace) -> Dispatched {
        trace.enter(Stage::General);
        let agent_id = Some(GENERALQA_AGENT_ID.to_string());
        match self.general.answer(query).await {
            Ok(text) => {
                trace.ok(Stage::General, "answered");
                Dispatched {
                    text,
                    agent_id,
                    docqa: None,
                    structured: None,
                }
            }
            Err(e) => {
                trace.fail(Stage::General, e.to_string());
                Dispatched {
                    text: self.messages.degraded(Stage::General, &e.0),
                    agent_id,
                    docqa: None,
                    structured: None,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::build_text_response;

    #[test]
    fn classify_ok_and_http_failures() {
        let ok = build_text_response(1.into(), "answer").unwrap().to_json();
        assert_eq!(
            classify_response(200, ok.as_bytes()),
            DownstreamOutcome::Ok {
                text: "answer".into()
            }
        );
        assert!(matches!(
            classify_response(401, b"unauthorized"),
            DownstreamOutcome::HttpFailure { status: 401, .. }
        ));
        let long = "x".repeat(1000);
        let DownstreamOutcome::HttpFailure { body_excerpt, .. } =
            classify_response(500, long.as_bytes())
        else {
            panic!()
        };
        assert!(body_excerpt.chars().count() <= BODY_EXCERPT_CHARS + 1);
    }

    #[test]
    fn classify_protocol_failures() {
        let mut resp = build_text_response(1.into(), "a").unwrap();
        resp.result.parts.clear();
        assert!(matches!(
            classify_response(200, resp.to_json().as_bytes()),
            DownstreamOutcome::ProtocolFailure { .. }
        ));
        resp.result.parts = vec![
            crate::envelope::Part::text("a"),
            crate::envelope::Part::text("b"),
        ];
        assert!(matches!(
            classify_response(200, resp.to_json().as_bytes()),
            DownstreamOutcome::ProtocolFailure { .. }
        ));
        let err = br#"{"jsonrpc":"2.0","id":1,"error":{"code":-32601,"message":"nope"}}"#;
        assert!(matches!(
            classify_response(200, err),
            DownstreamOutcome::ProtocolFailure { .. }
        ));
        assert!(matches!(
            classify_response(200, b"<html>"),
            DownstreamOutcome::ProtocolFailure { .. }
        ));
        assert!(matches!(
            classify_response(302, b""),
            DownstreamOutcome::ProtocolFailure { .. }
        ));
    }

    #[test]
    fn degraded_template_fills_stage_and_reason() {
        let m = Messages::default();
        assert_eq!(
            m.degraded(Stage::Invoke, "HTTP 500"),
            "I could not complete that request (invoke failed: HTTP 500). Please retry or contact an administrator."
        );
        let blank = Messages {
            help_text: String::new(),
            degraded_template: "  ".into(),
        };
        assert!(!blank.degraded(Stage::Search, "x").trim().is_empty());
    }

    #[test]
    fn outcome_serializes_with_tag() {
        let v = serde_json::to_value(DownstreamOutcome::HttpFailure {
            status: 403,
            body_excerpt: "forbidden".into(),
        })
        .unwrap();
        assert_eq!(v["outcome"], "http_failure");
        assert_eq!(v["status"], 403);
    }
}
