//! Offline stand-in for the cloud: mock A2A agents with IAM-style auth
//! policies, an ID-token issuer, and an ACL-guarded object store.
//!
//! Everything is controllable at runtime through [`Simulator`] methods or the
//! `/admin/*` HTTP routes returned by [`admin_router`].

use crate::boundaries::{Clock, IdToken, SystemClock, TokenIssueError, TokenProvider};
use crate::docqa::{ObjectStore, StoreError};
use crate::envelope::{
    build_text_response, parse_request, ResultMessage, RpcErrorResponse, RpcResponse,
};
use async_trait::async_trait;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use http::header::{AUTHORIZATION, CONTENT_TYPE};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub const DEFAULT_TOKEN_LIFETIME_SECS: u64 = 3600;

/// Body returned by the `Raise` fault, mirroring an unhandled application
/// exception surfacing as a platform 500.
pub const RAISE_BODY: &str =
    "Internal Server Error\nValueError: too many values to unpack (expected 2)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockAgentPolicy {
    Public,
    Iam {
        expected_audience: String,
        #[serde(default)]
        invoker_grants: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    Stall {
        ms: u64,
    },
    Raise,
    EmptyParts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockAgentSpec {
    pub id: String,
    pub policy: MockAgentPolicy,
    pub canned_reply: String,
    #[serde(default)]
    pub fault: Fault,
    /// Loopback port; 0 or absent picks an ephemeral one.
    #[serde(default)]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclGrant {
    pub doc_uri_prefix: String,
    pub reader_identity: String,
    #[serde(default = "read_capability")]
    pub capability: String,
}

fn read_capability() -> String {
    "read".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IssuerConfig {
    pub lifetime_secs: u64,
}

impl Default for IssuerConfig {
    fn default() -> Self {
        Self {
            lifetime_secs: DEFAULT_TOKEN_LIFETIME_SECS,
        }
    }
}

/// Simulation scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub agents: Vec<MockAgentSpec>,
    #[serde(default)]
    pub acl: Vec<AclGrant>,
    #[serde(default)]
    pub issuer: IssuerConfig,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}`: iam policy needs a non-empty expected_audience")]
    EmptyAudience(String),
    #[error("duplicate agent id `{0}`")]
    DuplicateAgent(String),
    #[error("unsupported capability `{0}`; only \"read\" exists")]
    UnsupportedCapability(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = BTreeSet::new();
        for agent in &self.agents {
            if !seen.insert(agent.id.as_str()) {
                return Err(SimError::DuplicateAgent(agent.id.clone()));
            }
            if let MockAgentPolicy::Iam {
                expected_audience, ..
            } = &agent.policy
            {
                if expected_audience.is_empty() {
                    return Err(SimError::EmptyAudience(agent.id.clone()));
                }
            }
        }
        for grant in &self.acl {
            if grant.capability != "read" {
                return Err(SimError::UnsupportedCapability(grant.capability.clone()));
            }
        }
        Ok(())
    }
}

/// Claims carried by a simulated ID token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTokenClaims {
    pub sub: String,
    pub aud: String,
    pub exp: u64,
}

pub fn format_sim_token(claims: &SimTokenClaims) -> String {
    format!("sub={};aud={};exp={}", claims.sub, claims.aud, claims.exp)
}

/// Parses `sub=<caller>;aud=<audience>;exp=<unix-seconds>`.
pub fn parse_sim_token(token: &str) -> Option<SimTokenClaims> {
    let mut sub = None;
    let mut aud = None;
    let mut exp = None;
    for field in token.split(';') {
        let (key, value) = field.split_once('=')?;
        let slot = match key {
            "sub" => &mut sub,
            "aud" => &mut aud,
            "exp" => &mut exp,
            _ => return None,
        };
        if slot.replace(value.to_string()).is_some() {
            return None;
        }
    }
    Some(SimTokenClaims {
        sub: sub?,
        aud: aud?,
        exp: exp?.parse().ok()?,
    })
}

/// Issues simulated ID tokens for any audience. Can be told to fail.
#[derive(Debug)]
pub struct MockTokenIssuer {
    clock: Arc<dyn Clock>,
    lifetime_secs: AtomicU64,
    failing: AtomicBool,
}

impl MockTokenIssuer {
    pub fn new(clock: Arc<dyn Clock>, lifetime_secs: u64) -> Self {
        Self {
            clock,
            lifetime_secs: AtomicU64::new(lifetime_secs.max(1)),
            failing: AtomicBool::new(false),
        }
    }

    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }

    pub fn is_failing(&self) -> bool {
        self.failing.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl TokenProvider for MockTokenIssuer {
    async fn issue(
        &self,
        audience: &str,
        caller_identity: &str,
    ) -> Result<IdToken, TokenIssueError> {
        if self.is_failing() {
            return Err(TokenIssueError(
                "simulated issuer refused the request".into(),
            ));
        }
        let exp = self.clock.now_unix() + self.lifetime_secs.load(Ordering::SeqCst);
        let claims = SimTokenClaims {
            sub: caller_identity.to_string(),
            aud: audience.to_string(),
            exp,
        };
        Ok(IdToken {
            token: format_sim_token(&claims),
            audience: audience.to_string(),
            expiry: exp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum AuthDecision {
    Allow,
    Deny { status: u16 },
}

/// Authentication (token present, well-formed, unexpired, right audience) is
/// checked before authorization (caller holds an invoker grant), so a bad
/// token is always 401 even when the caller also lacks a grant.
pub fn evaluate_auth(headers: &HeaderMap, policy: &MockAgentPolicy, now: u64) -> AuthDecision {
    let (expected_audience, invoker_grants) = match policy {
        MockAgentPolicy::Public => return AuthDecision::Allow,
        MockAgentPolicy::Iam {
            expected_audience,
            invoker_grants,
        } => (expected_audience, invoker_grants),
    };
    let mut values = headers.get_all(AUTHORIZATION).iter();
    let (Some(value), None) = (values.next(), values.next()) else {
        return AuthDecision::Deny { status: 401 };
    };
    let claims = value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .and_then(parse_sim_token);
    let Some(claims) = claims else {
        return AuthDecision::Deny { status: 401 };
    };
    if claims.exp <= now || claims.aud != *expected_audience {
        return AuthDecision::Deny { status: 401 };
    }
    if !invoker_grants.contains(&claims.sub) {
        return AuthDecision::Deny { status: 403 };
    }
    AuthDecision::Allow
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub headers: BTreeMap<String, String>,
    pub body: String,
    pub status: u16,
}

impl RecordedRequest {
    pub fn has_authorization(&self) -> bool {
        self.headers.contains_key(AUTHORIZATION.as_str())
    }
}

/// In-memory object store with prefix ACLs. Only the `read` capability exists.
#[derive(Debug, Default)]
pub struct AclObjectStore {
    objects: RwLock<HashMap<String, String>>,
    grants: RwLock<Vec<AclGrant>>,
}

impl AclObjectStore {
    pub fn new<I, U, T>(objects: I, grants: Vec<AclGrant>) -> Self
    where
        I: IntoIterator<Item = (U, T)>,
        U: Into<String>,
        T: Into<String>,
    {
        Self {
            objects: RwLock::new(
                objects
                    .into_iter()
                    .map(|(u, t)| (u.into(), t.into()))
                    .collect(),
            ),
            grants: RwLock::new(grants),
        }
    }

    pub fn put_object(&self, uri: impl Into<String>, text: impl Into<String>) {
        self.objects
            .write()
            .expect("store poisoned")
            .insert(uri.into(), text.into());
    }

    /// Granting adds `(prefix, identity)`. Revoking removes every grant for
    /// `identity` whose prefix overlaps `prefix`, so afterwards nothing under
    /// `prefix` is readable by that identity.
    pub fn set_acl_grant(&self, doc_uri_prefix: &str, identity: &str, granted: bool) {
        let mut grants = self.grants.write().expect("acl poisoned");
        if granted {
            let exists = grants
                .iter()
                .any(|g| g.doc_uri_prefix == doc_uri_prefix && g.reader_identity == identity);
            if !exists {
                grants.push(AclGrant {
                    doc_uri_prefix: doc_uri_prefix.to_string(),
                    reader_identity: identity.to_string(),
                    capability: read_capability(),
                });
            }
        } else {
            grants.retain(|g| {
                g.reader_identity != identity
                    || !(g.doc_uri_prefix.starts_with(doc_uri_prefix)
                        || doc_uri_prefix.starts_with(&g.doc_uri_prefix))
            });
        }
    }

    pub fn grants(&self) -> Vec<AclGrant> {
        self.grants.read().expect("acl poisoned").clone()
    }

    pub fn can_read(&self, uri: &str, identity: &str) -> bool {
        self.grants.read().expect("acl poisoned").iter().any(|g| {
            g.reader_identity == identity
                && g.capability == "read"
                && uri.starts_with(&g.doc_uri_prefix)
        })
    }

    pub fn read(&self, uri: &str, identity: &str) -> Result<String, StoreError> {
        let text = self
            .objects
            .read()
            .expect("store poisoned")
            .get(uri)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(uri.to_string()))?;
        if !self.can_read(uri, identity) {
            return Err(StoreError::PermissionDenied {
                uri: uri.to_string(),
                reader: identity.to_string(),
            });
        }
        Ok(text)
    }
}

#[async_trait]
impl ObjectStore for AclObjectStore {
    async fn get_object(&self, uri: &str, reader_identity: &str) -> Result<String, StoreError> {
        self.read(uri, reader_identity)
    }
}

#[derive(Debug)]
struct AgentState {
    spec: MockAgentSpec,
    log: Vec<RecordedRequest>,
}

#[derive(Debug)]
struct MockAgent {
    state: Mutex<AgentState>,
    clock: Arc<dyn Clock>,
    skew: Arc<AtomicI64>,
}

impl MockAgent {
    fn now(&self) -> u64 {
        self.clock
            .now_unix()
            .saturating_add_signed(self.skew.load(Ordering::SeqCst))
    }
}

/// Shared simulation state: agents, issuer, object store, and clock skew.
#[derive(Debug)]
pub struct Simulator {
    agents: BTreeMap<String, Arc<MockAgent>>,
    issuer: Arc<MockTokenIssuer>,
    store: Arc<AclObjectStore>,
    skew: Arc<AtomicI64>,
}

impl Simulator {
    pub fn new<I, U, T>(
        scenario: Scenario,
        objects: I,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, SimError>
    where
        I: IntoIterator<Item = (U, T)>,
        U: Into<String>,
        T: Into<String>,
    {
        scenario.validate()?;
        let skew = Arc::new(AtomicI64::new(0));
        let agents = scenario
            .agents
            .into_iter()
            .map(|spec| {
                let agent = MockAgent {
                    state: Mutex::new(AgentState {
                        spec: spec.clone(),
                        log: Vec::new(),
                    }),
                    clock: clock.clone(),
                    skew: skew.clone(),
                };
                (spec.id, Arc::new(agent))
            })
            .collect();
        Ok(Self {
            agents,
            issuer: Arc::new(MockTokenIssuer::new(clock, scenario.issuer.lifetime_secs)),
            store: Arc::new(AclObjectStore::new(objects, scenario.acl)),
            skew,
        })
    }

    pub fn with_system_clock<I, U, T>(scenario: Scenario, objects: I) -> Result<Self, SimError>
    where
        I: IntoIterator<Item = (U, T)>,
        U: Into<String>,
        T: Into<String>,
    {
        Self::new(scenario, objects, Arc::new(SystemClock))
    }

    pub fn issuer(&self) -> Arc<MockTokenIssuer> {
        self.issuer.clone()
    }

    pub fn store(&self) -> Arc<AclObjectStore> {
        self.store.clone()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    fn agent(&self, id: &str) -> Result<&Arc<MockAgent>, SimError> {
        self.agents
            .get(id)
            .ok_or_else(|| SimError::UnknownAgent(id.to_string()))
    }

    pub fn agent_spec(&self, id: &str) -> Result<MockAgentSpec, SimError> {
        Ok(self
            .agent(id)?
            .state
            .lock()
            .expect("agent poisoned")
            .spec
            .clone())
    }

    pub fn set_acl_grant(&self, doc_uri_prefix: &str, identity: &str, granted: bool) {
        self.store.set_acl_grant(doc_uri_prefix, identity, granted);
    }

    pub fn set_fault(&self, agent_id: &str, fault: Fault) -> Result<(), SimError> {
        self.agent(agent_id)?
            .state
            .lock()
            .expect("agent poisoned")
            .spec
            .fault = fault;
        Ok(())
    }

    pub fn set_invoker_grant(
        &self,
        agent_id: &str,
        identity: &str,
        granted: bool,
    ) -> Result<(), SimError> {
        let agent = self.agent(agent_id)?;
        let mut state = agent.state.lock().expect("agent poisoned");
        if let MockAgentPolicy::Iam { invoker_grants, .. } = &mut state.spec.policy {
            if granted {
                invoker_grants.insert(identity.to_string());
            } else {
                invoker_grants.remove(identity);
            }
        }
        Ok(())
    }

    pub fn set_policy(&self, agent_id: &str, policy: MockAgentPolicy) -> Result<(), SimError> {
        self.agent(agent_id)?
            .state
            .lock()
            .expect("agent poisoned")
            .spec
            .policy = policy;
        Ok(())
    }

    pub fn get_request_log(&self, agent_id: &str) -> Result<Vec<RecordedRequest>, SimError> {
        Ok(self
            .agent(agent_id)?
            .state
            .lock()
            .expect("agent poisoned")
            .log
            .clone())
    }

    pub fn clear_request_logs(&self) {
        for agent in self.agents.values() {
            agent.state.lock().expect("agent poisoned").log.clear();
        }
    }

    pub fn set_issuer_failing(&self, failing: bool) {
        self.issuer.set_failing(failing);
    }

    /// Shifts the agents' view of "now"; positive values make tokens look older.
    pub fn set_clock_skew(&self, secs: i64) {
        self.skew.store(secs, Ordering::SeqCst);
    }

    /// Router serving one mock agent at `POST /`.
    pub fn agent_router(&self, agent_id: &str) -> Result<Router, SimError> {
        let agent = self.agent(agent_id)?.clone();
        Ok(Router::new()
            .route("/", post(serve_mock_agent))
            .with_state(agent))
    }

    /// Binds every agent to its own loopback listener.
    pub async fn start_agents(&self) -> Result<RunningAgents, SimError> {
        let mut urls = BTreeMap::new();
        let mut tasks = Vec::new();
        for (id, agent) in &self.agents {
            let port = agent
                .state
                .lock()
                .expect("agent poisoned")
                .spec
                .port
                .unwrap_or(0);
            let listener = TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await?;
            let addr = listener.local_addr()?;
            let router = self.agent_router(id)?;
            tasks.push(tokio::spawn(async move {
                if let Err(e) = axum::serve(listener, router).await {
                    tracing::error!(error = %e, "mock agent server stopped");
                }
            }));
            urls.insert(id.clone(), format!("http://{addr}/"));
        }
        Ok(RunningAgents { urls, tasks })
    }
}

/// Listening mock agents. Servers stop when this is dropped.
#[derive(Debug)]
pub struct RunningAgents {
    pub urls: BTreeMap<String, String>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningAgents {
    pub fn url(&self, agent_id: &str) -> Option<&str> {
        self.urls.get(agent_id).map(String::as_str)
    }
}

impl Drop for RunningAgents {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(CONTENT_TYPE, "application/json")], body).into_response()
}

async fn serve_mock_agent(
    State(agent): State<Arc<MockAgent>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let now = agent.now();
    let (decision, fault, reply) = {
        let state = agent.state.lock().expect("agent poisoned");
        (
            evaluate_auth(&headers, &state.spec.policy, now),
            state.spec.fault,
            state.spec.canned_reply.clone(),
        )
    };

    let (status, response) = match decision {
        AuthDecision::Deny { status } => {
            let code = StatusCode::from_u16(status).unwrap_or(StatusCode::UNAUTHORIZED);
            let msg = if status == 403 {
                "Forbidden: caller does not have permission to invoke this service"
            } else {
                "Unauthorized: missing or invalid identity token"
            };
            (code, (code, msg).into_response())
        }
        AuthDecision::Allow => match parse_request(&body) {
            Err(e) => (
                StatusCode::OK,
                json_response(
                    StatusCode::OK,
                    serde_json::to_string(&RpcErrorResponse::from_error(&e)).unwrap_or_default(),
                ),
            ),
            Ok(req) => match fault {
                Fault::Raise => (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    (StatusCode::INTERNAL_SERVER_ERROR, RAISE_BODY).into_response(),
                ),
                Fault::EmptyParts => {
                    let resp = RpcResponse {
                        jsonrpc: "2.0".into(),
                        id: req.id,
                        result: ResultMessage {
                            kind: "message".into(),
                            role: "agent".into(),
                            message_id: uuid::Uuid::new_v4().to_string(),
                            parts: Vec::new(),
                        },
                    };
                    (
                        StatusCode::OK,
                        json_response(StatusCode::OK, resp.to_json()),
                    )
                }
                Fault::None | Fault::Stall { .. } => {
                    let text = if reply.is_empty() {
                        "ok".to_string()
                    } else {
                        reply
                    };
                    let resp = build_text_response(req.id, text).expect("non-empty reply");
                    (
                        StatusCode::OK,
                        json_response(StatusCode::OK, resp.to_json()),
                    )
                }
            },
        },
    };

    // Logged before any stall so a caller that times out is still recorded.
    let recorded = RecordedRequest {
        headers: headers
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str().to_string(),
                    String::from_utf8_lossy(v.as_bytes()).into_owned(),
                )
            })
            .collect(),
        body: String::from_utf8_lossy(&body).into_owned(),
        status: status.as_u16(),
    };
    agent
        .state
        .lock()
        .expect("agent poisoned")
        .log
        .push(recorded);

    if let (AuthDecision::Allow, Fault::Stall { ms }) = (decision, fault) {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    response
}

#[derive(Debug, Deserialize)]
struct AclRequest {
    doc_uri_prefix: String,
    identity: String,
    granted: bool,
}

#[derive(Debug, Deserialize)]
struct FaultRequest {
    agent_id: String,
    fault: Fault,
}

#[derive(Debug, Deserialize)]
struct InvokerGrantRequest {
    agent_id: String,
    identity: String,
    granted: bool,
}

#[derive(Debug, Deserialize)]
struct IssuerRequest {
    failing: bool,
}

#[derive(Debug, Deserialize)]
struct ClockRequest {
    skew_secs: i64,
}

fn admin_error(e: SimError) -> Response {
    let status = match e {
        SimError::UnknownAgent(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_REQUEST,
    };
    (status, Json(serde_json::json!({ "error": e.to_string() }))).into_response()
}

fn admin_ok() -> Response {
    Json(serde_json::json!({ "status": "ok" })).into_response()
}

/// `/admin/*` endpoints for driving the simulation over HTTP.
pub fn admin_router(sim: Arc<Simulator>) -> Router {
    Router::new()
        .route(
            "/admin/acl",
            post(
                |State(sim): State<Arc<Simulator>>, Json(r): Json<AclRequest>| async move {
                    sim.set_acl_grant(&r.doc_uri_prefix, &r.identity, r.granted);
                    admin_ok()
                },
            )
            .get(|State(sim): State<Arc<Simulator>>| async move { Json(sim.store.grants()) }),
        )
        .route(
            "/admin/fault",
            post(
                |State(sim): State<Arc<Simulator>>, Json(r): Json<FaultRequest>| async move {
                    match sim.set_fault(&r.agent_id, r.fault) {
                        Ok(()) => admin_ok(),
                        Err(e) => admin_error(e),
                    }
                },
            ),
        )
        .route(
            "/admin/invoker-grant",
            post(
                |State(sim): State<Arc<Simulator>>, Json(r): Json<InvokerGrantRequest>| async move {
                    match sim.set_invoker_grant(&r.agent_id, &r.identity, r.granted) {
                        Ok(()) => admin_ok(),
                        Err(e) => admin_error(e),
                    }
                },
            ),
        )
        .route(
            "/admin/issuer",
            post(
                |State(sim): State<Arc<Simulator>>, Json(r): Json<IssuerRequest>| async move {
                    sim.set_issuer_failing(r.failing);
                    admin_ok()
                },
            ),
        )
        .route(
            "/admin/clock",
            post(
                |State(sim): State<Arc<Simulator>>, Json(r): Json<ClockRequest>| async move {
                    sim.set_clock_skew(r.skew_secs);
                    admin_ok()
                },
            ),
        )
        .route(
            "/admin/log/{agent_id}",
            get(
                |State(sim): State<Arc<Simulator>>, Path(id): Path<String>| async move {
                    match sim.get_request_log(&id) {
                        Ok(log) => Json(log).into_response(),
                        Err(e) => admin_error(e),
                    }
                },
            ),
        )
        .with_state(sim)
}
