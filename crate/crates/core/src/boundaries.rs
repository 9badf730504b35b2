//! Boundary taxonomy and the credential each downstream target needs.
//!
//! Same-project and cross-project public targets are called without a bearer
//! token. Cross-account targets behind IAM get an ID token minted for the
//! target's audience, cached per audience until shortly before expiry.

use async_trait::async_trait;
use http::header::AUTHORIZATION;
use http::{HeaderMap, HeaderValue};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

/// Tokens closer than this to expiry are refreshed instead of served.
pub const REFRESH_MARGIN: Duration = Duration::from_secs(60);
pub const DEFAULT_TARGET_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    SameProject,
    CrossProjectPublic,
    CrossAccountIam,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownstreamTarget {
    pub id: String,
    pub url: String,
    pub boundary: BoundaryKind,
    pub audience: Option<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("target `{0}`: cross_account_iam requires a non-empty audience")]
    MissingAudience(String),
    #[error("target `{0}`: audience is only valid for cross_account_iam targets")]
    UnexpectedAudience(String),
    #[error("target `{0}`: url must not be empty")]
    EmptyUrl(String),
    #[error("target id must not be empty")]
    EmptyId,
}

impl DownstreamTarget {
    pub fn new(
        id: impl Into<String>,
        url: impl Into<String>,
        boundary: BoundaryKind,
        audience: Option<String>,
        timeout: Duration,
    ) -> Result<Self, TargetError> {
        let target = Self {
            id: id.into(),
            url: url.into(),
            boundary,
            audience,
            timeout,
        };
        target.validate()?;
        Ok(target)
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        if self.id.is_empty() {
            return Err(TargetError::EmptyId);
        }
        if self.url.is_empty() {
            return Err(TargetError::EmptyUrl(self.id.clone()));
        }
        match (self.boundary, self.audience.as_deref()) {
            (BoundaryKind::CrossAccountIam, None | Some("")) => {
                Err(TargetError::MissingAudience(self.id.clone()))
            }
            (BoundaryKind::CrossProjectPublic, Some(_)) => {
                Err(TargetError::UnexpectedAudience(self.id.clone()))
            }
            _ => Ok(()),
        }
    }
}

/// Seconds since the Unix epoch, behind a trait so tests can move time.
pub trait Clock: Send + Sync + std::fmt::Debug {
    fn now_unix(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_unix(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default()
    }
}

/// Manually advanced clock shared between clones.
#[derive(Debug, Default, Clone)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self(Arc::new(AtomicU64::new(start)))
    }

    pub fn set(&self, t: u64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_unix(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdToken {
    pub token: String,
    pub audience: String,
    /// Unix seconds.
    pub expiry: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthMaterial {
    None,
    BearerIdToken(IdToken),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token issuance failed: {0}")]
pub struct TokenIssueError(pub String);

/// Mints ID tokens for a requested audience.
#[async_trait]
pub trait TokenProvider: Send + Sync {
    async fn issue(
        &self,
        audience: &str,
        caller_identity: &str,
    ) -> Result<IdToken, TokenIssueError>;
}

/// Per-audience token cache. Each audience has its own async lock, so at most
/// one issuance per audience is in flight.
#[derive(Debug)]
pub struct TokenCache {
    clock: Arc<dyn Clock>,
    margin: Duration,
    slots: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Option<IdToken>>>>>,
}

impl TokenCache {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_margin(clock, REFRESH_MARGIN)
    }

    pub fn with_margin(clock: Arc<dyn Clock>, margin: Duration) -> Self {
        Self {
            clock,
            margin,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn slot(&self, audience: &str) -> Arc<tokio::sync::Mutex<Option<IdToken>>> {
        let mut slots = self.slots.lock().expect("token cache poisoned");
        slots.entry(audience.to_string()).or_default().clone()
    }

    fn is_fresh(&self, token: &IdToken) -> bool {
        self.clock.now_unix().saturating_add(self.margin.as_secs()) < token.expiry
    }

    /// Cached token for `audience`, issuing a new one when missing or stale.
    pub async fn get_or_issue(
        &self,
        audience: &str,
        caller_identity: &str,
        provider: &dyn TokenProvider,
    ) -> Result<IdToken, TokenIssueError> {
        let slot = self.slot(audience);
        let mut guard = slot.lock().await;
        if let Some(token) = guard.as_ref() {
            if self.is_fresh(token) {
                return Ok(token.clone());
            }
        }
        let token = provider.issue(audience, caller_identity).await?;
        if token.audience != audience {
            return Err(TokenIssueError(format!(
                "issuer returned audience `{}`, requested `{audience}`",
                token.audience
            )));
        }
        if token.expiry <= self.clock.now_unix() {
            return Err(TokenIssueError("issuer returned an expired token".into()));
        }
        *guard = Some(token.clone());
        Ok(token)
    }
}

pub async fn acquire_credential(
    target: &DownstreamTarget,
    provider: &dyn TokenProvider,
    cache: &TokenCache,
    caller_identity: &str,
) -> Result<AuthMaterial, TokenIssueError> {
    match target.boundary {
        BoundaryKind::SameProject | BoundaryKind::CrossProjectPublic => Ok(AuthMaterial::None),
        BoundaryKind::CrossAccountIam => {
            let audience = target.audience.as_deref().ok_or_else(|| {
                TokenIssueError(format!("target `{}` has no audience", target.id))
            })?;
            let token = cache
                .get_or_issue(audience, caller_identity, provider)
                .await?;
            Ok(AuthMaterial::BearerIdToken(token))
        }
    }
}

/// Public targets never carry a token, so `None` strips any stale header.
pub fn attach_auth(mut headers: HeaderMap, material: &AuthMaterial) -> HeaderMap {
    headers.remove(AUTHORIZATION);
    if let AuthMaterial::BearerIdToken(t) = material {
        match HeaderValue::from_str(&format!("Bearer {}", t.token)) {
            Ok(value) => {
                headers.insert(AUTHORIZATION, value);
            }
            Err(_) => tracing::warn!(audience = %t.audience, "token is not a valid header value"),
        }
    }
    headers
}
