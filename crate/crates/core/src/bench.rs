//! Benchmark harness: sends each case to a running hub over the JSON-RPC
//! channel, the REST channel, or both, and checks route, text shape,
//! expected substrings and citation presence.

use crate::envelope::RpcRequest;
use crate::router::Route;
use crate::service::ToolQueryResponse;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_INFRA: i32 = 2;

/// Keys that must never appear in a UI-channel response body.
pub const FORBIDDEN_UI_KEYS: [&str; 3] = ["citations", "structured", "debug"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[serde(rename = "jsonrpc")]
    JsonRpc,
    Rest,
    #[default]
    Both,
}

impl Channel {
    fn uses_jsonrpc(self) -> bool {
        matches!(self, Channel::JsonRpc | Channel::Both)
    }

    fn uses_rest(self) -> bool {
        matches!(self, Channel::Rest | Channel::Both)
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonrpc" => Ok(Channel::JsonRpc),
            "rest" => Ok(Channel::Rest),
            "both" => Ok(Channel::Both),
            other => Err(format!("unknown channel `{other}` (jsonrpc|rest|both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub name: String,
    pub query: String,
    pub expected_route: Route,
    #[serde(default)]
    pub channel: Channel,
    #[serde(default)]
    pub expected_substrings: Vec<String>,
    #[serde(default)]
    pub expect_citations: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseFile {
    #[serde(default)]
    pub cases: Vec<BenchCase>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("hub at {url} is unreachable: {reason}")]
    HubUnreachable { url: String, reason: String },
    #[error("request to {url} failed: {reason}")]
    Transport { url: String, reason: String },
    #[error("reading case file {path}: {reason}")]
    CaseFile { path: String, reason: String },
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<BenchCase>, BenchError> {
    let path = path.as_ref();
    let err = |reason: String| BenchError::CaseFile {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let file: CaseFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(file.cases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub observed_route: Option<Route>,
    pub latency_ms: f64,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub passed_count: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cases: Vec<CaseResult>,
    pub summary: Summary,
}

impl BenchReport {
    fn from_cases(cases: Vec<CaseResult>) -> Self {
        let summary = Summary {
            passed_count: cases.iter().filter(|c| c.passed).count(),
            total: cases.len(),
        };
        Self { cases, summary }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.passed_count == self.summary.total
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            EXIT_PASS
        } else {
            EXIT_FAILURES
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{} {:<width$}  route={:<8} {:>8.1} ms",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.observed_route.map_or("-", Route::as_str),
                c.latency_ms,
            );
            for d in &c.details {
                let _ = writeln!(out, "     - {d}");
            }
        }
        let _ = writeln!(
            out,
            "{}/{} passed",
            self.summary.passed_count, self.summary.total
        );
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Overrides each case's own channel.
    pub channel: Option<Channel>,
    pub fail_fast: bool,
    pub parallel: bool,
    pub timeout: Option<Duration>,
}

/// Drives cases against a hub.
#[derive(Debug, Clone)]
pub struct BenchRunner {
    client: reqwest::Client,
    hub_url: String,
    options: BenchOptions,
}

impl BenchRunner {
    pub fn new(hub_url: &str, options: BenchOptions) -> Result<Self, BenchError> {
        let client = reqwest::Client::builder()
            .no_proxy()
            .timeout(options.timeout.unwrap_or(Duration::from_secs(30)))
            .build()
            .map_err(|e| BenchError::Transport {
                url: hub_url.to_string(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            client,
            hub_url: hub_url.trim_end_matches('/').to_string(),
            options,
        })
    }

    async fn probe(&self) -> Result<(), BenchError> {
        let url = format!("{}/health", self.hub_url);
        let unreachable = |reason: String| BenchError::HubUnreachable {
            url: self.hub_url.clone(),
            reason,
        };
        let resp = self
            .client
            .get(&url)
            .send()
            .await
            .map_err(|e| unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreachable(format!(
                "GET /health returned {}",
                resp.status()
            )));
        }
        Ok(())
    }

    pub async fn run(&self, cases: &[BenchCase]) -> Result<BenchReport, BenchError> {
        if cases.is_empty() {
            return Ok(BenchReport::from_cases(Vec::new()));
        }
        self.probe().await?;
        let results = if self.options.parallel && !self.options.fail_fast {
            futures::future::try_join_all(cases.iter().map(|c| self.run_case(c))).await?
        } else {
            let mut results = Vec::with_capacity(cases.len());
            for case in cases {
                let r = self.run_case(case).await?;
                let failed = !r.passed;
                results.push(r);
                if failed && self.options.fail_fast {
                    break;
                }
            }
            results
        };
        Ok(BenchReport::from_cases(results))
    }

    async fn post(&self, path: &str, body: String) -> Result<(u16, String), BenchError> {
        let url = format!("{}{path}", self.hub_url);
        let transport = |e: reqwest::Error| BenchError::Transport {
            url: url.clone(),
            reason: e.to_string(),
        };
        let resp = self
            .client
            .post(&url)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(transport)?;
        Ok((status, text))
    }

    async fn run_case(&self, case: &BenchCase) -> Result<CaseResult, BenchError> {
        let channel = self.options.channel.unwrap_or(case.channel);
        let started = Instant::now();
        let mut details = Vec::new();
        let mut observed_route = None;
        let mut rest_text = None;
        let mut rpc_text = None;

        if channel.uses_rest() {
            let body = serde_json::json!({ "query": case.query }).to_string();
            let (status, text) = self.post("/tools/query", body).await?;
            if status != 200 {
                details.push(format!("rest: HTTP {status}"));
            } else {
                match serde_json::from_str::<ToolQueryResponse>(&text) {
                    Ok(resp) => {
                        observed_route = Some(resp.route);
                        if resp.route != case.expected_route {
                            details.push(format!(
                                "rest: route {} != expected {}",
                                resp.route, case.expected_route
                            ));
                        }
                        check_substrings(
                            &resp.text,
                            &case.expected_substrings,
                            "rest",
                            &mut details,
                        );
                        let has_citations = !resp.citations.is_empty();
                        if has_citations != case.expect_citations {
                            details.push(format!(
                                "rest: citations {} but expected {}",
                                if has_citations { "present" } else { "absent" },
                                if case.expect_citations {
                                    "present"
                                } else {
                                    "absent"
                                },
                            ));
                        }
                        rest_text = Some(resp.text);
                    }
                    Err(e) => details.push(format!("rest: unparseable response: {e}")),
                }
            }
        }

        if channel.uses_jsonrpc() {
            let id = format!("bench-{}", case.name);
            let body = RpcRequest::message_send(id.as_str(), case.query.as_str()).to_json();
            let (status, text) = self.post("/", body).await?;
            if status != 200 {
                details.push(format!("jsonrpc: HTTP {status}"));
            }
            match check_ui_body(&text) {
                Ok(t) => {
                    check_substrings(&t, &case.expected_substrings, "jsonrpc", &mut details);
                    rpc_text = Some(t);
                }
                Err(problem) => details.push(format!("jsonrpc: {problem}")),
            }
        }

        if let (Some(a), Some(b)) = (&rest_text, &rpc_text) {
            if a != b {
                details.push("channels disagree on answer text".to_string());
            }
        }

        Ok(CaseResult {
            name: case.name.clone(),
            passed: details.is_empty(),
            observed_route,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
            details,
        })
    }
}

fn check_substrings(text: &str, expected: &[String], channel: &str, details: &mut Vec<String>) {
    for s in expected {
        if !text.contains(s.as_str()) {
            details.push(format!("{channel}: missing substring {s:?}"));
        }
    }
}

fn contains_key(value: &Value, key: &str) -> bool {
    match value {
        Value::Object(map) => map.contains_key(key) || map.values().any(|v| contains_key(v, key)),
        Value::Array(items) => items.iter().any(|v| contains_key(v, key)),
        _ => false,
    }
}

/// Checks the UI-channel contract on a raw response body and returns the
/// single text part.
pub fn check_ui_body(body: &str) -> Result<String, String> {
    let value: Value = serde_json::from_str(body).map_err(|e| format!("body is not JSON: {e}"))?;
    if value.get("error").is_some() {
        return Err("response is a JSON-RPC error".to_string());
    }
    if let Some(key) = FORBIDDEN_UI_KEYS.iter().find(|k| contains_key(&value, k)) {
        return Err(format!("response contains forbidden key {key:?}"));
    }
    let parts = value
        .pointer("/result/parts")
        .and_then(Value::as_array)
        .ok_or("response has no result.parts array")?;
    match parts.as_slice() {
        [part] if part.get("kind").and_then(Value::as_str) == Some("text") => {
            match part.get("text").and_then(Value::as_str) {
                Some(t) if !t.is_empty() => Ok(t.to_string()),
                _ => Err("text part is empty".to_string()),
            }
        }
        _ => Err(format!(
            "expected exactly one text part, got {}",
            parts.len()
        )),
    }
}
