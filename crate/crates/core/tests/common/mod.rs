#![allow(dead_code)]

use a2a_hub::config::{HubConfig, LoadedConfig};
use a2a_hub::launch::{launch, HubRuntime};
use a2a_hub::simnet::Scenario;
use serde_json::Value;
use std::net::SocketAddr;
use std::path::PathBuf;

pub const HUB_IDENTITY: &str = "a2a-hub@hub-project.iam";
pub const DOC_PREFIX: &str = "gs://hub-docs/";
pub const RUNBOOK_URI: &str = "gs://hub-docs/runbooks/incident-response.txt";

pub const Q_EXPENSE: &str = "What is the expense reimbursement submission deadline?";
pub const Q_PM: &str = "List three tasks for creating a project WBS.";
pub const Q_GENERAL: &str = "What is the height of Mount Fuji?";
pub const Q_DOCQA: &str =
    "What is the deadline for notifying the infrastructure team for a P-1 incident?";

pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

pub fn load_config() -> LoadedConfig {
    HubConfig::load(config_dir().join("hub.toml")).expect("shipped config loads")
}

pub fn load_scenario() -> Scenario {
    let text = std::fs::read_to_string(config_dir().join("scenario.toml")).unwrap();
    Scenario::from_toml(&text).expect("shipped scenario parses")
}

fn loopback() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

/// Shipped config and scenario, with downstream timeouts shortened.
pub async fn start_hub_with(mut loaded: LoadedConfig, timeout_ms: u64) -> HubRuntime {
    for t in &mut loaded.config.targets {
        t.timeout_ms = Some(timeout_ms);
    }
    launch(loaded, Some(load_scenario()), loopback(), loopback())
        .await
        .expect("hub starts")
}

pub async fn start_hub() -> HubRuntime {
    start_hub_with(load_config(), 500).await
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().no_proxy().build().unwrap()
}

pub fn rpc_body(id: i64, text: &str) -> String {
    serde_json::json!({
        "jsonrpc": "2.0",
        "id": id,
        "method": "message/send",
        "params": {
            "message": {"role": "user", "parts": [{"kind": "text", "text": text}], "messageId": format!("m-{id}")},
            "acceptedOutputModes": []
        }
    })
    .to_string()
}

pub async fn post_raw(client: &reqwest::Client, url: &str, body: String) -> (u16, String) {
    let resp = client
        .post(url)
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .expect("hub reachable");
    let status = resp.status().as_u16();
    (status, resp.text().await.unwrap())
}

/// POST / and return (status, parsed body).
pub async fn post_jsonrpc(
    client: &reqwest::Client,
    hub: &str,
    id: i64,
    text: &str,
) -> (u16, Value) {
    let (status, body) = post_raw(client, &format!("{hub}/"), rpc_body(id, text)).await;
    (status, serde_json::from_str(&body).expect("json body"))
}

pub async fn post_tool(client: &reqwest::Client, hub: &str, query: &str) -> (u16, Value) {
    let (status, body) = post_raw(
        client,
        &format!("{hub}/tools/query"),
        serde_json::json!({ "query": query }).to_string(),
    )
    .await;
    (status, serde_json::from_str(&body).expect("json body"))
}

/// The single text part of a JSON-RPC result, or a description of why the
/// body does not have exactly one.
pub fn single_text(body: &Value) -> Result<String, String> {
    let parts = body
        .pointer("/result/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| format!("no result.parts in {body}"))?;
    match parts.as_slice() {
        [p] if p["kind"] == "text" => p["text"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "text part without text".to_string()),
        _ => Err(format!("expected one text part, got {}", parts.len())),
    }
}

/// True if `key` appears as an object key anywhere in `v`.
pub fn has_key(v: &Value, key: &str) -> bool {
    match v {
        Value::Object(m) => m.contains_key(key) || m.values().any(|x| has_key(x, key)),
        Value::Array(a) => a.iter().any(|x| has_key(x, key)),
        _ => false,
    }
}

/// One hub per row: the row's conditions are set through the target config
/// (header, audience) and the simulator (grant, clock).
pub async fn auth_row(header: bool, audience_ok: bool, grant: bool, expired: bool) -> u16 {
    let mut loaded = load_config();
    let pm = loaded
        .config
        .targets
        .iter_mut()
        .find(|t| t.id == "pm-agent")
        .unwrap();
    if header {
        if !audience_ok {
            pm.audience = Some("https://other-agent.example".into());
        }
    } else {
        pm.boundary = a2a_hub::BoundaryKind::CrossProjectPublic;
        pm.audience = None;
    }
    let hub = start_hub_with(loaded, 1_000).await;
    let sim = hub.simulator().unwrap().clone();
    sim.set_invoker_grant("pm-agent", HUB_IDENTITY, grant)
        .unwrap();
    if expired {
        sim.set_clock_skew(2 * 3600);
    }
    let (status, rpc) = post_jsonrpc(&client(), &hub.hub_url(), 1, Q_PM).await;
    assert_eq!(status, 200);
    single_text(&rpc).unwrap();
    let log = sim.get_request_log("pm-agent").unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].has_authorization(), header);
    log[0].status
}
