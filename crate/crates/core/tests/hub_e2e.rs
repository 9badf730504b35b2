//! The hub and the simulator wired together over loopback HTTP.

mod common;

use a2a_hub::simnet::Fault;
use common::*;
use serde_json::Value;
use std::time::{Duration, Instant};

fn downstream(tool: &Value) -> &Value {
    &tool["structured"]["downstream"]
}

#[tokio::test(flavor = "multi_thread")]
async fn benchmark_queries_route_and_answer() {
    let hub = start_hub().await;
    let c = client();
    let url = hub.hub_url();
    for (q, route, agent, needle) in [
        (Q_EXPENSE, "expense", "expense-agent", "reimbursement"),
        (Q_PM, "pm", "pm-agent", "WBS"),
        (Q_GENERAL, "general", "generalqa", "3,776"),
        (Q_DOCQA, "docqa", "docqa", "within 15 minutes"),
    ] {
        let (status, tool) = post_tool(&c, &url, q).await;
        assert_eq!(status, 200);
        assert_eq!(tool["route"], route, "{q}");
        assert_eq!(tool["agent_id"], agent);
        assert_eq!(tool["degraded"], false, "{tool}");
        assert!(tool["text"].as_str().unwrap().contains(needle));

        let (status, rpc) = post_jsonrpc(&c, &url, 1, q).await;
        assert_eq!(status, 200);
        assert_eq!(single_text(&rpc).unwrap(), tool["text"].as_str().unwrap());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn evidence_grant_toggles_between_full_and_fallback() {
    let hub = start_hub().await;
    let sim = hub.simulator().unwrap().clone();
    let c = client();
    let url = hub.hub_url();
    let runbook =
        std::fs::read_to_string(config_dir().join("corpus/incident-response.txt")).unwrap();

    let (_, full) = post_tool(&c, &url, Q_DOCQA).await;
    assert_eq!(full["evidence_status"], "full");
    let cites = full["citations"].as_array().unwrap();
    assert_eq!(cites.len(), 1);
    let (s, e) = (
        cites[0]["char_span"][0].as_u64().unwrap() as usize,
        cites[0]["char_span"][1].as_u64().unwrap() as usize,
    );
    assert_eq!(&runbook[s..e], cites[0]["quote"].as_str().unwrap());
    assert_eq!(cites[0]["doc_uri"], RUNBOOK_URI);

    sim.set_acl_grant(DOC_PREFIX, HUB_IDENTITY, false);
    let (status, denied) = post_tool(&c, &url, Q_DOCQA).await;
    assert_eq!(status, 200);
    assert_eq!(denied["evidence_status"], "denied_fallback");
    assert_eq!(denied["citations"].as_array().unwrap().len(), 0);
    assert_eq!(denied["degraded"], true);
    let text = denied["text"].as_str().unwrap();
    assert!(!text.trim().is_empty());
    assert!(
        !text.contains("within 15 minutes"),
        "snippet leaked the clause: {text}"
    );
    assert!(denied["debug"]
        .as_array()
        .unwrap()
        .iter()
        .any(|d| d["stage"] == "evidence"
            && d["ok"] == false
            && d["detail"].as_str().unwrap().contains("403")));

    sim.set_acl_grant(DOC_PREFIX, HUB_IDENTITY, true);
    let (_, restored) = post_tool(&c, &url, Q_DOCQA).await;
    assert_eq!(restored["evidence_status"], "full");
    assert_eq!(restored["text"], full["text"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn faults_are_contained() {
    let hub = start_hub_with(load_config(), 300).await;
    let sim = hub.simulator().unwrap().clone();
    let c = client();
    let url = hub.hub_url();

    let cases: [(&str, Fault, &str); 3] = [
        ("expense-agent", Fault::Raise, "HTTP 500"),
        ("pm-agent", Fault::EmptyParts, "part"),
        ("expense-agent", Fault::Stall { ms: 2_000 }, "timed out"),
    ];
    for (agent, fault, needle) in cases {
        sim.set_fault(agent, fault).unwrap();
        let q = if agent == "pm-agent" { Q_PM } else { Q_EXPENSE };
        let started = Instant::now();
        let (status, rpc) = post_jsonrpc(&c, &url, 7, q).await;
        assert_eq!(status, 200);
        let text = single_text(&rpc).unwrap();
        assert!(text.contains(needle), "{fault:?}: {text}");
        assert!(
            started.elapsed() < Duration::from_millis(1_500),
            "{fault:?} took too long"
        );
        let (status, tool) = post_tool(&c, &url, q).await;
        assert_eq!(status, 200);
        assert_eq!(tool["degraded"], true);
        sim.set_fault(agent, Fault::None).unwrap();
    }

    let (_, tool) = post_tool(&c, &url, Q_EXPENSE).await;
    assert_eq!(downstream(&tool)["outcome"], "ok");
}

#[tokio::test(flavor = "multi_thread")]
async fn raise_fault_body_is_excerpted() {
    let hub = start_hub().await;
    hub.simulator()
        .unwrap()
        .set_fault("expense-agent", Fault::Raise)
        .unwrap();
    let (_, tool) = post_tool(&client(), &hub.hub_url(), Q_EXPENSE).await;
    let d = downstream(&tool);
    assert_eq!(d["outcome"], "http_failure");
    assert_eq!(d["status"], 500);
    assert!(d["body_excerpt"].as_str().unwrap().contains("ValueError"));
}

#[tokio::test(flavor = "multi_thread")]
async fn token_issue_failure_skips_the_call() {
    let hub = start_hub().await;
    let sim = hub.simulator().unwrap().clone();
    sim.set_issuer_failing(true);
    let c = client();
    let (status, rpc) = post_jsonrpc(&c, &hub.hub_url(), 3, Q_PM).await;
    assert_eq!(status, 200);
    assert!(single_text(&rpc).unwrap().contains("credential"));
    assert!(sim.get_request_log("pm-agent").unwrap().is_empty());

    // Public targets need no token and are unaffected.
    let (_, tool) = post_tool(&c, &hub.hub_url(), Q_EXPENSE).await;
    assert_eq!(tool["degraded"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn auth_matrix_end_to_end() {
    for header in [false, true] {
        for audience_ok in [false, true] {
            for grant in [false, true] {
                let expected = match (header, audience_ok, grant) {
                    (true, true, true) => 200,
                    (true, true, false) => 403,
                    _ => 401,
                };
                let got = auth_row(header, audience_ok, grant, false).await;
                assert_eq!(
                    got, expected,
                    "header={header} aud={audience_ok} grant={grant}"
                );
            }
        }
    }
    assert_eq!(auth_row(true, true, true, true).await, 401, "expired token");

    let hub = start_hub().await;
    let sim = hub.simulator().unwrap().clone();
    let (_, tool) = post_tool(&client(), &hub.hub_url(), Q_EXPENSE).await;
    assert_eq!(downstream(&tool)["outcome"], "ok");
    let log = sim.get_request_log("expense-agent").unwrap();
    assert!(!log.is_empty());
    assert!(log
        .iter()
        .all(|r| !r.has_authorization() && r.status == 200));
}

#[tokio::test(flavor = "multi_thread")]
async fn every_invocation_is_logged_once() {
    let hub = start_hub().await;
    let sim = hub.simulator().unwrap().clone();
    let c = client();
    let url = hub.hub_url();
    let plan = [Q_EXPENSE, Q_PM, Q_PM, Q_GENERAL, Q_EXPENSE, Q_DOCQA, Q_PM];
    for (i, q) in plan.iter().enumerate() {
        post_jsonrpc(&c, &url, i as i64, q).await;
    }
    let expense = sim.get_request_log("expense-agent").unwrap();
    let pm = sim.get_request_log("pm-agent").unwrap();
    assert_eq!(expense.len(), 2);
    assert_eq!(pm.len(), 3);
    let mut ids: Vec<String> = expense
        .iter()
        .chain(&pm)
        .map(|r| serde_json::from_str::<Value>(&r.body).unwrap()["id"].to_string())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5, "hub request ids are unique per invocation");
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_requests_never_5xx() {
    let hub = start_hub().await;
    let c = client();
    let url = format!("{}/", hub.hub_url());
    for (body, code) in [
        ("not json", -32700),
        ("[]", -32600),
        (r#"{"jsonrpc":"2.0","method":"message/send"}"#, -32600),
        (
            r#"{"jsonrpc":"2.0","id":1,"method":"tasks/get","params":{}}"#,
            -32601,
        ),
        (
            r#"{"jsonrpc":"2.0","id":"x","method":"message/send","params":[1]}"#,
            -32602,
        ),
    ] {
        let (status, text) = post_raw(&c, &url, body.to_string()).await;
        assert_eq!(status, 200, "{body}");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["error"]["code"], code, "{body}: {v}");
    }

    // Valid envelope with no usable text gets the help message.
    let body =
        r#"{"jsonrpc":"2.0","id":2,"method":"message/send","params":{"message":{"parts":[]}}}"#;
    let (status, text) = post_raw(&c, &url, body.to_string()).await;
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["id"], 2);
    assert!(!single_text(&v).unwrap().is_empty());

    // params.text is honoured when there are no text parts.
    let body = r#"{"jsonrpc":"2.0","id":"t","method":"message/send","params":{"text":"Mount Fuji height?"}}"#;
    let (_, text) = post_raw(&c, &url, body.to_string()).await;
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(single_text(&v).unwrap().contains("3,776"));
}

#[tokio::test(flavor = "multi_thread")]
async fn tool_api_rejects_bad_bodies() {
    let hub = start_hub().await;
    let c = client();
    let url = format!("{}/tools/query", hub.hub_url());
    for body in ["{}", r#"{"query":"   "}"#, "nope"] {
        let (status, text) = post_raw(&c, &url, body.to_string()).await;
        assert_eq!(status, 400, "{body}");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["error"].is_string());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn operational_endpoints() {
    let hub = start_hub().await;
    let c = client();
    let url = hub.hub_url();
    let get = |path: &str| {
        let c = c.clone();
        let u = format!("{url}{path}");
        async move {
            let r = c.get(u).send().await.unwrap();
            assert_eq!(r.status(), 200);
            r.text().await.unwrap()
        }
    };

    assert_eq!(get("/health").await, r#"{"status":"ok"}"#);

    let card1 = get("/.well-known/agent-card.json").await;
    let card2 = get("/.well-known/agent-card.json").await;
    assert_eq!(card1, card2);
    let card: Value = serde_json::from_str(&card1).unwrap();
    assert_eq!(card["defaultOutputModes"], serde_json::json!(["text"]));
    assert_eq!(card["url"], "http://localhost:8080/");

    let version: Value = serde_json::from_str(&get("/debug-version").await).unwrap();
    assert!(version["build"].as_str().unwrap().starts_with("a2a-hub"));

    assert!(get("/openapi.yaml").await.contains("/tools/query"));

    // Compare against the config file read with a plain TOML parser.
    let raw: toml::Value =
        toml::from_str(&std::fs::read_to_string(config_dir().join("hub.toml")).unwrap()).unwrap();
    let mut expected: Vec<(String, String, String, i64)> = raw["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["label"].as_str().unwrap().to_string(),
                r["pattern"].as_str().unwrap().to_string(),
                r["route"].as_str().unwrap().to_string(),
                r["priority"].as_integer().unwrap(),
            )
        })
        .collect();
    expected.sort_by_key(|r| r.3);
    let routes: Value = serde_json::from_str(&get("/routes").await).unwrap();
    let served: Vec<(String, String, String, i64)> = routes["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["label"].as_str().unwrap().to_string(),
                r["pattern"].as_str().unwrap().to_string(),
                r["route"].as_str().unwrap().to_string(),
                r["priority"].as_i64().unwrap(),
            )
        })
        .collect();
    assert_eq!(served.len(), 4);
    assert_eq!(served, expected);
    assert_eq!(routes["default_route"], "general");
}

#[tokio::test(flavor = "multi_thread")]
async fn hub_without_simulator_serves_in_process_routes() {
    let mut loaded = load_config();
    loaded.config.targets.clear();
    let hub = a2a_hub::launch::launch(
        loaded,
        None,
        "127.0.0.1:0".parse().unwrap(),
        "127.0.0.1:0".parse().unwrap(),
    )
    .await
    .unwrap();
    assert!(hub.simulator().is_none());
    let c = client();
    let (_, tool) = post_tool(&c, &hub.hub_url(), Q_DOCQA).await;
    assert_eq!(tool["evidence_status"], "full");
    // No target bound to expense: contained, not a crash.
    let (status, rpc) = post_jsonrpc(&c, &hub.hub_url(), 1, Q_EXPENSE).await;
    assert_eq!(status, 200);
    assert!(!single_text(&rpc).unwrap().is_empty());
}
