mod common;

use a2a_hub::bench::{
    load_cases, BenchError, BenchOptions, BenchReport, BenchRunner, Channel, EXIT_FAILURES,
    EXIT_PASS,
};
use common::*;
use serde_json::Value;

fn report_schema() -> jsonschema::Validator {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas/bench-report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn shipped_cases() -> Vec<a2a_hub::bench::BenchCase> {
    load_cases(config_dir().join("bench-cases.toml")).unwrap()
}

fn without_latency(report: &BenchReport) -> Value {
    let mut v: Value = serde_json::from_str(&report.to_json()).unwrap();
    for c in v["cases"].as_array_mut().unwrap() {
        c.as_object_mut().unwrap().remove("latency_ms");
    }
    v
}

#[test]
fn shipped_cases_match_the_benchmark() {
    let cases = shipped_cases();
    let routes: Vec<_> = cases.iter().map(|c| c.expected_route.as_str()).collect();
    assert_eq!(routes, ["expense", "pm", "general", "docqa"]);
    let docqa = &cases[3];
    assert!(docqa
        .expected_substrings
        .iter()
        .any(|s| s == "within 15 minutes"));
    assert!(docqa.expect_citations);
    assert!(cases.iter().all(|c| c.channel == Channel::Both));
}

#[tokio::test(flavor = "multi_thread")]
async fn healthy_run_passes_and_validates() {
    let hub = start_hub().await;
    let runner = BenchRunner::new(&hub.hub_url(), BenchOptions::default()).unwrap();
    let report = runner.run(&shipped_cases()).await.unwrap();
    assert!(report.all_passed(), "{}", report.render_text());
    assert_eq!(report.exit_code(), EXIT_PASS);
    assert!(report.render_text().ends_with("4/4 passed\n"));

    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    let schema = report_schema();
    let errors: Vec<String> = schema.iter_errors(&json).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");

    let again = runner.run(&shipped_cases()).await.unwrap();
    assert_eq!(without_latency(&report), without_latency(&again));

    let parallel = BenchRunner::new(
        &hub.hub_url(),
        BenchOptions {
            parallel: true,
            ..Default::default()
        },
    )
    .unwrap()
    .run(&shipped_cases())
    .await
    .unwrap();
    assert_eq!(without_latency(&report), without_latency(&parallel));
}

#[tokio::test(flavor = "multi_thread")]
async fn revoked_grant_fails_only_docqa() {
    let hub = start_hub().await;
    hub.simulator()
        .unwrap()
        .set_acl_grant(DOC_PREFIX, HUB_IDENTITY, false);
    let runner = BenchRunner::new(&hub.hub_url(), BenchOptions::default()).unwrap();
    let report = runner.run(&shipped_cases()).await.unwrap();
    assert_eq!(report.exit_code(), EXIT_FAILURES);
    assert_eq!(report.summary.passed_count, 3);
    let docqa = report.cases.iter().find(|c| c.name == "docqa").unwrap();
    assert!(!docqa.passed);
    assert!(docqa
        .details
        .iter()
        .any(|d| d.contains("within 15 minutes")));

    let fail_fast = BenchRunner::new(
        &hub.hub_url(),
        BenchOptions {
            fail_fast: true,
            ..Default::default()
        },
    )
    .unwrap()
    .run(&shipped_cases())
    .await
    .unwrap();
    assert_eq!(fail_fast.cases.len(), 4);

    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    assert!(report_schema().is_valid(&json));
}

#[tokio::test(flavor = "multi_thread")]
async fn wrong_route_is_reported() {
    let hub = start_hub().await;
    let mut cases = shipped_cases();
    cases[2].expected_route = a2a_hub::Route::Expense;
    let report = BenchRunner::new(
        &hub.hub_url(),
        BenchOptions {
            fail_fast: true,
            ..Default::default()
        },
    )
    .unwrap()
    .run(&cases)
    .await
    .unwrap();
    assert_eq!(
        report.cases.len(),
        3,
        "fail-fast stops after the first failure"
    );
    assert!(!report.cases[2].passed);
    assert_eq!(
        report.cases[2].observed_route,
        Some(a2a_hub::Route::General)
    );
}

#[tokio::test]
async fn empty_case_list_is_a_vacuous_pass() {
    let runner = BenchRunner::new("http://127.0.0.1:9", BenchOptions::default()).unwrap();
    let report = runner.run(&[]).await.unwrap();
    assert_eq!(report.summary.total, 0);
    assert_eq!(report.exit_code(), EXIT_PASS);
    assert!(report_schema().is_valid(&serde_json::from_str(&report.to_json()).unwrap()));
}

#[tokio::test]
async fn unreachable_hub_is_an_infrastructure_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let runner = BenchRunner::new(&format!("http://{addr}"), BenchOptions::default()).unwrap();
    let err = runner.run(&shipped_cases()).await.unwrap_err();
    assert!(matches!(err, BenchError::HubUnreachable { .. }), "{err}");
}
