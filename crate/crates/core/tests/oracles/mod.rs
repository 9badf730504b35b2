//! Generators and brute-force oracles shared by the property suites. Nothing
//! here calls into the library's own matching, scoring or extraction code.
#![allow(dead_code)]

use a2a_hub::envelope::{Message, Part, RpcParams};
use a2a_hub::router::{Route, RoutingRule};
use proptest::prelude::*;
use serde_json::Map;
use std::collections::BTreeSet;

pub const KEYWORDS: &[&str] = &[
    "expense",
    "wbs",
    "incident",
    "deadline",
    "project plan",
    "tax",
    "fuji",
    "p-1",
    "team",
    "notify",
    "budget",
    "leave",
];

const ROUTES: [Route; 4] = [Route::Expense, Route::Pm, Route::DocQa, Route::General];

/// 0 to 6 rules of 1 to 3 literal keywords each, with distinct shuffled
/// priorities.
pub fn rule_table() -> impl Strategy<Value = Vec<RoutingRule>> {
    prop::collection::vec(
        (
            prop::sample::subsequence(KEYWORDS.to_vec(), 1..=3),
            prop::sample::select(ROUTES.to_vec()),
        ),
        0..=6,
    )
    .prop_flat_map(|specs| {
        let n = specs.len();
        (
            Just(specs),
            Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
    .prop_map(|(specs, priorities)| {
        specs
            .into_iter()
            .zip(priorities)
            .enumerate()
            .map(|(i, ((words, route), p))| {
                RoutingRule::new(&format!("r{i}"), &words.join("|"), route, p * 10 + 5)
            })
            .collect()
    })
}

/// Keywords and noise words in mixed case with assorted separators.
pub fn query() -> impl Strategy<Value = String> {
    let word = prop_oneof![
        3 => prop::sample::select(KEYWORDS.to_vec()).prop_map(str::to_string),
        2 => "[a-z]{1,8}",
    ];
    let sep = prop::sample::select(vec![" ", "  ", "\t", ", ", "\n"]);
    (prop::collection::vec((word, sep), 0..8), any::<u64>()).prop_map(|(words, seed)| {
        let mut out = String::new();
        for (i, (w, s)) in words.into_iter().enumerate() {
            for (j, c) in w.chars().enumerate() {
                if (seed >> ((i * 7 + j) % 64)) & 1 == 1 {
                    out.push(c.to_ascii_uppercase());
                } else {
                    out.push(c);
                }
            }
            out.push_str(s);
        }
        out
    })
}

/// Lowest-priority rule with a keyword occurring in the folded query.
pub fn route_oracle(query: &str, rules: &[RoutingRule]) -> (Route, Option<String>) {
    let folded = query
        .to_ascii_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    rules
        .iter()
        .filter(|r| r.pattern.split('|').any(|kw| folded.contains(kw)))
        .min_by_key(|r| r.priority)
        .map_or((Route::General, None), |r| (r.route, Some(r.label.clone())))
}

pub const VOCAB: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "incident", "team", "notify", "within", "minutes", "p1",
    "expense", "report", "days", "leave", "policy", "runbook", "owner", "review",
];

/// Up to 100 documents over a small vocabulary. Uris are not in generation
/// order, so ties exercise the uri tie-break.
pub fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 0..20),
        0..=100,
    )
    .prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, words)| (format!("mem://doc-{:03}", (i * 37) % 101), words.join(" ")))
            .collect()
    })
}

pub fn search_query() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 0..6).prop_map(|w| w.join(" "))
}

/// Scores every document, sorts by score then uri, keeps `k`.
pub fn brute_force_top_k(query: &str, docs: &[(String, String)], k: usize) -> Vec<(String, f64)> {
    let q: BTreeSet<&str> = query.split_whitespace().collect();
    if q.is_empty() {
        return Vec::new();
    }
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .filter_map(|(uri, text)| {
            let d: BTreeSet<&str> = text.split_whitespace().collect();
            let overlap = q.iter().filter(|t| d.contains(*t)).count();
            (overlap > 0).then(|| (uri.clone(), overlap as f64 / q.len() as f64))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn maybe_text() -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop_oneof![
        Just(String::new()),
        Just("  \n".to_string()),
        "[a-zA-Z ]{1,12}",
        "[ぁ-ん]{1,6}",
    ])
}

/// (kind, text) pairs for message parts.
pub type PartSpec = (String, Option<String>);

pub fn param_shape() -> impl Strategy<Value = (Option<Vec<PartSpec>>, Option<String>)> {
    let kind = prop::sample::select(vec!["text", "data", "file"]).prop_map(str::to_string);
    (
        prop::option::of(prop::collection::vec((kind, maybe_text()), 0..4)),
        maybe_text(),
    )
}

pub fn build_params(parts: &Option<Vec<PartSpec>>, text: &Option<String>) -> RpcParams {
    RpcParams {
        text: text.clone(),
        message: parts.as_ref().map(|ps| Message {
            parts: ps
                .iter()
                .map(|(kind, t)| match kind.as_str() {
                    "text" => Part {
                        kind: kind.clone(),
                        text: t.clone(),
                        data: None,
                    },
                    _ => Part::data(serde_json::json!({ "t": t })),
                })
                .collect(),
            role: Some("user".into()),
            extra: Map::new(),
        }),
        accepted_output_modes: Some(Vec::new()),
        extra: Map::new(),
    }
}

/// Non-blank joined text parts first, then non-blank `params.text`.
pub fn user_text_oracle(parts: &Option<Vec<PartSpec>>, text: &Option<String>) -> Option<String> {
    let joined = parts.as_ref().map(|ps| {
        ps.iter()
            .filter(|(k, _)| k == "text")
            .filter_map(|(_, t)| t.clone())
            .collect::<Vec<_>>()
            .join("\n")
    });
    if let Some(j) = joined.filter(|j| !j.trim().is_empty()) {
        return Some(j);
    }
    text.clone().filter(|t| !t.trim().is_empty())
}

/// Text with compatibility forms, mixed case and irregular whitespace.
pub fn raw_text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[A-Za-zＡ-Ｚａ-ｚ０-９ｶﾞﾊﾟ \t\u{3000}\n]{0,24}",
        "[ⅠⅫ①⑳ﬁİẞΣς ]{0,12}",
    ]
}
