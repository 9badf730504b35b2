//! Deterministic keyword/regex routing over an ordered rule table.

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Expense,
    Pm,
    DocQa,
    General,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Expense, Route::Pm, Route::DocQa, Route::General];

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Expense => "expense",
            Route::Pm => "pm",
            Route::DocQa => "docqa",
            Route::General => "general",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Route::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown route `{s}`"))
    }
}

/// Rule as written in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingRule {
    pub label: String,
    pub pattern: String,
    pub route: Route,
    pub priority: u32,
}

impl RoutingRule {
    pub fn new(label: &str, pattern: &str, route: Route, priority: u32) -> Self {
        Self {
            label: label.to_string(),
            pattern: pattern.to_string(),
            route,
            priority,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleTableError {
    #[error("duplicate priority {priority} (rules `{first}` and `{second}`)")]
    DuplicatePriority {
        priority: u32,
        first: String,
        second: String,
    },
    #[error("rule `{label}` has an invalid pattern: {reason}")]
    InvalidPattern { label: String, reason: String },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: RoutingRule,
    regex: Regex,
}

/// Validated rule table, sorted by ascending priority.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<CompiledRule>,
}

impl RuleTable {
    pub fn new(rules: Vec<RoutingRule>) -> Result<Self, RuleTableError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let regex = RegexBuilder::new(&rule.pattern)
                .case_insensitive(true)
                .build()
                .map_err(|e| RuleTableError::InvalidPattern {
                    label: rule.label.clone(),
                    reason: e.to_string(),
                })?;
            compiled.push(CompiledRule { rule, regex });
        }
        compiled.sort_by_key(|c| c.rule.priority);
        for pair in compiled.windows(2) {
            if pair[0].rule.priority == pair[1].rule.priority {
                return Err(RuleTableError::DuplicatePriority {
                    priority: pair[0].rule.priority,
                    first: pair[0].rule.label.clone(),
                    second: pair[1].rule.label.clone(),
                });
            }
        }
        Ok(Self { rules: compiled })
    }

    /// Rules in priority order.
    pub fn rules(&self) -> impl Iterator<Item = &RoutingRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Routes covered by at least one rule.
    pub fn routes(&self) -> HashSet<Route> {
        self.rules.iter().map(|c| c.rule.route).collect()
    }
}

/// Built-in lexicon. The shipped config carries the same table.
pub fn default_rules() -> Vec<RoutingRule> {
    vec![
        RoutingRule::new("expense", "expense|reimburs|精算|経費", Route::Expense, 10),
        RoutingRule::new(
            "pm",
            "wbs|project plan|task breakdown|プロジェクト|タスク",
            Route::Pm,
            20,
        ),
        RoutingRule::new(
            "docqa-incident",
            "incident|p-1|p1|infrastructure team|インシデント",
            Route::DocQa,
            30,
        ),
        RoutingRule::new(
            "docqa-deadline-ja",
            "期限.*通知|通知.*期限",
            Route::DocQa,
            31,
        ),
    ]
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::new(default_rules()).expect("built-in rules are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    /// Label of the winning rule; absent when the default route was taken.
    pub matched_rule: Option<String>,
    pub normalized_query: String,
}

/// NFKC, lower-cased, whitespace collapsed and trimmed.
pub fn normalize_query(raw: &str) -> String {
    // Lower-casing can produce sequences NFKC rewrites, hence the second pass.
    let folded: String = raw.nfkc().collect::<String>().to_lowercase();
    let folded: String = folded.nfkc().collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn route_query(query: &str, table: &RuleTable) -> RouteDecision {
    let normalized_query = normalize_query(query);
    let winner = table
        .rules
        .iter()
        .find(|c| c.regex.is_match(&normalized_query));
    match winner {
        Some(c) => RouteDecision {
            route: c.rule.route,
            matched_rule: Some(c.rule.label.clone()),
            normalized_query,
        },
        None => RouteDecision {
            route: Route::General,
            matched_rule: None,
            normalized_query,
        },
    }
}
