//! General-knowledge route backed by a fixed answer table.

use crate::router::normalize_query;
use async_trait::async_trait;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedEntry {
    pub pattern: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("canned answer pattern `{pattern}` is invalid: {reason}")]
pub struct CannedTableError {
    pub pattern: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("general answer backend failed: {0}")]
pub struct GeneralQaError(pub String);

/// Anything that can answer a general question. A model-backed adapter would
/// implement this; only the canned table ships.
#[async_trait]
pub trait GeneralAnswerer: Send + Sync {
    async fn answer(&self, query: &str) -> Result<String, GeneralQaError>;
}

#[derive(Debug, Clone)]
pub struct CannedAnswerTable {
    entries: Vec<(Regex, CannedEntry)>,
    default_answer: String,
}

impl CannedAnswerTable {
    pub fn new(
        entries: Vec<CannedEntry>,
        default_answer: impl Into<String>,
    ) -> Result<Self, CannedTableError> {
        let entries = entries
            .into_iter()
            .map(|e| {
                RegexBuilder::new(&e.pattern)
                    .case_insensitive(true)
                    .build()
                    .map(|re| (re, e.clone()))
                    .map_err(|err| CannedTableError {
                        pattern: e.pattern.clone(),
                        reason: err.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            entries,
            default_answer: default_answer.into(),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &CannedEntry> {
        self.entries.iter().map(|(_, e)| e)
    }

    pub fn default_answer(&self) -> &str {
        &self.default_answer
    }
}

/// First matching entry wins; unmatched queries get the default answer.
pub fn answer_general(query: &str, table: &CannedAnswerTable) -> String {
    let normalized = normalize_query(query);
    table
        .entries
        .iter()
        .find(|(re, _)| re.is_match(&normalized))
        .map_or_else(|| table.default_answer.clone(), |(_, e)| e.answer.clone())
}

#[async_trait]
impl GeneralAnswerer for CannedAnswerTable {
    async fn answer(&self, query: &str) -> Result<String, GeneralQaError> {
        Ok(answer_general(query, self))
    }
}
