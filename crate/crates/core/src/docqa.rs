//! Document QA: search, permission-gated evidence fetch, and deadline
//! extraction with verbatim citations.
//!
//! Retrieval and evidence access are separate stages. A search hit alone only
//! yields a snippet; a quoted deadline requires reading the stored object.

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

pub const DEFAULT_TOP_K: usize = 3;
pub const MAX_SNIPPET_CHARS: usize = 512;
const SNIPPET_CHARS: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_uri: String,
    pub snippet: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search backend unavailable: {0}")]
    BackendUnavailable(String),
}

#[async_trait]
pub trait SearchBackend: Send + Sync {
    async fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchHit>, SearchError>;
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF   // hiragana, katakana
        | 0x3400..=0x4DBF // CJK ext A
        | 0x4E00..=0x9FFF // CJK unified
        | 0xF900..=0xFAFF // compatibility ideographs
        | 0xFF66..=0xFF9F // half-width katakana
        | 0xAC00..=0xD7AF) // hangul syllables
}

/// Lower-cased alphanumeric runs; CJK characters become one token each.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Leading text of a document, whitespace-collapsed and cut at a char boundary.
pub fn make_snippet(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match collapsed.char_indices().nth(SNIPPET_CHARS) {
        Some((idx, _)) => format!("{}…", &collapsed[..idx]),
        None => collapsed,
    }
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    uri: String,
    tokens: HashSet<String>,
    snippet: String,
}

/// In-process token-overlap index: score = |query ∩ doc| / |query| over
/// distinct tokens.
#[derive(Debug, Clone, Default)]
pub struct LocalIndex {
    docs: Vec<IndexedDoc>,
}

impl LocalIndex {
    pub fn new<I, U, T>(docs: I) -> Self
    where
        I: IntoIterator<Item = (U, T)>,
        U: Into<String>,
        T: AsRef<str>,
    {
        let docs = docs
            .into_iter()
            .map(|(uri, text)| IndexedDoc {
                uri: uri.into(),
                tokens: token_set(text.as_ref()),
                snippet: make_snippet(text.as_ref()),
            })
            .collect();
        Self { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn search_sync(&self, query: &str, top_k: usize) -> Vec<SearchHit> {
        let query_tokens = token_set(query);
        if query_tokens.is_empty() {
            return Vec::new();
        }
        let denom = query_tokens.len() as f64;
        let mut hits: Vec<SearchHit> = self
            .docs
            .iter()
            .filter_map(|doc| {
                let overlap = query_tokens.intersection(&doc.tokens).count();
                (overlap > 0).then(|| SearchHit {
                    doc_uri: doc.uri.clone(),
                    snippet: doc.snippet.clone(),
                    score: overlap as f64 / denom,
                })
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.doc_uri.cmp(&b.doc_uri))
        });
        hits.truncate(top_k);
        hits
    }
}

#[async_trait]
impl SearchBackend for LocalIndex {
    async fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchHit>, SearchError> {
        Ok(self.search_sync(query, top_k))
    }
}

pub async fn search(
    query: &str,
    backend: &dyn SearchBackend,
    top_k: usize,
) -> Result<Vec<SearchHit>, SearchError> {
    backend.search(query, top_k).await
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub uri: String,
    pub full_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    /// Reader lacks the read capability on the object (HTTP 403 semantics).
    #[error("permission denied: `{reader}` cannot read `{uri}`")]
    PermissionDenied { uri: String, reader: String },
    #[error("object not found: `{0}`")]
    NotFound(String),
    #[error("object store unavailable: {0}")]
    Unavailable(String),
}

impl StoreError {
    pub fn status(&self) -> u16 {
        match self {
            StoreError::PermissionDenied { .. } => 403,
            StoreError::NotFound(_) => 404,
            StoreError::Unavailable(_) => 503,
        }
    }
}

#[async_trait]
pub trait ObjectStore: Send + Sync {
    async fn get_object(&self, uri: &str, reader_identity: &str) -> Result<String, StoreError>;
}

pub async fn fetch_evidence(
    doc_uri: &str,
    store: &dyn ObjectStore,
    reader_identity: &str,
) -> Result<EvidenceDocument, StoreError> {
    let full_text = store.get_object(doc_uri, reader_identity).await?;
    Ok(EvidenceDocument {
        uri: doc_uri.to_string(),
        full_text,
    })
}

/// `quote == full_text[span.0..span.1]`; offsets are UTF-8 byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub doc_uri: String,
    pub quote: String,
    pub char_span: (usize, usize),
}

impl Citation {
    pub fn slice<'a>(&self, full_text: &'a str) -> Option<&'a str> {
        full_text.get(self.char_span.0..self.char_span.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Full,
    DeniedFallback,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocQaAnswer {
    pub text: String,
    pub citations: Vec<Citation>,
    pub evidence_status: EvidenceStatus,
}

/// What the evidence stage produced for the top hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvidenceAccess {
    Fetched(EvidenceDocument),
    Denied,
    /// Object missing or the store failed; answer from snippets.
    Unavailable(String),
}

fn deadline_patterns() -> &'static [Regex; 2] {
    static PATTERNS: OnceLock<[Regex; 2]> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            Regex::new(r"(?i)\bwithin\s+\d+\s+(?:business\s+days?|minutes?|hours?|days?)\b")
                .expect("valid pattern"),
            Regex::new(r"\d+\s*(?:分|時間|営業日)以内").expect("valid pattern"),
        ]
    })
}

const CLAUSE_END: &[char] = &['.', ',', ';', ':', '!', '?', '\n', '。', '、', '！', '？'];
const SENTENCE_END: &[char] = &['.', '\n', '。', '!', '?', '！', '？'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineMatch {
    pub start: usize,
    pub end: usize,
    /// Span of the enclosing sentence, used for relevance.
    pub sentence: (usize, usize),
}

/// Every deadline expression in `text`, each extended to the end of its clause.
pub fn find_deadlines(text: &str) -> Vec<DeadlineMatch> {
    let mut found: Vec<DeadlineMatch> = deadline_patterns()
        .iter()
        .flat_map(|re| re.find_iter(text))
        .map(|m| {
            let clause_end = text[m.end()..]
                .find(CLAUSE_END)
                .map_or(text.len(), |i| m.end() + i);
            let end = m.start() + text[m.start()..clause_end].trim_end().len();
            let sentence_start = text[..m.start()].rfind(SENTENCE_END).map_or(0, |i| {
                i + text[i..].chars().next().map_or(1, char::len_utf8)
            });
            let sentence_end = text[m.end()..]
                .find(SENTENCE_END)
                .map_or(text.len(), |i| m.end() + i);
            DeadlineMatch {
                start: m.start(),
                end,
                sentence: (sentence_start, sentence_end),
            }
        })
        .collect();
    found.sort_by_key(|m| m.start);
    found.dedup_by_key(|m| m.start);
    found
}

fn best_deadline(query: &str, text: &str) -> Option<DeadlineMatch> {
    let query_tokens = token_set(query);
    let mut best: Option<(usize, DeadlineMatch)> = None;
    for m in find_deadlines(text) {
        let overlap = token_set(&text[m.sentence.0..m.sentence.1])
            .intersection(&query_tokens)
            .count();
        // Strictly greater keeps the earliest match on ties.
        if best.as_ref().is_none_or(|(b, _)| overlap > *b) {
            best = Some((overlap, m));
        }
    }
    best.map(|(_, m)| m)
}

pub fn extract_answer(query: &str, hits: &[SearchHit], evidence: &EvidenceAccess) -> DocQaAnswer {
    let Some(top) = hits.first() else {
        return DocQaAnswer {
            text: "No matching documents were found for this question.".to_string(),
            citations: Vec::new(),
            evidence_status: EvidenceStatus::NotFound,
        };
    };
    match evidence {
        EvidenceAccess::Fetched(doc) => match best_deadline(query, &doc.full_text) {
            Some(m) => {
                let quote = doc.full_text[m.start..m.end].to_string();
                DocQaAnswer {
                    text: format!("Deadline: {quote} (source: {}).", doc.uri),
                    citations: vec![Citation {
                        doc_uri: doc.uri.clone(),
                        quote,
                        char_span: (m.start, m.end),
                    }],
                    evidence_status: EvidenceStatus::Full,
                }
            }
            None => DocQaAnswer {
                text: format!("No explicit deadline found in {}.", doc.uri),
                citations: Vec::new(),
                evidence_status: EvidenceStatus::NotFound,
            },
        },
        EvidenceAccess::Denied => DocQaAnswer {
            text: format!(
                "Access to the source document {} was denied, so this answer is based on search snippets only: \"{}\" The explicit deadline could not be verified against the source text.",
                top.doc_uri, top.snippet
            ),
            citations: Vec::new(),
            evidence_status: EvidenceStatus::DeniedFallback,
        },
        EvidenceAccess::Unavailable(reason) => DocQaAnswer {
            text: format!(
                "The source document {} could not be read ({reason}). Search snippet: \"{}\" No explicit deadline found.",
                top.doc_uri, top.snippet
            ),
            citations: Vec::new(),
            evidence_status: EvidenceStatus::NotFound,
        },
    }
}

/// Search and evidence dependencies for the doc QA route.
#[derive(Clone)]
pub struct DocQaBackend {
    pub search: Arc<dyn SearchBackend>,
    pub store: Arc<dyn ObjectStore>,
    pub reader_identity: String,
    pub top_k: usize,
}

impl std::fmt::Debug for DocQaBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocQaBackend")
            .field("reader_identity", &self.reader_identity)
            .field("top_k", &self.top_k)
            .finish_non_exhaustive()
    }
}
