//! Annotation-to-label identification.
//!
//! The offline path matches note text against a keyword rule table; the online
//! path asks an external labeling service to pick from a closed category list.
//! Both return canonical labels only — notes themselves are stored verbatim and
//! never mutated here.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default timeout for both external services (labeling and embedding).
pub const DEFAULT_SERVICE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub label: String,
    pub keywords: Vec<String>,
}

/// Keyword rule table: a label wins when one of its keywords appears
/// (case-insensitively) inside the note text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryTable {
    pub entries: Vec<CategoryEntry>,
}

impl CategoryTable {
    pub fn new(entries: Vec<CategoryEntry>) -> Result<Self> {
        let table = Self { entries };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.entries {
            if entry.label.is_empty() {
                return Err(Error::InvalidInput("category label must be non-empty".into()));
            }
            if !seen.insert(entry.label.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate category label '{}'",
                    entry.label
                )));
            }
            if entry.keywords.iter().any(|k| k.is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "category '{}' has an empty keyword",
                    entry.label
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }
}

/// Picks the table label whose keyword gives the longest case-insensitive
/// substring match in `note`; `None` when nothing matches. Ties on match
/// length resolve to the lexicographically smallest label, so the result is
/// independent of table entry order.
pub fn identify_label(note: &str, table: &CategoryTable) -> Result<Option<String>> {
    if note.is_empty() {
        return Err(Error::InvalidInput("note must be non-empty".into()));
    }
    table.validate()?;
    let folded = note.to_lowercase();
    let mut best: Option<(usize, &str)> = None;
    for entry in &table.entries {
        for keyword in &entry.keywords {
            if !folded.contains(&keyword.to_lowercase()) {
                continue;
            }
            let len = keyword.chars().count();
            let candidate = (len, entry.label.as_str());
            best = Some(match best {
                None => candidate,
                Some(current @ (best_len, best_label)) => {
                    if len > best_len || (len == best_len && entry.label.as_str() < best_label) {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
    }
    Ok(best.map(|(_, label)| label.to_string()))
}

#[derive(Serialize)]
struct LabelRequest<'a> {
    text: &'a str,
    categories: &'a [String],
}

#[derive(Deserialize)]
struct LabelResponse {
    label: String,
}

/// Blocking HTTP client for the external labeling service.
///
/// Protocol: POST `{"text": ..., "categories": [...]}` to the endpoint, reply
/// `{"label": ...}`. The reply must name one of the submitted categories.
#[derive(Debug, Clone)]
pub struct LabelingClient {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl LabelingClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(format!("building HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            http,
        })
    }

    pub fn label(&self, note: &str, categories: &[String]) -> Result<String> {
        if note.is_empty() {
            return Err(Error::InvalidInput("note must be non-empty".into()));
        }
        if categories.is_empty() {
            return Err(Error::InvalidInput(
                "labeling requires a non-empty category list".into(),
            ));
        }
        let response = self
            .http
            .post(&self.endpoint)
            .json(&LabelRequest { text: note, categories })
            .send()
            .map_err(|e| Error::Transport(format!("labeling service: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "labeling service returned HTTP {status}"
            )));
        }
        let parsed: LabelResponse = response
            .json()
            .map_err(|e| Error::Protocol(format!("labeling service reply: {e}")))?;
        if !categories.contains(&parsed.label) {
            return Err(Error::Protocol(format!(
                "labeling service returned '{}', which is not one of the {} submitted categories",
                parsed.label,
                categories.len()
            )));
        }
        Ok(parsed.label)
    }
}

/// One-shot convenience wrapper around [`LabelingClient`] with the default timeout.
pub fn label_via_service(note: &str, categories: &[String], endpoint: &str) -> Result<String> {
    LabelingClient::new(endpoint, DEFAULT_SERVICE_TIMEOUT)?.label(note, categories)
}
