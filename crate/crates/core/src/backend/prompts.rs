//! Prompt construction. Templates carry `{query}` and `{elements}`
//! placeholders and can be loaded from text files; defaults are embedded.
//!
//! Elements are always rendered as `id: text` lines so replies can reference
//! elements by explicit integer id instead of by fuzzy text matching. The
//! simulated backend relies on that grammar.

use std::path::Path;

use crate::backend::{ChatMessage, ChatRequest, Role};
use crate::error::{Error, Result};
use crate::types::Element;

pub const DEFAULT_SELECT_TEMPLATE: &str = "\
You are given a list of elements, one per line as `id: text`.

elements:
{elements}

query: {query}

Which elements are relevant for answering the query? Reply with a single \
line `ids: <comma-separated ids>`, or `ids: none` if none are relevant.
";

pub const DEFAULT_SCORE_TEMPLATE: &str = "\
You are given a list of elements, one per line as `id: text`.

elements:
{elements}

query: {query}

Rate how relevant each element is for answering the query, on a scale from \
one to five. Reply with one line per element, formatted `id: score`.
";

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for placeholder in ["{query}", "{elements}"] {
            if !text.contains(placeholder) {
                return Err(Error::Config(format!(
                    "prompt template is missing the {placeholder} placeholder"
                )));
            }
        }
        Ok(PromptTemplate { text })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::new(text)
    }

    pub fn select_default() -> Self {
        PromptTemplate {
            text: DEFAULT_SELECT_TEMPLATE.to_string(),
        }
    }

    pub fn score_default() -> Self {
        PromptTemplate {
            text: DEFAULT_SCORE_TEMPLATE.to_string(),
        }
    }

    pub fn render(&self, query: &str, elements: &str) -> String {
        self.text
            .replace("{query}", query)
            .replace("{elements}", elements)
    }
}

/// `id: text` lines for a set of elements.
pub fn element_lines<'a>(elements: impl IntoIterator<Item = &'a Element>) -> String {
    let mut out = String::new();
    for e in elements {
        out.push_str(&format!("{}: {}\n", e.id, e.text));
    }
    out
}

/// Relevance-selection request for one chunk.
pub fn selection_request(
    template: &PromptTemplate,
    query: &str,
    elements: &[&Element],
) -> ChatRequest {
    let body = template.render(query, &element_lines(elements.iter().copied()));
    ChatRequest::user(body)
}

/// Scoring request for one evaluation round. The round tag makes the
/// per-evaluation bias of the simulated helper reproducible and is inert
/// for real models.
pub fn scoring_request(
    template: &PromptTemplate,
    query: &str,
    elements: &[&Element],
    eval_id: usize,
) -> ChatRequest {
    let body = template.render(query, &element_lines(elements.iter().copied()));
    ChatRequest::user(format!("evaluation: {eval_id}\n{body}"))
}

/// Two-message target request: the arranged elements first, the query
/// second, in the same context.
pub fn target_request(elements_in_order: &[&Element], query: &str) -> ChatRequest {
    ChatRequest {
        messages: vec![
            ChatMessage {
                role: Role::User,
                text: element_lines(elements_in_order.iter().copied()),
            },
            ChatMessage {
                role: Role::User,
                text: format!("{query}\nReply with the numeric answer only."),
            },
        ],
        temperature: 0.0,
    }
}

/// Fixed instruction of the token-counting probe.
pub const PROBE_QUERY: &str = "Count the number of occurrences of each token \
in the list. Reply with one line per token, formatted `token: count`.";

/// Two-message probe request: the permuted token list, then the counting
/// instruction.
pub fn probe_request(tokens_in_order: &[&str]) -> ChatRequest {
    ChatRequest {
        messages: vec![
            ChatMessage {
                role: Role::User,
                text: tokens_in_order.join(" "),
            },
            ChatMessage {
                role: Role::User,
                text: PROBE_QUERY.to_string(),
            },
        ],
        temperature: 0.0,
    }
}

/// Extract `id` from the `id: text` lines of a message, in order.
pub fn parse_element_ids(text: &str) -> Vec<usize> {
    text.lines()
        .filter_map(|line| {
            let (id, _) = line.split_once(':')?;
            id.trim().parse::<usize>().ok()
        })
        .collect()
}

/// Extract the evaluation round tag, if present.
pub fn parse_eval_tag(text: &str) -> Option<usize> {
    text.lines().find_map(|line| {
        line.trim()
            .strip_prefix("evaluation:")
            .and_then(|rest| rest.trim().parse::<usize>().ok())
    })
}
