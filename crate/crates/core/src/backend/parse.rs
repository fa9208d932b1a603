//! Reply parsers. The grammars are line-oriented and junk-tolerant:
//! unparseable lines are skipped, an entirely unusable reply is an error so
//! the caller can retry.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

fn segments(text: &str) -> impl Iterator<Item = &str> {
    text.lines().flat_map(|line| line.split(','))
}

/// Parse `key: value` pairs (one per line or comma-separated), e.g.
/// `a:4, b:3, c:2`. Values may be fractional.
pub fn parse_count_reply(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for seg in segments(text) {
        if let Some((k, v)) = seg.split_once(':') {
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                continue;
            }
            if let Ok(val) = v.trim().parse::<f64>() {
                out.insert(key.to_string(), val);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::ReplyParseFailed {
            what: "no token counts found".into(),
        });
    }
    Ok(out)
}

/// Parse an `ids: i1, i2, ...` selection line. `ids: none` (or any ids line
/// without integers) is a valid empty selection; a reply without an ids
/// line at all is a parse failure.
pub fn parse_relevant_ids(text: &str) -> Result<BTreeSet<usize>> {
    let mut found_line = false;
    let mut ids = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim();
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("ids:") {
            found_line = true;
            for part in rest.split(|c: char| !c.is_ascii_digit()) {
                if let Ok(id) = part.parse::<usize>() {
                    ids.insert(id);
                }
            }
        }
    }
    if !found_line {
        return Err(Error::ReplyParseFailed {
            what: "no `ids:` line in helper reply".into(),
        });
    }
    Ok(ids)
}

/// Parse `id: score` lines with scores in 1..=5. Out-of-range or malformed
/// lines are skipped.
pub fn parse_scores(text: &str) -> Result<Vec<(usize, u8)>> {
    let mut out = Vec::new();
    for seg in segments(text) {
        if let Some((k, v)) = seg.split_once(':') {
            if let (Ok(id), Ok(score)) = (k.trim().parse::<usize>(), v.trim().parse::<u8>()) {
                if (1..=5).contains(&score) {
                    out.push((id, score));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::ReplyParseFailed {
            what: "no scores found in helper reply".into(),
        });
    }
    Ok(out)
}

/// First number appearing in a free-form reply, for single-count answers.
pub fn parse_first_number(text: &str) -> Result<f64> {
    for token in text.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')) {
        if token.is_empty() || token == "-" || token == "." {
            continue;
        }
        if let Ok(v) = token.parse::<f64>() {
            return Ok(v);
        }
    }
    Err(Error::ReplyParseFailed {
        what: format!("no number in reply {text:?}"),
    })
}
