//! Social-history section extraction.

use std::sync::OnceLock;

use regex::Regex;

pub const DEFAULT_HEADERS: &[&str] = &["SOCIAL HISTORY", "SOCIAL HX", "SHX"];

/// A section located inside a note. `offset` is in characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub text: String,
    pub offset: usize,
}

fn terminator() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Z][A-Z /]+:").unwrap())
}

/// Byte offset just past a matching header (and its colon) on `line`.
fn header_end(line: &str, headers: &[String]) -> Option<usize> {
    let lead = line.len() - line.trim_start().len();
    let rest = &line[lead..];
    for h in headers {
        let Some(candidate) = rest.get(..h.len()) else {
            continue;
        };
        if !candidate.eq_ignore_ascii_case(h) {
            continue;
        }
        let after = &rest[h.len()..];
        if after.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            continue;
        }
        let mut end = lead + h.len();
        let trimmed = after.trim_start_matches([' ', '\t']);
        if let Some(stripped) = trimmed.strip_prefix(':') {
            end = line.len() - stripped.len();
        } else if !trimmed.is_empty() {
            // "Social history of ..." inside a sentence is not a header.
            continue;
        }
        return Some(end);
    }
    None
}

/// Returns the text between the first recognized header and the next
/// all-caps header line (or the end of the note).
pub fn extract_social_history(full_text: &str, headers: &[String]) -> Option<Section> {
    let mut pos = 0;
    let mut start = None;
    for line in full_text.split_inclusive('\n') {
        let line_start = pos;
        pos += line.len();
        match start {
            None => {
                if let Some(end) = header_end(line.trim_end_matches(['\n', '\r']), headers) {
                    start = Some(line_start + end);
                }
            }
            Some(s) => {
                if terminator().is_match(line) {
                    return build(full_text, s, line_start);
                }
            }
        }
    }
    start.and_then(|s| build(full_text, s, full_text.len()))
}

fn build(full_text: &str, start: usize, end: usize) -> Option<Section> {
    let raw = &full_text[start..end];
    let lead = raw.len() - raw.trim_start().len();
    let text = raw.trim();
    if text.is_empty() {
        return None;
    }
    let byte_offset = start + lead;
    Some(Section {
        text: text.to_string(),
        offset: full_text[..byte_offset].chars().count(),
    })
}

pub fn default_headers() -> Vec<String> {
    DEFAULT_HEADERS.iter().map(|s| s.to_string()).collect()
}
