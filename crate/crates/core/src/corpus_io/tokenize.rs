//! Whitespace/punctuation tokenizer with a simple sentence splitter.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::schema::Span;

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "pt", "approx", "appt", "etc", "vs", "st", "jr", "sr",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Character span in section coordinates.
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub document_id: String,
    pub tokens: Vec<Token>,
    /// Token index ranges, one per sentence; never empty.
    pub sentences: Vec<Range<usize>>,
}

impl TokenizedDocument {
    pub fn sentence_tokens(&self) -> impl Iterator<Item = &[Token]> + '_ {
        self.sentences.iter().map(|r| &self.tokens[r.clone()])
    }

    /// Token range `[first, last]` covering `span`, if both ends fall on
    /// token boundaries inside one sentence.
    pub fn token_range(&self, span: Span) -> Option<(usize, usize)> {
        let first = self.tokens.iter().position(|t| t.span.start == span.start)?;
        let last = self.tokens.iter().position(|t| t.span.end == span.end)?;
        (first <= last).then_some((first, last))
    }

    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentences.iter().position(|r| r.contains(&token))
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn tokenize(section_text: &str) -> TokenizedDocument {
    tokenize_document("", section_text)
}

pub fn tokenize_document(document_id: &str, section_text: &str) -> TokenizedDocument {
    let chars: Vec<char> = section_text.chars().collect();
    let mut tokens = Vec::new();
    // newline_before[i]: a line break separates token i from token i-1
    let mut newline_before = Vec::new();
    let mut newline = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            newline |= c == '\n';
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        if !is_punct(c) {
            while i < chars.len() && !chars[i].is_whitespace() && !is_punct(chars[i]) {
                i += 1;
            }
        }
        tokens.push(Token {
            text: chars[start..i].iter().collect(),
            span: Span::new(start, i),
        });
        newline_before.push(std::mem::take(&mut newline));
    }

    let mut sentences = Vec::new();
    let mut start = 0;
    for i in 0..tokens.len() {
        if i > start && newline_before[i] {
            sentences.push(start..i);
            start = i;
        }
        let ends = match tokens[i].text.as_str() {
            ";" => true,
            "." => {
                let prev = i.checked_sub(1).map(|p| tokens[p].text.to_lowercase());
                !prev.is_some_and(|p| ABBREVIATIONS.contains(&p.as_str()))
            }
            _ => false,
        };
        if ends {
            sentences.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        sentences.push(start..tokens.len());
    }

    TokenizedDocument {
        document_id: document_id.to_string(),
        tokens,
        sentences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(d: &TokenizedDocument) -> Vec<&str> {
        d.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn detaches_punctuation() {
        let d = tokenize("Tobacco: denies");
        assert_eq!(texts(&d), ["Tobacco", ":", "denies"]);
        let spans: Vec<Span> = d.tokens.iter().map(|t| t.span).collect();
        assert_eq!(spans, [Span::new(0, 7), Span::new(7, 8), Span::new(9, 15)]);
        assert_eq!(d.sentences, vec![0..3]);
    }

    #[test]
    fn empty_input() {
        let d = tokenize("");
        assert!(d.tokens.is_empty());
        assert!(d.sentences.is_empty());
    }

    #[test]
    fn quit_two_years_ago() {
        // hand segmentation: quit | 2yrs | ago | .
        let d = tokenize("quit 2yrs ago.");
        assert_eq!(texts(&d), ["quit", "2yrs", "ago", "."]);
        assert_eq!(d.sentences, vec![0..4]);
    }

    #[test]
    fn sentence_boundaries() {
        let d = tokenize("Tobacco: denies\nEtOH: socially; no drugs. Dr. Smith saw pt.");
        let sents: Vec<Vec<&str>> = d
            .sentence_tokens()
            .map(|s| s.iter().map(|t| t.text.as_str()).collect())
            .collect();
        assert_eq!(sents[0], ["Tobacco", ":", "denies"]);
        assert_eq!(sents[1], ["EtOH", ":", "socially", ";"]);
        assert_eq!(sents[2], ["no", "drugs", "."]);
        // "Dr." and trailing "pt." do not split
        assert_eq!(sents[3], ["Dr", ".", "Smith", "saw", "pt", "."]);
        assert_eq!(sents.len(), 4);
    }

    #[test]
    fn token_range_lookup() {
        let d = tokenize("smokes 1 ppd daily");
        assert_eq!(d.token_range(Span::new(7, 12)), Some((1, 2)));
        assert_eq!(d.token_range(Span::new(8, 12)), None);
    }

    proptest! {
        #[test]
        fn covers_every_non_whitespace_char_once(text in "[a-zA-Z0-9 .;:,/\n\t-]{0,80}") {
            let d = tokenize(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut covered = vec![0u8; chars.len()];
            let mut last_end = 0;
            for t in &d.tokens {
                prop_assert!(t.span.start >= last_end);
                last_end = t.span.end;
                let slice: String = chars[t.span.start..t.span.end].iter().collect();
                prop_assert_eq!(&slice, &t.text);
                for c in &mut covered[t.span.start..t.span.end] { *c += 1; }
            }
            for (c, n) in chars.iter().zip(&covered) {
                prop_assert_eq!(*n, u8::from(!c.is_whitespace()));
            }
            let mut next = 0;
            for r in &d.sentences {
                prop_assert!(!r.is_empty());
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, d.tokens.len());
        }
    }
}
