//! Template-grammar generator for gold-annotated social-history corpora.
//!
//! A template is a sentence pattern with slots:
//!
//! - `{Trigger}` / `{Trigger@1}`: trigger phrase of event 0 / event 1;
//! - `{Amount}`, `{Type}`, ...: span-only argument of event 0;
//! - `{StatusTime@0,1,2}`: one labeled span shared by events 0, 1 and 2;
//! - `{StatusEmploy=employed}`: labeled slot with a fixed subtype.
//!
//! Labeled slots without a fixed subtype draw the subtype from the grammar's
//! weights, then a phrase uniformly from that subtype's phrase list.

use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CorpusPartition, Document, NoteType, PartitionName};
use crate::schema::{
    argument_permitted, required_labeled, AnnotationSet, Argument, Event, EventType,
    LabelInventory, LabeledArgType, Span, SpanOnlyArgType, SubtypeLabel, Trigger,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("grammar has no templates")]
    Empty,
    #[error("template {index}: {message}")]
    InvalidTemplate { index: usize, message: String },
    #[error("invalid grammar: {0}")]
    Invalid(String),
    #[error("grammar json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub events: Vec<EventType>,
    pub weight: f64,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeChoice {
    pub subtype: SubtypeLabel,
    pub weight: f64,
    pub phrases: Vec<String>,
}

fn default_docs_per_patient() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGrammar {
    pub seed: u64,
    /// Inclusive range of template sentences per document.
    pub events_per_doc: (usize, usize),
    #[serde(default)]
    pub filler_probability: f64,
    #[serde(default)]
    pub fillers: Vec<String>,
    #[serde(default = "default_docs_per_patient")]
    pub docs_per_patient: usize,
    #[serde(default)]
    pub specialties: Vec<String>,
    pub templates: Vec<Template>,
    pub triggers: BTreeMap<EventType, Vec<String>>,
    pub labeled: BTreeMap<LabeledArgType, Vec<SubtypeChoice>>,
    #[serde(default)]
    pub span_only: BTreeMap<EventType, BTreeMap<SpanOnlyArgType, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq)]
enum SlotKind {
    Trigger,
    SpanOnly(SpanOnlyArgType),
    Labeled(LabeledArgType, Option<SubtypeLabel>),
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    kind: SlotKind,
    events: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Lit(String),
    Slot(Slot),
}

fn parse_slot(body: &str) -> Result<Slot, String> {
    let (body, fixed) = match body.split_once('=') {
        Some((b, f)) => (b, Some(f)),
        None => (body, None),
    };
    let (name, events) = match body.split_once('@') {
        Some((n, e)) => {
            let events = e
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| format!("bad event index in {{{body}}}")))
                .collect::<Result<Vec<_>, _>>()?;
            (n, events)
        }
        None => (body, vec![0]),
    };
    let kind = if name == "Trigger" {
        SlotKind::Trigger
    } else if let Ok(t) = name.parse::<SpanOnlyArgType>() {
        SlotKind::SpanOnly(t)
    } else if let Ok(t) = name.parse::<LabeledArgType>() {
        let fixed = fixed
            .map(|f| {
                f.parse::<SubtypeLabel>()
                    .ok()
                    .filter(|s| s.arg_type() == t)
                    .ok_or_else(|| format!("subtype {f:?} not valid for {t}"))
            })
            .transpose()?;
        SlotKind::Labeled(t, fixed)
    } else {
        return Err(format!("unknown slot {name:?}"));
    };
    if fixed.is_some() && !matches!(kind, SlotKind::Labeled(..)) {
        return Err(format!("only labeled slots take a fixed subtype: {{{body}}}"));
    }
    Ok(Slot { kind, events })
}

fn parse_pattern(pattern: &str) -> Result<Vec<Piece>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Lit(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| "unclosed slot".to_string())?
            + open;
        out.push(Piece::Slot(parse_slot(&rest[open + 1..close])?));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Lit(rest.to_string()));
    }
    Ok(out)
}

impl SynthGrammar {
    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        let g: SynthGrammar = serde_json::from_str(s)?;
        g.validate(&LabelInventory::new(true))?;
        Ok(g)
    }

    pub fn default_grammar() -> Self {
        Self::from_json(include_str!("../../assets/default_grammar.json"))
            .expect("bundled grammar is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grammar serializes")
    }

    /// Every template expands to events that pass validation under `inv`.
    pub fn validate(&self, inv: &LabelInventory) -> Result<(), SynthError> {
        if self.templates.is_empty() {
            return Err(SynthError::Empty);
        }
        let (lo, hi) = self.events_per_doc;
        if lo > hi {
            return Err(SynthError::Invalid("events_per_doc range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.filler_probability) {
            return Err(SynthError::Invalid("filler_probability outside [0, 1]".into()));
        }
        if self.filler_probability > 0.0 && self.fillers.is_empty() {
            return Err(SynthError::Invalid("filler_probability > 0 without fillers".into()));
        }
        if self.templates.iter().any(|t| !(t.weight > 0.0)) {
            return Err(SynthError::Invalid("template weights must be positive".into()));
        }
        for (index, t) in self.templates.iter().enumerate() {
            self.validate_template(t, inv)
                .map_err(|message| SynthError::InvalidTemplate { index, message })?;
        }
        Ok(())
    }

    fn validate_template(&self, t: &Template, inv: &LabelInventory) -> Result<(), String> {
        if t.events.is_empty() {
            return Err("no events".into());
        }
        let pieces = parse_pattern(&t.pattern)?;
        let mut triggers = vec![0; t.events.len()];
        let mut labeled = vec![0; t.events.len()];
        for p in &pieces {
            let Piece::Slot(slot) = p else { continue };
            for &ei in &slot.events {
                let et = *t.events.get(ei).ok_or_else(|| format!("event index {ei} out of range"))?;
                match slot.kind {
                    SlotKind::Trigger => {
                        if slot.events.len() != 1 {
                            return Err("trigger slots belong to exactly one event".into());
                        }
                        if self.triggers.get(&et).is_none_or(|v| v.is_empty()) {
                            return Err(format!("no trigger phrases for {et}"));
                        }
                        triggers[ei] += 1;
                    }
                    SlotKind::SpanOnly(a) => {
                        let probe = Argument::SpanOnly { arg_type: a, span: Span::new(0, 1) };
                        if !argument_permitted(et, &probe, inv) {
                            return Err(format!("{a} not permitted for {et}"));
                        }
                        if self.span_only.get(&et).and_then(|m| m.get(&a)).is_none_or(|v| v.is_empty()) {
                            return Err(format!("no {a} phrases for {et}"));
                        }
                    }
                    SlotKind::Labeled(a, fixed) => {
                        if required_labeled(et) != a {
                            return Err(format!("{a} not permitted for {et}"));
                        }
                        let choices = self.labeled.get(&a).ok_or_else(|| format!("no {a} phrases"))?;
                        if choices.is_empty() || choices.iter().any(|c| c.phrases.is_empty() || c.subtype.arg_type() != a) {
                            return Err(format!("bad {a} choices"));
                        }
                        if let Some(f) = fixed {
                            if !choices.iter().any(|c| c.subtype == f) {
                                return Err(format!("no phrases for fixed subtype {}", f.as_str()));
                            }
                        }
                        labeled[ei] += 1;
                    }
                }
            }
        }
        if triggers.iter().any(|&n| n != 1) {
            return Err("every event needs exactly one trigger slot".into());
        }
        if labeled.iter().any(|&n| n != 1) {
            return Err("every event needs exactly one labeled slot".into());
        }
        Ok(())
    }
}

struct Expansion {
    text: String,
    events: Vec<Event>,
}

struct Generator<'g> {
    g: &'g SynthGrammar,
    rng: ChaCha8Rng,
    template_dist: WeightedIndex<f64>,
    patterns: Vec<Vec<Piece>>,
}

impl<'g> Generator<'g> {
    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.gen_range(0..items.len())]
    }

    fn expand(&mut self, ti: usize, base: usize) -> Expansion {
        let t = &self.g.templates[ti];
        let pieces = self.patterns[ti].clone();
        let mut text = String::new();
        let mut len = 0;
        let mut triggers: Vec<Option<Span>> = vec![None; t.events.len()];
        let mut args: Vec<Vec<Argument>> = vec![Vec::new(); t.events.len()];
        for p in pieces {
            let phrase: String;
            let slot = match p {
                Piece::Lit(s) => {
                    len += s.chars().count();
                    text.push_str(&s);
                    continue;
                }
                Piece::Slot(slot) => slot,
            };
            let mut subtype = None;
            match &slot.kind {
                SlotKind::Trigger => {
                    let et = t.events[slot.events[0]];
                    phrase = self.pick(&self.g.triggers[&et]).clone();
                }
                SlotKind::SpanOnly(a) => {
                    let et = t.events[slot.events[0]];
                    phrase = self.pick(&self.g.span_only[&et][a]).clone();
                }
                SlotKind::Labeled(a, fixed) => {
                    let choices = &self.g.labeled[a];
                    let choice = match fixed {
                        Some(f) => choices.iter().find(|c| c.subtype == *f).unwrap(),
                        None => {
                            let dist = WeightedIndex::new(choices.iter().map(|c| c.weight))
                                .expect("positive subtype weights");
                            &choices[dist.sample(&mut self.rng)]
                        }
                    };
                    subtype = Some(choice.subtype);
                    phrase = self.pick(&choice.phrases).clone();
                }
            }
            let n = phrase.chars().count();
            let span = Span::new(base + len, base + len + n);
            len += n;
            text.push_str(&phrase);
            for &ei in &slot.events {
                match slot.kind {
                    SlotKind::Trigger => triggers[ei] = Some(span),
                    SlotKind::SpanOnly(arg_type) => args[ei].push(Argument::SpanOnly { arg_type, span }),
                    SlotKind::Labeled(arg_type, _) => args[ei].push(Argument::Labeled {
                        arg_type,
                        subtype: subtype.unwrap(),
                        span,
                    }),
                }
            }
        }
        let events = t
            .events
            .iter()
            .zip(triggers)
            .zip(args)
            .map(|((&event_type, span), arguments)| {
                Event {
                    trigger: Trigger {
                        event_type,
                        span: span.expect("validated: one trigger per event"),
                    },
                    arguments,
                }
                .normalized()
            })
            .collect();
        Expansion { text, events }
    }

    fn document(&mut self, index: usize, n_patients: usize) -> (Document, AnnotationSet) {
        let (lo, hi) = self.g.events_per_doc;
        let n_sentences = self.rng.gen_range(lo..=hi);
        let mut section = String::new();
        let mut len = 0;
        let mut events = Vec::new();
        for k in 0..n_sentences {
            if k > 0 {
                section.push('\n');
                len += 1;
            }
            if self.g.filler_probability > 0.0 && self.rng.gen_bool(self.g.filler_probability) {
                let f = self.pick(&self.g.fillers).clone();
                len += f.chars().count() + 1;
                section.push_str(&f);
                section.push('\n');
            }
            let ti = self.template_dist.sample(&mut self.rng);
            let ex = self.expand(ti, len);
            len += ex.text.chars().count();
            section.push_str(&ex.text);
            events.extend(ex.events);
        }
        events.sort_by_key(|e| e.trigger);

        let id = format!("doc{index:05}");
        let patient_id = format!("P{:04}", self.rng.gen_range(0..n_patients.max(1)));
        let year = if self.rng.gen_bool(0.9) { 2021 } else { 2020 };
        let timestamp = format!(
            "{year}-{:02}-{:02}",
            self.rng.gen_range(1..=12),
            self.rng.gen_range(1..=28)
        );
        let note_type = *self.pick(&NoteType::ALL);
        let specialty = match note_type {
            NoteType::Emergency => Some("Emergency Medicine".to_string()),
            _ if self.g.specialties.is_empty() => None,
            _ => Some(self.pick(&self.g.specialties).clone()),
        };
        let prelude = *self.pick(&["cough for 3 days", "follow up visit", "chest pain", "annual exam"]);
        let head = format!("HPI: {prelude}\nSOCIAL HISTORY:\n");
        let full_text = format!("{head}{section}\nMEDICATIONS:\nsee list\n");
        let doc = Document {
            id: id.clone(),
            patient_id,
            timestamp,
            note_type,
            specialty,
            section_offset: head.chars().count(),
            full_text,
            section_text: section,
        };
        let anns = AnnotationSet {
            document_id: id,
            events,
            orphan_entities: Vec::new(),
        };
        (doc, anns)
    }
}

/// Generates `n_docs` documents; identical `(grammar, n_docs, seed)` gives
/// identical output.
pub fn generate_corpus(grammar: &SynthGrammar, n_docs: usize, seed: u64) -> Result<CorpusPartition, SynthError> {
    grammar.validate(&LabelInventory::new(true))?;
    let patterns = grammar
        .templates
        .iter()
        .map(|t| parse_pattern(&t.pattern).expect("validated"))
        .collect();
    let template_dist = WeightedIndex::new(grammar.templates.iter().map(|t| t.weight))
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut gen = Generator {
        g: grammar,
        rng: ChaCha8Rng::seed_from_u64(seed),
        template_dist,
        patterns,
    };
    let n_patients = n_docs.div_ceil(grammar.docs_per_patient.max(1));
    let entries = (0..n_docs).map(|i| gen.document(i, n_patients)).collect();
    Ok(CorpusPartition {
        name: PartitionName::Train,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{extract_social_history, default_headers, span_text};
    use crate::schema::validate_event;

    #[test]
    fn zero_docs() {
        let p = generate_corpus(&SynthGrammar::default_grammar(), 0, 7).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn deterministic_for_seed() {
        let g = SynthGrammar::default_grammar();
        let a = generate_corpus(&g, 3, 7).unwrap();
        let b = generate_corpus(&g, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&g, 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_grammar_is_an_error() {
        let mut g = SynthGrammar::default_grammar();
        g.templates.clear();
        assert!(matches!(generate_corpus(&g, 1, 1), Err(SynthError::Empty)));
    }

    #[test]
    fn single_template_contract() {
        let mut g = SynthGrammar::default_grammar();
        g.templates = vec![Template {
            events: vec![EventType::Tobacco],
            weight: 1.0,
            pattern: "{Trigger}: {StatusTime=none}".into(),
        }];
        g.triggers.insert(EventType::Tobacco, vec!["Tobacco".into()]);
        g.labeled.get_mut(&LabeledArgType::StatusTime).unwrap().iter_mut().for_each(|c| {
            if c.subtype == SubtypeLabel::None {
                c.phrases = vec!["denies".into()];
            }
        });
        g.events_per_doc = (1, 1);
        g.filler_probability = 0.0;
        let p = generate_corpus(&g, 1, 1).unwrap();
        let (doc, anns) = &p.entries[0];
        assert_eq!(doc.section_text, "Tobacco: denies");
        assert_eq!(anns.events.len(), 1);
        let e = &anns.events[0];
        assert_eq!(e.trigger, Trigger { event_type: EventType::Tobacco, span: Span::new(0, 7) });
        assert_eq!(
            e.arguments,
            vec![Argument::Labeled {
                arg_type: LabeledArgType::StatusTime,
                subtype: SubtypeLabel::None,
                span: Span::new(9, 15)
            }]
        );
    }

    #[test]
    fn generated_gold_validates_and_aligns_with_text() {
        let inv = LabelInventory::default();
        let p = generate_corpus(&SynthGrammar::default_grammar(), 60, 11).unwrap();
        let headers = default_headers();
        for (doc, anns) in &p.entries {
            assert!(anns.spans_within(doc.section_len()));
            for e in &anns.events {
                assert!(validate_event(e, &inv).is_empty(), "{e:?}");
                assert!(!span_text(&doc.section_text, e.trigger.span).trim().is_empty());
            }
            let s = extract_social_history(&doc.full_text, &headers).unwrap();
            assert_eq!(s.text, doc.section_text);
            assert_eq!(s.offset, doc.section_offset);
        }
    }

    #[test]
    fn subtype_marginals_follow_weights() {
        let mut g = SynthGrammar::default_grammar();
        g.templates.retain(|t| !t.pattern.contains('='));
        let p = generate_corpus(&g, 1500, 3).unwrap();
        for (arg_type, choices) in &g.labeled {
            let mut counts: BTreeMap<SubtypeLabel, usize> = BTreeMap::new();
            let mut total = 0usize;
            for (_, a) in &p.entries {
                for e in &a.events {
                    for (s, _) in e.labeled(*arg_type) {
                        *counts.entry(s).or_default() += 1;
                        total += 1;
                    }
                }
            }
            let wsum: f64 = choices.iter().map(|c| c.weight).sum();
            for c in choices {
                let observed = counts.get(&c.subtype).copied().unwrap_or(0) as f64 / total as f64;
                let expected = c.weight / wsum;
                assert!(
                    (observed - expected).abs() <= 0.05,
                    "{arg_type} {}: observed {observed:.3} expected {expected:.3}",
                    c.subtype.as_str()
                );
            }
        }
    }

    #[test]
    fn grammar_json_round_trip() {
        let g = SynthGrammar::default_grammar();
        assert_eq!(SynthGrammar::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn bad_templates_are_rejected() {
        let mut g = SynthGrammar::default_grammar();
        g.templates = vec![Template {
            events: vec![EventType::Employment],
            weight: 1.0,
            pattern: "{Trigger} {TypeLiving}".into(),
        }];
        assert!(matches!(g.validate(&LabelInventory::default()), Err(SynthError::InvalidTemplate { .. })));
    }
}
