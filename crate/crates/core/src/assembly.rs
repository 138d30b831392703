//! Decoding head outputs into entities and assembling them into events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus_io::{span_text, Document};
use crate::model::{argmax, predict_raw, FileEncoder, ModelError, ModelParams, RawPredictions, Real};
use crate::schema::{
    argument_permitted, AnnotationSet, Argument, EntityLabel, Event, EventType, LabelInventory, LabeledArgType, Span,
    SpanOnlyArgType, SubtypeLabel, Trigger,
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedEntities {
    pub triggers: Vec<Trigger>,
    pub span_only: Vec<(SpanOnlyArgType, Span)>,
    pub labeled: Vec<(LabeledArgType, SubtypeLabel, Span)>,
}

impl DecodedEntities {
    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty() && self.span_only.is_empty() && self.labeled.is_empty()
    }

    pub fn extend(&mut self, other: DecodedEntities) {
        self.triggers.extend(other.triggers);
        self.span_only.extend(other.span_only);
        self.labeled.extend(other.labeled);
    }

    /// The entities and trigger→argument pairs of gold events.
    pub fn from_annotations(anns: &AnnotationSet) -> (DecodedEntities, Vec<(Span, Span)>) {
        let mut d = DecodedEntities::default();
        let mut seen = BTreeSet::new();
        let mut rel = BTreeSet::new();
        for e in &anns.events {
            d.triggers.push(e.trigger);
            for a in &e.arguments {
                if seen.insert(*a) {
                    match *a {
                        Argument::SpanOnly { arg_type, span } => d.span_only.push((arg_type, span)),
                        Argument::Labeled { arg_type, subtype, span } => d.labeled.push((arg_type, subtype, span)),
                    }
                }
                if a.span() != e.trigger.span {
                    rel.insert((e.trigger.span, a.span()));
                }
            }
        }
        (d, rel.into_iter().collect())
    }
}

/// Argmax decoding of one sentence's spans; ties resolve to null.
pub fn decode<T: Real>(raw: &RawPredictions<T>, inv: &LabelInventory) -> DecodedEntities {
    let mut d = DecodedEntities::default();
    for (i, c) in raw.candidates.iter().enumerate() {
        match inv.entity_labels()[argmax(&raw.entity_logits[i])] {
            EntityLabel::Null => {}
            EntityLabel::Event(event_type) => d.triggers.push(Trigger { event_type, span: c.span }),
            EntityLabel::Arg(t) => d.span_only.push((t, c.span)),
        }
        for v in LabeledArgType::ALL_ARRAY {
            let k = argmax(&raw.subtype_logits[i][v.index()]);
            if let Some(s) = inv.subtype_labels(v)[k] {
                d.labeled.push((v, s, c.span));
            }
        }
    }
    d
}

/// Pairs whose relation argmax is `has`, as (head span, tail span).
pub fn has_pairs<T: Real>(raw: &RawPredictions<T>) -> Vec<(Span, Span)> {
    raw.pairs
        .iter()
        .zip(&raw.relation_logits)
        .filter(|(_, z)| argmax(z) == 1)
        .map(|(&(i, j), _)| (raw.candidates[i].span, raw.candidates[j].span))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembly {
    pub events: Vec<Event>,
    /// Attachments rejected by the compatibility table.
    pub dropped_incompatible: usize,
    /// Labeled arguments discarded because the event already had one of
    /// that type starting later.
    pub duplicate_conflicts: usize,
}

/// Builds one event per decoded trigger. An argument joins an event when
/// a `has` pair links the trigger span to the argument span, or when a
/// labeled argument shares the trigger's exact span.
pub fn assemble_events(decoded: &DecodedEntities, relations: &[(Span, Span)], inv: &LabelInventory) -> Assembly {
    let mut by_span: BTreeMap<Span, Vec<Argument>> = BTreeMap::new();
    for &(arg_type, span) in &decoded.span_only {
        by_span.entry(span).or_default().push(Argument::SpanOnly { arg_type, span });
    }
    for &(arg_type, subtype, span) in &decoded.labeled {
        by_span.entry(span).or_default().push(Argument::Labeled { arg_type, subtype, span });
    }
    let mut tails: BTreeMap<Span, BTreeSet<Span>> = BTreeMap::new();
    for &(h, t) in relations {
        tails.entry(h).or_default().insert(t);
    }

    let mut out = Assembly::default();
    let mut triggers: Vec<Trigger> = decoded.triggers.clone();
    triggers.sort();
    triggers.dedup();
    for trigger in triggers {
        let mut args: BTreeSet<Argument> = BTreeSet::new();
        if let Some(own) = by_span.get(&trigger.span) {
            for a in own.iter().filter(|a| matches!(a, Argument::Labeled { .. })) {
                if argument_permitted(trigger.event_type, a, inv) {
                    args.insert(*a);
                }
            }
        }
        let mut consider = |a: &Argument, out: &mut Assembly| {
            if argument_permitted(trigger.event_type, a, inv) {
                args.insert(*a);
            } else {
                out.dropped_incompatible += 1;
            }
        };
        for t in tails.get(&trigger.span).into_iter().flatten() {
            for a in by_span.get(t).into_iter().flatten() {
                consider(a, &mut out);
            }
        }
        let mut event = Event::new(trigger);
        let mut latest: BTreeMap<LabeledArgType, Argument> = BTreeMap::new();
        for a in args {
            match a {
                Argument::SpanOnly { .. } => event.arguments.push(a),
                Argument::Labeled { arg_type, span, .. } => {
                    if let Some(prev) = latest.get(&arg_type) {
                        out.duplicate_conflicts += 1;
                        if prev.span().start >= span.start {
                            continue;
                        }
                    }
                    latest.insert(arg_type, a);
                }
            }
        }
        event.arguments.extend(latest.into_values());
        out.events.push(event.normalized());
    }
    out.events.sort_by_key(|e| e.trigger);
    if out.dropped_incompatible + out.duplicate_conflicts > 0 {
        log::debug!(
            "assembly: {} incompatible attachments dropped, {} duplicate labeled arguments resolved",
            out.dropped_incompatible,
            out.duplicate_conflicts
        );
    }
    out
}

/// Runs the model on a document's section and assembles its events.
pub fn predict_document(
    params: &ModelParams,
    doc: &Document,
    embeddings: Option<&FileEncoder>,
) -> Result<(AnnotationSet, Assembly), ModelError> {
    let inv = params.inventory();
    let (_, raws) = predict_raw(params, doc, embeddings)?;
    let mut decoded = DecodedEntities::default();
    let mut pairs = Vec::new();
    for raw in &raws {
        decoded.extend(decode(raw, &inv));
        pairs.extend(has_pairs(raw));
    }
    let assembly = assemble_events(&decoded, &pairs, &inv);
    let mut anns = AnnotationSet::new(doc.id.clone());
    anns.events = assembly.events.clone();
    Ok((anns, assembly))
}

// JSON events schema.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonArgument {
    #[serde(rename = "type")]
    pub arg_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<String>,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonEvent {
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub trigger: JsonSpan,
    pub arguments: Vec<JsonArgument>,
    #[serde(default)]
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonEvents {
    pub document_id: String,
    pub events: Vec<JsonEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonEventsError {
    #[error("document {document_id}: {message}")]
    Invalid { document_id: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn to_json_events(section_text: &str, anns: &AnnotationSet) -> JsonEvents {
    let jspan = |s: Span| JsonSpan { start: s.start, end: s.end, text: span_text(section_text, s) };
    JsonEvents {
        document_id: anns.document_id.clone(),
        events: anns
            .events
            .iter()
            .map(|e| JsonEvent {
                event_type: e.trigger.event_type,
                trigger: jspan(e.trigger.span),
                arguments: e
                    .arguments
                    .iter()
                    .map(|a| {
                        let s = a.span();
                        JsonArgument {
                            arg_type: a.type_name().to_string(),
                            subtype: match a {
                                Argument::Labeled { subtype, .. } => Some(subtype.as_str().to_string()),
                                Argument::SpanOnly { .. } => None,
                            },
                            start: s.start,
                            end: s.end,
                            text: span_text(section_text, s),
                        }
                    })
                    .collect(),
                incomplete: e.is_incomplete(),
            })
            .collect(),
    }
}

pub fn from_json_events(doc: &JsonEvents) -> Result<AnnotationSet, JsonEventsError> {
    let bad = |message: String| JsonEventsError::Invalid { document_id: doc.document_id.clone(), message };
    let mut anns = AnnotationSet::new(doc.document_id.clone());
    for je in &doc.events {
        let mut e = Event::new(Trigger {
            event_type: je.event_type,
            span: Span::new(je.trigger.start, je.trigger.end),
        });
        for ja in &je.arguments {
            let span = Span::new(ja.start, ja.end);
            let a = if let Ok(arg_type) = ja.arg_type.parse::<SpanOnlyArgType>() {
                Argument::SpanOnly { arg_type, span }
            } else if let Ok(arg_type) = ja.arg_type.parse::<LabeledArgType>() {
                let sub = ja.subtype.as_deref().ok_or_else(|| bad(format!("{arg_type} without subtype")))?;
                let subtype: SubtypeLabel = sub.parse().map_err(|e| bad(format!("{e}")))?;
                if subtype.arg_type() != arg_type {
                    return Err(bad(format!("subtype {sub:?} does not belong to {arg_type}")));
                }
                Argument::Labeled { arg_type, subtype, span }
            } else {
                return Err(bad(format!("unknown argument type {:?}", ja.arg_type)));
            };
            e.arguments.push(a);
        }
        anns.events.push(e);
    }
    Ok(anns.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{generate_corpus, SynthGrammar};
    use crate::model::{ModelConfig, SpanCandidate};
    use crate::schema::validate_event;

    fn trig(t: EventType, s: usize, e: usize) -> Trigger {
        Trigger { event_type: t, span: Span::new(s, e) }
    }

    #[test]
    fn all_null_decodes_to_nothing() {
        let raw = RawPredictions::<f32> {
            candidates: vec![SpanCandidate { start: 0, width: 1, span: Span::new(0, 3) }],
            entity_logits: vec![vec![0.0; 11]],
            subtype_logits: vec![[vec![0.0; 4], vec![0.0; 7], vec![0.0; 5]]],
            pairs: vec![],
            relation_logits: vec![],
        };
        assert!(decode(&raw, &LabelInventory::default()).is_empty());
    }

    #[test]
    fn multi_label_span() {
        let inv = LabelInventory::default();
        let mut ent = vec![0.0f32; 11];
        ent[3] = 5.0; // Tobacco
        let mut st = vec![0.0f32; 4];
        st[2] = 1.0; // current
        let mut amount = vec![0.0f32; 11];
        amount[6] = 2.0;
        let raw = RawPredictions {
            candidates: vec![
                SpanCandidate { start: 0, width: 1, span: Span::new(0, 6) },
                SpanCandidate { start: 1, width: 1, span: Span::new(7, 10) },
            ],
            entity_logits: vec![ent, amount],
            subtype_logits: vec![[st, vec![0.0; 7], vec![0.0; 5]], [vec![0.0; 4], vec![0.0; 7], vec![0.0; 5]]],
            pairs: vec![(0, 1)],
            relation_logits: vec![vec![0.0, 1.0]],
        };
        let d = decode(&raw, &inv);
        assert_eq!(d.triggers, vec![trig(EventType::Tobacco, 0, 6)]);
        assert_eq!(d.labeled, vec![(LabeledArgType::StatusTime, SubtypeLabel::Current, Span::new(0, 6))]);
        assert_eq!(d.span_only, vec![(SpanOnlyArgType::Amount, Span::new(7, 10))]);
        assert_eq!(has_pairs(&raw), vec![(Span::new(0, 6), Span::new(7, 10))]);
    }

    #[test]
    fn attaches_and_filters() {
        let inv = LabelInventory::default();
        let d = DecodedEntities {
            triggers: vec![trig(EventType::Tobacco, 0, 7), trig(EventType::Alcohol, 20, 24)],
            span_only: vec![(SpanOnlyArgType::Amount, Span::new(30, 35))],
            labeled: vec![
                (LabeledArgType::StatusTime, SubtypeLabel::None, Span::new(9, 15)),
                (LabeledArgType::TypeLiving, SubtypeLabel::Alone, Span::new(40, 45)),
            ],
        };
        let rel = vec![
            (Span::new(0, 7), Span::new(9, 15)),
            (Span::new(0, 7), Span::new(30, 35)),
            (Span::new(20, 24), Span::new(30, 35)),
            (Span::new(20, 24), Span::new(40, 45)),
        ];
        let a = assemble_events(&d, &rel, &inv);
        assert_eq!(a.events.len(), 2);
        assert!(!a.events[0].is_incomplete());
        assert_eq!(a.events[0].arguments.len(), 2);
        // shared Amount on both; TypeLiving dropped from Alcohol
        assert!(a.events[1].arguments.contains(&Argument::SpanOnly { arg_type: SpanOnlyArgType::Amount, span: Span::new(30, 35) }));
        assert!(a.events[1].is_incomplete());
        assert_eq!(a.dropped_incompatible, 1);
    }

    #[test]
    fn unlinked_arguments_are_discarded_and_latest_duplicate_wins() {
        let inv = LabelInventory::default();
        let d = DecodedEntities {
            triggers: vec![trig(EventType::Alcohol, 0, 4)],
            span_only: vec![(SpanOnlyArgType::Amount, Span::new(30, 35))],
            labeled: vec![
                (LabeledArgType::StatusTime, SubtypeLabel::Past, Span::new(5, 9)),
                (LabeledArgType::StatusTime, SubtypeLabel::Current, Span::new(10, 14)),
            ],
        };
        let rel = vec![(Span::new(0, 4), Span::new(5, 9)), (Span::new(0, 4), Span::new(10, 14))];
        let a = assemble_events(&d, &rel, &inv);
        assert_eq!(
            a.events[0].arguments,
            vec![Argument::Labeled { arg_type: LabeledArgType::StatusTime, subtype: SubtypeLabel::Current, span: Span::new(10, 14) }]
        );
        assert_eq!(a.duplicate_conflicts, 1);
    }

    #[test]
    fn gold_round_trips_through_assembly() {
        let inv = LabelInventory::default();
        let corpus = generate_corpus(&SynthGrammar::default_grammar(), 80, 21).unwrap();
        for (_, anns) in &corpus.entries {
            let (d, rel) = DecodedEntities::from_annotations(anns);
            let a = assemble_events(&d, &rel, &inv);
            assert_eq!(a.events, anns.normalized().events);
            for e in &a.events {
                assert!(validate_event(e, &inv).iter().all(|v| v.is_incompleteness()));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let corpus = generate_corpus(&SynthGrammar::default_grammar(), 5, 2).unwrap();
        for (doc, anns) in &corpus.entries {
            let j = to_json_events(&doc.section_text, anns);
            let text = serde_json::to_string(&j).unwrap();
            let back: JsonEvents = serde_json::from_str(&text).unwrap();
            assert_eq!(from_json_events(&back).unwrap(), anns.normalized());
        }
        let _ = ModelConfig::default();
    }
}
