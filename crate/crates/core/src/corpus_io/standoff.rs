//! BRAT-style standoff annotations.
//!
//! ```text
//! T1\tTobacco 0 7\tsmoking
//! T2\tStatusTime 9 15\tdenies
//! A1\tStatusTimeVal T2 none
//! E1\tTobacco:T1 Status:T2
//! ```
//!
//! `T` lines are typed character spans, `A` lines attach a subtype to a
//! labeled-argument span (attribute `<LabeledArgType>Val`), `E` lines
//! assemble a trigger and its arguments. Argument roles are the span-only
//! type names, `Status` for StatusTime/StatusEmploy and `Type` for
//! TypeLiving; a numeric suffix (`Amount2`) is accepted.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::Document;
use crate::schema::{
    AnnotationSet, Argument, EntityKind, Event, LabelInventory, LabeledArgType, OrphanEntity, Span,
    SpanOnlyArgType, SubtypeLabel, Trigger,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StandoffError {
    #[error("malformed line: line {line}")]
    Malformed { line: usize },
    #[error("span out of range: line {line}")]
    SpanOutOfRange { line: usize },
    #[error("unknown type name {token:?}: line {line}")]
    UnknownType { line: usize, token: String },
    #[error("unknown subtype {token:?} for {arg_type}: line {line}")]
    UnknownSubtype {
        line: usize,
        arg_type: LabeledArgType,
        token: String,
    },
    #[error("unknown annotation id {id}: line {line}")]
    UnknownId { line: usize, id: String },
    #[error("duplicate annotation id {id}: line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("role {role} does not fit {entity}: line {line}")]
    RoleMismatch {
        line: usize,
        role: String,
        entity: String,
    },
    #[error("labeled argument {id} has no subtype attribute: line {line}")]
    MissingSubtype { line: usize, id: String },
    #[error("Method arguments are disabled in the label inventory: line {line}")]
    MethodDisabled { line: usize },
}

struct TextBound {
    line: usize,
    kind: EntityKind,
    span: Span,
    subtype: Option<SubtypeLabel>,
}

/// Parses annotations for `text` and wraps the text as a section-only document.
pub fn parse_standoff(
    document_id: &str,
    text: &str,
    ann: &str,
    inv: &LabelInventory,
) -> Result<(Document, AnnotationSet), StandoffError> {
    let anns = parse_annotations(document_id, text, ann, inv)?;
    Ok((Document::from_section(document_id, text), anns))
}

pub fn parse_annotations(
    document_id: &str,
    text: &str,
    ann: &str,
    inv: &LabelInventory,
) -> Result<AnnotationSet, StandoffError> {
    let text_len = text.chars().count();
    let mut bounds: HashMap<String, TextBound> = HashMap::new();
    let mut bound_order: Vec<String> = Vec::new();
    let mut event_lines: Vec<(usize, &str)> = Vec::new();
    let mut ids = HashSet::new();

    for (i, raw) in ann.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut fields = raw.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let body = fields.next().ok_or(StandoffError::Malformed { line })?;
        if !ids.insert(id.to_string()) {
            return Err(StandoffError::DuplicateId {
                line,
                id: id.to_string(),
            });
        }
        match id.chars().next() {
            Some('T') => {
                let mut parts = body.split(' ');
                let (Some(ty), Some(s), Some(e), None) =
                    (parts.next(), parts.next(), parts.next(), parts.next())
                else {
                    return Err(StandoffError::Malformed { line });
                };
                let kind: EntityKind = ty.parse().map_err(|_| StandoffError::UnknownType {
                    line,
                    token: ty.to_string(),
                })?;
                if kind == EntityKind::SpanOnly(SpanOnlyArgType::Method) && !inv.include_method() {
                    return Err(StandoffError::MethodDisabled { line });
                }
                let (Ok(start), Ok(end)) = (s.parse::<usize>(), e.parse::<usize>()) else {
                    return Err(StandoffError::Malformed { line });
                };
                let span = Span::new(start, end);
                if !span.is_valid_for(text_len) {
                    return Err(StandoffError::SpanOutOfRange { line });
                }
                bounds.insert(
                    id.to_string(),
                    TextBound {
                        line,
                        kind,
                        span,
                        subtype: None,
                    },
                );
                bound_order.push(id.to_string());
            }
            Some('A') => {
                let mut parts = body.splitn(3, ' ');
                let (Some(name), Some(target), Some(value)) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(StandoffError::Malformed { line });
                };
                let arg_type: LabeledArgType = name
                    .strip_suffix("Val")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| StandoffError::UnknownType {
                        line,
                        token: name.to_string(),
                    })?;
                let subtype: SubtypeLabel = value
                    .trim()
                    .parse()
                    .ok()
                    .filter(|s: &SubtypeLabel| s.arg_type() == arg_type)
                    .ok_or_else(|| StandoffError::UnknownSubtype {
                        line,
                        arg_type,
                        token: value.to_string(),
                    })?;
                let tb = bounds.get_mut(target).ok_or_else(|| StandoffError::UnknownId {
                    line,
                    id: target.to_string(),
                })?;
                if tb.kind != EntityKind::Labeled(arg_type) {
                    return Err(StandoffError::RoleMismatch {
                        line,
                        role: name.to_string(),
                        entity: tb.kind.as_str().to_string(),
                    });
                }
                tb.subtype = Some(subtype);
            }
            Some('E') => event_lines.push((line, body)),
            _ => return Err(StandoffError::Malformed { line }),
        }
    }

    let mut referenced = HashSet::new();
    let mut events = Vec::new();
    for (line, body) in event_lines {
        let mut parts = body.split(' ').filter(|p| !p.is_empty());
        let head = parts.next().ok_or(StandoffError::Malformed { line })?;
        let (ty, tid) = head.split_once(':').ok_or(StandoffError::Malformed { line })?;
        let tb = bounds.get(tid).ok_or_else(|| StandoffError::UnknownId {
            line,
            id: tid.to_string(),
        })?;
        let EntityKind::Trigger(event_type) = tb.kind else {
            return Err(StandoffError::RoleMismatch {
                line,
                role: ty.to_string(),
                entity: tb.kind.as_str().to_string(),
            });
        };
        if event_type.as_str() != ty {
            return Err(StandoffError::RoleMismatch {
                line,
                role: ty.to_string(),
                entity: tb.kind.as_str().to_string(),
            });
        }
        referenced.insert(tid);
        let mut event = Event::new(Trigger {
            event_type,
            span: tb.span,
        });
        for part in parts {
            let (role, aid) = part.split_once(':').ok_or(StandoffError::Malformed { line })?;
            let role = role.trim_end_matches(|c: char| c.is_ascii_digit());
            let ab = bounds.get(aid).ok_or_else(|| StandoffError::UnknownId {
                line,
                id: aid.to_string(),
            })?;
            let mismatch = || StandoffError::RoleMismatch {
                line,
                role: role.to_string(),
                entity: ab.kind.as_str().to_string(),
            };
            let arg = match ab.kind {
                EntityKind::SpanOnly(arg_type) if arg_type.as_str() == role => Argument::SpanOnly {
                    arg_type,
                    span: ab.span,
                },
                EntityKind::Labeled(arg_type) if arg_type.role() == role => Argument::Labeled {
                    arg_type,
                    subtype: ab.subtype.ok_or_else(|| StandoffError::MissingSubtype {
                        line: ab.line,
                        id: aid.to_string(),
                    })?,
                    span: ab.span,
                },
                _ => return Err(mismatch()),
            };
            referenced.insert(aid);
            event.arguments.push(arg);
        }
        events.push(event);
    }

    let orphan_entities = bound_order
        .iter()
        .filter(|id| !referenced.contains(id.as_str()))
        .map(|id| {
            let tb = &bounds[id];
            OrphanEntity {
                kind: tb.kind,
                span: tb.span,
                subtype: tb.subtype,
            }
        })
        .collect();

    Ok(AnnotationSet {
        document_id: document_id.to_string(),
        events,
        orphan_entities,
    })
}

struct Writer<'a> {
    text: &'a str,
    out: String,
    next_t: usize,
    next_a: usize,
    ids: BTreeMap<(EntityKind, Span, Option<SubtypeLabel>), String>,
}

impl Writer<'_> {
    fn entity(&mut self, kind: EntityKind, span: Span, subtype: Option<SubtypeLabel>, shared: bool) -> String {
        if shared {
            if let Some(id) = self.ids.get(&(kind, span, subtype)) {
                return id.clone();
            }
        }
        self.next_t += 1;
        let id = format!("T{}", self.next_t);
        let surface: String = super::span_text(self.text, span)
            .chars()
            .map(|c| if c == '\n' || c == '\t' || c == '\r' { ' ' } else { c })
            .collect();
        let _ = writeln!(
            self.out,
            "{id}\t{} {} {}\t{surface}",
            kind.as_str(),
            span.start,
            span.end
        );
        if let (EntityKind::Labeled(t), Some(s)) = (kind, subtype) {
            self.next_a += 1;
            let _ = writeln!(self.out, "A{}\t{}Val {id} {}", self.next_a, t.as_str(), s.as_str());
        }
        if shared {
            self.ids.insert((kind, span, subtype), id.clone());
        }
        id
    }
}

/// Serializes `anns` against the document's section text. Events are
/// written in document order; identical entities are shared between events.
pub fn serialize_standoff(doc: &Document, anns: &AnnotationSet) -> String {
    let mut w = Writer {
        text: &doc.section_text,
        out: String::new(),
        next_t: 0,
        next_a: 0,
        ids: BTreeMap::new(),
    };
    let mut order: Vec<&Event> = anns.events.iter().collect();
    order.sort_by_key(|e| e.trigger);
    for (n, e) in order.iter().enumerate() {
        let tid = w.entity(EntityKind::Trigger(e.trigger.event_type), e.trigger.span, None, true);
        let mut line = format!("E{}\t{}:{tid}", n + 1, e.trigger.event_type.as_str());
        for a in &e.arguments {
            let (kind, role, subtype) = match *a {
                Argument::SpanOnly { arg_type, .. } => {
                    (EntityKind::SpanOnly(arg_type), arg_type.as_str(), None)
                }
                Argument::Labeled {
                    arg_type, subtype, ..
                } => (EntityKind::Labeled(arg_type), arg_type.role(), Some(subtype)),
            };
            let aid = w.entity(kind, a.span(), subtype, true);
            let _ = write!(line, " {role}:{aid}");
        }
        w.out.push_str(&line);
        w.out.push('\n');
    }
    for o in &anns.orphan_entities {
        w.entity(o.kind, o.span, o.subtype, false);
    }
    w.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::EventType;

    const TEXT: &str = "smoking, denies";
    const ANN: &str = "T1\tTobacco 0 7\tsmoking\nT2\tStatusTime 9 15\tdenies\nA1\tStatusTimeVal T2 none\nE1\tTobacco:T1 Status:T2\n";

    fn inv() -> LabelInventory {
        LabelInventory::default()
    }

    #[test]
    fn parses_single_event() {
        let (_, a) = parse_standoff("d", TEXT, ANN, &inv()).unwrap();
        assert_eq!(a.events.len(), 1);
        let e = &a.events[0];
        assert_eq!(e.trigger.event_type, EventType::Tobacco);
        assert_eq!(
            e.arguments,
            vec![Argument::Labeled {
                arg_type: LabeledArgType::StatusTime,
                subtype: SubtypeLabel::None,
                span: Span::new(9, 15)
            }]
        );
        assert!(a.orphan_entities.is_empty());
    }

    #[test]
    fn serializes_back_to_same_lines() {
        let (d, a) = parse_standoff("d", TEXT, ANN, &inv()).unwrap();
        assert_eq!(serialize_standoff(&d, &a), ANN);
    }

    #[test]
    fn span_out_of_range() {
        let text = "x".repeat(20);
        let err = parse_standoff("d", &text, "T1\tTobacco 0 99\tsmoking", &inv()).unwrap_err();
        assert_eq!(err.to_string(), "span out of range: line 1");
    }

    #[test]
    fn empty_content() {
        let (d, a) = parse_standoff("d", TEXT, "", &inv()).unwrap();
        assert!(a.events.is_empty() && a.orphan_entities.is_empty());
        assert_eq!(serialize_standoff(&d, &a), "");
    }

    #[test]
    fn errors_name_line_and_token() {
        let err = parse_annotations("d", TEXT, "T1\tSmoking 0 7\tsmoking", &inv()).unwrap_err();
        assert_eq!(err.to_string(), "unknown type name \"Smoking\": line 1");
        let err = parse_annotations("d", TEXT, "T1\tTobacco 0 7\n\nT2 broken", &inv()).unwrap_err();
        assert_eq!(err, StandoffError::Malformed { line: 3 });
        let err = parse_annotations("d", TEXT, "T1\tTobacco 0 7\tx\nE1\tTobacco:T1 Status:T9", &inv())
            .unwrap_err();
        assert!(matches!(err, StandoffError::UnknownId { line: 2, .. }));
        let err =
            parse_annotations("d", TEXT, "T1\tStatusTime 9 15\tx\nA1\tStatusTimeVal T1 retired", &inv())
                .unwrap_err();
        assert!(matches!(err, StandoffError::UnknownSubtype { line: 2, .. }));
    }

    #[test]
    fn shared_argument_and_orphans() {
        let text = "Denies tobacco, alcohol. Lives alone";
        let ann = "T1\tStatusTime 0 6\tDenies\nA1\tStatusTimeVal T1 none\nT2\tTobacco 7 14\ttobacco\n\
                   T3\tAlcohol 16 23\talcohol\nE1\tTobacco:T2 Status:T1\nE2\tAlcohol:T3 Status:T1\n\
                   T4\tTypeLiving 31 36\talone\nA2\tTypeLivingVal T4 alone\n";
        let (d, a) = parse_standoff("d", text, ann, &inv()).unwrap();
        assert_eq!(a.events.len(), 2);
        assert_eq!(a.orphan_entities.len(), 1);
        assert_eq!(a.orphan_entities[0].subtype, Some(SubtypeLabel::Alone));
        let out = serialize_standoff(&d, &a);
        assert_eq!(out.matches("StatusTime 0 6").count(), 1);
        let again = parse_annotations("d", text, &out, &inv()).unwrap();
        assert_eq!(again.normalized(), a.normalized());
    }

    #[test]
    fn two_events_numbered_in_document_order() {
        let text = "EtOH: none. Tobacco: denies";
        let mut a = AnnotationSet::new("d");
        for (t, s, e, ss, se) in [(EventType::Tobacco, 12, 19, 21, 27), (EventType::Alcohol, 0, 4, 6, 10)] {
            let mut ev = Event::new(Trigger { event_type: t, span: Span::new(s, e) });
            ev.arguments.push(Argument::Labeled {
                arg_type: LabeledArgType::StatusTime,
                subtype: SubtypeLabel::None,
                span: Span::new(ss, se),
            });
            a.events.push(ev);
        }
        let out = serialize_standoff(&Document::from_section("d", text), &a);
        let events: Vec<&str> = out.lines().filter(|l| l.starts_with('E')).collect();
        assert_eq!(events, ["E1\tAlcohol:T1 Status:T2", "E2\tTobacco:T3 Status:T4"]);
    }
}
