//! Event schema, label inventories and the annotation data model.
//!
//! An [`Event`] is a [`Trigger`] (event type plus span) and a list of
//! [`Argument`]s. Arguments are either span-only (type + span) or labeled
//! (type + normalized subtype + span). Which arguments an event type may
//! carry is fixed by [`compatibility_table`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {kind} name: {name:?}")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownName;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownName { kind: $kind, name: s.to_string() }),
                }
            }
        }
    };
}

named_enum!(
    /// The five social-history event types.
    EventType, "event type", {
        Alcohol => "Alcohol",
        Drug => "Drug",
        Tobacco => "Tobacco",
        Employment => "Employment",
        LivingStatus => "LivingStatus",
    }
);

named_enum!(
    /// Arguments described only by a type and a text span.
    SpanOnlyArgType, "span-only argument type", {
        Amount => "Amount",
        Duration => "Duration",
        Frequency => "Frequency",
        History => "History",
        Type => "Type",
        Method => "Method",
    }
);

named_enum!(
    /// Arguments that carry a normalized subtype label.
    LabeledArgType, "labeled argument type", {
        StatusTime => "StatusTime",
        StatusEmploy => "StatusEmploy",
        TypeLiving => "TypeLiving",
    }
);

named_enum!(
    /// Non-null subtype values. Every value belongs to exactly one
    /// [`LabeledArgType`]; the negative `null` label is represented as `None`
    /// wherever a head output can be negative.
    SubtypeLabel, "subtype label", {
        None => "none",
        Current => "current",
        Past => "past",
        Employed => "employed",
        Unemployed => "unemployed",
        Retired => "retired",
        OnDisability => "on disability",
        Student => "student",
        Homemaker => "homemaker",
        Alone => "alone",
        WithFamily => "with family",
        WithOthers => "with others",
        Homeless => "homeless",
    }
);

impl SubtypeLabel {
    pub fn arg_type(self) -> LabeledArgType {
        use SubtypeLabel::*;
        match self {
            None | Current | Past => LabeledArgType::StatusTime,
            Employed | Unemployed | Retired | OnDisability | Student | Homemaker => {
                LabeledArgType::StatusEmploy
            }
            Alone | WithFamily | WithOthers | Homeless => LabeledArgType::TypeLiving,
        }
    }
}

impl LabeledArgType {
    pub const ALL_ARRAY: [LabeledArgType; 3] = [
        LabeledArgType::StatusTime,
        LabeledArgType::StatusEmploy,
        LabeledArgType::TypeLiving,
    ];

    /// Non-null subtype values in head order.
    pub fn subtypes(self) -> &'static [SubtypeLabel] {
        use SubtypeLabel::*;
        match self {
            LabeledArgType::StatusTime => &[None, Current, Past],
            LabeledArgType::StatusEmploy => {
                &[Employed, Unemployed, Retired, OnDisability, Student, Homemaker]
            }
            LabeledArgType::TypeLiving => &[Alone, WithFamily, WithOthers, Homeless],
        }
    }

    pub fn index(self) -> usize {
        match self {
            LabeledArgType::StatusTime => 0,
            LabeledArgType::StatusEmploy => 1,
            LabeledArgType::TypeLiving => 2,
        }
    }

    /// Role name used on standoff event lines.
    pub fn role(self) -> &'static str {
        match self {
            LabeledArgType::StatusTime | LabeledArgType::StatusEmploy => "Status",
            LabeledArgType::TypeLiving => "Type",
        }
    }
}

/// Character span, `start` inclusive and `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of shared characters.
    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn is_valid_for(&self, text_len: usize) -> bool {
        self.start < self.end && self.end <= text_len
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Trigger {
    // field order gives document order under the derived `Ord`
    pub span: Span,
    pub event_type: EventType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Argument {
    SpanOnly {
        arg_type: SpanOnlyArgType,
        span: Span,
    },
    Labeled {
        arg_type: LabeledArgType,
        subtype: SubtypeLabel,
        span: Span,
    },
}

impl Argument {
    pub fn span(&self) -> Span {
        match *self {
            Argument::SpanOnly { span, .. } | Argument::Labeled { span, .. } => span,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Argument::SpanOnly { arg_type, .. } => arg_type.as_str(),
            Argument::Labeled { arg_type, .. } => arg_type.as_str(),
        }
    }

    fn sort_key(&self) -> (Span, u8, &'static str, &'static str) {
        match self {
            Argument::SpanOnly { arg_type, span } => (*span, 0, arg_type.as_str(), ""),
            Argument::Labeled {
                arg_type,
                subtype,
                span,
            } => (*span, 1, arg_type.as_str(), subtype.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub trigger: Trigger,
    pub arguments: Vec<Argument>,
}

impl Event {
    pub fn new(trigger: Trigger) -> Self {
        Event {
            trigger,
            arguments: Vec::new(),
        }
    }

    pub fn labeled(&self, arg_type: LabeledArgType) -> impl Iterator<Item = (SubtypeLabel, Span)> + '_ {
        self.arguments.iter().filter_map(move |a| match *a {
            Argument::Labeled {
                arg_type: t,
                subtype,
                span,
            } if t == arg_type => Some((subtype, span)),
            _ => None,
        })
    }

    /// The event lacks the labeled argument its type requires.
    pub fn is_incomplete(&self) -> bool {
        let required = required_labeled(self.trigger.event_type);
        self.labeled(required).next().is_none()
    }

    /// Arguments in canonical order (span, then kind, then name).
    pub fn normalized(&self) -> Event {
        let mut e = self.clone();
        e.arguments.sort_by_key(|a| a.sort_key());
        e
    }
}

/// An annotated entity that no event references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrphanEntity {
    pub kind: EntityKind,
    pub span: Span,
    pub subtype: Option<SubtypeLabel>,
}

/// Anything a standoff `T` line can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Trigger(EventType),
    SpanOnly(SpanOnlyArgType),
    Labeled(LabeledArgType),
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Trigger(t) => t.as_str(),
            EntityKind::SpanOnly(t) => t.as_str(),
            EntityKind::Labeled(t) => t.as_str(),
        }
    }
}

impl FromStr for EntityKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(t) = s.parse() {
            return Ok(EntityKind::Trigger(t));
        }
        if let Ok(t) = s.parse() {
            return Ok(EntityKind::SpanOnly(t));
        }
        if let Ok(t) = s.parse() {
            return Ok(EntityKind::Labeled(t));
        }
        Err(UnknownName {
            kind: "entity type",
            name: s.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub document_id: String,
    pub events: Vec<Event>,
    pub orphan_entities: Vec<OrphanEntity>,
}

impl AnnotationSet {
    pub fn new(document_id: impl Into<String>) -> Self {
        AnnotationSet {
            document_id: document_id.into(),
            ..Default::default()
        }
    }

    /// Events in document order with canonical argument order.
    pub fn normalized(&self) -> AnnotationSet {
        let mut events: Vec<Event> = self.events.iter().map(Event::normalized).collect();
        events.sort_by(|a, b| a.trigger.cmp(&b.trigger));
        let mut orphans = self.orphan_entities.clone();
        orphans.sort_by_key(|o| (o.span, o.kind, o.subtype));
        AnnotationSet {
            document_id: self.document_id.clone(),
            events,
            orphan_entities: orphans,
        }
    }

    /// Every span referenced by the set lies inside a text of `text_len` characters.
    pub fn spans_within(&self, text_len: usize) -> bool {
        self.events.iter().all(|e| {
            e.trigger.span.is_valid_for(text_len)
                && e.arguments.iter().all(|a| a.span().is_valid_for(text_len))
        }) && self
            .orphan_entities
            .iter()
            .all(|o| o.span.is_valid_for(text_len))
    }
}

/// A row of the entity-type label set: `null`, an event type or a
/// span-only argument type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityLabel {
    Null,
    Event(EventType),
    Arg(SpanOnlyArgType),
}

impl EntityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Null => "null",
            EntityLabel::Event(t) => t.as_str(),
            EntityLabel::Arg(t) => t.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationLabel {
    Null,
    Has,
}

/// Label sets driving the classification heads and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelInventory {
    include_method: bool,
    entity_labels: Vec<EntityLabel>,
    subtype_sets: [Vec<Option<SubtypeLabel>>; 3],
}

impl Default for LabelInventory {
    fn default() -> Self {
        LabelInventory::new(false)
    }
}

impl LabelInventory {
    pub const RELATION_LABELS: [RelationLabel; 2] = [RelationLabel::Null, RelationLabel::Has];

    pub fn new(include_method: bool) -> Self {
        let mut entity_labels = vec![EntityLabel::Null];
        entity_labels.extend(EventType::ALL.iter().map(|&t| EntityLabel::Event(t)));
        entity_labels.extend(
            SpanOnlyArgType::ALL
                .iter()
                .filter(|&&t| include_method || t != SpanOnlyArgType::Method)
                .map(|&t| EntityLabel::Arg(t)),
        );
        let subtype_sets = subtype_sets();
        LabelInventory {
            include_method,
            entity_labels,
            subtype_sets,
        }
    }

    pub fn include_method(&self) -> bool {
        self.include_method
    }

    pub fn entity_labels(&self) -> &[EntityLabel] {
        &self.entity_labels
    }

    pub fn num_entity_labels(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn relation_labels(&self) -> &'static [RelationLabel] {
        &Self::RELATION_LABELS
    }

    /// Subtype head labels for `v`; index 0 is `null`.
    pub fn subtype_labels(&self, v: LabeledArgType) -> &[Option<SubtypeLabel>] {
        &self.subtype_sets[v.index()]
    }

    pub fn entity_index(&self, label: EntityLabel) -> Option<usize> {
        self.entity_labels.iter().position(|&l| l == label)
    }

    pub fn subtype_index(&self, v: LabeledArgType, subtype: Option<SubtypeLabel>) -> Option<usize> {
        self.subtype_labels(v).iter().position(|&s| s == subtype)
    }

    pub fn allows_span_only(&self, t: SpanOnlyArgType) -> bool {
        self.include_method || t != SpanOnlyArgType::Method
    }

    /// Hex digest of the label listing; recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.entity_labels {
            h.update(l.as_str().as_bytes());
            h.update(b"\n");
        }
        h.update(b"|null|has|");
        for set in &self.subtype_sets {
            for s in set {
                h.update(s.map_or("null", |s| s.as_str()).as_bytes());
                h.update(b"\n");
            }
            h.update(b"|");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn subtype_sets() -> [Vec<Option<SubtypeLabel>>; 3] {
    LabeledArgType::ALL_ARRAY.map(|v| {
        std::iter::once(None)
            .chain(v.subtypes().iter().copied().map(Some))
            .collect()
    })
}

/// Arguments an event type may carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compatibility {
    pub span_only: Vec<SpanOnlyArgType>,
    pub required: LabeledArgType,
}

pub fn required_labeled(event_type: EventType) -> LabeledArgType {
    match event_type {
        EventType::Alcohol | EventType::Drug | EventType::Tobacco => LabeledArgType::StatusTime,
        EventType::Employment => LabeledArgType::StatusEmploy,
        EventType::LivingStatus => LabeledArgType::TypeLiving,
    }
}

fn allowed_span_only(event_type: EventType, include_method: bool) -> Vec<SpanOnlyArgType> {
    use SpanOnlyArgType::*;
    match event_type {
        EventType::Alcohol | EventType::Tobacco => vec![Amount, Duration, Frequency, History, Type],
        EventType::Drug => {
            let mut v = vec![Amount, Duration, Frequency, History, Type];
            if include_method {
                v.push(Method);
            }
            v
        }
        EventType::Employment => vec![Duration, History, Type],
        EventType::LivingStatus => vec![Duration, History],
    }
}

pub fn compatibility_table(inv: &LabelInventory) -> BTreeMap<EventType, Compatibility> {
    EventType::ALL
        .iter()
        .map(|&t| {
            (
                t,
                Compatibility {
                    span_only: allowed_span_only(t, inv.include_method()),
                    required: required_labeled(t),
                },
            )
        })
        .collect()
}

/// Whether `arg` may be attached to an event of `event_type`.
pub fn argument_permitted(event_type: EventType, arg: &Argument, inv: &LabelInventory) -> bool {
    match *arg {
        Argument::SpanOnly { arg_type, .. } => {
            allowed_span_only(event_type, inv.include_method()).contains(&arg_type)
        }
        Argument::Labeled { arg_type, .. } => required_labeled(event_type) == arg_type,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    InvalidSpan { span: Span },
    NotPermitted { arg: &'static str, event_type: EventType },
    MethodDisabled,
    SubtypeMismatch { arg_type: LabeledArgType, subtype: SubtypeLabel },
    DuplicateLabeled { arg_type: LabeledArgType },
    MissingRequired { arg_type: LabeledArgType },
}

impl Violation {
    /// Missing-required violations only mark an event as incomplete.
    pub fn is_incompleteness(&self) -> bool {
        matches!(self, Violation::MissingRequired { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidSpan { span } => write!(f, "invalid span {span}"),
            Violation::NotPermitted { arg, event_type } => {
                write!(f, "{arg} not permitted for {event_type}")
            }
            Violation::MethodDisabled => write!(f, "Method not in label inventory"),
            Violation::SubtypeMismatch { arg_type, subtype } => {
                write!(f, "subtype {subtype:?} not valid for {arg_type}", subtype = subtype.as_str())
            }
            Violation::DuplicateLabeled { arg_type } => {
                write!(f, "duplicate labeled argument {arg_type}")
            }
            Violation::MissingRequired { arg_type } => {
                write!(f, "incomplete: missing required labeled argument {arg_type}")
            }
        }
    }
}

/// Every rule `e` breaks. An empty list means the event conforms.
pub fn validate_event(e: &Event, inv: &LabelInventory) -> Vec<Violation> {
    let mut out = Vec::new();
    if e.trigger.span.is_empty() {
        out.push(Violation::InvalidSpan { span: e.trigger.span });
    }
    let mut seen = [false; 3];
    for arg in &e.arguments {
        if arg.span().is_empty() {
            out.push(Violation::InvalidSpan { span: arg.span() });
        }
        if let Argument::Labeled {
            arg_type, subtype, ..
        } = *arg
        {
            if subtype.arg_type() != arg_type {
                out.push(Violation::SubtypeMismatch { arg_type, subtype });
            }
            if std::mem::replace(&mut seen[arg_type.index()], true) {
                out.push(Violation::DuplicateLabeled { arg_type });
            }
        }
        let method = matches!(
            arg,
            Argument::SpanOnly {
                arg_type: SpanOnlyArgType::Method,
                ..
            }
        );
        if method && !inv.include_method() {
            out.push(Violation::MethodDisabled);
        } else if !argument_permitted(e.trigger.event_type, arg, inv) {
            out.push(Violation::NotPermitted {
                arg: arg.type_name(),
                event_type: e.trigger.event_type,
            });
        }
    }
    let required = required_labeled(e.trigger.event_type);
    if !seen[required.index()] {
        out.push(Violation::MissingRequired { arg_type: required });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(t: EventType, s: usize, e: usize) -> Trigger {
        Trigger {
            event_type: t,
            span: Span::new(s, e),
        }
    }

    fn status(sub: SubtypeLabel, s: usize, e: usize) -> Argument {
        Argument::Labeled {
            arg_type: sub.arg_type(),
            subtype: sub,
            span: Span::new(s, e),
        }
    }

    #[test]
    fn tobacco_with_past_status_is_ok() {
        let mut e = Event::new(trig(EventType::Tobacco, 0, 7));
        e.arguments.push(status(SubtypeLabel::Past, 8, 12));
        assert!(validate_event(&e, &LabelInventory::default()).is_empty());
    }

    #[test]
    fn living_argument_on_employment_is_rejected() {
        let mut e = Event::new(trig(EventType::Employment, 0, 4));
        e.arguments.push(status(SubtypeLabel::Retired, 5, 12));
        e.arguments.push(status(SubtypeLabel::Alone, 13, 18));
        let v = validate_event(&e, &LabelInventory::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "TypeLiving not permitted for Employment");
    }

    #[test]
    fn duplicate_status_is_rejected() {
        let mut e = Event::new(trig(EventType::Alcohol, 0, 4));
        e.arguments.push(status(SubtypeLabel::Current, 5, 8));
        e.arguments.push(status(SubtypeLabel::Past, 9, 12));
        let v = validate_event(&e, &LabelInventory::default());
        assert_eq!(v, vec![Violation::DuplicateLabeled { arg_type: LabeledArgType::StatusTime }]);
        assert_eq!(v[0].to_string(), "duplicate labeled argument StatusTime");
    }

    #[test]
    fn missing_required_only_flags_incomplete() {
        let e = Event::new(trig(EventType::Drug, 0, 4));
        let v = validate_event(&e, &LabelInventory::default());
        assert!(e.is_incomplete());
        assert_eq!(v.len(), 1);
        assert!(v[0].is_incompleteness());
    }

    #[test]
    fn method_gated_by_inventory() {
        let mut e = Event::new(trig(EventType::Drug, 3, 7));
        e.arguments.push(Argument::SpanOnly {
            arg_type: SpanOnlyArgType::Method,
            span: Span::new(0, 2),
        });
        e.arguments.push(status(SubtypeLabel::Past, 8, 12));
        assert_eq!(
            validate_event(&e, &LabelInventory::new(false)),
            vec![Violation::MethodDisabled]
        );
        assert!(validate_event(&e, &LabelInventory::new(true)).is_empty());
    }

    #[test]
    fn inventory_cardinalities() {
        let inv = LabelInventory::default();
        assert_eq!(inv.num_entity_labels(), 11);
        assert_eq!(inv.relation_labels().len(), 2);
        assert_eq!(inv.subtype_labels(LabeledArgType::StatusTime).len(), 4);
        assert_eq!(inv.subtype_labels(LabeledArgType::StatusEmploy).len(), 7);
        assert_eq!(inv.subtype_labels(LabeledArgType::TypeLiving).len(), 5);
        assert_eq!(LabelInventory::new(true).num_entity_labels(), 12);
        assert_ne!(inv.fingerprint(), LabelInventory::new(true).fingerprint());
    }

    #[test]
    fn compatibility_requirements() {
        let table = compatibility_table(&LabelInventory::default());
        assert_eq!(table[&EventType::Alcohol].required, LabeledArgType::StatusTime);
        assert_eq!(table[&EventType::Employment].required, LabeledArgType::StatusEmploy);
        assert_eq!(table[&EventType::LivingStatus].required, LabeledArgType::TypeLiving);
        assert!(!table[&EventType::Drug].span_only.contains(&SpanOnlyArgType::Method));
        let with_method = compatibility_table(&LabelInventory::new(true));
        assert!(with_method[&EventType::Drug].span_only.contains(&SpanOnlyArgType::Method));
    }

    #[test]
    fn subtypes_belong_to_one_arg_type() {
        for &v in LabeledArgType::ALL {
            for &s in v.subtypes() {
                assert_eq!(s.arg_type(), v);
            }
        }
        let total: usize = LabeledArgType::ALL.iter().map(|v| v.subtypes().len()).sum();
        assert_eq!(total, SubtypeLabel::ALL.len());
    }

    #[test]
    fn canonical_names_round_trip() {
        assert_eq!("on disability".parse::<SubtypeLabel>(), Ok(SubtypeLabel::OnDisability));
        assert_eq!(
            serde_json::to_string(&SubtypeLabel::WithFamily).unwrap(),
            "\"with family\""
        );
        assert_eq!("LivingStatus".parse::<EntityKind>(), Ok(EntityKind::Trigger(EventType::LivingStatus)));
        assert!("Smoking".parse::<EntityKind>().is_err());
    }
}
