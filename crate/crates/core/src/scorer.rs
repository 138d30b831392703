//! Slot-filling evaluation of predicted events against gold events.
//!
//! Triggers are equivalent when their event types agree and their spans
//! share at least one character. Events are aligned one-to-one on trigger
//! equivalence; within aligned pairs, span-only arguments must match type
//! and span exactly, while labeled arguments match on (type, subtype) only.
//! Arguments of unaligned events count entirely as false positives or
//! false negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{AnnotationSet, Argument, Event, EventType, LabeledArgType, Span, SpanOnlyArgType, SubtypeLabel, Trigger};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("prediction for unknown document {0}")]
    UnknownDocument(String),
    #[error("document {0} appears more than once")]
    DuplicateDocument(String),
}

/// What a count refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phenomenon {
    Trigger { event_type: EventType },
    SpanOnly { event_type: EventType, argument: SpanOnlyArgType },
    Labeled { event_type: EventType, argument: LabeledArgType, subtype: SubtypeLabel },
}

impl Phenomenon {
    pub fn event_type(&self) -> EventType {
        match *self {
            Phenomenon::Trigger { event_type }
            | Phenomenon::SpanOnly { event_type, .. }
            | Phenomenon::Labeled { event_type, .. } => event_type,
        }
    }

    /// `Trigger`, an argument type name, or `None`.
    pub fn argument_name(&self) -> &'static str {
        match self {
            Phenomenon::Trigger { .. } => "Trigger",
            Phenomenon::SpanOnly { argument, .. } => argument.as_str(),
            Phenomenon::Labeled { argument, .. } => argument.as_str(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Phenomenon::Trigger { event_type } => format!("{event_type}/Trigger"),
            Phenomenon::SpanOnly { event_type, argument } => format!("{event_type}/{argument}"),
            Phenomenon::Labeled { event_type, argument, subtype } => format!("{event_type}/{argument}={}", subtype.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Counts { tp, fp, fn_ }
    }

    pub fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn gold(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn swapped(&self) -> Counts {
        Counts::new(self.tp, self.fn_, self.fp)
    }
}

/// Counts per phenomenon; merged by addition.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub by_key: BTreeMap<Phenomenon, Counts>,
}

impl MatchCounts {
    fn entry(&mut self, k: Phenomenon) -> &mut Counts {
        self.by_key.entry(k).or_default()
    }

    pub fn merge(&mut self, other: &MatchCounts) {
        for (k, c) in &other.by_key {
            self.entry(*k).add(*c);
        }
    }

    pub fn overall(&self) -> Counts {
        let mut t = Counts::default();
        self.by_key.values().for_each(|c| t.add(*c));
        t
    }

    /// Sum over keys selected by `f`.
    pub fn total_where(&self, f: impl Fn(&Phenomenon) -> bool) -> Counts {
        let mut t = Counts::default();
        self.by_key.iter().filter(|(k, _)| f(k)).for_each(|(_, c)| t.add(*c));
        t
    }

    pub fn swapped(&self) -> MatchCounts {
        MatchCounts {
            by_key: self.by_key.iter().map(|(k, c)| (*k, c.swapped())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No gold and no predicted items: reported as 1.0.
    pub empty: bool,
}

pub fn prf(c: Counts) -> Prf {
    if c.tp + c.fp + c.fn_ == 0 {
        return Prf { precision: 1.0, recall: 1.0, f1: 1.0, empty: true };
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1, empty: false }
}

pub fn triggers_equivalent(a: &Trigger, b: &Trigger) -> bool {
    a.event_type == b.event_type && a.span.overlap(&b.span) > 0
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// (gold index, pred index) into the input lists.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedy one-to-one alignment: golds in trigger order each take the
/// unmatched equivalent prediction with the largest overlap, ties to the
/// earliest-starting prediction.
pub fn align_events(gold: &[Event], pred: &[Event]) -> Alignment {
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.sort_by_key(|&i| (gold[i].trigger.span.start, gold[i].trigger.span.end, gold[i].trigger.event_type, i));
    let mut taken = vec![false; pred.len()];
    let mut a = Alignment::default();
    for gi in order {
        let g = &gold[gi].trigger;
        let best = (0..pred.len())
            .filter(|&pi| !taken[pi] && triggers_equivalent(g, &pred[pi].trigger))
            .min_by_key(|&pi| {
                let p = &pred[pi].trigger;
                (std::cmp::Reverse(g.span.overlap(&p.span)), p.span.start, pi)
            });
        match best {
            Some(pi) => {
                taken[pi] = true;
                a.pairs.push((gi, pi));
            }
            None => a.unmatched_gold.push(gi),
        }
    }
    a.pairs.sort_unstable();
    a.unmatched_gold.sort_unstable();
    a.unmatched_pred = (0..pred.len()).filter(|&i| !taken[i]).collect();
    a
}

fn span_only(e: &Event) -> Vec<(SpanOnlyArgType, Span)> {
    e.arguments
        .iter()
        .filter_map(|a| match *a {
            Argument::SpanOnly { arg_type, span } => Some((arg_type, span)),
            _ => None,
        })
        .collect()
}

fn labeled(e: &Event) -> Vec<(LabeledArgType, SubtypeLabel)> {
    e.arguments
        .iter()
        .filter_map(|a| match *a {
            Argument::Labeled { arg_type, subtype, .. } => Some((arg_type, subtype)),
            _ => None,
        })
        .collect()
}

fn multiset<K: Ord + Copy>(items: &[K]) -> BTreeMap<K, u64> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(*k).or_insert(0) += 1;
    }
    m
}

/// Adds counts for one event; `gold` / `pred` may be absent for unmatched
/// events.
fn count_event(gold: Option<&Event>, pred: Option<&Event>, out: &mut MatchCounts) {
    let event_type = gold.or(pred).expect("at least one side").trigger.event_type;
    let trig = out.entry(Phenomenon::Trigger { event_type });
    match (gold, pred) {
        (Some(_), Some(_)) => trig.tp += 1,
        (Some(_), None) => trig.fn_ += 1,
        _ => trig.fp += 1,
    }
    let g = multiset(&gold.map(span_only).unwrap_or_default());
    let p = multiset(&pred.map(span_only).unwrap_or_default());
    let keys: BTreeSet<_> = g.keys().chain(p.keys()).copied().collect();
    for k in keys {
        let (ng, np) = (g.get(&k).copied().unwrap_or(0), p.get(&k).copied().unwrap_or(0));
        let tp = ng.min(np);
        out.entry(Phenomenon::SpanOnly { event_type, argument: k.0 }).add(Counts::new(tp, np - tp, ng - tp));
    }
    let g = multiset(&gold.map(labeled).unwrap_or_default());
    let p = multiset(&pred.map(labeled).unwrap_or_default());
    let keys: BTreeSet<_> = g.keys().chain(p.keys()).copied().collect();
    for k in keys {
        let (ng, np) = (g.get(&k).copied().unwrap_or(0), p.get(&k).copied().unwrap_or(0));
        let tp = ng.min(np);
        out.entry(Phenomenon::Labeled { event_type, argument: k.0, subtype: k.1 })
            .add(Counts::new(tp, np - tp, ng - tp));
    }
}

/// Counts for one document given an alignment.
pub fn count_aligned(gold: &[Event], pred: &[Event], a: &Alignment) -> MatchCounts {
    let mut out = MatchCounts::default();
    for &(gi, pi) in &a.pairs {
        count_event(Some(&gold[gi]), Some(&pred[pi]), &mut out);
    }
    for &gi in &a.unmatched_gold {
        count_event(Some(&gold[gi]), None, &mut out);
    }
    for &pi in &a.unmatched_pred {
        count_event(None, Some(&pred[pi]), &mut out);
    }
    out
}

pub fn score_document(gold: &AnnotationSet, pred: &AnnotationSet) -> (MatchCounts, Alignment) {
    let a = align_events(&gold.events, &pred.events);
    (count_aligned(&gold.events, &pred.events, &a), a)
}

/// Per-document alignment listing for error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentAlignment {
    pub document_id: String,
    pub matched: Vec<(Event, Event)>,
    pub unmatched_gold: Vec<Event>,
    pub unmatched_pred: Vec<Event>,
}

/// Scores every gold document. A gold document without predictions is
/// scored against an empty prediction set.
pub fn score_documents(
    gold: &[AnnotationSet],
    pred: &[AnnotationSet],
) -> Result<(MatchCounts, Vec<DocumentAlignment>), ScoreError> {
    let mut gold_ids = BTreeSet::new();
    for g in gold {
        if !gold_ids.insert(g.document_id.as_str()) {
            return Err(ScoreError::DuplicateDocument(g.document_id.clone()));
        }
    }
    let mut by_id: BTreeMap<&str, &AnnotationSet> = BTreeMap::new();
    for p in pred {
        if !gold_ids.contains(p.document_id.as_str()) {
            return Err(ScoreError::UnknownDocument(p.document_id.clone()));
        }
        if by_id.insert(p.document_id.as_str(), p).is_some() {
            return Err(ScoreError::DuplicateDocument(p.document_id.clone()));
        }
    }
    let mut total = MatchCounts::default();
    let mut listing = Vec::with_capacity(gold.len());
    for g in gold {
        let empty = AnnotationSet::new(g.document_id.clone());
        let p = by_id.get(g.document_id.as_str()).copied().unwrap_or_else(|| {
            log::warn!("no predictions for document {}; scoring as empty", g.document_id);
            &empty
        });
        let (c, a) = score_document(g, p);
        total.merge(&c);
        listing.push(DocumentAlignment {
            document_id: g.document_id.clone(),
            matched: a.pairs.iter().map(|&(i, j)| (g.events[i].clone(), p.events[j].clone())).collect(),
            unmatched_gold: a.unmatched_gold.iter().map(|&i| g.events[i].clone()).collect(),
            unmatched_pred: a.unmatched_pred.iter().map(|&i| p.events[i].clone()).collect(),
        });
    }
    Ok((total, listing))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub gold: u64,
    #[serde(flatten)]
    pub metrics: Prf,
}

impl MetricRow {
    pub fn new(label: impl Into<String>, counts: Counts) -> Self {
        MetricRow { label: label.into(), counts, gold: counts.gold(), metrics: prf(counts) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub overall: MetricRow,
    /// Trigger, span-only and labeled totals.
    pub by_category: Vec<MetricRow>,
    /// Everything belonging to each event type.
    pub by_event_type: Vec<MetricRow>,
    /// Per event type and argument (labeled arguments summed over subtypes).
    pub by_argument: Vec<MetricRow>,
    /// Labeled arguments per (argument, subtype), summed over event types.
    pub by_subtype: Vec<MetricRow>,
    /// Every key.
    pub keys: Vec<MetricRow>,
}

pub fn report(counts: &MatchCounts) -> ScoreReport {
    let category = |name: &str, f: fn(&Phenomenon) -> bool| MetricRow::new(name, counts.total_where(f));
    let by_category = vec![
        category("Trigger", |k| matches!(k, Phenomenon::Trigger { .. })),
        category("Span-only arguments", |k| matches!(k, Phenomenon::SpanOnly { .. })),
        category("Labeled arguments", |k| matches!(k, Phenomenon::Labeled { .. })),
    ];
    let by_event_type = EventType::ALL
        .iter()
        .map(|&t| MetricRow::new(t.as_str(), counts.total_where(|k| k.event_type() == t)))
        .collect();
    let mut arg: BTreeMap<(EventType, u8, &'static str), Counts> = BTreeMap::new();
    let mut sub: BTreeMap<(LabeledArgType, SubtypeLabel), Counts> = BTreeMap::new();
    for (k, c) in &counts.by_key {
        let rank = match k {
            Phenomenon::Trigger { .. } => 0,
            Phenomenon::Labeled { .. } => 1,
            Phenomenon::SpanOnly { .. } => 2,
        };
        arg.entry((k.event_type(), rank, k.argument_name())).or_default().add(*c);
        if let Phenomenon::Labeled { argument, subtype, .. } = *k {
            sub.entry((argument, subtype)).or_default().add(*c);
        }
    }
    ScoreReport {
        overall: MetricRow::new("Overall", counts.overall()),
        by_category,
        by_event_type,
        by_argument: arg
            .into_iter()
            .map(|((t, _, a), c)| MetricRow::new(format!("{t}/{a}"), c))
            .collect(),
        by_subtype: sub
            .into_iter()
            .map(|((a, s), c)| MetricRow::new(format!("{a}={}", s.as_str()), c))
            .collect(),
        keys: counts.by_key.iter().map(|(k, c)| MetricRow::new(k.label(), *c)).collect(),
    }
}

impl ScoreReport {
    /// Fixed-width text tables.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let header = format!("{:<34} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}\n", "", "gold", "tp", "fp", "fn", "P", "R", "F1");
        let row = |s: &mut String, r: &MetricRow| {
            let _ = writeln!(
                s,
                "{:<34} {:>6} {:>6} {:>6} {:>6} {:>7.4} {:>7.4} {:>7.4}{}",
                r.label,
                r.gold,
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                if r.metrics.empty { "  (empty)" } else { "" }
            );
        };
        for (title, rows) in [
            ("Summary", std::iter::once(&self.overall).chain(&self.by_category).collect::<Vec<_>>()),
            ("By event type", self.by_event_type.iter().collect()),
            ("By argument", self.by_argument.iter().collect()),
            ("By subtype label", self.by_subtype.iter().collect()),
        ] {
            let _ = writeln!(s, "{title}");
            s.push_str(&header);
            for r in rows {
                row(&mut s, r);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(t: EventType, s: usize, e: usize) -> Trigger {
        Trigger { event_type: t, span: Span::new(s, e) }
    }

    fn ev(t: EventType, s: usize, e: usize, args: Vec<Argument>) -> Event {
        Event { trigger: trig(t, s, e), arguments: args }
    }

    fn status(sub: SubtypeLabel, s: usize, e: usize) -> Argument {
        Argument::Labeled { arg_type: LabeledArgType::StatusTime, subtype: sub, span: Span::new(s, e) }
    }

    fn amount(s: usize, e: usize) -> Argument {
        Argument::SpanOnly { arg_type: SpanOnlyArgType::Amount, span: Span::new(s, e) }
    }

    #[test]
    fn equivalence_examples() {
        assert!(triggers_equivalent(&trig(EventType::Tobacco, 10, 17), &trig(EventType::Tobacco, 16, 20)));
        assert!(!triggers_equivalent(&trig(EventType::Tobacco, 10, 17), &trig(EventType::Alcohol, 10, 17)));
        assert!(!triggers_equivalent(&trig(EventType::Drug, 5, 8), &trig(EventType::Drug, 8, 12)));
    }

    #[test]
    fn two_golds_one_pred() {
        let g = vec![ev(EventType::Drug, 0, 5, vec![]), ev(EventType::Drug, 4, 9, vec![])];
        let p = vec![ev(EventType::Drug, 3, 6, vec![])];
        let a = align_events(&g, &p);
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.unmatched_gold.len(), 1);
        assert!(align_events(&g, &[ev(EventType::Drug, 20, 22, vec![])]).pairs.is_empty());
    }

    #[test]
    fn prf_formulas() {
        let r = prf(Counts::new(2, 1, 1));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15 && (r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(prf(Counts::default()), Prf { precision: 1.0, recall: 1.0, f1: 1.0, empty: true });
        let r = prf(Counts::new(0, 0, 3));
        assert_eq!((r.precision, r.recall, r.f1, r.empty), (0.0, 0.0, 0.0, false));
    }

    #[test]
    fn hand_fixture() {
        use SubtypeLabel::*;
        let mut gold = AnnotationSet::new("d");
        gold.events = vec![
            ev(EventType::Tobacco, 20, 27, vec![status(Past, 10, 14), amount(30, 35)]),
            ev(EventType::Alcohol, 0, 4, vec![status(None, 5, 9)]),
        ];
        let mut pred = AnnotationSet::new("d");
        pred.events = vec![
            ev(EventType::Tobacco, 22, 29, vec![status(Current, 36, 39), amount(30, 35)]),
            ev(EventType::Alcohol, 0, 4, vec![status(None, 5, 9)]),
            ev(EventType::Drug, 40, 44, vec![]),
        ];
        let (c, _) = score_documents(&[gold], &[pred]).unwrap();
        assert_eq!(c.overall(), Counts::new(4, 2, 1));
        assert_eq!(c.total_where(|k| matches!(k, Phenomenon::Trigger { .. })), Counts::new(2, 1, 0));
        assert_eq!(
            c.total_where(|k| matches!(k, Phenomenon::Labeled { argument: LabeledArgType::StatusTime, .. })),
            Counts::new(1, 1, 1)
        );
        let f1 = report(&c).overall.metrics.f1;
        assert!((f1 - 8.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_document_is_an_error() {
        let g = AnnotationSet::new("a");
        let p = AnnotationSet::new("b");
        assert!(matches!(score_documents(&[g], &[p]), Err(ScoreError::UnknownDocument(_))));
    }
}
