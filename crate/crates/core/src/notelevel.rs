//! Note-level SDOH labels derived from events, and their classification
//! metrics with `unknown` as the negative class.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Event, EventType, LabeledArgType, SubtypeLabel};
use crate::scorer::{prf, Counts, Prf};

#[derive(Debug, Error)]
pub enum NoteLevelError {
    #[error("gold has {gold} documents, predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("document order differs at position {index}: {gold} vs {pred}")]
    DocumentMismatch { index: usize, gold: String, pred: String },
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    /// `row` counts data rows from 1, not counting the header.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The five note-level fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Alcohol,
    Drug,
    Tobacco,
    Employment,
    Living,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Alcohol, Field::Drug, Field::Tobacco, Field::Employment, Field::Living];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Alcohol => "alcohol",
            Field::Drug => "drug",
            Field::Tobacco => "tobacco",
            Field::Employment => "employment",
            Field::Living => "living",
        }
    }

    pub fn event_type(self) -> EventType {
        match self {
            Field::Alcohol => EventType::Alcohol,
            Field::Drug => EventType::Drug,
            Field::Tobacco => EventType::Tobacco,
            Field::Employment => EventType::Employment,
            Field::Living => EventType::LivingStatus,
        }
    }

    pub fn argument(self) -> LabeledArgType {
        match self {
            Field::Alcohol | Field::Drug | Field::Tobacco => LabeledArgType::StatusTime,
            Field::Employment => LabeledArgType::StatusEmploy,
            Field::Living => LabeledArgType::TypeLiving,
        }
    }

    /// Values the field may take besides `unknown`.
    pub fn values(self) -> &'static [SubtypeLabel] {
        self.argument().subtypes()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A field value: `unknown` or one of the field's subtypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum NoteValue {
    #[default]
    Unknown,
    Known(SubtypeLabel),
}

impl NoteValue {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteValue::Unknown => "unknown",
            NoteValue::Known(s) => s.as_str(),
        }
    }

    pub fn is_positive(self) -> bool {
        self != NoteValue::Unknown
    }

    pub fn parse(field: Field, s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unknown") || s.is_empty() {
            return Ok(NoteValue::Unknown);
        }
        let sub = SubtypeLabel::from_str(s).map_err(|e| e.to_string())?;
        if sub.arg_type() != field.argument() {
            return Err(format!("{s:?} is not a {field} value"));
        }
        Ok(NoteValue::Known(sub))
    }
}

impl fmt::Display for NoteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoteLabelSet {
    pub values: BTreeMap<Field, NoteValue>,
}

impl NoteLabelSet {
    pub fn get(&self, f: Field) -> NoteValue {
        self.values.get(&f).copied().unwrap_or_default()
    }

    pub fn set(&mut self, f: Field, v: NoteValue) {
        self.values.insert(f, v);
    }
}

/// For each field, the subtype carried by the event whose trigger starts
/// latest; `unknown` when no event carries the field's labeled argument.
pub fn events_to_note_labels(events: &[Event]) -> NoteLabelSet {
    let mut out = NoteLabelSet::default();
    for f in Field::ALL {
        let latest = events
            .iter()
            .filter(|e| e.trigger.event_type == f.event_type())
            .flat_map(|e| e.labeled(f.argument()).map(move |(s, span)| ((e.trigger.span.start, e.trigger.span.end, span.start, s), s)))
            .max_by_key(|(k, _)| *k);
        out.set(f, latest.map_or(NoteValue::Unknown, |(_, s)| NoteValue::Known(s)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub field: Field,
    pub n: usize,
    pub accuracy: f64,
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub metrics: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteMetrics {
    pub fields: Vec<FieldMetrics>,
    pub macro_accuracy: f64,
    pub macro_f1: f64,
}

pub fn field_counts(gold: NoteValue, pred: NoteValue) -> Counts {
    let mut c = Counts::default();
    if gold.is_positive() && pred == gold {
        c.tp = 1;
        return c;
    }
    if pred.is_positive() {
        c.fp = 1;
    }
    if gold.is_positive() {
        c.fn_ = 1;
    }
    c
}

pub fn note_metrics(gold: &[NoteLabelSet], pred: &[NoteLabelSet]) -> Result<NoteMetrics, NoteLevelError> {
    if gold.len() != pred.len() {
        return Err(NoteLevelError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let n = gold.len();
    let fields: Vec<FieldMetrics> = Field::ALL
        .iter()
        .map(|&f| {
            let mut counts = Counts::default();
            let mut agree = 0usize;
            for (g, p) in gold.iter().zip(pred) {
                let (gv, pv) = (g.get(f), p.get(f));
                agree += usize::from(gv == pv);
                counts.add(field_counts(gv, pv));
            }
            FieldMetrics {
                field: f,
                n,
                accuracy: if n == 0 { 1.0 } else { agree as f64 / n as f64 },
                counts,
                metrics: prf(counts),
            }
        })
        .collect();
    let k = fields.len() as f64;
    Ok(NoteMetrics {
        macro_accuracy: fields.iter().map(|f| f.accuracy).sum::<f64>() / k,
        macro_f1: fields.iter().map(|f| f.metrics.f1).sum::<f64>() / k,
        fields,
    })
}

/// Metrics over two keyed label tables; documents are paired by id.
pub fn note_metrics_by_id(
    gold: &[(String, NoteLabelSet)],
    pred: &[(String, NoteLabelSet)],
) -> Result<NoteMetrics, NoteLevelError> {
    if gold.len() != pred.len() {
        return Err(NoteLevelError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut g = gold.to_vec();
    let mut p = pred.to_vec();
    g.sort_by(|a, b| a.0.cmp(&b.0));
    p.sort_by(|a, b| a.0.cmp(&b.0));
    for (index, (a, b)) in g.iter().zip(&p).enumerate() {
        if a.0 != b.0 {
            return Err(NoteLevelError::DocumentMismatch { index, gold: a.0.clone(), pred: b.0.clone() });
        }
    }
    let gl: Vec<_> = g.into_iter().map(|x| x.1).collect();
    let pl: Vec<_> = p.into_iter().map(|x| x.1).collect();
    note_metrics(&gl, &pl)
}

impl NoteMetrics {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12} {:>5} {:>8} {:>5} {:>5} {:>5} {:>7} {:>7} {:>7}\n", "field", "n", "accuracy", "tp", "fp", "fn", "P", "R", "F1");
        for f in &self.fields {
            s.push_str(&format!(
                "{:<12} {:>5} {:>8.4} {:>5} {:>5} {:>5} {:>7.4} {:>7.4} {:>7.4}\n",
                f.field.as_str(),
                f.n,
                f.accuracy,
                f.counts.tp,
                f.counts.fp,
                f.counts.fn_,
                f.metrics.precision,
                f.metrics.recall,
                f.metrics.f1
            ));
        }
        s.push_str(&format!("macro accuracy {:.4}, macro F1 {:.4}\n", self.macro_accuracy, self.macro_f1));
        s
    }
}

const CSV_HEADER: [&str; 6] = ["document_id", "alcohol", "drug", "tobacco", "employment", "living"];

pub fn write_note_labels_csv(w: impl Write, rows: &[(String, NoteLabelSet)]) -> Result<(), NoteLevelError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for (id, l) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(Field::ALL.iter().map(|&f| l.get(f).as_str().to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_note_labels_csv(r: impl Read) -> Result<Vec<(String, NoteLabelSet)>, NoteLevelError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("document_id").ok_or(NoteLevelError::MissingColumn("document_id"))?;
    let field_cols: Vec<(Field, Option<usize>)> = Field::ALL.iter().map(|&f| (f, col(f.as_str()))).collect();
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let mut l = NoteLabelSet::default();
        for &(f, c) in &field_cols {
            let v = c.and_then(|c| rec.get(c)).unwrap_or("unknown");
            l.set(f, NoteValue::parse(f, v).map_err(|message| NoteLevelError::Row { row, message })?);
        }
        out.push((rec.get(id_col).unwrap_or_default().to_string(), l));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Argument, Span, Trigger};

    fn ev(t: EventType, start: usize, v: LabeledArgType, s: SubtypeLabel) -> Event {
        Event {
            trigger: Trigger { event_type: t, span: Span::new(start, start + 3) },
            arguments: vec![Argument::Labeled { arg_type: v, subtype: s, span: Span::new(start + 4, start + 6) }],
        }
    }

    #[test]
    fn no_events_all_unknown() {
        let l = events_to_note_labels(&[]);
        assert!(Field::ALL.iter().all(|&f| l.get(f) == NoteValue::Unknown));
    }

    #[test]
    fn latest_occurrence_wins() {
        let a = ev(EventType::Tobacco, 5, LabeledArgType::StatusTime, SubtypeLabel::Past);
        let b = ev(EventType::Tobacco, 40, LabeledArgType::StatusTime, SubtypeLabel::Current);
        assert_eq!(events_to_note_labels(&[a.clone(), b.clone()]).get(Field::Tobacco), NoteValue::Known(SubtypeLabel::Current));
        assert_eq!(events_to_note_labels(&[b, a]).get(Field::Tobacco), NoteValue::Known(SubtypeLabel::Current));
    }

    #[test]
    fn employment_only() {
        let l = events_to_note_labels(&[ev(EventType::Employment, 0, LabeledArgType::StatusEmploy, SubtypeLabel::Retired)]);
        assert_eq!(l.get(Field::Employment), NoteValue::Known(SubtypeLabel::Retired));
        assert_eq!(l.get(Field::Alcohol), NoteValue::Unknown);
    }

    #[test]
    fn mismatched_positive_counts_both() {
        assert_eq!(
            field_counts(NoteValue::Known(SubtypeLabel::Current), NoteValue::Known(SubtypeLabel::Past)),
            Counts::new(0, 1, 1)
        );
        assert_eq!(field_counts(NoteValue::Unknown, NoteValue::Unknown), Counts::default());
    }

    #[test]
    fn csv_round_trip() {
        let mut l = NoteLabelSet::default();
        l.set(Field::Employment, NoteValue::Known(SubtypeLabel::OnDisability));
        l.set(Field::Living, NoteValue::Known(SubtypeLabel::WithFamily));
        let rows = vec![("d1".to_string(), l), ("d2".to_string(), NoteLabelSet::default())];
        let mut buf = Vec::new();
        write_note_labels_csv(&mut buf, &rows).unwrap();
        let back = read_note_labels_csv(buf.as_slice()).unwrap();
        let norm = |r: &[(String, NoteLabelSet)]| r.iter().map(|(i, l)| (i.clone(), Field::ALL.map(|f| l.get(f)))).collect::<Vec<_>>();
        assert_eq!(norm(&back), norm(&rows));
        assert!(read_note_labels_csv("document_id,alcohol\nx,retired\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_errors_count_data_rows() {
        let err = read_note_labels_csv("document_id,drug\na,none\nb,sometimes\n".as_bytes()).unwrap_err();
        assert!(matches!(err, NoteLevelError::Row { row: 2, .. }), "{err}");
        let err = read_note_labels_csv("id,drug\na,none\n".as_bytes()).unwrap_err();
        assert!(matches!(err, NoteLevelError::MissingColumn("document_id")));
    }
}
