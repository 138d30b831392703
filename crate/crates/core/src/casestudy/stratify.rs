//! Unique-document event counts by note type and by specialty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{Document, NoteType};
use crate::schema::{AnnotationSet, EventType};

pub const TOP_SPECIALTIES: usize = 20;
const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub event_type: EventType,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub columns: Vec<String>,
    /// Documents with a social-history section, per column.
    pub sections: Vec<usize>,
    pub rows: Vec<CountRow>,
}

impl CountTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, event_type: EventType, column: &str) -> usize {
        let Some(c) = self.columns.iter().position(|x| x == column) else { return 0 };
        self.rows.iter().find(|r| r.event_type == event_type).map_or(0, |r| r.counts[c])
    }

    pub fn to_table(&self) -> String {
        let width = self.columns.iter().map(|c| c.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<14}", "");
        for c in &self.columns {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
        let mut line = |label: &str, counts: &[usize]| {
            let _ = write!(out, "{label:<14}");
            for n in counts {
                let _ = write!(out, " {n:>width$}");
            }
            out.push('\n');
        };
        line("sections", &self.sections);
        for r in &self.rows {
            line(r.event_type.as_str(), &r.counts);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratification {
    pub by_note_type: CountTable,
    pub by_specialty: CountTable,
}

fn table(entries: &[(Document, AnnotationSet)], columns: Vec<String>, key: &dyn Fn(&Document) -> String) -> CountTable {
    let col: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut sections = vec![0; columns.len()];
    let mut rows: Vec<CountRow> =
        EventType::ALL.iter().map(|&t| CountRow { event_type: t, counts: vec![0; columns.len()] }).collect();
    for (doc, anns) in entries {
        let Some(&c) = col.get(key(doc).as_str()) else { continue };
        if !doc.section_text.trim().is_empty() {
            sections[c] += 1;
        }
        let types: BTreeSet<EventType> = anns.events.iter().map(|e| e.trigger.event_type).collect();
        for t in types {
            let r = EventType::ALL.iter().position(|&x| x == t).expect("known event type");
            rows[r].counts[c] += 1;
        }
    }
    CountTable { columns, sections, rows }
}

fn specialty(doc: &Document) -> String {
    doc.specialty.clone().unwrap_or_else(|| UNSPECIFIED.to_string())
}

/// Each document counts at most once per event type.
pub fn stratify(entries: &[(Document, AnnotationSet)], top_n: usize) -> Stratification {
    if entries.is_empty() {
        return Stratification::default();
    }
    let note_cols = NoteType::ALL.iter().map(|t| t.as_str().to_string()).collect();
    let by_note_type = table(entries, note_cols, &|d| d.note_type.as_str().to_string());

    let mut per_specialty: BTreeMap<String, usize> = BTreeMap::new();
    for (doc, _) in entries {
        let n = per_specialty.entry(specialty(doc)).or_default();
        *n += usize::from(!doc.section_text.trim().is_empty());
    }
    let mut ranked: Vec<(String, usize)> = per_specialty.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let spec_cols = ranked.into_iter().take(top_n).map(|(s, _)| s).collect();
    let by_specialty = table(entries, spec_cols, &specialty);
    Stratification { by_note_type, by_specialty }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Event, Span, Trigger};

    fn entry(id: &str, note_type: NoteType, specialty: &str, types: &[EventType]) -> (Document, AnnotationSet) {
        let mut d = Document::from_section(id, "some social history text");
        d.note_type = note_type;
        d.specialty = Some(specialty.into());
        let mut a = AnnotationSet::new(id);
        for (i, &t) in types.iter().enumerate() {
            a.events.push(Event::new(Trigger { span: Span::new(i, i + 1), event_type: t }));
        }
        (d, a)
    }

    #[test]
    fn unique_document_counts() {
        let entries = vec![
            entry("a", NoteType::Progress, "medicine", &[EventType::Drug]),
            entry("b", NoteType::Progress, "medicine", &[EventType::Drug, EventType::Tobacco, EventType::Tobacco]),
            entry("c", NoteType::Emergency, "emergency", &[EventType::Drug]),
        ];
        let s = stratify(&entries, TOP_SPECIALTIES);
        assert_eq!(s.by_note_type.get(EventType::Drug, "progress"), 2);
        assert_eq!(s.by_note_type.get(EventType::Drug, "emergency"), 1);
        assert_eq!(s.by_note_type.get(EventType::Tobacco, "progress"), 1);
        assert_eq!(s.by_specialty.columns, ["medicine", "emergency"]);
        assert!(s.by_note_type.to_table().contains("Drug"));
    }

    #[test]
    fn empty_corpus() {
        let s = stratify(&[], TOP_SPECIALTIES);
        assert!(s.by_note_type.is_empty() && s.by_specialty.is_empty());
    }

    #[test]
    fn top_n_limit() {
        let entries: Vec<_> = (0..5)
            .map(|i| entry(&format!("d{i}"), NoteType::Progress, &format!("s{}", i % 3), &[]))
            .collect();
        let s = stratify(&entries, 2);
        assert_eq!(s.by_specialty.columns, ["s0", "s1"]);
    }
}
