//! Patient-level SDOH indicators and the structured-vs-extracted partition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::mapping::StructuredMapping;
use super::structured::StructuredData;
use crate::corpus_io::Document;
use crate::schema::{AnnotationSet, EventType, LabeledArgType, SubtypeLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sdoh {
    AlcoholCurrent,
    TobaccoCurrent,
    DrugCurrent,
    EmploymentAny,
    HomelessCurrent,
}

impl Sdoh {
    pub const ALL: [Sdoh; 5] = [
        Sdoh::AlcoholCurrent,
        Sdoh::TobaccoCurrent,
        Sdoh::DrugCurrent,
        Sdoh::EmploymentAny,
        Sdoh::HomelessCurrent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sdoh::AlcoholCurrent => "alcohol_current",
            Sdoh::TobaccoCurrent => "tobacco_current",
            Sdoh::DrugCurrent => "drug_current",
            Sdoh::EmploymentAny => "employment_any",
            Sdoh::HomelessCurrent => "homeless_current",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorSource {
    Structured,
    Extracted,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatientIndicator {
    pub patient_id: String,
    pub sdoh: Sdoh,
    pub source: IndicatorSource,
}

impl PatientIndicator {
    pub fn new(patient_id: impl Into<String>, sdoh: Sdoh, source: IndicatorSource) -> Self {
        PatientIndicator { patient_id: patient_id.into(), sdoh, source }
    }
}

fn in_year(doc: &Document, year: Option<i32>) -> bool {
    match year {
        None => true,
        Some(y) => doc.date().is_some_and(|d| d.year() == y),
    }
}

/// Any positive mention counts, whatever later notes say.
pub fn extracted_indicators(entries: &[(Document, AnnotationSet)], year: Option<i32>) -> BTreeSet<PatientIndicator> {
    let mut out = BTreeSet::new();
    for (doc, anns) in entries {
        if doc.patient_id.is_empty() || !in_year(doc, year) {
            continue;
        }
        for e in &anns.events {
            let has = |v: LabeledArgType, pred: &dyn Fn(SubtypeLabel) -> bool| e.labeled(v).any(|(s, _)| pred(s));
            let current = |s: SubtypeLabel| s == SubtypeLabel::Current;
            let sdoh = match e.trigger.event_type {
                EventType::Alcohol if has(LabeledArgType::StatusTime, &current) => Sdoh::AlcoholCurrent,
                EventType::Tobacco if has(LabeledArgType::StatusTime, &current) => Sdoh::TobaccoCurrent,
                EventType::Drug if has(LabeledArgType::StatusTime, &current) => Sdoh::DrugCurrent,
                EventType::Employment if has(LabeledArgType::StatusEmploy, &|_| true) => Sdoh::EmploymentAny,
                EventType::LivingStatus if has(LabeledArgType::TypeLiving, &|s| s == SubtypeLabel::Homeless) => {
                    Sdoh::HomelessCurrent
                }
                _ => continue,
            };
            out.insert(PatientIndicator::new(&doc.patient_id, sdoh, IndicatorSource::Extracted));
        }
    }
    out
}

/// Undated records (employment status) pass the year filter; they were
/// already restricted to patients with a visit in the year at ingestion.
pub fn structured_indicators(
    data: &StructuredData,
    mapping: &StructuredMapping,
    year: Option<i32>,
) -> BTreeSet<PatientIndicator> {
    let mut out = BTreeSet::new();
    let mut unmapped = BTreeSet::new();
    for rec in &data.records {
        if let (Some(y), Some(ts)) = (year, rec.timestamp) {
            if ts.year() != y {
                continue;
            }
        }
        match mapping.positives(rec) {
            Some(sdohs) => {
                for s in sdohs {
                    out.insert(PatientIndicator::new(&rec.patient_id, s, IndicatorSource::Structured));
                }
            }
            None => {
                if unmapped.insert((rec.source, rec.field.clone())) {
                    log::warn!("no mapping for {}.{}; skipped", rec.source.as_str(), rec.field);
                }
            }
        }
    }
    out
}

pub fn patient_indicators(
    data: &StructuredData,
    mapping: &StructuredMapping,
    entries: &[(Document, AnnotationSet)],
    year: Option<i32>,
) -> BTreeSet<PatientIndicator> {
    let mut out = structured_indicators(data, mapping, year);
    out.extend(extracted_indicators(entries, year));
    out
}

/// Patients with at least one non-empty social-history section in the year.
pub fn narrative_patients(entries: &[(Document, AnnotationSet)], year: Option<i32>) -> BTreeSet<String> {
    entries
        .iter()
        .filter(|(d, _)| !d.patient_id.is_empty() && in_year(d, year) && !d.section_text.trim().is_empty())
        .map(|(d, _)| d.patient_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sdoh: Sdoh,
    pub only_structured: usize,
    pub only_extracted: usize,
    pub both: usize,
    pub union: usize,
    pub p_only_structured: f64,
    pub p_only_extracted: f64,
    pub p_both: f64,
}

impl ComparisonRow {
    fn new(sdoh: Sdoh, structured: &BTreeSet<&str>, extracted: &BTreeSet<&str>) -> Self {
        let both = structured.intersection(extracted).count();
        let only_structured = structured.len() - both;
        let only_extracted = extracted.len() - both;
        let union = both + only_structured + only_extracted;
        let p = |n: usize| if union == 0 { 0.0 } else { n as f64 / union as f64 };
        ComparisonRow {
            sdoh,
            only_structured,
            only_extracted,
            both,
            union,
            p_only_structured: p(only_structured),
            p_only_extracted: p(only_extracted),
            p_both: p(both),
        }
    }
}

pub const DENOMINATOR_NOTE: &str =
    "proportions are over the union of patients positive in either source, per SDOH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub denominator: String,
    pub rows: Vec<ComparisonRow>,
    /// Structured side limited to patients who have narrative text.
    pub restricted: Option<Vec<ComparisonRow>>,
}

fn rows(
    sets: &BTreeMap<(Sdoh, IndicatorSource), BTreeSet<&str>>,
    keep: &dyn Fn(IndicatorSource, &str) -> bool,
) -> Vec<ComparisonRow> {
    let empty = BTreeSet::new();
    Sdoh::ALL
        .into_iter()
        .map(|s| {
            let side = |src| -> BTreeSet<&str> {
                sets.get(&(s, src)).unwrap_or(&empty).iter().copied().filter(|p| keep(src, p)).collect()
            };
            ComparisonRow::new(s, &side(IndicatorSource::Structured), &side(IndicatorSource::Extracted))
        })
        .collect()
}

/// Duplicate indicators are harmless: membership is by set.
pub fn compare<'a>(
    indicators: impl IntoIterator<Item = &'a PatientIndicator>,
    narrative: Option<&BTreeSet<String>>,
) -> ComparisonReport {
    let mut sets: BTreeMap<(Sdoh, IndicatorSource), BTreeSet<&str>> = BTreeMap::new();
    for i in indicators {
        sets.entry((i.sdoh, i.source)).or_default().insert(i.patient_id.as_str());
    }
    let all = rows(&sets, &|_, _| true);
    let restricted = narrative.map(|n| {
        rows(&sets, &|src, p| src == IndicatorSource::Extracted || n.contains(p))
    });
    ComparisonReport { denominator: DENOMINATOR_NOTE.to_string(), rows: all, restricted }
}

fn write_rows(out: &mut String, rows: &[ComparisonRow]) {
    let _ = writeln!(
        out,
        "{:<18} {:>6} {:>16} {:>16} {:>16}",
        "sdoh", "union", "only_structured", "only_extracted", "both"
    );
    for r in rows {
        let cell = |n: usize, p: f64| format!("{n} ({:.1}%)", 100.0 * p);
        let _ = writeln!(
            out,
            "{:<18} {:>6} {:>16} {:>16} {:>16}",
            r.sdoh.as_str(),
            r.union,
            cell(r.only_structured, r.p_only_structured),
            cell(r.only_extracted, r.p_only_extracted),
            cell(r.both, r.p_both),
        );
    }
}

impl ComparisonReport {
    pub fn row(&self, sdoh: Sdoh) -> &ComparisonRow {
        self.rows.iter().find(|r| r.sdoh == sdoh).expect("one row per sdoh")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# {}\n", self.denominator);
        write_rows(&mut out, &self.rows);
        if let Some(r) = &self.restricted {
            out.push_str("\n# structured data limited to patients with social-history text\n");
            write_rows(&mut out, r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Argument, Event, Span, Trigger};

    fn doc(id: &str, patient: &str, ts: &str) -> Document {
        let mut d = Document::from_section(id, "tobacco: current smoker");
        d.patient_id = patient.into();
        d.timestamp = ts.into();
        d
    }

    fn tobacco(id: &str, status: SubtypeLabel) -> AnnotationSet {
        let mut e = Event::new(Trigger { span: Span::new(0, 7), event_type: EventType::Tobacco });
        e.arguments.push(Argument::Labeled { arg_type: LabeledArgType::StatusTime, subtype: status, span: Span::new(9, 16) });
        let mut a = AnnotationSet::new(id);
        a.events.push(e);
        a
    }

    #[test]
    fn current_required_and_any_positive_wins() {
        let entries = vec![
            (doc("d1", "p1", "2021-01-01"), tobacco("d1", SubtypeLabel::Past)),
            (doc("d2", "p2", "2021-01-01"), tobacco("d2", SubtypeLabel::Current)),
            (doc("d3", "p2", "2021-06-01"), tobacco("d3", SubtypeLabel::Past)),
            (doc("d4", "p3", "2020-06-01"), tobacco("d4", SubtypeLabel::Current)),
        ];
        let ind = extracted_indicators(&entries, Some(2021));
        let ids: Vec<&str> = ind.iter().map(|i| i.patient_id.as_str()).collect();
        assert_eq!(ids, ["p2"]);
        assert_eq!(extracted_indicators(&entries, None).len(), 2);
    }

    #[test]
    fn set_algebra() {
        let mut ind = Vec::new();
        for p in ["A", "B"] {
            ind.push(PatientIndicator::new(p, Sdoh::DrugCurrent, IndicatorSource::Structured));
        }
        for p in ["B", "C", "C"] {
            ind.push(PatientIndicator::new(p, Sdoh::DrugCurrent, IndicatorSource::Extracted));
        }
        let r = compare(&ind, None);
        let row = r.row(Sdoh::DrugCurrent);
        assert_eq!((row.only_structured, row.only_extracted, row.both, row.union), (1, 1, 1, 3));
        assert_eq!(row.p_both, 1.0 / 3.0);
        assert_eq!(r.row(Sdoh::AlcoholCurrent).union, 0);
    }

    #[test]
    fn no_extracted_means_all_structured_only() {
        let ind = [PatientIndicator::new("A", Sdoh::HomelessCurrent, IndicatorSource::Structured)];
        let row = compare(&ind, None).row(Sdoh::HomelessCurrent).clone();
        assert_eq!((row.only_structured, row.p_only_structured), (1, 1.0));
    }
}
