//! Regular-expression normalization of extracted substance spans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::CaseStudyError;
use crate::corpus_io::Document;
use crate::schema::{AnnotationSet, Argument, EventType, SpanOnlyArgType};

pub const UNNORMALIZED: &str = "unnormalized";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstanceCategory {
    Drug,
    Alcohol,
}

impl SubstanceCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SubstanceCategory::Drug => "drug",
            SubstanceCategory::Alcohol => "alcohol",
        }
    }

    fn of(event_type: EventType) -> Option<Self> {
        match event_type {
            EventType::Drug => Some(SubstanceCategory::Drug),
            EventType::Alcohol => Some(SubstanceCategory::Alcohol),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconRule {
    pub pattern: String,
    pub canonical: String,
    pub category: SubstanceCategory,
}

/// Ordered rules; the first matching rule of the right category wins.
#[derive(Debug, Clone)]
pub struct NormalizationLexicon {
    rules: Vec<LexiconRule>,
    compiled: Vec<Regex>,
}

impl NormalizationLexicon {
    pub fn new(rules: Vec<LexiconRule>) -> Result<Self, CaseStudyError> {
        let compiled = rules
            .iter()
            .map(|r| {
                RegexBuilder::new(&r.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| CaseStudyError::Lexicon(format!("{:?}: {e}", r.pattern)))
            })
            .collect::<Result<_, _>>()?;
        Ok(NormalizationLexicon { rules, compiled })
    }

    pub fn from_json(s: &str) -> Result<Self, CaseStudyError> {
        #[derive(Deserialize)]
        struct Raw {
            rules: Vec<LexiconRule>,
        }
        let raw: Raw = serde_json::from_str(s).map_err(|e| CaseStudyError::Lexicon(e.to_string()))?;
        Self::new(raw.rules)
    }

    pub fn default_lexicon() -> Self {
        Self::from_json(include_str!("../../assets/substance_lexicon.json")).expect("bundled lexicon is valid")
    }

    pub fn rules(&self) -> &[LexiconRule] {
        &self.rules
    }

    pub fn normalize(&self, text: &str, category: SubstanceCategory) -> Option<&str> {
        self.rules
            .iter()
            .zip(&self.compiled)
            .find(|(r, re)| r.category == category && re.is_match(text))
            .map(|(r, _)| r.canonical.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: SubstanceCategory,
    /// Patients with at least one normalized value.
    pub patients: usize,
    pub patients_multiple: usize,
    pub fraction_multiple: f64,
    /// Unique-patient counts per canonical value, most frequent first;
    /// includes the `unnormalized` bucket.
    pub counts: Vec<(String, usize)>,
    pub unnormalized_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstanceReport {
    pub categories: Vec<CategoryReport>,
    pub per_patient: BTreeMap<String, BTreeMap<SubstanceCategory, BTreeSet<String>>>,
}

impl SubstanceReport {
    pub fn category(&self, c: SubstanceCategory) -> &CategoryReport {
        self.categories.iter().find(|r| r.category == c).expect("both categories reported")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in &self.categories {
            let _ = writeln!(
                out,
                "# {}: {} patients with normalized values, {} ({:.1}%) with more than one; {} unnormalized spans",
                c.category.as_str(),
                c.patients,
                c.patients_multiple,
                100.0 * c.fraction_multiple,
                c.unnormalized_spans
            );
            for (name, n) in &c.counts {
                let _ = writeln!(out, "{name:<24} {n:>6}");
            }
        }
        out
    }
}

/// Normalizes the Type-argument text of Drug and Alcohol events and
/// aggregates per patient (documents without a patient use their id).
pub fn normalize_substances(entries: &[(Document, AnnotationSet)], lexicon: &NormalizationLexicon) -> SubstanceReport {
    let mut per_patient: BTreeMap<String, BTreeMap<SubstanceCategory, BTreeSet<String>>> = BTreeMap::new();
    let mut unnormalized = BTreeMap::<SubstanceCategory, usize>::new();
    for (doc, anns) in entries {
        let patient = if doc.patient_id.is_empty() { &doc.id } else { &doc.patient_id };
        for e in &anns.events {
            let Some(cat) = SubstanceCategory::of(e.trigger.event_type) else { continue };
            for a in &e.arguments {
                let Argument::SpanOnly { arg_type: SpanOnlyArgType::Type, span } = *a else { continue };
                let text = doc.span_text(span);
                let value = match lexicon.normalize(&text, cat) {
                    Some(v) => v.to_string(),
                    None => {
                        *unnormalized.entry(cat).or_default() += 1;
                        UNNORMALIZED.to_string()
                    }
                };
                per_patient.entry(patient.clone()).or_default().entry(cat).or_default().insert(value);
            }
        }
    }

    let categories = [SubstanceCategory::Drug, SubstanceCategory::Alcohol]
        .into_iter()
        .map(|cat| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut patients = 0;
            let mut multiple = 0;
            for sets in per_patient.values() {
                let Some(values) = sets.get(&cat) else { continue };
                for v in values {
                    *counts.entry(v.clone()).or_default() += 1;
                }
                let known = values.iter().filter(|v| *v != UNNORMALIZED).count();
                patients += usize::from(known > 0);
                multiple += usize::from(known > 1);
            }
            let mut counts: Vec<(String, usize)> = counts.into_iter().collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            CategoryReport {
                category: cat,
                patients,
                patients_multiple: multiple,
                fraction_multiple: if patients == 0 { 0.0 } else { multiple as f64 / patients as f64 },
                counts,
                unnormalized_spans: unnormalized.get(&cat).copied().unwrap_or(0),
            }
        })
        .collect();
    SubstanceReport { categories, per_patient }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Event, Span, Trigger};

    #[test]
    fn starter_lexicon() {
        let lx = NormalizationLexicon::default_lexicon();
        assert!(lx.rules().len() >= 20);
        assert_eq!(lx.normalize("MJ", SubstanceCategory::Drug), Some("marijuana"));
        assert_eq!(lx.normalize("IV meth", SubstanceCategory::Drug), Some("methamphetamine"));
        assert_eq!(lx.normalize("red wine", SubstanceCategory::Alcohol), Some("wine"));
        assert_eq!(lx.normalize("wine", SubstanceCategory::Drug), None);
    }

    #[test]
    fn first_match_wins() {
        let rules = vec![
            LexiconRule { pattern: "crack".into(), canonical: "crack".into(), category: SubstanceCategory::Drug },
            LexiconRule { pattern: "crack|cocaine".into(), canonical: "cocaine".into(), category: SubstanceCategory::Drug },
        ];
        let lx = NormalizationLexicon::new(rules).unwrap();
        assert_eq!(lx.normalize("crack cocaine", SubstanceCategory::Drug), Some("crack"));
        assert!(NormalizationLexicon::from_json(r#"{"rules":[{"pattern":"[","canonical":"x","category":"drug"}]}"#).is_err());
    }

    #[test]
    fn per_patient_sets() {
        let text = "Drug: MJ, heroin, glue";
        let mut doc = Document::from_section("d1", text);
        doc.patient_id = "p1".into();
        let mut e = Event::new(Trigger { span: Span::new(0, 4), event_type: EventType::Drug });
        for (s, t) in [(6, 8), (10, 16), (18, 22)] {
            e.arguments.push(Argument::SpanOnly { arg_type: SpanOnlyArgType::Type, span: Span::new(s, t) });
        }
        let mut anns = AnnotationSet::new("d1");
        anns.events.push(e);
        let lx = NormalizationLexicon::new(vec![
            LexiconRule { pattern: r"\bmj\b".into(), canonical: "marijuana".into(), category: SubstanceCategory::Drug },
            LexiconRule { pattern: "heroin".into(), canonical: "heroin".into(), category: SubstanceCategory::Drug },
        ])
        .unwrap();
        let r = normalize_substances(&[(doc, anns)], &lx);
        let d = r.category(SubstanceCategory::Drug);
        assert_eq!((d.patients, d.patients_multiple, d.unnormalized_spans), (1, 1, 1));
        assert_eq!(d.fraction_multiple, 1.0);
        assert_eq!(r.per_patient["p1"][&SubstanceCategory::Drug].len(), 3);
        assert_eq!(r.category(SubstanceCategory::Alcohol).patients, 0);
    }
}
