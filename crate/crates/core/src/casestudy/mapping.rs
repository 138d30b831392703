//! Which structured values count as a positive SDOH indication.

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::compare::Sdoh;
use super::structured::{StructuredRecord, StructuredSource};
use super::CaseStudyError;

/// Value tests; string comparisons ignore case and surrounding space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    True,
    OneOf { values: Vec<String> },
    NoneOf { values: Vec<String> },
    Matches { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub source: StructuredSource,
    pub field: String,
    pub sdoh: Sdoh,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredMapping {
    pub rules: Vec<MappingRule>,
    #[serde(skip)]
    compiled: Vec<Option<Regex>>,
}

impl StructuredMapping {
    pub fn new(rules: Vec<MappingRule>) -> Result<Self, CaseStudyError> {
        let compiled = rules
            .iter()
            .map(|r| match &r.predicate {
                Predicate::Matches { pattern } => RegexBuilder::new(pattern)
                    .case_insensitive(true)
                    .build()
                    .map(Some)
                    .map_err(|e| CaseStudyError::Mapping(format!("{}.{}: {e}", r.source.as_str(), r.field))),
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        Ok(StructuredMapping { rules, compiled })
    }

    pub fn from_json(s: &str) -> Result<Self, CaseStudyError> {
        #[derive(Deserialize)]
        struct Raw {
            rules: Vec<MappingRule>,
        }
        let raw: Raw = serde_json::from_str(s).map_err(|e| CaseStudyError::Mapping(e.to_string()))?;
        Self::new(raw.rules)
    }

    pub fn default_mapping() -> Self {
        Self::from_json(include_str!("../../assets/structured_mapping.json")).expect("bundled mapping is valid")
    }

    /// `None` when no rule covers the record's (source, field); otherwise
    /// the SDOH indications the record supports.
    pub fn positives(&self, rec: &StructuredRecord) -> Option<Vec<Sdoh>> {
        let mut covered = false;
        let mut out = Vec::new();
        let value = rec.value.trim().to_lowercase();
        for (r, re) in self.rules.iter().zip(&self.compiled) {
            if r.source != rec.source || !r.field.eq_ignore_ascii_case(rec.field.trim()) {
                continue;
            }
            covered = true;
            let hit = match &r.predicate {
                Predicate::True => value == "true",
                Predicate::OneOf { values } => values.iter().any(|v| v.trim().to_lowercase() == value),
                Predicate::NoneOf { values } => !values.iter().any(|v| v.trim().to_lowercase() == value),
                Predicate::Matches { .. } => re.as_ref().is_some_and(|re| re.is_match(&value)),
            };
            if hit && !out.contains(&r.sdoh) {
                out.push(r.sdoh);
            }
        }
        covered.then_some(out)
    }
}

impl PartialEq for StructuredMapping {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(source: StructuredSource, field: &str, value: &str) -> StructuredRecord {
        StructuredRecord { patient_id: "p".into(), source, field: field.into(), value: value.into(), timestamp: None }
    }

    #[test]
    fn starter_mapping() {
        let m = StructuredMapping::default_mapping();
        assert_eq!(m.positives(&rec(StructuredSource::SocialHistoryTable, "tobacco_use", "true")), Some(vec![Sdoh::TobaccoCurrent]));
        assert_eq!(m.positives(&rec(StructuredSource::SocialHistoryTable, "tobacco_use", "false")), Some(vec![]));
        assert_eq!(m.positives(&rec(StructuredSource::Flowsheet, "living_situation", "Homeless shelter")), Some(vec![Sdoh::HomelessCurrent]));
        assert_eq!(m.positives(&rec(StructuredSource::EmploymentStatus, "status", "Unknown")), Some(vec![]));
        assert_eq!(m.positives(&rec(StructuredSource::EmploymentStatus, "status", "retired")), Some(vec![Sdoh::EmploymentAny]));
        assert_eq!(m.positives(&rec(StructuredSource::Flowsheet, "pulse", "80")), None);
    }

    #[test]
    fn bad_pattern_is_rejected() {
        let bad = r#"{"rules":[{"source":"flowsheet","field":"x","sdoh":"drug_current","predicate":{"kind":"matches","pattern":"("}}]}"#;
        assert!(StructuredMapping::from_json(bad).is_err());
    }
}
