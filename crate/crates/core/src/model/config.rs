use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::schema::LabelInventory;

/// Which spans enter relation classification at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelationCandidatePolicy {
    /// Spans with a non-null entity-type prediction.
    EntityOnly,
    /// Spans with a non-null entity-type or subtype prediction.
    #[default]
    EntityOrSubtype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Trainable token embeddings with one neighbor-mixing layer.
    #[default]
    Toy,
    /// Precomputed vectors read from an embeddings sidecar file.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub width_embedding_dim: usize,
    pub max_span_width: usize,
    /// Null spans sampled per sentence.
    pub neg_entity_samples: usize,
    /// Null relation pairs sampled per sentence.
    pub neg_relation_samples: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub relation_candidate_policy: RelationCandidatePolicy,
    pub encoder: EncoderKind,
    pub include_method: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 32,
            width_embedding_dim: 16,
            max_span_width: 8,
            neg_entity_samples: 100,
            neg_relation_samples: 100,
            learning_rate: 0.002,
            epochs: 60,
            seed: 7,
            relation_candidate_policy: RelationCandidatePolicy::default(),
            encoder: EncoderKind::default(),
            include_method: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if self.width_embedding_dim == 0 {
            return bad("width_embedding_dim must be at least 1");
        }
        if self.max_span_width == 0 {
            return bad("max_span_width must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive and finite");
        }
        Ok(())
    }

    pub fn inventory(&self) -> LabelInventory {
        LabelInventory::new(self.include_method)
    }

    /// The label inventory must be the one the config describes.
    pub fn check_inventory(&self, inv: &LabelInventory) -> Result<(), ModelError> {
        if inv.include_method() != self.include_method {
            return Err(ModelError::InventoryMismatch(format!(
                "config include_method={} but inventory include_method={}",
                self.include_method,
                inv.include_method()
            )));
        }
        Ok(())
    }

    pub fn entity_input_dim(&self) -> usize {
        2 * self.hidden_dim + self.width_embedding_dim
    }

    pub fn relation_input_dim(&self) -> usize {
        3 * self.hidden_dim + 2 * self.width_embedding_dim
    }
}
