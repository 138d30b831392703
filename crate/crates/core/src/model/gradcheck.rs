//! Finite-difference check of the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::Encoding;
use super::loss::{accumulate, loss_and_gradients, TrainingBatch};
use super::params::Weights;
use super::ModelError;

/// Denominator floor of the relative error, so that coordinates whose
/// true gradient is zero are judged by absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub const DEFAULT_COORDINATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checks: Vec<CoordinateCheck>,
    /// Coordinates skipped because a max-pool winner changed within ±ε.
    pub skipped_kinks: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Max relative error over [`DEFAULT_COORDINATES`] sampled coordinates.
pub fn gradient_check(w: &Weights<f64>, batch: &TrainingBatch, epsilon: f64) -> Result<f64, ModelError> {
    gradient_check_with(w, batch, epsilon, DEFAULT_COORDINATES, 0).map(|r| r.max_relative_error)
}

/// Samples at least `coordinates` parameters, spread evenly over tensors;
/// embedding rows are drawn from the tokens present in the batch.
pub fn gradient_check_with(
    w: &Weights<f64>,
    batch: &TrainingBatch,
    epsilon: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    if !(epsilon > 0.0) {
        return Err(ModelError::InvalidConfig("epsilon must be positive".into()));
    }
    let (l0, grads) = loss_and_gradients(w, batch);
    if !l0.is_finite() {
        return Err(ModelError::NonFiniteLoss { epoch: 0 });
    }
    let mut base_pattern = Vec::new();
    accumulate(w, batch, None, Some(&mut base_pattern));

    let ids: Vec<usize> = match &batch.input {
        Encoding::Toy(ids) => ids.clone(),
        Encoding::Fixed(_) => Vec::new(),
    };
    let n_tensors = w.tensors().len();
    let per_tensor = coordinates.div_ceil(n_tensors);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let mut probe = w.clone();
    for ti in 0..n_tensors {
        let (rows, cols) = w.tensors()[ti].shape();
        let mut done = 0;
        let mut attempts = 0;
        while done < per_tensor && attempts < 20 * per_tensor {
            attempts += 1;
            let row = if ti == 0 && !ids.is_empty() {
                ids[rng.gen_range(0..ids.len())]
            } else {
                rng.gen_range(0..rows)
            };
            let index = row * cols + rng.gen_range(0..cols);
            let orig = w.tensors()[ti].data[index];
            let mut eval = |x: f64| {
                probe.tensors_mut()[ti].data[index] = x;
                let mut p = Vec::new();
                let l = accumulate(&probe, batch, None, Some(&mut p));
                (l, p)
            };
            let (lp, pp) = eval(orig + epsilon);
            let (lm, pm) = eval(orig - epsilon);
            probe.tensors_mut()[ti].data[index] = orig;
            if !(lp.is_finite() && lm.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch: 0 });
            }
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * epsilon);
            let analytic = grads.tensors()[ti].data[index];
            let relative_error = relative_error(analytic, numeric);
            report.max_relative_error = report.max_relative_error.max(relative_error);
            report.checks.push(CoordinateCheck { tensor: ti, index, analytic, numeric, relative_error });
            done += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{generate_corpus, tokenize_document, SynthGrammar};
    use crate::model::loss::build_examples;
    use crate::model::params::{init_weights, Vocab};
    use crate::model::train::sentence_inputs;
    use crate::model::{AlignmentStats, ModelConfig};
    use crate::schema::LabelInventory;

    fn batches(cfg: &ModelConfig) -> (Vec<TrainingBatch>, usize) {
        let inv = LabelInventory::default();
        let corpus = generate_corpus(&SynthGrammar::default_grammar(), 3, 5).unwrap();
        let toks: Vec<_> = corpus.entries.iter().map(|(d, _)| tokenize_document(&d.id, &d.section_text)).collect();
        let vocab = Vocab::build(toks.iter().flat_map(|t| t.tokens.iter().map(|t| t.text.as_str())));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        for (t, (_, a)) in toks.iter().zip(&corpus.entries) {
            let inputs = sentence_inputs(t, &vocab, cfg, None).unwrap();
            for ex in build_examples(t, a, inputs, &inv, cfg.max_span_width, &mut AlignmentStats::default()) {
                out.push(ex.sample_batch(cfg, &mut rng));
            }
        }
        (out, vocab.len())
    }

    #[test]
    fn analytic_matches_numeric() {
        let cfg = ModelConfig { hidden_dim: 8, width_embedding_dim: 3, max_span_width: 4, neg_entity_samples: 6, neg_relation_samples: 4, ..ModelConfig::default() };
        let (bs, v) = batches(&cfg);
        let w: Weights<f64> = init_weights(&cfg, &LabelInventory::default(), v, &mut ChaCha8Rng::seed_from_u64(9));
        for b in bs.iter().take(4) {
            let r = gradient_check_with(&w, b, 1e-5, 200, 3).unwrap();
            let worst = r.checks.iter().max_by(|a, b| a.relative_error.total_cmp(&b.relative_error)).unwrap();
            assert!(r.max_relative_error < 1e-4, "{worst:?} skipped {}", r.skipped_kinks);
            assert!(r.checks.len() >= 200);
        }
    }
}
