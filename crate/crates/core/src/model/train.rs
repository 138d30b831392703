use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderKind, ModelConfig};
use super::encoder::{Encoding, FileEncoder};
use super::heads::{forward, RawPredictions};
use super::loss::{accumulate, build_examples, AlignmentStats, SentenceExample};
use super::params::{init_weights, ModelParams, Vocab};
use super::ModelError;
use crate::corpus_io::{tokenize_document, CorpusPartition, Document, TokenizedDocument};
use crate::schema::LabelInventory;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean loss per sentence, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub alignment: AlignmentStats,
    pub sentences: usize,
}

/// Encoder inputs for each sentence of a tokenized document.
pub fn sentence_inputs(
    doc: &TokenizedDocument,
    vocab: &Vocab,
    config: &ModelConfig,
    embeddings: Option<&FileEncoder>,
) -> Result<Vec<Encoding>, ModelError> {
    match config.encoder {
        EncoderKind::Toy => Ok(doc
            .sentence_tokens()
            .map(|s| Encoding::Toy(s.iter().map(|t| vocab.id(&t.text)).collect()))
            .collect()),
        EncoderKind::File => {
            let enc = embeddings.ok_or(ModelError::MissingEmbeddings)?;
            if enc.dim != config.hidden_dim {
                return Err(ModelError::DimensionMismatch {
                    field: "hidden_dim".into(),
                    expected: config.hidden_dim,
                    found: enc.dim,
                });
            }
            let sentences = enc
                .get(&doc.document_id)
                .ok_or_else(|| ModelError::Embeddings(format!("no vectors for document {}", doc.document_id)))?;
            if sentences.len() != doc.sentences.len() {
                return Err(ModelError::Embeddings(format!(
                    "document {}: {} sentences in file, {} after tokenization",
                    doc.document_id,
                    sentences.len(),
                    doc.sentences.len()
                )));
            }
            sentences
                .iter()
                .zip(&doc.sentences)
                .map(|(s, r)| {
                    if s.h.len() != r.len() {
                        return Err(ModelError::Embeddings(format!(
                            "document {}: token count {} in file, {} after tokenization",
                            doc.document_id,
                            s.h.len(),
                            r.len()
                        )));
                    }
                    Ok(Encoding::Fixed(s.clone()))
                })
                .collect()
        }
    }
}

/// Trains with the toy encoder.
pub fn train(corpus: &CorpusPartition, config: &ModelConfig, inv: &LabelInventory) -> Result<ModelParams, ModelError> {
    train_with(corpus, config, inv, None).map(|(p, _)| p)
}

/// Trains a model with per-document SGD steps. Fully determined by the
/// corpus, the config (including its seed) and the embeddings.
pub fn train_with(
    corpus: &CorpusPartition,
    config: &ModelConfig,
    inv: &LabelInventory,
    embeddings: Option<&FileEncoder>,
) -> Result<(ModelParams, TrainReport), ModelError> {
    config.validate()?;
    config.check_inventory(inv)?;
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let tokenized: Vec<TokenizedDocument> = corpus
        .entries
        .iter()
        .map(|(d, _)| tokenize_document(&d.id, &d.section_text))
        .collect();
    let vocab = match config.encoder {
        EncoderKind::Toy => Vocab::build(tokenized.iter().flat_map(|t| t.tokens.iter().map(|t| t.text.as_str()))),
        EncoderKind::File => Vocab::build([]),
    };
    let mut report = TrainReport::default();
    let mut docs: Vec<Vec<SentenceExample>> = Vec::with_capacity(tokenized.len());
    for (tok, (_, anns)) in tokenized.iter().zip(&corpus.entries) {
        let inputs = sentence_inputs(tok, &vocab, config, embeddings)?;
        docs.push(build_examples(tok, anns, inputs, inv, config.max_span_width, &mut report.alignment));
    }
    report.sentences = docs.iter().map(Vec::len).sum();
    let a = &report.alignment;
    if a.unaligned + a.too_wide + a.label_conflicts > 0 {
        log::warn!(
            "gold spans skipped: {} off token boundaries, {} wider than {} tokens; {} entity label conflicts",
            a.unaligned,
            a.too_wide,
            config.max_span_width,
            a.label_conflicts
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = init_weights::<f32>(config, inv, vocab.len(), &mut rng);
    let mut grads = weights.clone();
    let lr = config.learning_rate as f32;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for &di in &order {
            grads.fill_zero();
            for ex in &docs[di] {
                let batch = ex.sample_batch(config, &mut rng);
                total += accumulate(&weights, &batch, Some(&mut grads), None) as f64;
            }
            weights.sgd_step(&grads, lr);
        }
        if !total.is_finite() || !weights.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        let mean = total / report.sentences.max(1) as f64;
        log::info!("epoch {:>4}  mean loss {:.6}", epoch + 1, mean);
        report.epoch_losses.push(mean);
    }
    Ok((ModelParams::new(config.clone(), vocab, weights), report))
}

/// Head outputs for every sentence of a document's social-history section.
pub fn predict_raw(
    params: &ModelParams,
    doc: &Document,
    embeddings: Option<&FileEncoder>,
) -> Result<(TokenizedDocument, Vec<RawPredictions<f32>>), ModelError> {
    let tok = tokenize_document(&doc.id, &doc.section_text);
    let inputs = sentence_inputs(&tok, &params.vocab, &params.config, embeddings)?;
    let raw = tok
        .sentence_tokens()
        .zip(&inputs)
        .map(|(tokens, input)| forward(tokens, input, &params.weights, &params.config))
        .collect();
    Ok((tok, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{generate_corpus, SynthGrammar};

    fn small() -> (CorpusPartition, ModelConfig) {
        let corpus = generate_corpus(&SynthGrammar::default_grammar(), 4, 2).unwrap();
        let cfg = ModelConfig { hidden_dim: 8, width_embedding_dim: 4, epochs: 2, ..ModelConfig::default() };
        (corpus, cfg)
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (corpus, mut cfg) = small();
        cfg.epochs = 0;
        let inv = LabelInventory::default();
        let p = train(&corpus, &cfg, &inv).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w = init_weights::<f32>(&cfg, &inv, p.vocab.len(), &mut rng);
        assert_eq!(p.weights, w);
    }

    #[test]
    fn deterministic_and_loss_decreases() {
        let (corpus, mut cfg) = small();
        cfg.epochs = 5;
        let inv = LabelInventory::default();
        let (a, ra) = train_with(&corpus, &cfg, &inv, None).unwrap();
        let (b, _) = train_with(&corpus, &cfg, &inv, None).unwrap();
        assert_eq!(a, b);
        assert!(ra.epoch_losses.last().unwrap() < &ra.epoch_losses[0]);
    }

    #[test]
    fn rejects_empty_corpus_and_mismatched_inventory() {
        let (corpus, cfg) = small();
        assert!(matches!(
            train(&CorpusPartition::new(crate::corpus_io::PartitionName::Train), &cfg, &LabelInventory::default()),
            Err(ModelError::EmptyCorpus)
        ));
        assert!(matches!(
            train(&corpus, &cfg, &LabelInventory::new(true)),
            Err(ModelError::InventoryMismatch(_))
        ));
    }
}
