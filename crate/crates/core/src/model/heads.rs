//! Span enumeration, span representations and the three classifier heads.

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, RelationCandidatePolicy};
use super::encoder::{encode, EncoderOutput, Encoding};
use super::params::Weights;
use super::tensor::{argmax, Real, Tensor};
use super::ModelError;
use crate::corpus_io::Token;
use crate::schema::Span;

/// Tokens `start .. start + width` of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanCandidate {
    pub start: usize,
    pub width: usize,
    /// Character span covered by the tokens.
    pub span: Span,
}

impl SpanCandidate {
    pub fn end(&self) -> usize {
        self.start + self.width
    }
}

/// All token ranges of width 1..=K, ordered by (start, width).
pub fn enumerate_spans(tokens: &[Token], max_width: usize) -> Vec<SpanCandidate> {
    let n = tokens.len();
    let mut out = Vec::new();
    for start in 0..n {
        for width in 1..=max_width.min(n - start) {
            out.push(SpanCandidate {
                start,
                width,
                span: Span::new(tokens[start].span.start, tokens[start + width - 1].span.end),
            });
        }
    }
    out
}

/// Coordinate-wise max over `h[range]`, with the winning index per
/// coordinate (first on ties).
pub(crate) fn maxpool<T: Real>(h: &[Vec<T>], range: std::ops::Range<usize>, d: usize) -> (Vec<T>, Vec<usize>) {
    let mut v = vec![T::neg_infinity(); d];
    let mut idx = vec![range.start; d];
    for t in range {
        for c in 0..d {
            if h[t][c] > v[c] {
                v[c] = h[t][c];
                idx[c] = t;
            }
        }
    }
    (v, idx)
}

fn check(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimensionMismatch {
            field: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// `g = maxpool(h_t..h_{t+k}) ∘ w_{k+1}`.
pub fn span_representation<T: Real>(enc: &EncoderOutput<T>, s: &SpanCandidate, width: &Tensor<T>) -> Vec<T> {
    let d = enc.h_cls.len();
    let (mut g, _) = maxpool(&enc.h, s.start..s.end(), d);
    g.extend_from_slice(width.row(s.width - 1));
    g
}

/// Entity-type logits for `x = g ∘ h_cls`.
pub fn entity_type_logits<T: Real>(g: &[T], h_cls: &[T], w: &Weights<T>) -> Result<Vec<T>, ModelError> {
    let mut x = g.to_vec();
    x.extend_from_slice(h_cls);
    check("entity head input", w.entity_weight.cols, x.len())?;
    Ok(w.entity_weight.affine(&w.entity_bias, &x))
}

/// Subtype logits of head `v` for input `x ∘ entity_logits`.
pub fn subtype_logits<T: Real>(x: &[T], entity_logits: &[T], v: usize, w: &Weights<T>) -> Result<Vec<T>, ModelError> {
    let mut y = x.to_vec();
    y.extend_from_slice(entity_logits);
    check("subtype head input", w.subtype_weight[v].cols, y.len())?;
    Ok(w.subtype_weight[v].affine(&w.subtype_bias[v], &y))
}

/// Tokens strictly between two spans, empty when adjacent or overlapping.
pub(crate) fn context_range(a: &SpanCandidate, b: &SpanCandidate) -> std::ops::Range<usize> {
    let (first, second) = if a.start <= b.start { (a, b) } else { (b, a) };
    if first.end() < second.start {
        first.end()..second.start
    } else {
        0..0
    }
}

/// Max-pooled context between two spans, or zeros.
pub fn relation_context<T: Real>(enc: &EncoderOutput<T>, a: &SpanCandidate, b: &SpanCandidate) -> Vec<T> {
    let d = enc.h_cls.len();
    let r = context_range(a, b);
    if r.is_empty() {
        vec![T::zero(); d]
    } else {
        maxpool(&enc.h, r, d).0
    }
}

/// Relation logits for head span `a` and tail span `b`.
pub fn relation_logits<T: Real>(enc: &EncoderOutput<T>, a: &SpanCandidate, b: &SpanCandidate, w: &Weights<T>) -> Result<Vec<T>, ModelError> {
    let mut r = span_representation(enc, a, &w.width);
    r.extend(relation_context(enc, a, b));
    r.extend(span_representation(enc, b, &w.width));
    check("relation head input", w.relation_weight.cols, r.len())?;
    Ok(w.relation_weight.affine(&w.relation_bias, &r))
}

/// Head outputs for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPredictions<T> {
    pub candidates: Vec<SpanCandidate>,
    pub entity_logits: Vec<Vec<T>>,
    /// Per candidate, one logit vector per labeled argument type.
    pub subtype_logits: Vec<[Vec<T>; 3]>,
    /// Ordered candidate index pairs (head, tail).
    pub pairs: Vec<(usize, usize)>,
    pub relation_logits: Vec<Vec<T>>,
}

impl<T: Real> RawPredictions<T> {
    pub fn is_finite(&self) -> bool {
        let fin = |v: &Vec<T>| v.iter().all(|x| x.is_finite());
        self.entity_logits.iter().all(fin)
            && self.subtype_logits.iter().flatten().all(fin)
            && self.relation_logits.iter().all(fin)
    }
}

/// Entity and subtype logits for the given candidates.
pub(crate) fn span_logits<T: Real>(
    enc: &EncoderOutput<T>,
    candidates: &[SpanCandidate],
    w: &Weights<T>,
) -> (Vec<Vec<T>>, Vec<[Vec<T>; 3]>) {
    let mut ent = Vec::with_capacity(candidates.len());
    let mut sub = Vec::with_capacity(candidates.len());
    for s in candidates {
        let mut x = span_representation(enc, s, &w.width);
        x.extend_from_slice(&enc.h_cls);
        let z = w.entity_weight.affine(&w.entity_bias, &x);
        let mut y = x;
        y.extend_from_slice(&z);
        sub.push(std::array::from_fn(|v| w.subtype_weight[v].affine(&w.subtype_bias[v], &y)));
        ent.push(z);
    }
    (ent, sub)
}

/// Runs every head on one sentence.
pub fn forward<T: Real>(
    tokens: &[Token],
    input: &Encoding,
    w: &Weights<T>,
    config: &ModelConfig,
) -> RawPredictions<T> {
    let candidates = enumerate_spans(tokens, config.max_span_width);
    if tokens.is_empty() {
        return RawPredictions {
            candidates,
            entity_logits: vec![],
            subtype_logits: vec![],
            pairs: vec![],
            relation_logits: vec![],
        };
    }
    let enc = encode(input, w);
    let (entity_logits, subtype_logits) = span_logits(&enc, &candidates, w);
    let keep: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            argmax(&entity_logits[i]) != 0
                || (config.relation_candidate_policy == RelationCandidatePolicy::EntityOrSubtype
                    && subtype_logits[i].iter().any(|z| argmax(z) != 0))
        })
        .collect();
    let mut pairs = Vec::new();
    let mut relation_logits = Vec::new();
    for &i in &keep {
        for &j in &keep {
            if i != j {
                pairs.push((i, j));
                relation_logits.push(
                    relation_logits_unchecked(&enc, &candidates[i], &candidates[j], w),
                );
            }
        }
    }
    RawPredictions {
        candidates,
        entity_logits,
        subtype_logits,
        pairs,
        relation_logits,
    }
}

fn relation_logits_unchecked<T: Real>(enc: &EncoderOutput<T>, a: &SpanCandidate, b: &SpanCandidate, w: &Weights<T>) -> Vec<T> {
    relation_logits(enc, a, b, w).expect("weights built from config")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::tokenize;
    use crate::model::params::init_weights;
    use crate::schema::LabelInventory;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(n: usize) -> Vec<Token> {
        let text = vec!["w"; n].join(" ");
        tokenize(&text).tokens
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(enumerate_spans(&toks(6), 3).len(), 15);
        assert_eq!(enumerate_spans(&toks(2), 5).len(), 3);
        assert!(enumerate_spans(&toks(0), 3).is_empty());
    }

    #[test]
    fn lexicographic_order() {
        let c = enumerate_spans(&toks(3), 2);
        let pairs: Vec<(usize, usize)> = c.iter().map(|s| (s.start, s.width)).collect();
        assert_eq!(pairs, [(0, 1), (0, 2), (1, 1), (1, 2), (2, 1)]);
        assert_eq!(c[1].span, Span::new(0, 3));
    }

    #[test]
    fn max_concat_example() {
        let enc = EncoderOutput { h_cls: vec![0.0, 0.0], h: vec![vec![1.0, 2.0], vec![3.0, 1.0]] };
        let width = Tensor::from_vec(2, 1, vec![9.0, 0.5]);
        let s = SpanCandidate { start: 0, width: 2, span: Span::new(0, 3) };
        assert_eq!(span_representation(&enc, &s, &width), vec![3.0, 2.0, 0.5]);
        let one = SpanCandidate { start: 1, width: 1, span: Span::new(2, 3) };
        assert_eq!(span_representation(&enc, &one, &width), vec![3.0, 1.0, 9.0]);
    }

    #[test]
    fn adjacent_spans_have_zero_context() {
        let enc = EncoderOutput { h_cls: vec![0.0, 0.0], h: vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![-1.0, 5.0]] };
        let a = SpanCandidate { start: 0, width: 1, span: Span::new(0, 1) };
        let b = SpanCandidate { start: 1, width: 1, span: Span::new(2, 3) };
        let c = SpanCandidate { start: 2, width: 1, span: Span::new(4, 5) };
        assert_eq!(relation_context(&enc, &a, &b), vec![0.0, 0.0]);
        assert_eq!(relation_context(&enc, &c, &a), vec![3.0, 1.0]);
        let ab = SpanCandidate { start: 0, width: 2, span: Span::new(0, 3) };
        assert_eq!(relation_context(&enc, &ab, &b), vec![0.0, 0.0]);
    }

    fn weights(d: usize, dw: usize) -> (ModelConfig, Weights<f64>) {
        let cfg = ModelConfig { hidden_dim: d, width_embedding_dim: dw, max_span_width: 2, ..ModelConfig::default() };
        let w = init_weights(&cfg, &LabelInventory::default(), 5, &mut ChaCha8Rng::seed_from_u64(3));
        (cfg, w)
    }

    #[test]
    fn head_input_sizes() {
        let (_, w) = weights(2, 1);
        assert_eq!(w.entity_weight.cols, 5);
        assert_eq!(w.entity_weight.rows, 11);
        assert_eq!(w.subtype_weight.each_ref().map(|t| t.cols), [16, 16, 16]);
        assert_eq!(w.subtype_weight.each_ref().map(|t| t.rows), [4, 7, 5]);
        assert_eq!(w.relation_weight.cols, 8);
        assert_eq!(w.relation_weight.rows, 2);
        assert!(entity_type_logits(&[0.0; 3], &[0.0; 3], &w).is_err());
        assert!(subtype_logits(&[0.0; 5], &[0.0; 10], 0, &w).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let cfg = ModelConfig { hidden_dim: 2, width_embedding_dim: 1, ..ModelConfig::default() };
        let w = Weights::<f64>::zeros(&cfg, &LabelInventory::default(), 1);
        assert_eq!(entity_type_logits(&[1.0, 2.0, 3.0], &[4.0, 5.0], &w).unwrap(), vec![0.0; 11]);
    }

    #[test]
    fn forward_counts_and_gating() {
        let (mut cfg, mut w) = weights(4, 2);
        let tokens = tokenize("Tobacco : denies").tokens;
        let input = Encoding::Toy(vec![1, 2, 3]);
        let raw = forward(&tokens, &input, &w, &cfg);
        assert_eq!(raw.candidates.len(), 5);
        assert_eq!(raw.entity_logits.len(), 5);
        assert!(raw.subtype_logits.iter().all(|s| s.len() == 3));
        assert!(raw.is_finite());
        assert_eq!(raw, forward(&tokens, &input, &w, &cfg));

        // null always wins: no relation pairs under either policy
        w.entity_bias.data[0] = 100.0;
        w.subtype_bias.iter_mut().for_each(|b| b.data[0] = 100.0);
        cfg.relation_candidate_policy = RelationCandidatePolicy::EntityOnly;
        assert!(forward(&tokens, &input, &w, &cfg).pairs.is_empty());
    }

    proptest! {
        #[test]
        fn candidate_count_formula(n in 0usize..40, k in 1usize..12) {
            let expected: usize = (1..=k).map(|w| n.saturating_sub(w - 1)).sum();
            prop_assert_eq!(enumerate_spans(&toks(n), k).len(), expected);
        }

        #[test]
        fn maxpool_matches_loop(vals in proptest::collection::vec(-5.0f64..5.0, 12), start in 0usize..2) {
            let h: Vec<Vec<f64>> = vals.chunks(3).map(|c| c.to_vec()).collect();
            let enc = EncoderOutput { h_cls: vec![0.0; 3], h: h.clone() };
            let width = Tensor::from_vec(3, 1, vec![0.1, 0.2, 0.3]);
            let s = SpanCandidate { start, width: 3, span: Span::new(0, 1) };
            let g = span_representation(&enc, &s, &width);
            for c in 0..3 {
                let mut m = f64::NEG_INFINITY;
                for t in start..start + 3 {
                    if h[t][c] > m { m = h[t][c]; }
                }
                prop_assert_eq!(g[c], m);
            }
            prop_assert_eq!(g[3], 0.3);
        }
    }
}
