//! Training examples, the joint loss and its exact gradient.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::encoder::{toy_backward, toy_forward, EncoderOutput, Encoding};
use super::heads::{context_range, enumerate_spans, maxpool, RawPredictions, SpanCandidate};
use super::params::Weights;
use super::tensor::{cross_entropy, Real};
use crate::corpus_io::{Token, TokenizedDocument};
use crate::schema::{AnnotationSet, Argument, EntityKind, EntityLabel, LabelInventory, LabeledArgType, Span};

/// A labeled span: entity-type index plus one subtype index per head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanItem {
    pub candidate: SpanCandidate,
    pub entity: usize,
    pub subtypes: [usize; 3],
}

/// A labeled ordered pair of entries in [`TrainingBatch::spans`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationItem {
    pub head: usize,
    pub tail: usize,
    /// 0 = null, 1 = has.
    pub label: usize,
}

/// One sentence with gold and sampled negative supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub tokens: Vec<Token>,
    pub input: Encoding,
    /// Gold spans first, then sampled null spans.
    pub spans: Vec<SpanItem>,
    pub relations: Vec<RelationItem>,
}

/// Gold supervision for one sentence, before negative sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceExample {
    pub tokens: Vec<Token>,
    pub input: Encoding,
    pub gold: Vec<SpanItem>,
    /// Index pairs into `gold` connected by `has`.
    pub gold_relations: Vec<(usize, usize)>,
}

/// Gold spans that could not be used, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentStats {
    pub unaligned: usize,
    pub too_wide: usize,
    pub label_conflicts: usize,
}

#[derive(Default)]
struct SpanLabels {
    entity: usize,
    subtypes: [usize; 3],
}

/// Groups a document's gold annotations by sentence. `inputs` holds one
/// encoder input per sentence.
pub fn build_examples(
    doc: &TokenizedDocument,
    anns: &AnnotationSet,
    inputs: Vec<Encoding>,
    inv: &LabelInventory,
    max_width: usize,
    stats: &mut AlignmentStats,
) -> Vec<SentenceExample> {
    assert_eq!(inputs.len(), doc.sentences.len(), "one input per sentence");
    // (sentence, start, width) -> labels
    let mut labels: BTreeMap<(usize, usize, usize), SpanLabels> = BTreeMap::new();
    let mut relations: BTreeSet<((usize, usize, usize), (usize, usize, usize))> = BTreeSet::new();
    let locate = |span: Span, stats: &mut AlignmentStats| -> Option<(usize, usize, usize)> {
        let Some((first, last)) = doc.token_range(span) else {
            stats.unaligned += 1;
            return None;
        };
        let s = doc.sentence_of(first)?;
        if doc.sentence_of(last) != Some(s) {
            stats.unaligned += 1;
            return None;
        }
        let width = last - first + 1;
        if width > max_width {
            stats.too_wide += 1;
            return None;
        }
        Some((s, first - doc.sentences[s].start, width))
    };
    let set_entity = |labels: &mut BTreeMap<_, SpanLabels>, key, idx: usize, is_trigger: bool, stats: &mut AlignmentStats| {
        let l: &mut SpanLabels = labels.entry(key).or_default();
        if l.entity != 0 && l.entity != idx {
            stats.label_conflicts += 1;
            if !is_trigger {
                return;
            }
        }
        l.entity = idx;
    };
    let set_subtype = |labels: &mut BTreeMap<_, SpanLabels>, key, v: LabeledArgType, idx: usize| {
        labels.entry(key).or_default().subtypes[v.index()] = idx;
    };

    for e in &anns.events {
        let Some(tk) = locate(e.trigger.span, stats) else { continue };
        let ti = inv.entity_index(EntityLabel::Event(e.trigger.event_type)).unwrap();
        set_entity(&mut labels, tk, ti, true, stats);
        for a in &e.arguments {
            let Some(ak) = locate(a.span(), stats) else { continue };
            match *a {
                Argument::SpanOnly { arg_type, .. } => {
                    let Some(ai) = inv.entity_index(EntityLabel::Arg(arg_type)) else { continue };
                    set_entity(&mut labels, ak, ai, false, stats);
                }
                Argument::Labeled { arg_type, subtype, .. } => {
                    let si = inv.subtype_index(arg_type, Some(subtype)).unwrap();
                    set_subtype(&mut labels, ak, arg_type, si);
                }
            }
            if ak != tk && ak.0 == tk.0 {
                relations.insert((tk, ak));
            }
        }
    }
    for o in &anns.orphan_entities {
        let Some(k) = locate(o.span, stats) else { continue };
        match o.kind {
            EntityKind::Trigger(t) => {
                let i = inv.entity_index(EntityLabel::Event(t)).unwrap();
                set_entity(&mut labels, k, i, true, stats);
            }
            EntityKind::SpanOnly(t) => {
                if let Some(i) = inv.entity_index(EntityLabel::Arg(t)) {
                    set_entity(&mut labels, k, i, false, stats);
                }
            }
            EntityKind::Labeled(v) => {
                if let Some(i) = inv.subtype_index(v, o.subtype) {
                    set_subtype(&mut labels, k, v, i);
                }
            }
        }
    }

    let mut out: Vec<SentenceExample> = doc
        .sentences
        .iter()
        .zip(inputs)
        .map(|(r, input)| SentenceExample {
            tokens: doc.tokens[r.clone()].to_vec(),
            input,
            gold: Vec::new(),
            gold_relations: Vec::new(),
        })
        .collect();
    let mut position = HashMap::new();
    for ((s, start, width), l) in labels {
        let ex = &mut out[s];
        let span = Span::new(ex.tokens[start].span.start, ex.tokens[start + width - 1].span.end);
        position.insert((s, start, width), ex.gold.len());
        ex.gold.push(SpanItem {
            candidate: SpanCandidate { start, width, span },
            entity: l.entity,
            subtypes: l.subtypes,
        });
    }
    for (h, t) in relations {
        out[h.0].gold_relations.push((position[&h], position[&t]));
    }
    out
}

impl SentenceExample {
    /// Adds sampled null spans and null relation pairs.
    pub fn sample_batch(&self, config: &ModelConfig, rng: &mut ChaCha8Rng) -> TrainingBatch {
        let gold_keys: BTreeSet<(usize, usize)> = self.gold.iter().map(|g| (g.candidate.start, g.candidate.width)).collect();
        let pool: Vec<SpanCandidate> = enumerate_spans(&self.tokens, config.max_span_width)
            .into_iter()
            .filter(|c| !gold_keys.contains(&(c.start, c.width)))
            .collect();
        let mut spans = self.gold.clone();
        let k = config.neg_entity_samples.min(pool.len());
        let mut picked: Vec<usize> = sample(rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        spans.extend(picked.into_iter().map(|i| SpanItem {
            candidate: pool[i],
            entity: 0,
            subtypes: [0; 3],
        }));

        let gold_rel: BTreeSet<(usize, usize)> = self.gold_relations.iter().copied().collect();
        let mut relations: Vec<RelationItem> = self
            .gold_relations
            .iter()
            .map(|&(head, tail)| RelationItem { head, tail, label: 1 })
            .collect();
        let n = self.gold.len();
        let neg_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !gold_rel.contains(&(i, j)))
            .collect();
        let k = config.neg_relation_samples.min(neg_pairs.len());
        let mut picked: Vec<usize> = sample(rng, neg_pairs.len(), k).into_vec();
        picked.sort_unstable();
        relations.extend(picked.into_iter().map(|i| RelationItem {
            head: neg_pairs[i].0,
            tail: neg_pairs[i].1,
            label: 0,
        }));
        TrainingBatch {
            tokens: self.tokens.clone(),
            input: self.input.clone(),
            spans,
            relations,
        }
    }
}

/// Sum of cross-entropies of `raw` against the batch labels. Candidates
/// are matched by token range; relation items whose pair is absent from
/// `raw` are skipped.
pub fn loss<T: Real>(raw: &RawPredictions<T>, batch: &TrainingBatch) -> T {
    let index: HashMap<(usize, usize), usize> = raw
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ((c.start, c.width), i))
        .collect();
    let find = |c: &SpanCandidate| index.get(&(c.start, c.width)).copied();
    let mut total = T::zero();
    for item in &batch.spans {
        let Some(i) = find(&item.candidate) else { continue };
        total += cross_entropy(&raw.entity_logits[i], item.entity).0;
        for v in 0..3 {
            total += cross_entropy(&raw.subtype_logits[i][v], item.subtypes[v]).0;
        }
    }
    let pairs: HashMap<(usize, usize), usize> = raw.pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    for r in &batch.relations {
        let (Some(h), Some(t)) = (find(&batch.spans[r.head].candidate), find(&batch.spans[r.tail].candidate)) else {
            continue;
        };
        if let Some(&k) = pairs.get(&(h, t)) {
            total += cross_entropy(&raw.relation_logits[k], r.label).0;
        }
    }
    total
}

/// Logits for exactly the spans and pairs of a batch.
pub fn forward_batch<T: Real>(batch: &TrainingBatch, w: &Weights<T>) -> RawPredictions<T> {
    let enc = super::encoder::encode(&batch.input, w);
    let candidates: Vec<SpanCandidate> = batch.spans.iter().map(|s| s.candidate).collect();
    let (entity_logits, subtype_logits) = super::heads::span_logits(&enc, &candidates, w);
    let pairs: Vec<(usize, usize)> = batch.relations.iter().map(|r| (r.head, r.tail)).collect();
    let relation_logits = pairs
        .iter()
        .map(|&(h, t)| super::heads::relation_logits(&enc, &candidates[h], &candidates[t], w).expect("consistent weights"))
        .collect();
    RawPredictions {
        candidates,
        entity_logits,
        subtype_logits,
        pairs,
        relation_logits,
    }
}

/// Loss and its gradient with respect to every weight.
pub fn loss_and_gradients<T: Real>(w: &Weights<T>, batch: &TrainingBatch) -> (T, Weights<T>) {
    let mut g = w.clone();
    g.fill_zero();
    let l = accumulate(w, batch, Some(&mut g), None);
    (l, g)
}

/// Routes `dg` (gradient of a pooled span vector plus width embedding)
/// back to token vectors and the width table.
fn route_span<T: Real>(dg: &[T], idx: &[usize], width: usize, dh: &mut [Vec<T>], g: &mut Weights<T>) {
    let d = idx.len();
    for c in 0..d {
        dh[idx[c]][c] += dg[c];
    }
    g.width.add_to_row(width - 1, &dg[d..]);
}

/// Forward plus (optionally) backward pass. Returns the loss; records the
/// max-pool winners in `pattern` when given.
pub(crate) fn accumulate<T: Real>(
    w: &Weights<T>,
    batch: &TrainingBatch,
    mut grads: Option<&mut Weights<T>>,
    mut pattern: Option<&mut Vec<usize>>,
) -> T {
    if batch.tokens.is_empty() {
        return T::zero();
    }
    let (enc, cache): (EncoderOutput<T>, _) = match &batch.input {
        Encoding::Toy(ids) => {
            let (e, c) = toy_forward(ids, w);
            (e, Some(c))
        }
        Encoding::Fixed(o) => (o.cast(), None),
    };
    let n = enc.h.len();
    let d = enc.h_cls.len();
    let dw = w.width.cols;
    let ex = 2 * d + dw;
    let mut dh = vec![vec![T::zero(); d]; n];
    let mut dh_cls = vec![T::zero(); d];
    let mut total = T::zero();

    let pooled: Vec<(Vec<T>, Vec<usize>)> = batch
        .spans
        .iter()
        .map(|s| maxpool(&enc.h, s.candidate.start..s.candidate.end(), d))
        .collect();
    if let Some(p) = pattern.as_deref_mut() {
        pooled.iter().for_each(|(_, idx)| p.extend(idx));
    }

    for (item, (mp, idx)) in batch.spans.iter().zip(&pooled) {
        let mut x = mp.clone();
        x.extend_from_slice(w.width.row(item.candidate.width - 1));
        x.extend_from_slice(&enc.h_cls);
        let z = w.entity_weight.affine(&w.entity_bias, &x);
        let mut y = x.clone();
        y.extend_from_slice(&z);
        let (le, mut dz) = cross_entropy(&z, item.entity);
        total += le;
        let mut dy = vec![T::zero(); y.len()];
        for v in 0..3 {
            let zv = w.subtype_weight[v].affine(&w.subtype_bias[v], &y);
            let (lv, dzv) = cross_entropy(&zv, item.subtypes[v]);
            total += lv;
            if let Some(g) = grads.as_deref_mut() {
                g.subtype_weight[v].add_outer(&dzv, &y);
                g.subtype_bias[v].add_to_row(0, &dzv);
                w.subtype_weight[v].add_transpose_mul(&dzv, &mut dy);
            }
        }
        let Some(g) = grads.as_deref_mut() else { continue };
        for (a, b) in dz.iter_mut().zip(&dy[ex..]) {
            *a += *b;
        }
        g.entity_weight.add_outer(&dz, &x);
        g.entity_bias.add_to_row(0, &dz);
        let mut dx = dy[..ex].to_vec();
        w.entity_weight.add_transpose_mul(&dz, &mut dx);
        route_span(&dx[..d + dw], idx, item.candidate.width, &mut dh, g);
        for (a, b) in dh_cls.iter_mut().zip(&dx[d + dw..]) {
            *a += *b;
        }
    }

    for r in &batch.relations {
        let (a, b) = (&batch.spans[r.head].candidate, &batch.spans[r.tail].candidate);
        let (mpa, ia) = &pooled[r.head];
        let (mpb, ib) = &pooled[r.tail];
        let cr = context_range(a, b);
        let (ctx, ic) = if cr.is_empty() {
            (vec![T::zero(); d], None)
        } else {
            let (v, i) = maxpool(&enc.h, cr, d);
            if let Some(p) = pattern.as_deref_mut() {
                p.extend(&i);
            }
            (v, Some(i))
        };
        let mut x = mpa.clone();
        x.extend_from_slice(w.width.row(a.width - 1));
        x.extend(ctx);
        x.extend_from_slice(mpb);
        x.extend_from_slice(w.width.row(b.width - 1));
        let z = w.relation_weight.affine(&w.relation_bias, &x);
        let (l, dz) = cross_entropy(&z, r.label);
        total += l;
        let Some(g) = grads.as_deref_mut() else { continue };
        g.relation_weight.add_outer(&dz, &x);
        g.relation_bias.add_to_row(0, &dz);
        let mut dx = vec![T::zero(); x.len()];
        w.relation_weight.add_transpose_mul(&dz, &mut dx);
        route_span(&dx[..d + dw], ia, a.width, &mut dh, g);
        if let Some(ic) = ic {
            for c in 0..d {
                dh[ic[c]][c] += dx[d + dw + c];
            }
        }
        route_span(&dx[2 * d + dw..], ib, b.width, &mut dh, g);
    }

    if let (Some(g), Some(cache)) = (grads, cache) {
        toy_backward(&enc, &cache, dh, &dh_cls, w, g);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::tokenize_document;
    use crate::model::params::init_weights;
    use crate::schema::{Event, EventType, LabeledArgType, SubtypeLabel, Trigger};
    use rand::SeedableRng;

    fn fixture() -> (SentenceExample, LabelInventory) {
        let inv = LabelInventory::default();
        let doc = tokenize_document("d", "Tobacco : denies . smokes 1 ppd");
        let mut anns = AnnotationSet::new("d");
        let mut e = Event::new(Trigger { event_type: EventType::Tobacco, span: Span::new(0, 7) });
        e.arguments.push(Argument::Labeled {
            arg_type: LabeledArgType::StatusTime,
            subtype: SubtypeLabel::None,
            span: Span::new(10, 16),
        });
        anns.events.push(e);
        let mut e2 = Event::new(Trigger { event_type: EventType::Tobacco, span: Span::new(19, 25) });
        e2.arguments.push(Argument::SpanOnly { arg_type: crate::schema::SpanOnlyArgType::Amount, span: Span::new(26, 31) });
        anns.events.push(e2);
        let inputs = vec![Encoding::Toy(vec![1, 2, 3, 4]), Encoding::Toy(vec![5, 6, 7])];
        let mut stats = AlignmentStats::default();
        let ex = build_examples(&doc, &anns, inputs, &inv, 3, &mut stats);
        assert_eq!(stats, AlignmentStats::default());
        assert_eq!(ex.len(), 2);
        (ex[0].clone(), inv)
    }

    #[test]
    fn gold_items_and_relations() {
        let (ex, inv) = fixture();
        assert_eq!(ex.gold.len(), 2);
        assert_eq!(ex.gold[0].entity, inv.entity_index(EntityLabel::Event(EventType::Tobacco)).unwrap());
        assert_eq!(ex.gold[1].entity, 0);
        assert_eq!(ex.gold[1].subtypes, [1, 0, 0]);
        assert_eq!(ex.gold_relations, vec![(0, 1)]);
    }

    #[test]
    fn negatives_are_disjoint_from_golds() {
        let (ex, _) = fixture();
        let cfg = ModelConfig { max_span_width: 3, neg_entity_samples: 4, neg_relation_samples: 5, ..ModelConfig::default() };
        let b = ex.sample_batch(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.spans.len(), 2 + 4);
        let golds: Vec<_> = b.spans[..2].iter().map(|s| s.candidate).collect();
        assert!(b.spans[2..].iter().all(|s| !golds.contains(&s.candidate) && s.entity == 0));
        // one gold pair, and the reverse as the only available negative
        assert_eq!(
            b.relations,
            vec![RelationItem { head: 0, tail: 1, label: 1 }, RelationItem { head: 1, tail: 0, label: 0 }]
        );
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let (ex, inv) = fixture();
        let cfg = ModelConfig { hidden_dim: 4, width_embedding_dim: 2, max_span_width: 3, ..ModelConfig::default() };
        let w: Weights<f64> = init_weights(&cfg, &inv, 8, &mut ChaCha8Rng::seed_from_u64(5));
        let b = ex.sample_batch(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let raw = forward_batch(&b, &w);
        // independent recomputation: -ln softmax(z)[y] term by term
        let nll = |z: &[f64], y: usize| {
            let s: f64 = z.iter().map(|v| v.exp()).sum();
            -(z[y].exp() / s).ln()
        };
        let mut expected = 0.0;
        for (i, s) in b.spans.iter().enumerate() {
            expected += nll(&raw.entity_logits[i], s.entity);
            for v in 0..3 {
                expected += nll(&raw.subtype_logits[i][v], s.subtypes[v]);
            }
        }
        for (k, r) in b.relations.iter().enumerate() {
            expected += nll(&raw.relation_logits[k], r.label);
        }
        let got = loss(&raw, &b);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        let (l2, _) = loss_and_gradients(&w, &b);
        assert!((l2 - expected).abs() < 1e-10);
        assert!(got >= 0.0);
    }
}
