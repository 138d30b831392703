use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tensor::{Real, Tensor};
use crate::schema::{LabelInventory, LabeledArgType};

pub const UNK: &str = "<unk>";

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub embedding: Tensor<T>,
    pub mix_self: Tensor<T>,
    pub mix_neighbor: Tensor<T>,
    pub mix_bias: Tensor<T>,
    pub cls_weight: Tensor<T>,
    pub cls_bias: Tensor<T>,
    pub width: Tensor<T>,
    pub entity_weight: Tensor<T>,
    pub entity_bias: Tensor<T>,
    pub subtype_weight: [Tensor<T>; 3],
    pub subtype_bias: [Tensor<T>; 3],
    pub relation_weight: Tensor<T>,
    pub relation_bias: Tensor<T>,
}

/// Tensor names in checkpoint order, with expected shapes.
pub fn tensor_layout(config: &ModelConfig, inv: &LabelInventory, vocab_size: usize) -> Vec<(String, (usize, usize))> {
    let d = config.hidden_dim;
    let ne = inv.num_entity_labels();
    let ex = config.entity_input_dim();
    let mut out = vec![
        ("encoder.embedding".to_string(), (vocab_size, d)),
        ("encoder.mix_self".into(), (d, d)),
        ("encoder.mix_neighbor".into(), (d, d)),
        ("encoder.mix_bias".into(), (1, d)),
        ("encoder.cls_weight".into(), (d, d)),
        ("encoder.cls_bias".into(), (1, d)),
        ("span.width".into(), (config.max_span_width, config.width_embedding_dim)),
        ("entity.weight".into(), (ne, ex)),
        ("entity.bias".into(), (1, ne)),
    ];
    for v in LabeledArgType::ALL_ARRAY {
        let n = inv.subtype_labels(v).len();
        out.push((format!("subtype.{v}.weight"), (n, ex + ne)));
        out.push((format!("subtype.{v}.bias"), (1, n)));
    }
    out.push(("relation.weight".into(), (2, config.relation_input_dim())));
    out.push(("relation.bias".into(), (1, 2)));
    out
}

impl<T: Real> Weights<T> {
    pub fn zeros(config: &ModelConfig, inv: &LabelInventory, vocab_size: usize) -> Self {
        let tensors = tensor_layout(config, inv, vocab_size)
            .into_iter()
            .map(|(_, (r, c))| Tensor::zeros(r, c))
            .collect();
        Self::from_tensors(tensors)
    }

    /// Inverse of [`Weights::tensors`]; expects layout order.
    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Self {
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("tensor count");
        let embedding = next();
        let mix_self = next();
        let mix_neighbor = next();
        let mix_bias = next();
        let cls_weight = next();
        let cls_bias = next();
        let width = next();
        let entity_weight = next();
        let entity_bias = next();
        let (sw0, sb0) = (next(), next());
        let (sw1, sb1) = (next(), next());
        let (sw2, sb2) = (next(), next());
        let relation_weight = next();
        let relation_bias = next();
        Weights {
            embedding,
            mix_self,
            mix_neighbor,
            mix_bias,
            cls_weight,
            cls_bias,
            width,
            entity_weight,
            entity_bias,
            subtype_weight: [sw0, sw1, sw2],
            subtype_bias: [sb0, sb1, sb2],
            relation_weight,
            relation_bias,
        }
    }

    /// Tensors in layout order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let [sw0, sw1, sw2] = &self.subtype_weight;
        let [sb0, sb1, sb2] = &self.subtype_bias;
        vec![
            &self.embedding,
            &self.mix_self,
            &self.mix_neighbor,
            &self.mix_bias,
            &self.cls_weight,
            &self.cls_bias,
            &self.width,
            &self.entity_weight,
            &self.entity_bias,
            sw0,
            sb0,
            sw1,
            sb1,
            sw2,
            sb2,
            &self.relation_weight,
            &self.relation_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let [sw0, sw1, sw2] = &mut self.subtype_weight;
        let [sb0, sb1, sb2] = &mut self.subtype_bias;
        vec![
            &mut self.embedding,
            &mut self.mix_self,
            &mut self.mix_neighbor,
            &mut self.mix_bias,
            &mut self.cls_weight,
            &mut self.cls_bias,
            &mut self.width,
            &mut self.entity_weight,
            &mut self.entity_bias,
            sw0,
            sb0,
            sw1,
            sb1,
            sw2,
            sb2,
            &mut self.relation_weight,
            &mut self.relation_bias,
        ]
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights::from_tensors(self.tensors().into_iter().map(|t| t.cast()).collect())
    }

    pub fn fill_zero(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::fill_zero);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Weights<T>, lr: T) {
        for (w, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (x, dx) in w.data.iter_mut().zip(&g.data) {
                *x -= lr * *dx;
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn hidden_dim(&self) -> usize {
        self.mix_bias.cols
    }
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, t: &mut Tensor<T>, bound: f64) {
    for x in &mut t.data {
        *x = T::of(rng.gen_range(-bound..bound));
    }
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Random initialization; biases start at zero.
pub fn init_weights<T: Real>(config: &ModelConfig, inv: &LabelInventory, vocab_size: usize, rng: &mut ChaCha8Rng) -> Weights<T> {
    let mut w = Weights::zeros(config, inv, vocab_size);
    let d = config.hidden_dim;
    uniform(rng, &mut w.embedding, 1.0);
    uniform(rng, &mut w.mix_self, xavier(d, d));
    uniform(rng, &mut w.mix_neighbor, xavier(d, d));
    uniform(rng, &mut w.cls_weight, xavier(d, d));
    uniform(rng, &mut w.width, 1.0);
    let (r, c) = w.entity_weight.shape();
    uniform(rng, &mut w.entity_weight, xavier(c, r));
    for t in &mut w.subtype_weight {
        let (r, c) = t.shape();
        uniform(rng, t, xavier(c, r));
    }
    let (r, c) = w.relation_weight.shape();
    uniform(rng, &mut w.relation_weight, xavier(c, r));
    w
}

/// Lower-cased token vocabulary; index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from observed tokens (deduplicated and sorted).
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v: Vec<String> = tokens.into_iter().map(str::to_lowercase).collect();
        v.sort();
        v.dedup();
        v.retain(|t| t != UNK);
        v.insert(0, UNK.to_string());
        Self::from_list(v)
    }

    pub fn from_list(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A trained (or initialized) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub weights: Weights<f32>,
}

impl ModelParams {
    /// Panics when tensor shapes disagree with the config and inventory.
    pub fn new(config: ModelConfig, vocab: Vocab, weights: Weights<f32>) -> Self {
        let layout = tensor_layout(&config, &config.inventory(), vocab.len());
        for ((name, shape), t) in layout.iter().zip(weights.tensors()) {
            assert_eq!(*shape, t.shape(), "shape of {name}");
        }
        ModelParams { config, vocab, weights }
    }

    pub fn inventory(&self) -> LabelInventory {
        self.config.inventory()
    }
}
