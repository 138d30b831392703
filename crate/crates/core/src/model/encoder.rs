//! Token encoders: the trainable toy encoder and precomputed-vector files.
//!
//! Sidecar format: one JSON header line
//! `{"format":"sdoh-eventkit-embeddings","version":1,"dim":D}`, then per
//! document a record of little-endian values:
//! `u32 id_len, id bytes, u32 n_sentences`, and per sentence
//! `u32 n_tokens, D f32 (h_cls), n_tokens*D f32 (token vectors)`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::Weights;
use super::tensor::{Real, Tensor};
use super::ModelError;

pub const EMBEDDINGS_FORMAT: &str = "sdoh-eventkit-embeddings";
pub const EMBEDDINGS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    pub h_cls: Vec<T>,
    pub h: Vec<Vec<T>>,
}

impl<T: Real> EncoderOutput<T> {
    pub fn is_finite(&self) -> bool {
        self.h_cls.iter().chain(self.h.iter().flatten()).all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> EncoderOutput<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from(*x).unwrap()).collect();
        EncoderOutput {
            h_cls: c(&self.h_cls),
            h: self.h.iter().map(c).collect(),
        }
    }
}

/// What the encoder sees for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoding {
    /// Vocabulary ids for the toy encoder.
    Toy(Vec<usize>),
    /// Vectors supplied from outside; not trained.
    Fixed(EncoderOutput<f32>),
}

impl Encoding {
    pub fn len(&self) -> usize {
        match self {
            Encoding::Toy(ids) => ids.len(),
            Encoding::Fixed(o) => o.h.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Intermediates needed by the toy encoder's backward pass.
pub(crate) struct ToyCache<T> {
    ids: Vec<usize>,
    neighbor_mean: Vec<Vec<T>>,
    h_mean: Vec<T>,
}

fn neighbors(t: usize, n: usize) -> impl Iterator<Item = usize> {
    [t.checked_sub(1), (t + 1 < n).then_some(t + 1)].into_iter().flatten()
}

pub(crate) fn toy_forward<T: Real>(ids: &[usize], w: &Weights<T>) -> (EncoderOutput<T>, ToyCache<T>) {
    let n = ids.len();
    let d = w.hidden_dim();
    let mut neighbor_mean = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for t in 0..n {
        let mut m = vec![T::zero(); d];
        let mut count = 0;
        for u in neighbors(t, n) {
            for (mi, x) in m.iter_mut().zip(w.embedding.row(ids[u])) {
                *mi += *x;
            }
            count += 1;
        }
        if count > 0 {
            let c = T::of(count as f64);
            m.iter_mut().for_each(|x| *x /= c);
        }
        let a_self = w.mix_self.affine(&w.mix_bias, w.embedding.row(ids[t]));
        let a_nb = w.mix_neighbor.affine(&Tensor::zeros(1, d), &m);
        h.push(a_self.iter().zip(&a_nb).map(|(a, b)| (*a + *b).tanh()).collect::<Vec<T>>());
        neighbor_mean.push(m);
    }
    let mut h_mean = vec![T::zero(); d];
    if n > 0 {
        let nn = T::of(n as f64);
        for ht in &h {
            for (s, x) in h_mean.iter_mut().zip(ht) {
                *s += *x / nn;
            }
        }
    }
    let h_cls = w.cls_weight.affine(&w.cls_bias, &h_mean).into_iter().map(T::tanh).collect();
    (
        EncoderOutput { h_cls, h },
        ToyCache { ids: ids.to_vec(), neighbor_mean, h_mean },
    )
}

/// Accumulates encoder gradients given upstream `dh` and `dh_cls`.
pub(crate) fn toy_backward<T: Real>(
    out: &EncoderOutput<T>,
    cache: &ToyCache<T>,
    mut dh: Vec<Vec<T>>,
    dh_cls: &[T],
    w: &Weights<T>,
    g: &mut Weights<T>,
) {
    let n = cache.ids.len();
    let d = w.hidden_dim();
    let da_cls: Vec<T> = dh_cls
        .iter()
        .zip(&out.h_cls)
        .map(|(g, h)| *g * (T::one() - *h * *h))
        .collect();
    g.cls_weight.add_outer(&da_cls, &cache.h_mean);
    g.cls_bias.add_to_row(0, &da_cls);
    let mut dmean = vec![T::zero(); d];
    w.cls_weight.add_transpose_mul(&da_cls, &mut dmean);
    let nn = T::of(n as f64);
    for dht in &mut dh {
        for (x, m) in dht.iter_mut().zip(&dmean) {
            *x += *m / nn;
        }
    }
    for t in 0..n {
        let da: Vec<T> = dh[t]
            .iter()
            .zip(&out.h[t])
            .map(|(g, h)| *g * (T::one() - *h * *h))
            .collect();
        g.mix_self.add_outer(&da, w.embedding.row(cache.ids[t]));
        g.mix_neighbor.add_outer(&da, &cache.neighbor_mean[t]);
        g.mix_bias.add_to_row(0, &da);
        let mut de = vec![T::zero(); d];
        w.mix_self.add_transpose_mul(&da, &mut de);
        g.embedding.add_to_row(cache.ids[t], &de);
        let mut dm = vec![T::zero(); d];
        w.mix_neighbor.add_transpose_mul(&da, &mut dm);
        let nbs: Vec<usize> = neighbors(t, n).collect();
        if !nbs.is_empty() {
            let c = T::of(nbs.len() as f64);
            dm.iter_mut().for_each(|x| *x /= c);
            for u in nbs {
                g.embedding.add_to_row(cache.ids[u], &dm);
            }
        }
    }
}

/// Encodes one sentence.
pub fn encode<T: Real>(input: &Encoding, w: &Weights<T>) -> EncoderOutput<T> {
    match input {
        Encoding::Toy(ids) => toy_forward(ids, w).0,
        Encoding::Fixed(o) => o.cast(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingsHeader {
    format: String,
    version: u32,
    dim: usize,
}

/// Precomputed encoder outputs, keyed by document id, one entry per sentence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileEncoder {
    pub dim: usize,
    docs: HashMap<String, Vec<EncoderOutput<f32>>>,
}

impl FileEncoder {
    pub fn new(dim: usize) -> Self {
        FileEncoder { dim, docs: HashMap::new() }
    }

    pub fn insert(&mut self, document_id: impl Into<String>, sentences: Vec<EncoderOutput<f32>>) -> Result<(), ModelError> {
        for s in &sentences {
            if s.h_cls.len() != self.dim || s.h.iter().any(|v| v.len() != self.dim) {
                return Err(ModelError::Embeddings(format!("vector length differs from dim {}", self.dim)));
            }
            if !s.is_finite() {
                return Err(ModelError::Embeddings("non-finite vector".into()));
            }
        }
        self.docs.insert(document_id.into(), sentences);
        Ok(())
    }

    pub fn get(&self, document_id: &str) -> Option<&[EncoderOutput<f32>]> {
        self.docs.get(document_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: EmbeddingsHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| ModelError::Embeddings(format!("header: {e}")))?;
        if header.format != EMBEDDINGS_FORMAT {
            return Err(ModelError::Embeddings(format!("unexpected format {:?}", header.format)));
        }
        if header.version != EMBEDDINGS_VERSION {
            return Err(ModelError::Embeddings(format!("unsupported version {}", header.version)));
        }
        let mut enc = FileEncoder::new(header.dim);
        let eof = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ModelError::Embeddings("unexpected end of embedding data".into()),
            _ => ModelError::Io(e),
        };
        loop {
            let mut b4 = [0u8; 4];
            match r.read(&mut b4[..1])? {
                0 => break,
                _ => r.read_exact(&mut b4[1..]).map_err(eof)?,
            }
            let id_len = u32::from_le_bytes(b4) as usize;
            let mut id = vec![0u8; id_len];
            r.read_exact(&mut id).map_err(eof)?;
            let id = String::from_utf8(id).map_err(|_| ModelError::Embeddings("document id is not UTF-8".into()))?;
            let n_sent = read_u32(&mut r).map_err(eof)?;
            let mut sentences = Vec::with_capacity(n_sent as usize);
            for _ in 0..n_sent {
                let n_tok = read_u32(&mut r).map_err(eof)? as usize;
                let h_cls = read_f32s(&mut r, enc.dim).map_err(eof)?;
                let h = (0..n_tok)
                    .map(|_| read_f32s(&mut r, enc.dim))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(eof)?;
                sentences.push(EncoderOutput { h_cls, h });
            }
            enc.insert(id, sentences)?;
        }
        Ok(enc)
    }

    /// Writes documents in sorted id order.
    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = EmbeddingsHeader {
            format: EMBEDDINGS_FORMAT.into(),
            version: EMBEDDINGS_VERSION,
            dim: self.dim,
        };
        writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
        let mut ids: Vec<&String> = self.docs.keys().collect();
        ids.sort();
        for id in ids {
            let sentences = &self.docs[id];
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(sentences.len() as u32).to_le_bytes())?;
            for s in sentences {
                w.write_all(&(s.h.len() as u32).to_le_bytes())?;
                for x in s.h_cls.iter().chain(s.h.iter().flatten()) {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::init_weights;
    use crate::schema::LabelInventory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn weights(d: usize) -> Weights<f64> {
        let cfg = ModelConfig { hidden_dim: d, ..ModelConfig::default() };
        init_weights(&cfg, &LabelInventory::default(), 10, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn single_token_shapes() {
        let out = encode(&Encoding::Toy(vec![3]), &weights(4));
        assert_eq!(out.h.len(), 1);
        assert_eq!(out.h_cls.len(), 4);
        assert!(out.is_finite());
    }

    #[test]
    fn deterministic() {
        let w = weights(8);
        let a = encode(&Encoding::Toy(vec![1, 2, 3]), &w);
        let b = encode(&Encoding::Toy(vec![1, 2, 3]), &w);
        assert_eq!(a, b);
    }

    #[test]
    fn sidecar_round_trip() {
        let mut enc = FileEncoder::new(2);
        enc.insert(
            "d1",
            vec![EncoderOutput { h_cls: vec![0.5, -1.0], h: vec![vec![1.0, 2.0], vec![3.0, 4.0]] }],
        )
        .unwrap();
        enc.insert("d0", vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.bin");
        enc.write(&p).unwrap();
        assert_eq!(FileEncoder::read(&p).unwrap(), enc);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        let err = FileEncoder::read(&p).unwrap_err().to_string();
        assert!(err.contains("unexpected end"), "{err}");
    }
}
