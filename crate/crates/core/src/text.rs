//! Backbone stand-in: tokenize raw text, hash n-grams into a sparse vector,
//! and encode into the dense representation consumed by the encoder stacks.
//!
//! Tokenization and hashing are pure integer functions, so feature vectors
//! are byte-identical across runs and platforms.

use crate::error::{Error, Result};
use crate::numerics::{Dense, DenseIds, SparseBatch, Tape, Tensor, ValueId};
use rand::Rng;

/// Byte joining the tokens of an n-gram before hashing (ASCII unit
/// separator, which the tokenizer can never emit).
const NGRAM_SEP: u8 = 0x1f;

/// Ordered, normalized tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercase, split on Unicode whitespace, and break punctuation (any
/// non-alphanumeric character) into standalone tokens.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            flush(&mut current, &mut tokens);
            let mut punct = String::new();
            punct.extend(ch.to_lowercase());
            tokens.push(punct);
        }
    }
    flush(&mut current, &mut tokens);
    TokenSequence(tokens)
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    if !current.is_empty() {
        tokens.push(std::mem::take(current));
    }
}

/// Hashed n-gram counts: strictly increasing indices below `dim`, positive
/// counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseFeatures {
    dim: usize,
    entries: Vec<(usize, u32)>,
}

impl SparseFeatures {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total token/n-gram mass.
    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Hash all n-grams (n = 1..=n_max) of a token sequence into `dim` buckets
/// by 64-bit FNV-1a. `dim` must be a power of two; `n_max` is 1 or 2.
pub fn hash_features(seq: &TokenSequence, dim: usize, n_max: usize) -> Result<SparseFeatures> {
    if !dim.is_power_of_two() {
        return Err(Error::Config(format!(
            "feature dimension must be a power of two, got {dim}"
        )));
    }
    if !(1..=2).contains(&n_max) {
        return Err(Error::Config(format!("n_max must be 1 or 2, got {n_max}")));
    }
    let mask = (dim - 1) as u64;
    let mut counts: std::collections::BTreeMap<usize, u32> = std::collections::BTreeMap::new();
    let tokens = &seq.0;
    for n in 1..=n_max {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            let mut bytes = Vec::with_capacity(window.iter().map(|t| t.len() + 1).sum());
            for (i, tok) in window.iter().enumerate() {
                if i > 0 {
                    bytes.push(NGRAM_SEP);
                }
                bytes.extend_from_slice(tok.as_bytes());
            }
            let idx = (crate::rng::fnv1a(&bytes) & mask) as usize;
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    Ok(SparseFeatures {
        dim,
        entries: counts.into_iter().collect(),
    })
}

/// Convert a batch of sparse feature vectors into the tape's sparse input.
pub fn sparse_batch(feats: &[&SparseFeatures]) -> Result<SparseBatch> {
    let dim = feats.first().map(|f| f.dim).unwrap_or(0);
    if feats.iter().any(|f| f.dim != dim) {
        return Err(Error::Dimension {
            op: "sparse_batch",
            detail: "mixed feature dimensions in one batch".into(),
        });
    }
    Ok(SparseBatch {
        dim,
        rows: feats
            .iter()
            .map(|f| f.entries.iter().map(|&(i, c)| (i, c as f64)).collect())
            .collect(),
    })
}

/// MLP over summed hashed-feature embeddings. The embedding matrix maps the
/// sparse space linearly to the first hidden width; ReLU hidden layers
/// follow, and an optional linear readout adjusts the output width.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub feature_dim: usize,
    pub embed: Tensor,
    pub hidden: Vec<Dense>,
    pub readout: Option<Dense>,
}

/// Tape handles for one registered backbone.
pub struct BackboneIds {
    pub embed: ValueId,
    pub hidden: Vec<DenseIds>,
    pub readout: Option<DenseIds>,
}

const EMBED_INIT_STD: f64 = 0.2;

impl BackboneParams {
    /// Student-width backbone: embed to `d`, then two ReLU layers of width
    /// `d`. The output h has width `d`.
    pub fn student(feature_dim: usize, d: usize, rng: &mut impl Rng) -> Self {
        BackboneParams {
            feature_dim,
            embed: Tensor::randn(vec![feature_dim, d], EMBED_INIT_STD, rng),
            hidden: vec![Dense::he(d, d, rng), Dense::he(d, d, rng)],
            readout: None,
        }
    }

    /// Teacher backbone: half the internal width and a single ReLU hidden
    /// layer, with a linear readout back up to `d` so teacher and student
    /// representations share the same output width.
    pub fn teacher(feature_dim: usize, d: usize, rng: &mut impl Rng) -> Self {
        let half = (d / 2).max(1);
        BackboneParams {
            feature_dim,
            embed: Tensor::randn(vec![feature_dim, half], EMBED_INIT_STD, rng),
            hidden: vec![Dense::he(half, half, rng)],
            readout: Some(Dense::linear(half, d, rng)),
        }
    }

    /// Width of the produced representation.
    pub fn out_dim(&self) -> usize {
        match &self.readout {
            Some(r) => r.out_dim(),
            None => self.hidden.last().map(|l| l.out_dim()).unwrap_or(0),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> BackboneIds {
        BackboneIds {
            embed: tape.param(self.embed.clone()),
            hidden: self.hidden.iter().map(|l| l.register(tape)).collect(),
            readout: self.readout.as_ref().map(|l| l.register(tape)),
        }
    }

    pub fn register_frozen(&self, tape: &mut Tape) -> BackboneIds {
        BackboneIds {
            embed: tape.constant(self.embed.clone()),
            hidden: self.hidden.iter().map(|l| l.register_frozen(tape)).collect(),
            readout: self.readout.as_ref().map(|l| l.register_frozen(tape)),
        }
    }

    /// Forward a sparse batch through the registered backbone.
    pub fn apply(ids: &BackboneIds, tape: &mut Tape, batch: SparseBatch) -> Result<ValueId> {
        let mut x = tape.sparse_matmul(batch, ids.embed)?;
        for l in &ids.hidden {
            x = l.apply(tape, x)?;
            x = tape.relu(x)?;
        }
        if let Some(r) = &ids.readout {
            x = r.apply(tape, x)?;
        }
        Ok(x)
    }

    /// Plain forward of one feature vector (inference path).
    pub fn forward_infer(&self, f: &SparseFeatures) -> Result<Vec<f64>> {
        if f.dim != self.feature_dim {
            return Err(Error::Dimension {
                op: "encode",
                detail: format!("features dim {} vs backbone dim {}", f.dim, self.feature_dim),
            });
        }
        let width = self.embed.cols();
        let mut h = vec![0.0; width];
        for &(idx, c) in &f.entries {
            let row = &self.embed.data()[idx * width..(idx + 1) * width];
            for j in 0..width {
                h[j] += c as f64 * row[j];
            }
        }
        for l in &self.hidden {
            h = l.forward_infer(&h);
            for v in &mut h {
                *v = v.max(0.0);
            }
        }
        if let Some(r) = &self.readout {
            h = r.forward_infer(&h);
        }
        Ok(h)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out: Vec<(&'static str, &Tensor)> = vec![("backbone.embed", &self.embed)];
        for (i, l) in self.hidden.iter().enumerate() {
            out.push((hidden_name(i, "w"), &l.w));
            out.push((hidden_name(i, "b"), &l.b));
        }
        if let Some(r) = &self.readout {
            out.push(("backbone.readout.w", &r.w));
            out.push(("backbone.readout.b", &r.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out: Vec<(&'static str, &mut Tensor)> = vec![("backbone.embed", &mut self.embed)];
        for (i, l) in self.hidden.iter_mut().enumerate() {
            out.push((hidden_name(i, "w"), &mut l.w));
            out.push((hidden_name(i, "b"), &mut l.b));
        }
        if let Some(r) = &mut self.readout {
            out.push(("backbone.readout.w", &mut r.w));
            out.push(("backbone.readout.b", &mut r.b));
        }
        out
    }

    /// Param ids of a registered backbone, in `tensors()` order.
    pub fn ids_in_order(ids: &BackboneIds) -> Vec<ValueId> {
        let mut out = vec![ids.embed];
        for l in &ids.hidden {
            out.push(l.w);
            out.push(l.b);
        }
        if let Some(r) = &ids.readout {
            out.push(r.w);
            out.push(r.b);
        }
        out
    }
}

fn hidden_name(i: usize, part: &str) -> &'static str {
    // two hidden layers at most; keep &'static str names for the optimizer
    match (i, part) {
        (0, "w") => "backbone.hidden0.w",
        (0, "b") => "backbone.hidden0.b",
        (1, "w") => "backbone.hidden1.w",
        (1, "b") => "backbone.hidden1.b",
        _ => "backbone.hidden.extra",
    }
}

/// Encode one feature vector into the dense representation h.
pub fn encode(f: &SparseFeatures, p: &BackboneParams) -> Result<Vec<f64>> {
    p.forward_infer(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn tokenize_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Good book!").0,
            vec!["good".to_string(), "book".into(), "!".into()]
        );
        assert_eq!(tokenize("").0, Vec::<String>::new());
        assert_eq!(tokenize("don't stop").0, vec!["don", "'", "t", "stop"]);
    }

    #[test]
    fn tokenize_is_idempotent_under_rejoin() {
        for text in ["Good book!", "A  messy,odd   STRING?!", "", "one"] {
            let once = tokenize(text);
            let rejoined = once.0.join(" ");
            assert_eq!(tokenize(&rejoined), once);
        }
    }

    #[test]
    fn hash_features_matches_reference_fnv1a() {
        // independent FNV-1a reference, written from the published constants
        fn reference_fnv(bytes: &[u8]) -> u64 {
            let mut h: u64 = 14695981039346656037;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211);
            }
            h
        }
        let seq = tokenize("good book");
        let dim = 1 << 18;
        let feats = hash_features(&seq, dim, 2).unwrap();
        let mut expect: Vec<usize> = vec![
            (reference_fnv(b"good") % dim as u64) as usize,
            (reference_fnv(b"book") % dim as u64) as usize,
            (reference_fnv(b"good\x1fbook") % dim as u64) as usize,
        ];
        expect.sort_unstable();
        expect.dedup();
        let got: Vec<usize> = feats.entries().iter().map(|&(i, _)| i).collect();
        assert_eq!(got, expect);
        assert_eq!(feats.total_count(), 3);
    }

    #[test]
    fn hash_features_is_deterministic_and_sorted() {
        let seq = tokenize("the cat sat on the mat");
        let a = hash_features(&seq, 4096, 2).unwrap();
        let b = hash_features(&seq, 4096, 2).unwrap();
        assert_eq!(a, b);
        let idx: Vec<usize> = a.entries().iter().map(|&(i, _)| i).collect();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(idx, sorted);
        // "the" occurs twice
        assert!(a.entries().iter().any(|&(_, c)| c == 2));
    }

    #[test]
    fn hash_features_rejects_bad_config() {
        let seq = tokenize("x");
        assert!(hash_features(&seq, 1000, 2).is_err());
        assert!(hash_features(&seq, 1024, 3).is_err());
        assert!(hash_features(&TokenSequence(vec![]), 1024, 2).unwrap().is_empty());
    }

    #[test]
    fn encode_empty_features_is_bias_driven() {
        let mut rng = stream(2, &["init"]);
        let p = BackboneParams::student(256, 8, &mut rng);
        let empty = hash_features(&TokenSequence(vec![]), 256, 2).unwrap();
        let h = encode(&empty, &p).unwrap();
        // zero embedding output, so h = relu stack over the biases alone
        let mut expect = p.hidden[0].b.data().to_vec();
        for v in &mut expect {
            *v = v.max(0.0);
        }
        expect = p.hidden[1].forward_infer(&expect);
        for v in &mut expect {
            *v = v.max(0.0);
        }
        assert_eq!(h, expect);
        assert_eq!(h.len(), 8);
    }

    #[test]
    fn encode_output_width_is_d() {
        let mut rng = stream(3, &["init"]);
        let p = BackboneParams::student(512, 16, &mut rng);
        let f = hash_features(&tokenize("some example text here"), 512, 2).unwrap();
        assert_eq!(encode(&f, &p).unwrap().len(), 16);
        let t = BackboneParams::teacher(512, 16, &mut rng);
        assert_eq!(t.forward_infer(&f).unwrap().len(), 16);
    }

    #[test]
    fn doubling_counts_scales_first_layer_linearly() {
        // verify on a tiny backbone by hand: the embedding output is linear
        // in the counts, so doubling every count doubles it
        let mut rng = stream(4, &["init"]);
        let p = BackboneParams::student(64, 2, &mut rng);
        let f1 = hash_features(&tokenize("alpha beta"), 64, 1).unwrap();
        let doubled = SparseFeatures {
            dim: f1.dim,
            entries: f1.entries.iter().map(|&(i, c)| (i, c * 2)).collect(),
        };
        let width = 2;
        let embed_out = |f: &SparseFeatures| {
            let mut h = vec![0.0; width];
            for &(idx, c) in f.entries() {
                for j in 0..width {
                    h[j] += c as f64 * p.embed.data()[idx * width + j];
                }
            }
            h
        };
        let e1 = embed_out(&f1);
        let e2 = embed_out(&doubled);
        for j in 0..width {
            assert!((e2[j] - 2.0 * e1[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_rejects_dim_mismatch() {
        let mut rng = stream(5, &["init"]);
        let p = BackboneParams::student(256, 8, &mut rng);
        let f = hash_features(&tokenize("hello"), 512, 1).unwrap();
        assert!(encode(&f, &p).is_err());
    }

    #[test]
    fn tape_and_infer_backbone_agree() {
        let mut rng = stream(6, &["init"]);
        let p = BackboneParams::teacher(128, 8, &mut rng);
        let f = hash_features(&tokenize("agree on this"), 128, 2).unwrap();
        let infer = p.forward_infer(&f).unwrap();

        let mut tape = Tape::new();
        let ids = p.register(&mut tape);
        let batch = sparse_batch(&[&f]).unwrap();
        let h = BackboneParams::apply(&ids, &mut tape, batch).unwrap();
        assert_eq!(tape.value(h).data(), &infer[..]);
    }
}
