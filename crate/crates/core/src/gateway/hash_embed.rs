use crate::error::GatewayError;

use super::{EmbedBackend, EmbedReply, TokenCounts};

/// Deterministic bag-of-words embedder: each lowercase word is hashed (FNV-1a)
/// into a signed bucket, then the vector is scaled to unit length.
///
/// Texts sharing vocabulary land close together, which is enough to exercise
/// embedding retrieval without a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for word in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            let h = fnv1a(&word.to_lowercase());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbedBackend for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbedReply, GatewayError> {
        Ok(EmbedReply {
            vectors: texts.iter().map(|t| self.embed_text(t)).collect(),
            usage: TokenCounts::default(),
        })
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
