//! Text embeddings.
//!
//! The fake backend is signed feature hashing over a bag of words: the text is
//! lowercased, split on every non-alphanumeric character, and each token's
//! 64-bit FNV-1a hash `h` adds `+1` (bit 6 of `h` clear) or `-1` (bit 6 set)
//! to component `h mod 64`. The result is L2-normalized, or left all-zero when
//! the text has no tokens.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, BackendError, BackendMode, HttpEndpoint};
use crate::hash::fnv1a64;

/// Dimension of the fake hashing embedder.
pub const FAKE_DIMENSION: usize = 64;

/// A fixed-length vector that is either unit-norm or all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps raw values, normalizing to unit length. Returns `None` if any
    /// value is not finite.
    pub fn normalized(mut values: Vec<f64>) -> Option<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let norm = l2_norm(&values);
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Some(Self(values))
    }

    /// Wraps values as-is. Used when loading data that was normalized when
    /// it was first produced.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The deterministic hashing embedding.
pub fn fake_embed(text: &str) -> Embedding {
    let lowered = text.to_lowercase();
    let mut values = vec![0.0; FAKE_DIMENSION];
    for token in lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = fnv1a64(token.as_bytes());
        let sign = if (h >> 6) & 1 == 0 { 1.0 } else { -1.0 };
        values[(h % FAKE_DIMENSION as u64) as usize] += sign;
    }
    Embedding::normalized(values).expect("token counts are finite")
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either side is all-zero.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, BackendError> {
    if a.dim() != b.dim() {
        return Err(BackendError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

/// Embedding backend. The HTTP variant pins the dimension of its first
/// response and rejects any later response of a different length.
#[derive(Debug)]
pub enum Embedder {
    Fake,
    Http(HttpEmbedder),
}

#[derive(Debug)]
pub struct HttpEmbedder {
    endpoint: HttpEndpoint,
    dimension: OnceLock<usize>,
}

impl Embedder {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(match cfg.mode {
            BackendMode::Fake => Embedder::Fake,
            BackendMode::Http => Embedder::Http(HttpEmbedder {
                endpoint: HttpEndpoint::new(cfg)?,
                dimension: OnceLock::new(),
            }),
        })
    }

    /// Known output dimension, if fixed already.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Embedder::Fake => Some(FAKE_DIMENSION),
            Embedder::Http(http) => http.dimension.get().copied(),
        }
    }

    pub async fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        match self {
            Embedder::Fake => Ok(fake_embed(text)),
            Embedder::Http(HttpEmbedder {
                endpoint,
                dimension,
            }) => {
                let resp: EmbedResponse = endpoint
                    .post_json("/embed", &EmbedRequest { input: text })
                    .await?;
                let got = resp.embedding.len();
                if got == 0 {
                    return Err(BackendError::DimensionMismatch {
                        expected: self.dimension().unwrap_or(0),
                        got,
                    });
                }
                let expected = *dimension.get_or_init(|| got);
                if got != expected {
                    return Err(BackendError::DimensionMismatch { expected, got });
                }
                Embedding::normalized(resp.embedding).ok_or_else(|| BackendError::Unavailable {
                    url: endpoint.url("/embed"),
                    cause: "embedding contains non-finite values".into(),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(e: &Embedding) -> Vec<(usize, f64)> {
        e.values()
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, v)| v != 0.0)
            .collect()
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = fake_embed("");
        assert_eq!(e, Embedding::zeros(64));
        assert_eq!(fake_embed(" -- !! "), Embedding::zeros(64));
    }

    #[test]
    fn case_and_punctuation_fold() {
        assert_eq!(fake_embed("obstacle"), fake_embed("OBSTACLE!"));
        assert_eq!(sparse(&fake_embed("obstacle")), vec![(36, 1.0)]);
    }

    #[test]
    fn golden_caption_embedding() {
        // Frozen from an independent script implementing the hashing procedure.
        let third = 1.0 / 3.0;
        assert_eq!(
            sparse(&fake_embed("image-to-text: a person's hand")),
            vec![
                (12, third),
                (26, third),
                (32, -2.0 / 3.0),
                (34, third),
                (36, third),
                (62, -third),
            ]
        );
    }

    #[test]
    fn cosine_conventions() {
        let v = fake_embed("robot camera");
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);

        let mut e0 = vec![0.0; 4];
        e0[0] = 1.0;
        let mut e1 = vec![0.0; 4];
        e1[1] = 1.0;
        let (a, b) = (Embedding::from_raw(e0), Embedding::from_raw(e1));
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&Embedding::zeros(4), &a).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&a, &Embedding::zeros(3)),
            Err(BackendError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn normalized_rejects_non_finite() {
        assert!(Embedding::normalized(vec![1.0, f64::NAN]).is_none());
        assert!(Embedding::normalized(vec![1.0, f64::INFINITY]).is_none());
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
    }
}
