//! Similarity and NLI judgments, with deterministic reference backends.

mod embed;
mod lexical;
mod nli;

pub use embed::{cosine, Embedder, EmbedderConfig, HashingEmbedder, RemoteEmbedder};
pub use lexical::lexical_similarity;
pub use nli::{LlmNli, NliLabel, NliOracle, NliVerdict, ReferenceNli};

use crate::error::Result;

/// The sequence similarity g(·,·) used by the SAR family, in [0, 1].
pub trait Similarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> Result<f64>;
}

/// Embedding cosine clamped to [0, 1].
pub struct EmbeddingSimilarity<E> {
    embedder: E,
}

impl<E: Embedder> EmbeddingSimilarity<E> {
    pub fn new(embedder: E) -> Self {
        Self { embedder }
    }
}

impl<E: Embedder> Similarity for EmbeddingSimilarity<E> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let (u, v) = (self.embedder.embed(a)?, self.embedder.embed(b)?);
        Ok(cosine(&u, &v)?.clamp(0.0, 1.0))
    }
}

impl Similarity for Box<dyn Similarity> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        (**self).similarity(a, b)
    }
}

impl Embedder for Box<dyn Embedder> {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        (**self).embed(text)
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        (**self).embed(text)
    }
}

pub struct LexicalSimilarity;

impl Similarity for LexicalSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(lexical_similarity(a, b))
    }
}
