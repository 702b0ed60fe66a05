use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::text::words;

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!("embedding dimensions differ: {} vs {}", u.len(), v.len())));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::degenerate("degenerate embedding"));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic feature-hashing embedder: signed counts of word unigrams
/// and bigrams. Same text, same vector, on every platform.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    salt: String,
}

impl HashingEmbedder {
    pub fn new(dim: usize, salt: impl Into<String>) -> Self {
        Self { dim: dim.max(1), salt: salt.into() }
    }

    fn add(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(format!("{}\u{1f}{feature}", self.salt).as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign * weight;
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256, "general")
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let ws = words(text);
        let mut v = vec![0.0; self.dim];
        for w in &ws {
            self.add(&mut v, w, 1.0);
        }
        for pair in ws.windows(2) {
            self.add(&mut v, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        Ok(v)
    }
}

/// OpenAI-compatible `/embeddings` backend.
pub struct RemoteEmbedder {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Provider(format!("embeddings HTTP {}", resp.status())));
        }
        let value: serde_json::Value = resp.json().map_err(|e| Error::Transport(e.to_string()))?;
        serde_json::from_value(value["data"][0]["embedding"].clone())
            .map_err(|e| Error::Provider(format!("bad embeddings response: {e}")))
    }
}

/// Config-selected embedding backend; SemSim ships a "general" and a
/// "medical" instance of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        salt: String,
    },
    Remote {
        base_url: String,
        model: String,
    },
}

fn default_dim() -> usize {
    256
}

impl EmbedderConfig {
    pub fn hashing(salt: &str) -> Self {
        EmbedderConfig::Hashing { dim: default_dim(), salt: salt.to_string() }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self {
            EmbedderConfig::Hashing { dim, salt } => Box::new(HashingEmbedder::new(*dim, salt.clone())),
            EmbedderConfig::Remote { base_url, model } => Box::new(RemoteEmbedder::new(
                base_url.clone(),
                model.clone(),
                crate::gateway::OpenAiProvider::api_key_from_env(),
            )?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identities() {
        let v = vec![0.3, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v, &[1.0, 0.0, 0.0]).unwrap(), cosine(&[1.0, 0.0, 0.0], &v).unwrap());
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hashing_embedder_is_deterministic() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("acute appendicitis").unwrap(), e.embed("Acute appendicitis!").unwrap());
        assert_ne!(e.embed("appendicitis").unwrap(), e.embed("influenza").unwrap());
        let medical = HashingEmbedder::new(256, "medical");
        assert_ne!(e.embed("appendicitis").unwrap(), medical.embed("appendicitis").unwrap());
    }

    #[test]
    fn empty_text_is_degenerate() {
        let e = HashingEmbedder::default();
        let z = e.embed("...").unwrap();
        assert!(cosine(&z, &e.embed("flu").unwrap()).is_err());
    }
}
