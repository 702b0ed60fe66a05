use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::RwLock;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::TokenTrace;

#[derive(Clone)]
enum Entry {
    Trace(TokenTrace),
    Probs(Vec<f64>),
}

/// Response cache keyed by a digest of (operation, prompt, params). The seed
/// is part of the params, so distinct samples never collide.
///
/// Optionally mirrored to a directory, one JSON file per key, so repeated
/// runs against a live provider are free.
pub struct Cache {
    entries: RwLock<HashMap<String, Entry>>,
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn in_memory() -> Self {
        Self { entries: RwLock::new(HashMap::new()), dir: None }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { entries: RwLock::new(HashMap::new()), dir: Some(dir) })
    }

    pub fn key<P: Serialize + ?Sized>(op: &str, prompt: &str, params: &P) -> String {
        let payload = serde_json::json!({ "op": op, "prompt": prompt, "params": params });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<Entry> {
        if let Some(e) = self.entries.read().expect("cache poisoned").get(key) {
            return Some(e.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let raw = std::fs::read_to_string(path).ok()?;
        let value: serde_json::Value = serde_json::from_str(&raw).ok()?;
        let entry = if value.get("probs").is_some() {
            Entry::Probs(serde_json::from_value(value["probs"].clone()).ok()?)
        } else {
            Entry::Trace(serde_json::from_value(value).ok()?)
        };
        self.entries
            .write()
            .expect("cache poisoned")
            .insert(key.to_string(), entry.clone());
        Some(entry)
    }

    fn put(&self, key: &str, entry: Entry) -> Result<()> {
        if let Some(dir) = &self.dir {
            let json = match &entry {
                Entry::Trace(t) => serde_json::to_string(t)?,
                Entry::Probs(p) => serde_json::json!({ "probs": p }).to_string(),
            };
            std::fs::write(dir.join(format!("{key}.json")), json)?;
        }
        self.entries
            .write()
            .expect("cache poisoned")
            .entry(key.to_string())
            .or_insert(entry);
        Ok(())
    }

    pub fn get_trace(&self, key: &str) -> Option<TokenTrace> {
        match self.get(key)? {
            Entry::Trace(t) => Some(t),
            Entry::Probs(_) => None,
        }
    }

    pub fn put_trace(&self, key: &str, trace: &TokenTrace) -> Result<()> {
        self.put(key, Entry::Trace(trace.clone()))
    }

    pub fn get_probs(&self, key: &str) -> Option<Vec<f64>> {
        match self.get(key)? {
            Entry::Probs(p) => Some(p),
            Entry::Trace(_) => None,
        }
    }

    pub fn put_probs(&self, key: &str, probs: &[f64]) -> Result<()> {
        self.put(key, Entry::Probs(probs.to_vec()))
    }
}
