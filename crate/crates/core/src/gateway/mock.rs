//! Scripted provider backed by JSON fixtures.
//!
//! A fixture is a list of entries tried in order; the first entry whose
//! matchers all hold answers the prompt. Matchers are an exact `prompt`, a
//! SHA-256 `digest` of the prompt, and/or a list of substrings that must all
//! occur (`contains`). An entry without matchers matches everything. Unknown
//! prompts are an error, never a default reply.
//!
//! ```json
//! {
//!   "capabilities": { "returns_generated_logprobs": true },
//!   "teacher_forced": { "append": 0.05 },
//!   "entries": [
//!     { "contains": ["final diagnosis"], "select": "seed",
//!       "responses": ["[flu]", { "text": "[cold]", "tokens": ["[", "cold", "]"], "token_probs": [0.9, 0.6, 0.9] }] }
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capabilities, GenParams, Provider};
use crate::error::{Error, Result};
use crate::model::TokenTrace;

/// How an entry with several scripted responses picks one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Select {
    /// Always the first response.
    #[default]
    First,
    /// `responses[seed % n]` when sampling (temperature > 0), else the first.
    Seed,
    /// `responses[digest(prompt) % n]`: different prompts get different
    /// replies, the same prompt always the same one.
    PromptDigest,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum Scripted {
    Text(String),
    Trace(TokenTrace),
}

impl Scripted {
    fn to_trace(&self) -> TokenTrace {
        match self {
            Scripted::Text(t) => TokenTrace::text_only(t.clone()),
            Scripted::Trace(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default)]
    pub select: Select,
    responses: Vec<Scripted>,
}

impl MockEntry {
    pub fn contains<S: Into<String>>(needles: impl IntoIterator<Item = S>, replies: &[&str]) -> Self {
        Self {
            name: None,
            prompt: None,
            digest: None,
            contains: needles.into_iter().map(Into::into).collect(),
            select: Select::First,
            responses: replies.iter().map(|r| Scripted::Text(r.to_string())).collect(),
        }
    }

    pub fn exact(prompt: impl Into<String>, replies: &[&str]) -> Self {
        Self { prompt: Some(prompt.into()), ..Self::contains(Vec::<String>::new(), replies) }
    }

    pub fn with_traces(mut self, traces: Vec<TokenTrace>) -> Self {
        self.responses = traces.into_iter().map(Scripted::Trace).collect();
        self
    }

    pub fn select(mut self, select: Select) -> Self {
        self.select = select;
        self
    }

    fn matches(&self, prompt: &str, digest: &str) -> bool {
        self.prompt.as_deref().is_none_or(|p| p == prompt)
            && self.digest.as_deref().is_none_or(|d| d.eq_ignore_ascii_case(digest))
            && self.contains.iter().all(|c| prompt.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
pub struct MockFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
    /// Context-free token probabilities for teacher-forced scoring.
    #[serde(default)]
    pub teacher_forced: BTreeMap<String, f64>,
    #[serde(default)]
    pub entries: Vec<MockEntry>,
}

impl MockFixture {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
    }

    /// Loads every `*.json` file in `dir`, in file-name order, and
    /// concatenates their entries. Later files override capabilities.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut merged = MockFixture::default();
        for p in paths {
            merged.merge(Self::from_file(&p)?);
        }
        Ok(merged)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::from_dir(path)
        } else {
            Self::from_file(path)
        }
    }

    pub fn merge(&mut self, other: MockFixture) {
        if other.capabilities.is_some() {
            self.capabilities = other.capabilities;
        }
        self.teacher_forced.extend(other.teacher_forced);
        self.entries.extend(other.entries);
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// A pure function of (fixture, prompt, params).
pub struct MockProvider {
    fixture: MockFixture,
}

impl MockProvider {
    pub fn new(fixture: MockFixture) -> Self {
        Self { fixture }
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> Capabilities {
        self.fixture.capabilities.unwrap_or_else(Capabilities::white_box)
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<TokenTrace> {
        let digest = prompt_digest(prompt);
        let entry = self
            .fixture
            .entries
            .iter()
            .find(|e| e.matches(prompt, &digest))
            .ok_or_else(|| Error::Provider(format!("mock: no fixture entry for prompt {digest}")))?;
        let n = entry.responses.len();
        if n == 0 {
            return Err(Error::EmptyGeneration);
        }
        let idx = match entry.select {
            Select::First => 0,
            Select::Seed if params.temperature > 0.0 => (params.seed.unwrap_or(0) % n as u64) as usize,
            Select::Seed => 0,
            Select::PromptDigest => {
                let head = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                (head % n as u64) as usize
            }
        };
        Ok(entry.responses[idx].to_trace())
    }

    fn score_sequence(&self, _prompt: &str, target: &[String]) -> Result<Vec<f64>> {
        target
            .iter()
            .map(|tok| {
                self.fixture
                    .teacher_forced
                    .get(tok)
                    .copied()
                    .ok_or_else(|| Error::Provider(format!("mock: no teacher-forced probability for token {tok:?}")))
            })
            .collect()
    }
}
