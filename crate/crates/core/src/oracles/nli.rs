use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenParams};
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entail,
    Contradict,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub label: NliLabel,
    pub p_entail: f64,
    pub p_contra: f64,
    pub p_neutral: f64,
}

impl NliVerdict {
    /// Label is the argmax; ties resolve entail, then contradict, then neutral.
    pub fn from_probs(p_entail: f64, p_contra: f64, p_neutral: f64) -> Result<Self> {
        let sum = p_entail + p_contra + p_neutral;
        if [p_entail, p_contra, p_neutral].iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "NLI probabilities ({p_entail}, {p_contra}, {p_neutral}) are not a distribution"
            )));
        }
        let label = if p_entail >= p_contra && p_entail >= p_neutral {
            NliLabel::Entail
        } else if p_contra >= p_neutral {
            NliLabel::Contradict
        } else {
            NliLabel::Neutral
        };
        Ok(Self { label, p_entail, p_contra, p_neutral })
    }

    pub fn certain(label: NliLabel) -> Self {
        let (e, c, n) = match label {
            NliLabel::Entail => (1.0, 0.0, 0.0),
            NliLabel::Contradict => (0.0, 1.0, 0.0),
            NliLabel::Neutral => (0.0, 0.0, 1.0),
        };
        Self { label, p_entail: e, p_contra: c, p_neutral: n }
    }
}

pub trait NliOracle: Send + Sync {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict>;
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum TableRow {
    Triple(String, String, NliLabel),
    Object {
        premise: String,
        hypothesis: String,
        label: NliLabel,
        #[serde(default)]
        p_entail: Option<f64>,
        #[serde(default)]
        p_contra: Option<f64>,
        #[serde(default)]
        p_neutral: Option<f64>,
    },
}

/// Rule-table NLI for offline runs. Pairs are looked up after answer
/// normalization; unlisted pairs are entailment when normalized-equal and
/// neutral otherwise.
#[derive(Debug, Clone, Default)]
pub struct ReferenceNli {
    table: HashMap<(String, String), NliVerdict>,
}

impl ReferenceNli {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, premise: &str, hypothesis: &str, verdict: NliVerdict) {
        self.table
            .insert((normalize_answer(premise), normalize_answer(hypothesis)), verdict);
    }

    pub fn with(mut self, premise: &str, hypothesis: &str, label: NliLabel) -> Self {
        self.insert(premise, hypothesis, NliVerdict::certain(label));
        self
    }

    /// Loads a JSON array of `[premise, hypothesis, label]` triples (or
    /// objects with those keys and optional class probabilities).
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let rows: Vec<TableRow> =
            serde_json::from_str(&raw).map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        let mut nli = Self::new();
        for row in rows {
            match row {
                TableRow::Triple(p, h, l) => nli.insert(&p, &h, NliVerdict::certain(l)),
                TableRow::Object { premise, hypothesis, label, p_entail, p_contra, p_neutral } => {
                    let verdict = match (p_entail, p_contra, p_neutral) {
                        (Some(e), Some(c), Some(n)) => NliVerdict::from_probs(e, c, n)?,
                        _ => NliVerdict::certain(label),
                    };
                    nli.insert(&premise, &hypothesis, verdict);
                }
            }
        }
        Ok(nli)
    }
}

impl NliOracle for ReferenceNli {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        let key = (normalize_answer(premise), normalize_answer(hypothesis));
        if let Some(v) = self.table.get(&key) {
            return Ok(*v);
        }
        Ok(NliVerdict::certain(if key.0 == key.1 { NliLabel::Entail } else { NliLabel::Neutral }))
    }
}

/// NLI by prompting a chat model; class probabilities come from the top-k
/// alternatives of the first generated token when available.
pub struct LlmNli {
    gateway: Arc<Gateway>,
}

impl LlmNli {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self { gateway }
    }

    fn prompt(premise: &str, hypothesis: &str) -> String {
        format!(
            "Premise: {premise}\nHypothesis: {hypothesis}\n\
             Does the premise entail the hypothesis? Answer with one word: entailment, neutral, or contradiction."
        )
    }
}

fn label_of(word: &str) -> Option<NliLabel> {
    let w = word.trim().to_lowercase();
    if w.starts_with("ent") {
        Some(NliLabel::Entail)
    } else if w.starts_with("con") {
        Some(NliLabel::Contradict)
    } else if w.starts_with("neu") {
        Some(NliLabel::Neutral)
    } else {
        None
    }
}

impl NliOracle for LlmNli {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        let params = GenParams { max_tokens: 4, ..GenParams::greedy().with_logprobs(5) };
        let trace = self.gateway.complete(&Self::prompt(premise, hypothesis), &params)?;
        if let Some(first) = trace.topk_alternatives.as_ref().and_then(|a| a.first()) {
            let mut mass = [0.0; 3];
            for alt in first {
                match label_of(&alt.token) {
                    Some(NliLabel::Entail) => mass[0] += alt.prob,
                    Some(NliLabel::Contradict) => mass[1] += alt.prob,
                    Some(NliLabel::Neutral) => mass[2] += alt.prob,
                    None => {}
                }
            }
            let total: f64 = mass.iter().sum();
            if total > 0.0 {
                return NliVerdict::from_probs(mass[0] / total, mass[1] / total, mass[2] / total);
            }
        }
        let label = trace
            .text
            .split_whitespace()
            .find_map(label_of)
            .ok_or_else(|| Error::parse(format!("unparseable NLI reply {:?}", trace.text)))?;
        Ok(NliVerdict::certain(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_examples() {
        let nli = ReferenceNli::new().with("appendicitis", "acute gastroenteritis", NliLabel::Contradict);
        assert_eq!(nli.nli("Flu.", "flu").unwrap().label, NliLabel::Entail);
        assert_eq!(nli.nli("appendicitis", "acute gastroenteritis").unwrap().label, NliLabel::Contradict);
        assert_eq!(nli.nli("appendicitis", "migraine").unwrap().label, NliLabel::Neutral);
    }

    #[test]
    fn verdict_must_be_a_distribution() {
        assert!(NliVerdict::from_probs(0.5, 0.5, 0.5).is_err());
        let v = NliVerdict::from_probs(0.2, 0.5, 0.3).unwrap();
        assert_eq!(v.label, NliLabel::Contradict);
    }

    #[test]
    fn table_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nli.json");
        std::fs::write(
            &path,
            r#"[["a", "b", "contradict"],
                {"premise": "c", "hypothesis": "d", "label": "entail", "p_entail": 0.7, "p_contra": 0.1, "p_neutral": 0.2}]"#,
        )
        .unwrap();
        let nli = ReferenceNli::from_file(&path).unwrap();
        assert_eq!(nli.nli("a", "b").unwrap().label, NliLabel::Contradict);
        assert_eq!(nli.nli("b", "a").unwrap().label, NliLabel::Neutral);
        assert!((nli.nli("c", "d").unwrap().p_entail - 0.7).abs() < 1e-12);
    }
}
