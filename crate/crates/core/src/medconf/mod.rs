//! Evidence-grounded confidence: diagnose, build a symptom profile from
//! retrieved knowledge, then have the model map patient evidence onto it.

pub mod ledger;
pub mod lenient;

pub use ledger::{
    evidence_is_grounded, parse_score_marker, EvidenceEntry, EvidenceLedger, Importance, Profile, SupportLevel,
    SymptomCriterion,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenParams};
use crate::model::{EstimatorResult, Scale, TokenTrace};
use crate::prompts::{fill, Prompts};
use crate::retrieval::{Bm25Index, DEFAULT_TOP_K};
use ledger::{ledger_from_reply, profile_from_json, LedgerCheck};

/// Pipeline switches; all on is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Generate a symptom profile; off feeds passages straight to the
    /// confidence step.
    pub profile: bool,
    /// Retrieve passages; off builds the profile from the diagnosis alone.
    pub rag: bool,
    /// Show the profile as JSON; off shows numbered plain lines.
    pub structured: bool,
    /// Show and bucket by importance.
    pub importance: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { profile: true, rag: true, structured: true, importance: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MedConfOptions {
    pub top_k: usize,
    pub ablation: Ablation,
}

impl Default for MedConfOptions {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K, ablation: Ablation::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnosis {
    /// Bracketed answer.
    pub answer: String,
    pub trace: TokenTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Passage {
    pub chunk_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

/// Every intermediate artifact of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub patient_info: String,
    pub diagnosis: String,
    pub keyword: String,
    pub passages: Vec<Passage>,
    pub profile: Vec<SymptomCriterion>,
    pub ledger: EvidenceLedger,
    pub warnings: Vec<String>,
    pub ablation: Ablation,
}

/// The first non-empty `[...]` in a reply.
pub fn bracketed_answer(text: &str) -> Option<String> {
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let close = after.find(']')?;
        let inner = after[..close].trim();
        if !inner.is_empty() {
            return Some(inner.to_string());
        }
        rest = &after[close + 1..];
    }
    None
}

pub fn format_passages(passages: &[Passage]) -> String {
    passages
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Document *{i}* (Title: {}) {}", p.title, p.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct MedConf<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a Prompts,
    pub index: Option<&'a Bm25Index>,
    pub options: MedConfOptions,
    /// Parameters for the diagnosis call; token data is kept if requested.
    pub diagnosis_params: GenParams,
}

impl<'a> MedConf<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a Prompts, index: Option<&'a Bm25Index>) -> Self {
        Self {
            gateway,
            prompts,
            index,
            options: MedConfOptions::default(),
            diagnosis_params: GenParams::greedy(),
        }
    }

    pub fn with_options(mut self, options: MedConfOptions) -> Self {
        self.options = options;
        self
    }

    fn greedy(&self) -> GenParams {
        GenParams { seed: self.diagnosis_params.seed, ..GenParams::greedy() }
    }

    /// Asks for a bracketed diagnosis, reprompting once.
    pub fn generate_diagnosis(&self, patient_info: &str) -> Result<Diagnosis> {
        if patient_info.trim().is_empty() {
            return Err(Error::invalid("patient information is empty"));
        }
        let prompt = fill(&self.prompts.diagnosis, &[("inquiry", patient_info)])?;
        let trace = self.gateway.complete(&prompt, &self.diagnosis_params)?;
        if let Some(answer) = bracketed_answer(&trace.text) {
            return Ok(Diagnosis { answer, trace });
        }
        let retry = format!("{prompt}{}", self.prompts.format_reminder);
        let trace = self.gateway.complete(&retry, &self.diagnosis_params)?;
        match bracketed_answer(&trace.text) {
            Some(answer) => Ok(Diagnosis { answer, trace }),
            None => Err(Error::parse(format!("no bracketed diagnosis in {:?}", trace.text))),
        }
    }

    /// One-line extraction call; an empty reply falls back to the diagnosis.
    pub fn extract_keyword(&self, diagnosis: &str) -> Result<String> {
        let prompt = fill(&self.prompts.keyword, &[("diagnosis", diagnosis)])?;
        let reply = match self.gateway.complete(&prompt, &self.greedy()) {
            Ok(t) => t.text,
            Err(Error::EmptyGeneration) => String::new(),
            Err(e) => return Err(e),
        };
        let line = reply.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let kw = line
            .trim()
            .trim_start_matches("Keyword:")
            .trim_matches(|c: char| c.is_whitespace() || "\"'`[].*".contains(c));
        Ok(if kw.is_empty() { diagnosis.trim().to_string() } else { kw.to_string() })
    }

    /// Positive-scoring passages for the keyword, best first.
    pub fn retrieve_knowledge(&self, keyword: &str) -> Result<Vec<Passage>> {
        let index = self.index.ok_or_else(|| Error::invalid("retrieval needs an index"))?;
        let hits = index.query(keyword, self.options.top_k.max(1))?;
        let passages: Vec<Passage> = hits
            .into_iter()
            .filter(|h| h.score > 0.0)
            .map(|h| Passage {
                chunk_id: h.chunk.id.clone(),
                title: h.chunk.title.clone(),
                text: h.chunk.text.clone(),
                score: h.score,
            })
            .collect();
        if passages.is_empty() {
            return Err(Error::NoKnowledge(keyword.to_string()));
        }
        Ok(passages)
    }

    pub fn build_symptom_profile(&self, passages: &[Passage], diagnosis: &str) -> Result<Profile> {
        if self.options.ablation.rag && passages.is_empty() {
            return Err(Error::invalid("symptom profile needs retrieved passages"));
        }
        let content = format_passages(passages);
        let prompt = fill(&self.prompts.symptom_profile, &[("diagnosis", diagnosis), ("content", &content)])?;
        let attempt = |p: &str| -> Result<Profile> {
            let reply = self.gateway.complete(p, &self.greedy())?.text;
            lenient::parse(&reply).and_then(profile_from_json).map_err(|e| match e {
                // an empty profile is a real answer, not a format slip
                Error::Validation { message, .. } => Error::Validation { message, raw: Some(reply) },
                other => other,
            })
        };
        match attempt(&prompt) {
            Ok(p) => Ok(p),
            Err(Error::Validation { message, raw }) if message == "empty profile" => {
                Err(Error::Validation { message, raw })
            }
            Err(_) => attempt(&format!("{prompt}{}", self.prompts.format_reminder)),
        }
    }

    fn render_criteria(&self, profile: &[SymptomCriterion]) -> String {
        let a = self.options.ablation;
        if a.structured {
            let items: Vec<serde_json::Value> = profile
                .iter()
                .map(|c| {
                    let mut v = serde_json::json!({ "id": c.id, "description": c.description });
                    if a.importance {
                        v["importance"] = c.importance.as_str().into();
                    }
                    v
                })
                .collect();
            serde_json::to_string_pretty(&items).expect("criteria serialize")
        } else {
            profile
                .iter()
                .map(|c| {
                    if a.importance {
                        format!("{}. {} ({})", c.id, c.description, c.importance.as_str())
                    } else {
                        format!("{}. {}", c.id, c.description)
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
    }

    /// Runs the confidence step; one reprompt, then a validation error that
    /// carries the raw reply.
    pub fn map_evidence_and_score(
        &self,
        profile: Option<&[SymptomCriterion]>,
        criteria_text: &str,
        patient_info: &str,
    ) -> Result<EvidenceLedger> {
        if profile.is_some_and(|p| p.is_empty()) {
            return Err(Error::invalid("profile is empty"));
        }
        let prompt = fill(&self.prompts.confidence, &[("criteria", criteria_text), ("inform", patient_info)])?;
        let check = LedgerCheck { profile, patient_info, use_importance: self.options.ablation.importance };
        let attempt = |p: &str| -> Result<EvidenceLedger> {
            let reply = self.gateway.complete(p, &self.greedy())?.text;
            ledger_from_reply(&reply, &check).map_err(|e| match e {
                Error::Validation { message, .. } => Error::Validation { message, raw: Some(reply) },
                Error::Parse(message) => Error::Validation { message, raw: Some(reply) },
                other => other,
            })
        };
        match attempt(&prompt) {
            Err(Error::Validation { .. }) => attempt(&format!("{prompt}{}", self.prompts.format_reminder)),
            other => other,
        }
    }

    /// Everything after diagnosis.
    pub fn score_diagnosis(&self, patient_info: &str, diagnosis: &str) -> Result<Audit> {
        let a = self.options.ablation;
        let keyword = self.extract_keyword(diagnosis).map_err(|e| e.at_stage("keyword"))?;
        let passages = if a.rag {
            self.retrieve_knowledge(&keyword).map_err(|e| e.at_stage("retrieval"))?
        } else {
            Vec::new()
        };
        let mut warnings = Vec::new();
        let (profile, criteria_text) = if a.profile {
            let p = self.build_symptom_profile(&passages, diagnosis).map_err(|e| e.at_stage("profile"))?;
            warnings.extend(p.warnings);
            let text = self.render_criteria(&p.criteria);
            (p.criteria, text)
        } else {
            (Vec::new(), format_passages(&passages))
        };
        let ledger = self
            .map_evidence_and_score(a.profile.then_some(profile.as_slice()), &criteria_text, patient_info)
            .map_err(|e| e.at_stage("confidence"))?;
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Audit {
            patient_info: patient_info.to_string(),
            diagnosis: diagnosis.to_string(),
            keyword,
            passages,
            profile,
            ledger,
            warnings,
            ablation: a,
        })
    }

    pub fn run(&self, patient_info: &str) -> Result<(Diagnosis, Audit)> {
        let d = self.generate_diagnosis(patient_info).map_err(|e| e.at_stage("diagnosis"))?;
        let audit = self.score_diagnosis(patient_info, &d.answer)?;
        Ok((d, audit))
    }

    /// The 0–100 score with the audit attached as `aux`.
    pub fn estimate(&self, patient_info: &str) -> Result<EstimatorResult> {
        let (_, audit) = self.run(patient_info)?;
        audit_result(&audit)
    }
}

pub fn audit_result(audit: &Audit) -> Result<EstimatorResult> {
    Ok(EstimatorResult::new("medconf", audit.ledger.score, Scale::Percent)?.with_aux(serde_json::to_value(audit)?))
}
