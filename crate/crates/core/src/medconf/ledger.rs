//! Symptom profiles and the evidence ledger the model fills in against them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::lenient::{as_id, canonical_keys};
use crate::error::{Error, Result};
use crate::text::{contains_phrase, words};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    Strong,
    Moderate,
    Weak,
}

impl Importance {
    pub const ALL: [Importance; 3] = [Importance::Strong, Importance::Moderate, Importance::Weak];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "strong" => Some(Self::Strong),
            "moderate" => Some(Self::Moderate),
            "weak" => Some(Self::Weak),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Strong => "strong",
            Self::Moderate => "moderate",
            Self::Weak => "weak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportLevel {
    Supported,
    Missing,
    Contradicted,
}

impl SupportLevel {
    pub const ALL: [SupportLevel; 3] = [SupportLevel::Supported, SupportLevel::Missing, SupportLevel::Contradicted];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "supported" => Some(Self::Supported),
            "missing" => Some(Self::Missing),
            "contradicted" => Some(Self::Contradicted),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Supported => "supported",
            Self::Missing => "missing",
            Self::Contradicted => "contradicted",
        }
    }
}

impl fmt::Display for SupportLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomCriterion {
    pub id: u32,
    pub description: String,
    pub importance: Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub criteria: Vec<SymptomCriterion>,
    pub warnings: Vec<String>,
}

fn invalid(message: impl Into<String>) -> Error {
    Error::Validation { message: message.into(), raw: None }
}

/// Reads criteria from an array, a single object, or an object holding the
/// array under any key. Duplicate ids renumber the whole profile 1..n.
pub fn profile_from_json(v: Value) -> Result<Profile> {
    let v = canonical_keys(v);
    let items = match v {
        Value::Array(xs) => xs,
        Value::Object(ref map) if map.contains_key("description") => vec![v],
        Value::Object(map) => map
            .into_iter()
            .find_map(|(_, x)| if let Value::Array(xs) = x { Some(xs) } else { None })
            .ok_or_else(|| invalid("profile has no criteria array"))?,
        _ => return Err(invalid("profile is not a JSON array")),
    };
    if items.is_empty() {
        return Err(invalid("empty profile"));
    }
    let mut criteria = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let description = item
            .get("description")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| invalid(format!("criterion {} has no description", i + 1)))?;
        let importance = item
            .get("importance")
            .and_then(Value::as_str)
            .and_then(Importance::parse)
            .ok_or_else(|| invalid(format!("criterion {} has no valid importance", i + 1)))?;
        let id = item.get("id").and_then(as_id).unwrap_or(0);
        criteria.push(SymptomCriterion { id, description: description.to_string(), importance });
    }
    let mut warnings = Vec::new();
    let distinct: BTreeSet<u32> = criteria.iter().map(|c| c.id).collect();
    if distinct.len() != criteria.len() || distinct.contains(&0) {
        warnings.push("duplicate or missing criterion ids; renumbered 1..n".to_string());
        for (i, c) in criteria.iter_mut().enumerate() {
            c.id = i as u32 + 1;
        }
    }
    Ok(Profile { criteria, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceEntry {
    pub id: u32,
    pub description: String,
    pub importance: Option<Importance>,
    pub support_level: SupportLevel,
    pub evidence: Option<String>,
}

/// Criterion ids per (support level, importance).
pub type Buckets = BTreeMap<SupportLevel, BTreeMap<Importance, Vec<u32>>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceLedger {
    pub entries: Vec<EvidenceEntry>,
    pub buckets: Buckets,
    pub reasoning: String,
    pub score: f64,
}

impl EvidenceLedger {
    pub fn bucket(&self, level: SupportLevel, importance: Importance) -> &[u32] {
        self.buckets.get(&level).and_then(|m| m.get(&importance)).map_or(&[], |v| v.as_slice())
    }

    /// Bucket sizes keyed `"<level>_<importance>"`.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for level in SupportLevel::ALL {
            for imp in Importance::ALL {
                out.insert(format!("{level}_{}", imp.as_str()), self.bucket(level, imp).len());
            }
        }
        out
    }
}

/// What the ledger is checked against.
#[derive(Debug, Clone, Copy)]
pub struct LedgerCheck<'a> {
    /// `None` when the profile step was skipped.
    pub profile: Option<&'a [SymptomCriterion]>,
    pub patient_info: &'a str,
    /// Whether buckets are split by importance.
    pub use_importance: bool,
}

fn score_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<<\s*(\d+(?:\.\d+)?)\s*>>").unwrap())
}

/// The number inside the first `<<n>>` marker.
pub fn parse_score_marker(text: &str) -> Option<f64> {
    score_re().captures(text).and_then(|c| c[1].parse().ok())
}

/// Quoted evidence must come from the patient text: a whole-phrase match
/// after normalization, or failing that every quoted word present.
pub fn evidence_is_grounded(evidence: &str, patient_info: &str) -> bool {
    if contains_phrase(patient_info, evidence) {
        return true;
    }
    let have: BTreeSet<String> = words(patient_info).into_iter().collect();
    let quoted = words(evidence);
    !quoted.is_empty() && quoted.iter().all(|w| have.contains(w))
}

fn id_list(v: Option<&Value>) -> Result<Vec<u32>> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(xs)) => xs
            .iter()
            .map(|x| as_id(x).ok_or_else(|| invalid(format!("bucket entry {x} is not a criterion id"))))
            .collect(),
        Some(other) => Err(invalid(format!("bucket {other} is not a list"))),
    }
}

/// Parses and validates the confidence-step reply.
pub fn ledger_from_reply(raw: &str, check: &LedgerCheck<'_>) -> Result<EvidenceLedger> {
    let v = canonical_keys(super::lenient::parse(raw)?);
    let v = match v {
        Value::Array(mut xs) if xs.len() == 1 => xs.remove(0),
        v => v,
    };
    let raw_entries = v
        .get("criteria_evaluation")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid("missing criteria evaluation"))?;
    let mut entries = Vec::with_capacity(raw_entries.len());
    for e in raw_entries {
        let id = e.get("id").and_then(as_id).ok_or_else(|| invalid("evaluation entry without id"))?;
        let support_level = e
            .get("support_level")
            .and_then(Value::as_str)
            .and_then(SupportLevel::parse)
            .ok_or_else(|| invalid(format!("criterion {id}: bad support level")))?;
        let evidence = e
            .get("evidence")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("null"))
            .map(str::to_string);
        entries.push(EvidenceEntry {
            id,
            description: e.get("description").and_then(Value::as_str).unwrap_or_default().to_string(),
            importance: e.get("importance").and_then(Value::as_str).and_then(Importance::parse),
            support_level,
            evidence,
        });
    }

    let summary = v.get("summary").ok_or_else(|| invalid("missing summary"))?;
    let mut buckets = Buckets::new();
    for level in SupportLevel::ALL {
        let group = summary.get(format!("{level}_criteria"));
        let tiers = buckets.entry(level).or_default();
        for imp in Importance::ALL {
            let key = format!("{level}_{}", imp.as_str());
            let ids = id_list(group.and_then(|g| g.get(&key)).or_else(|| summary.get(&key)))?;
            tiers.insert(imp, ids);
        }
    }
    let confidence = summary.get("confidence").or_else(|| v.get("confidence"));
    let reasoning = confidence
        .and_then(|c| c.get("reasoning"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let score = confidence
        .and_then(|c| c.get("confidence_score"))
        .and_then(|s| match s {
            Value::String(s) => parse_score_marker(s),
            _ => None,
        })
        .or_else(|| parse_score_marker(raw))
        .ok_or_else(|| invalid("no <<score>> marker"))?;
    if !(0.0..=100.0).contains(&score) {
        return Err(invalid(format!("score {score} outside [0, 100]")));
    }
    let mut ledger = EvidenceLedger { entries, buckets, reasoning, score };
    validate(&mut ledger, check)?;
    Ok(ledger)
}

fn validate(ledger: &mut EvidenceLedger, check: &LedgerCheck<'_>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in &ledger.entries {
        if !seen.insert(e.id) {
            return Err(invalid(format!("criterion {} evaluated twice", e.id)));
        }
    }
    if let Some(profile) = check.profile {
        let want: BTreeSet<u32> = profile.iter().map(|c| c.id).collect();
        if let Some(missing) = want.difference(&seen).next() {
            return Err(invalid(format!("criterion {missing} not evaluated")));
        }
        if let Some(extra) = seen.difference(&want).next() {
            return Err(invalid(format!("criterion {extra} is not in the profile")));
        }
        // the profile, not the reply, is authoritative on importance
        for e in ledger.entries.iter_mut() {
            let c = profile.iter().find(|c| c.id == e.id).unwrap();
            e.importance = Some(c.importance);
            if e.description.is_empty() {
                e.description = c.description.clone();
            }
        }
    }
    for e in &ledger.entries {
        match (e.support_level, &e.evidence) {
            (SupportLevel::Missing, Some(_)) => {
                return Err(invalid(format!("criterion {} is missing but quotes evidence", e.id)))
            }
            (SupportLevel::Missing, None) => {}
            (level, None) => return Err(invalid(format!("criterion {} is {level} without evidence", e.id))),
            (_, Some(q)) => {
                if !evidence_is_grounded(q, check.patient_info) {
                    return Err(invalid(format!("criterion {} quotes {q:?}, not in the patient information", e.id)));
                }
            }
        }
    }
    // bucket membership must mirror the entries; tiers only count when the
    // profile fixes each criterion's importance
    let tiered = check.use_importance && check.profile.is_some();
    let key = |level: SupportLevel, imp: Option<Importance>| (level, if tiered { imp } else { None });
    let mut expected: BTreeMap<_, BTreeSet<u32>> = BTreeMap::new();
    for e in &ledger.entries {
        expected.entry(key(e.support_level, e.importance)).or_default().insert(e.id);
    }
    let mut listed: BTreeMap<_, BTreeSet<u32>> = BTreeMap::new();
    for (level, tiers) in &ledger.buckets {
        for (imp, ids) in tiers {
            let set = listed.entry(key(*level, Some(*imp))).or_default();
            for id in ids {
                if !set.insert(*id) && tiered {
                    return Err(invalid(format!("criterion {id} listed twice")));
                }
            }
        }
    }
    listed.retain(|_, ids| !ids.is_empty());
    if expected != listed {
        return Err(invalid("summary buckets disagree with the criterion evaluations"));
    }
    Ok(())
}
