//! Shared data types: generations, response sets, cases and estimator results.
//!
//! Probabilities are stored in linear space everywhere; estimators take
//! logarithms themselves.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One candidate token at a position, with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub token: String,
    pub prob: f64,
}

impl Alternative {
    pub fn new(token: impl Into<String>, prob: f64) -> Self {
        Self { token: token.into(), prob }
    }
}

/// A single generated sequence and whatever per-token data the provider gave us.
///
/// A trace without token data (`tokens` empty) is legal: black-box providers
/// only return text. Estimators that need probabilities report that as
/// unsupported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace")]
pub struct TokenTrace {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk_alternatives: Option<Vec<Vec<Alternative>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncond_probs: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawTrace {
    text: String,
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_probs: Vec<f64>,
    #[serde(default)]
    topk_alternatives: Option<Vec<Vec<Alternative>>>,
    #[serde(default)]
    uncond_probs: Option<Vec<f64>>,
}

impl TryFrom<RawTrace> for TokenTrace {
    type Error = Error;

    fn try_from(raw: RawTrace) -> Result<Self> {
        let trace = TokenTrace {
            text: raw.text,
            tokens: raw.tokens,
            token_probs: raw.token_probs,
            topk_alternatives: raw.topk_alternatives,
            uncond_probs: raw.uncond_probs,
        };
        trace.validate()?;
        Ok(trace)
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("{what} {p} outside (0, 1]")));
    }
    Ok(())
}

impl TokenTrace {
    pub fn text_only(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: Vec::new(),
            token_probs: Vec::new(),
            topk_alternatives: None,
            uncond_probs: None,
        }
    }

    pub fn new(text: impl Into<String>, tokens: Vec<String>, token_probs: Vec<f64>) -> Result<Self> {
        let trace = Self {
            text: text.into(),
            tokens,
            token_probs,
            topk_alternatives: None,
            uncond_probs: None,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Trace whose text is the concatenation of `tokens`.
    pub fn from_tokens(tokens: &[&str], token_probs: &[f64]) -> Result<Self> {
        Self::new(
            tokens.concat(),
            tokens.iter().map(|t| t.to_string()).collect(),
            token_probs.to_vec(),
        )
    }

    pub fn with_alternatives(mut self, alternatives: Vec<Vec<Alternative>>) -> Result<Self> {
        self.topk_alternatives = Some(alternatives);
        self.validate()?;
        Ok(self)
    }

    pub fn with_uncond_probs(mut self, probs: Vec<f64>) -> Result<Self> {
        self.uncond_probs = Some(probs);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.token_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_probs.is_empty()
    }

    pub fn has_token_data(&self) -> bool {
        !self.token_probs.is_empty()
    }

    /// Checks the structural invariants; called on every deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.token_probs.len() {
            return Err(Error::invalid(format!(
                "trace has {} tokens but {} probabilities",
                self.tokens.len(),
                self.token_probs.len()
            )));
        }
        for &p in &self.token_probs {
            check_prob(p, "token probability")?;
        }
        let l = self.token_probs.len();
        if let Some(alts) = &self.topk_alternatives {
            if alts.len() != l {
                return Err(Error::invalid(format!(
                    "top-k alternatives cover {} positions, trace has {l}",
                    alts.len()
                )));
            }
            for (pos, list) in alts.iter().enumerate() {
                for a in list {
                    if !(0.0..=1.0).contains(&a.prob) {
                        return Err(Error::invalid(format!(
                            "alternative probability {} at position {pos} outside [0, 1]",
                            a.prob
                        )));
                    }
                }
                if list.windows(2).any(|w| w[0].prob < w[1].prob) {
                    return Err(Error::invalid(format!(
                        "alternatives at position {pos} are not sorted by descending probability"
                    )));
                }
            }
        }
        if let Some(u) = &self.uncond_probs {
            if u.len() != l {
                return Err(Error::invalid(format!(
                    "uncond_probs has {} entries, trace has {l}",
                    u.len()
                )));
            }
            for &p in u {
                check_prob(p, "unconditional probability")?;
            }
        }
        Ok(())
    }

    /// Natural-log sequence probability, `log P(y|x) = Σ log p_l`.
    pub fn sequence_log_prob(&self) -> Result<f64> {
        if self.token_probs.is_empty() {
            return Err(Error::unsupported("needs generated token probabilities"));
        }
        Ok(self.token_probs.iter().map(|p| p.ln()).sum())
    }

    /// Byte range of the first `[...]` answer in the text.
    fn bracket_range(&self) -> Option<(usize, usize)> {
        let open = self.text.find('[')?;
        let close = self.text[open + 1..].find(']')? + open + 1;
        Some((open + 1, close))
    }

    /// The sub-trace covering the bracketed answer, e.g. the `appendicitis`
    /// tokens of `"... [appendicitis]"`. Falls back to the whole trace when the
    /// text has no brackets or the tokens do not concatenate to the text.
    pub fn answer_span(&self) -> TokenTrace {
        let Some((start, end)) = self.bracket_range() else {
            return self.clone();
        };
        let answer = self.text[start..end].trim().to_string();
        if !self.has_token_data() || self.tokens.concat() != self.text {
            return TokenTrace { text: answer, ..self.clone() };
        }
        let mut keep = Vec::new();
        let mut offset = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            let (a, b) = (offset, offset + tok.len());
            offset = b;
            if a < end && b > start && !self.text[a.max(start)..b.min(end)].trim().is_empty() {
                keep.push(i);
            }
        }
        if keep.is_empty() {
            return TokenTrace::text_only(answer);
        }
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TokenTrace {
            text: answer,
            tokens: keep.iter().map(|&i| self.tokens[i].clone()).collect(),
            token_probs: pick(&self.token_probs),
            topk_alternatives: self
                .topk_alternatives
                .as_ref()
                .map(|alts| keep.iter().map(|&i| alts[i].clone()).collect()),
            uncond_probs: self.uncond_probs.as_ref().map(pick),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub k: usize,
    pub seed: u64,
}

/// K sampled responses to one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct ResponseSet {
    pub input: String,
    pub responses: Vec<TokenTrace>,
    pub sampling: Sampling,
}

/// A set as read from JSON; `sampling` may be left out.
#[derive(Deserialize)]
struct RawSet {
    input: String,
    responses: Vec<TokenTrace>,
    sampling: Option<Sampling>,
}

impl TryFrom<RawSet> for ResponseSet {
    type Error = Error;

    fn try_from(raw: RawSet) -> Result<Self> {
        let k = raw.responses.len();
        let sampling = raw.sampling.unwrap_or(Sampling { temperature: 0.0, k, seed: 0 });
        Self::new(raw.input, raw.responses, sampling)
    }
}

impl ResponseSet {
    pub fn new(input: impl Into<String>, responses: Vec<TokenTrace>, sampling: Sampling) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::invalid("response set needs K >= 1"));
        }
        Ok(Self { input: input.into(), responses, sampling })
    }

    /// Builds a set from bare answer strings (no token data).
    pub fn from_texts<S: AsRef<str>>(input: impl Into<String>, texts: &[S]) -> Result<Self> {
        let responses: Vec<_> = texts.iter().map(|t| TokenTrace::text_only(t.as_ref())).collect();
        let k = responses.len();
        Self::new(input, responses, Sampling { temperature: 0.0, k, seed: 0 })
    }

    pub fn k(&self) -> usize {
        self.responses.len()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.responses.iter().map(|r| r.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Dialogue,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Doctor,
    Patient,
    Narrator,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Doctor => "Doctor",
            Speaker::Patient => "Patient",
            Speaker::Narrator => "Narrator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub speaker: Speaker,
    pub text: String,
}

impl Unit {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self { speaker, text: text.into() }
    }
}

/// One benchmark case: patient information plus the gold diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub kind: CaseKind,
    pub units: Vec<Unit>,
    pub gold_diagnosis: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl Case {
    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::invalid(format!("case {} has no units", self.id)));
        }
        if self.gold_diagnosis.trim().is_empty() {
            return Err(Error::invalid(format!("case {} has an empty gold diagnosis", self.id)));
        }
        Ok(())
    }

    /// Patient information as shown to the model. Dialogue turns are
    /// prefixed with the speaker; report sentences are joined with spaces.
    pub fn render(&self) -> String {
        match self.kind {
            CaseKind::Report => self
                .units
                .iter()
                .map(|u| u.text.trim())
                .collect::<Vec<_>>()
                .join(" "),
            CaseKind::Dialogue => self
                .units
                .iter()
                .map(|u| format!("{}: {}", u.speaker, u.text.trim()))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// Reads a JSON-lines case file. Blank lines are skipped.
pub fn read_cases(path: &Path) -> Result<Vec<Case>> {
    let file = std::fs::File::open(path)?;
    let mut cases = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: Case = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        case.validate()?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn write_cases(path: &Path, cases: &[Case]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for case in cases {
        serde_json::to_writer(&mut out, case)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// The native range of a method's raw score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    #[serde(rename = "unit-interval")]
    UnitInterval,
    #[serde(rename = "0-100")]
    Percent,
    #[serde(rename = "unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    #[serde(rename = "method")]
    pub method_id: String,
    pub score: f64,
    pub scale: Scale,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub aux: serde_json::Value,
}

impl EstimatorResult {
    pub fn new(method_id: impl Into<String>, score: f64, scale: Scale) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::degenerate(format!("non-finite score {score}")));
        }
        Ok(Self { method_id: method_id.into(), score, scale, aux: serde_json::Value::Null })
    }

    pub fn with_aux(mut self, aux: serde_json::Value) -> Self {
        self.aux = aux;
        self
    }
}

/// Maps raw scores onto [0, 1] for reporting. Bounded scales map affinely;
/// unbounded scores are min-max scaled over the batch. Rank metrics never
/// go through this.
pub fn normalize_scores(batch: &[EstimatorResult]) -> Result<Vec<f64>> {
    let unbounded: Vec<f64> = batch
        .iter()
        .filter(|r| r.scale == Scale::Unbounded)
        .map(|r| r.score)
        .collect();
    let (lo, hi) = unbounded
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !unbounded.is_empty() && (unbounded.len() < 2 || hi <= lo) {
        return Err(Error::degenerate("degenerate normalization"));
    }
    Ok(batch
        .iter()
        .map(|r| match r.scale {
            Scale::UnitInterval => r.score,
            Scale::Percent => r.score / 100.0,
            Scale::Unbounded => (r.score - lo) / (hi - lo),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(score: f64, scale: Scale) -> EstimatorResult {
        EstimatorResult::new("m", score, scale).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_scores(&[result(30.0, Scale::Percent)]).unwrap(), vec![0.30]);
        assert_eq!(normalize_scores(&[result(0.7642, Scale::UnitInterval)]).unwrap(), vec![0.7642]);
        let batch: Vec<_> = [-2.0, 0.0, 2.0].iter().map(|&s| result(s, Scale::Unbounded)).collect();
        assert_eq!(normalize_scores(&batch).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_unbounded_is_degenerate() {
        let err = normalize_scores(&[result(1.5, Scale::Unbounded)]).unwrap_err();
        assert_eq!(err.to_string(), "degenerate normalization");
    }

    #[test]
    fn trace_rejects_bad_probabilities() {
        assert!(TokenTrace::from_tokens(&["a"], &[0.0]).is_err());
        assert!(TokenTrace::from_tokens(&["a"], &[1.2]).is_err());
        assert!(TokenTrace::from_tokens(&["a", "b"], &[0.5]).is_err());
        let bad: std::result::Result<TokenTrace, _> =
            serde_json::from_str(r#"{"text":"a","tokens":["a"],"token_probs":[0.5],"uncond_probs":[0.1,0.2]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn answer_span_selects_bracket_tokens() {
        let trace = TokenTrace::from_tokens(
            &["Answer", ": ", "[", "append", "icit", "is", "]"],
            &[0.9, 0.9, 0.99, 0.3204, 0.9722, 0.9999, 0.99],
        )
        .unwrap();
        let span = trace.answer_span();
        assert_eq!(span.text, "appendicitis");
        assert_eq!(span.token_probs, vec![0.3204, 0.9722, 0.9999]);
    }

    #[test]
    fn case_validation() {
        let c = Case {
            id: "x".into(),
            kind: CaseKind::Report,
            units: vec![],
            gold_diagnosis: "flu".into(),
            aliases: vec![],
        };
        assert!(c.validate().is_err());
    }

    fn arb_trace() -> impl Strategy<Value = TokenTrace> {
        prop::collection::vec(("[a-z]{1,4}", 0.001f64..=1.0), 1..6).prop_map(|pairs| {
            let tokens: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
            let probs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            TokenTrace::new(tokens.concat(), tokens, probs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn normalization_preserves_rank(scores in prop::collection::vec(-50.0f64..50.0, 2..20)) {
            prop_assume!(scores.iter().any(|&s| s != scores[0]));
            let batch: Vec<_> = scores.iter().map(|&s| result(s, Scale::Unbounded)).collect();
            let norm = normalize_scores(&batch).unwrap();
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    prop_assert_eq!(scores[i] < scores[j], norm[i] < norm[j]);
                }
            }
        }

        #[test]
        fn trace_json_round_trip(trace in arb_trace()) {
            let json = serde_json::to_string(&trace).unwrap();
            let back: TokenTrace = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, trace);
        }

        #[test]
        fn case_json_round_trip(texts in prop::collection::vec("[ -~]{1,30}", 1..6), gold in "[a-z]{1,12}") {
            let case = Case {
                id: "c".into(),
                kind: CaseKind::Dialogue,
                units: texts.iter().enumerate().map(|(i, t)| Unit::new(if i % 2 == 0 { Speaker::Doctor } else { Speaker::Patient }, t.clone())).collect(),
                gold_diagnosis: gold,
                aliases: vec!["alias".into()],
            };
            let back: Case = serde_json::from_str(&serde_json::to_string(&case).unwrap()).unwrap();
            prop_assert_eq!(back, case);
        }
    }
}
