//! Confidence-gated inquiry: the virtual patient reveals one exchange at a
//! time and the agent commits once the confidence reaches the threshold.

use serde::Serialize;

use super::{judge, reveal, segments, Dataset, Harness};
use crate::error::{Error, Result};
use crate::model::Case;
use crate::registry::Method;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentCase {
    pub case_id: String,
    /// Exchanges revealed before committing.
    pub utterances: usize,
    pub available: usize,
    pub diagnosis: String,
    pub correct: bool,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    pub dataset: String,
    pub method: String,
    pub threshold: f64,
    pub mean_utterances: Option<f64>,
    pub accuracy: Option<f64>,
    pub cases: Vec<AgentCase>,
    pub excluded: Vec<String>,
}

fn walk(h: &Harness, method: Method, case: &Case, threshold: f64) -> Result<AgentCase> {
    let available = segments(case).len();
    let mut scores = Vec::new();
    for n in 1..=available {
        let info = reveal(case, n).render();
        let subject = h.scorer.diagnose(&info, &[method])?;
        let score = h.scorer.score(method, &subject)?.score;
        scores.push(score);
        if score >= threshold || n == available {
            return Ok(AgentCase {
                case_id: case.id.clone(),
                utterances: n,
                available,
                correct: judge(&subject.diagnosis.answer, &case.gold_diagnosis, &case.aliases),
                diagnosis: subject.diagnosis.answer,
                scores,
            });
        }
    }
    Err(Error::invalid(format!("case {} has no units", case.id)))
}

/// `threshold` is compared with the raw score on the method's own scale.
pub fn run_agent(h: &Harness, dataset: &Dataset, method: Method, threshold: f64) -> Result<AgentReport> {
    if threshold.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    let mut cases = dataset.cases.clone();
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let results = h.map_cases(&cases, |c| walk(h, method, c, threshold))?;
    let mut done = Vec::new();
    let mut excluded = Vec::new();
    for (c, r) in cases.iter().zip(results) {
        match r {
            Ok(a) => done.push(a),
            Err(e) => {
                log::warn!("excluded case {}: {e}", c.id);
                excluded.push(c.id.clone());
            }
        }
    }
    let n = done.len() as f64;
    let (mean_utterances, accuracy) = if done.is_empty() {
        (None, None)
    } else {
        (
            Some(done.iter().map(|a| a.utterances as f64).sum::<f64>() / n),
            Some(done.iter().filter(|a| a.correct).count() as f64 / n),
        )
    };
    Ok(AgentReport {
        dataset: dataset.name.clone(),
        method: method.id().to_string(),
        threshold,
        mean_utterances,
        accuracy,
        cases: done,
        excluded,
    })
}
