//! Irrelevant-information robustness: each group re-asks every case with
//! one or two turns paraphrased and appended, then the dispersion of the
//! confidence across groups is measured.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Dataset, Harness};
use crate::error::{Error, Result};
use crate::gateway::GenParams;
use crate::model::{Case, Unit};
use crate::prompts::fill;

pub const DEFAULT_GROUPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessMethod {
    pub method: String,
    pub group_means: Vec<f64>,
    pub cv_group: Option<f64>,
    pub cv_sample: Option<f64>,
    pub scored_cases: usize,
    /// Cases left out of `cv_sample` because their mean score was zero.
    pub zero_mean_cases: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub dataset: String,
    pub groups: usize,
    pub seed: u64,
    pub excluded: Vec<String>,
    pub methods: Vec<RobustnessMethod>,
}

fn group_rng(seed: u64, case_id: &str, group: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(case_id.as_bytes());
    h.update([0]);
    h.update((group as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Indices of the turns one group paraphrases, in case order.
pub fn chosen_turns(case: &Case, seed: u64, group: usize) -> Vec<usize> {
    let n = case.units.len();
    let mut rng = group_rng(seed, &case.id, group);
    let k = rng.gen_range(1..=2).min(n);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// The case with the chosen turns paraphrased and appended at the end.
pub fn perturb(h: &Harness, case: &Case, group: usize) -> Result<Case> {
    let s = &h.scorer.settings;
    let params = GenParams::greedy().with_seed(s.seed);
    let mut out = case.clone();
    for i in chosen_turns(case, s.seed, group) {
        let unit = &case.units[i];
        let prompt = fill(&h.scorer.backends.prompts.paraphrase, &[("utterance", unit.text.as_str())])?;
        let reply = h.scorer.gateway().complete(&prompt, &params)?;
        let text = reply.text.trim();
        if text.is_empty() {
            return Err(Error::EmptyGeneration);
        }
        out.units.push(Unit::new(unit.speaker, text));
    }
    Ok(out)
}

type CaseScores = Vec<Vec<Option<f64>>>;

/// Scores per group, then per method.
fn score_case(h: &Harness, case: &Case, groups: usize) -> Result<CaseScores> {
    (0..groups)
        .map(|g| {
            let info = perturb(h, case, g)?.render();
            let subject = h.scorer.diagnose(&info, &h.methods)?;
            Ok(h.methods
                .iter()
                .map(|&m| {
                    h.scorer
                        .score(m, &subject)
                        .map_err(|e| log::warn!("{} group {g} {m}: {e}", case.id))
                        .ok()
                        .map(|r| r.score)
                })
                .collect())
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn run_robustness(h: &Harness, dataset: &Dataset, groups: usize) -> Result<RobustnessReport> {
    if groups < 2 {
        return Err(Error::invalid("robustness needs at least two groups"));
    }
    let mut cases = dataset.cases.clone();
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let results = h.map_cases(&cases, |c| score_case(h, c, groups))?;
    let mut excluded = Vec::new();
    let mut kept: Vec<CaseScores> = Vec::new();
    for (c, r) in cases.iter().zip(results) {
        match r {
            Ok(s) => kept.push(s),
            Err(e) => {
                log::warn!("excluded case {}: {e}", c.id);
                excluded.push(c.id.clone());
            }
        }
    }
    let methods = h
        .methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let mut notes = Vec::new();
            // cases scored in every group
            let rows: Vec<Vec<f64>> = kept
                .iter()
                .filter_map(|cs| cs.iter().map(|g| g[mi]).collect::<Option<Vec<f64>>>())
                .collect();
            let group_means: Vec<f64> = if rows.is_empty() {
                Vec::new()
            } else {
                (0..groups).map(|g| mean(&rows.iter().map(|r| r[g]).collect::<Vec<_>>())).collect()
            };
            let cv_group = if rows.is_empty() {
                notes.push("no case scored in every group".into());
                None
            } else {
                super::coefficient_of_variation(&group_means).map_err(|e| notes.push(e.to_string())).ok()
            };
            let per_case: Vec<f64> =
                rows.iter().filter_map(|r| super::coefficient_of_variation(r).ok()).collect();
            let zero_mean_cases = rows.len() - per_case.len();
            let cv_sample = (!per_case.is_empty()).then(|| mean(&per_case));
            RobustnessMethod {
                method: m.id().to_string(),
                group_means,
                cv_group,
                cv_sample,
                scored_cases: rows.len(),
                zero_mean_cases,
                notes,
            }
        })
        .collect();
    Ok(RobustnessReport {
        dataset: dataset.name.clone(),
        groups,
        seed: h.scorer.settings.seed,
        excluded,
        methods,
    })
}
