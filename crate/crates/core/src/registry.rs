//! Method ids and one entry point that scores any of them for a subject.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::consistency::{self, SemanticClustering, SimilarityMatrix, DEFAULT_SAR_T};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenParams, DEFAULT_SAMPLE_K, DEFAULT_SAMPLE_TEMPERATURE};
use crate::medconf::{self, Diagnosis, MedConf, MedConfOptions};
use crate::model::{EstimatorResult, ResponseSet, Scale, TokenTrace};
use crate::oracles::{Embedder, EmbeddingSimilarity, NliOracle};
use crate::prompts::{fill, Prompts};
use crate::retrieval::Bm25Index;
use crate::token::{self, TokenParams};
use crate::verbalized::{self, ElicitStyle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Asp,
    Msp,
    Perplexity,
    Entropy,
    Pmi,
    Cpmi,
    Renyi,
    FisherRao,
    TokenSar,
    Ccp,
    Poc,
    Lexsim,
    SemsimGeneral,
    SemsimMedical,
    Numset,
    Eigv,
    Deg,
    Ecc,
    McSe,
    McNse,
    SemanticEntropy,
    SentenceSar,
    Sar,
    Ce,
    CeCot,
    CeTopk,
    PTrue,
    Medconf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Token,
    Consistency,
    Verbalized,
    Medconf,
}

impl Method {
    pub const ALL: [Method; 28] = [
        Method::Asp,
        Method::Msp,
        Method::Perplexity,
        Method::Entropy,
        Method::Pmi,
        Method::Cpmi,
        Method::Renyi,
        Method::FisherRao,
        Method::TokenSar,
        Method::Ccp,
        Method::Poc,
        Method::Lexsim,
        Method::SemsimGeneral,
        Method::SemsimMedical,
        Method::Numset,
        Method::Eigv,
        Method::Deg,
        Method::Ecc,
        Method::McSe,
        Method::McNse,
        Method::SemanticEntropy,
        Method::SentenceSar,
        Method::Sar,
        Method::Ce,
        Method::CeCot,
        Method::CeTopk,
        Method::PTrue,
        Method::Medconf,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Asp => "asp",
            Method::Msp => "msp",
            Method::Perplexity => "perplexity",
            Method::Entropy => "entropy",
            Method::Pmi => "pmi",
            Method::Cpmi => "cpmi",
            Method::Renyi => "renyi",
            Method::FisherRao => "fisher_rao",
            Method::TokenSar => "token_sar",
            Method::Ccp => "ccp",
            Method::Poc => "poc",
            Method::Lexsim => "lexsim",
            Method::SemsimGeneral => "semsim_general",
            Method::SemsimMedical => "semsim_medical",
            Method::Numset => "numset",
            Method::Eigv => "eigv",
            Method::Deg => "deg",
            Method::Ecc => "ecc",
            Method::McSe => "mc_se",
            Method::McNse => "mc_nse",
            Method::SemanticEntropy => "semantic_entropy",
            Method::SentenceSar => "sentence_sar",
            Method::Sar => "sar",
            Method::Ce => "ce",
            Method::CeCot => "ce_cot",
            Method::CeTopk => "ce_topk",
            Method::PTrue => "p_true",
            Method::Medconf => "medconf",
        }
    }

    pub fn family(self) -> Family {
        use Method::*;
        match self {
            Asp | Msp | Perplexity | Entropy | Pmi | Cpmi | Renyi | FisherRao | TokenSar | Ccp => Family::Token,
            Ce | CeCot | CeTopk | PTrue => Family::Verbalized,
            Medconf => Family::Medconf,
            _ => Family::Consistency,
        }
    }

    pub fn scale(self) -> Scale {
        use Method::*;
        match self {
            Asp | Msp | Ccp | Poc | Lexsim | SemsimGeneral | SemsimMedical | Numset | Deg | PTrue => {
                Scale::UnitInterval
            }
            Ce | CeCot | CeTopk | Medconf => Scale::Percent,
            _ => Scale::Unbounded,
        }
    }

    /// +1 when a larger score means more confident, −1 for uncertainty
    /// measures. Rank metrics use `orientation · score`.
    pub fn orientation(self) -> f64 {
        use Method::*;
        match self {
            Perplexity | Entropy | Pmi | TokenSar | McSe | McNse | SemanticEntropy => -1.0,
            _ => 1.0,
        }
    }

    /// Whether the method reads the K-sample response set.
    pub fn needs_samples(self) -> bool {
        self.family() == Family::Consistency
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    pub sample_k: usize,
    pub sample_temperature: f64,
    pub seed: u64,
    pub top_logprobs: u32,
    pub elicit_temperature: f64,
    pub sar_t: f64,
    pub token: TokenParams,
    pub medconf: MedConfOptions,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self {
            sample_k: DEFAULT_SAMPLE_K,
            sample_temperature: DEFAULT_SAMPLE_TEMPERATURE,
            seed: 0,
            top_logprobs: 10,
            elicit_temperature: 0.0,
            sar_t: DEFAULT_SAR_T,
            token: TokenParams::default(),
            medconf: MedConfOptions::default(),
        }
    }
}

/// The model backends shared by every method.
pub struct Backends {
    pub gateway: Arc<Gateway>,
    pub prompts: Prompts,
    pub nli: Box<dyn NliOracle>,
    pub general: Box<dyn Embedder>,
    pub medical: Box<dyn Embedder>,
    pub index: Option<Bm25Index>,
}

/// One patient input with its diagnosis; the K-sample set and the
/// unconditional probabilities are fetched on first use.
pub struct Subject {
    pub info: String,
    pub diagnosis: Diagnosis,
    samples: OnceCell<Result<ResponseSet>>,
    uncond: OnceCell<Result<TokenTrace>>,
}

impl Subject {
    pub fn new(info: impl Into<String>, diagnosis: Diagnosis) -> Self {
        Self { info: info.into(), diagnosis, samples: OnceCell::new(), uncond: OnceCell::new() }
    }

    /// A subject whose sample set is supplied rather than generated.
    pub fn with_samples(self, set: ResponseSet) -> Self {
        let _ = self.samples.set(Ok(set));
        self
    }

    /// Tokens of the bracketed answer.
    pub fn answer_trace(&self) -> TokenTrace {
        self.diagnosis.trace.answer_span()
    }
}

pub struct Scorer {
    pub backends: Backends,
    pub settings: ScoreSettings,
}

impl Scorer {
    pub fn new(backends: Backends, settings: ScoreSettings) -> Self {
        Self { backends, settings }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.backends.gateway
    }

    pub fn medconf(&self) -> MedConf<'_> {
        let mut m = MedConf::new(&self.backends.gateway, &self.backends.prompts, self.backends.index.as_ref())
            .with_options(self.settings.medconf.clone());
        m.diagnosis_params = GenParams::greedy().with_seed(self.settings.seed);
        m
    }

    /// Greedy diagnosis, with token data when any requested method reads it
    /// and the provider can supply it.
    pub fn diagnose(&self, info: &str, methods: &[Method]) -> Result<Subject> {
        let mut mc = self.medconf();
        let caps = self.gateway().capabilities();
        if caps.returns_generated_logprobs && methods.iter().any(|m| m.family() == Family::Token) {
            let top = if caps.returns_topk_alternatives {
                self.settings.top_logprobs.min(caps.max_top_logprobs)
            } else {
                0
            };
            mc.diagnosis_params = mc.diagnosis_params.with_logprobs(top);
        }
        let d = mc.generate_diagnosis(info)?;
        Ok(Subject::new(info, d))
    }

    fn sample_set(&self, subject: &Subject) -> Result<ResponseSet> {
        let prompt = fill(&self.backends.prompts.diagnosis, &[("inquiry", subject.info.as_str())])?;
        let mut params = GenParams::sampling(self.settings.sample_temperature).with_seed(self.settings.seed);
        if self.gateway().capabilities().returns_generated_logprobs {
            params = params.with_logprobs(0);
        }
        let set = self.gateway().sample(&prompt, &params, self.settings.sample_k)?;
        let responses = set.responses.iter().map(TokenTrace::answer_span).collect();
        ResponseSet::new(subject.info.clone(), responses, set.sampling)
    }

    pub fn samples<'s>(&self, subject: &'s Subject) -> Result<&'s ResponseSet> {
        subject
            .samples
            .get_or_init(|| self.sample_set(subject))
            .as_ref()
            .map_err(|e| e.replicate().at_stage("sampling"))
    }

    fn uncond_trace<'s>(&self, subject: &'s Subject) -> Result<&'s TokenTrace> {
        subject
            .uncond
            .get_or_init(|| self.gateway().attach_uncond_probs(subject.answer_trace()))
            .as_ref()
            .map_err(Error::replicate)
    }

    pub fn score(&self, method: Method, subject: &Subject) -> Result<EstimatorResult> {
        match method.family() {
            Family::Token => match method {
                Method::Pmi | Method::Cpmi => self.score_trace(method, self.uncond_trace(subject)?, &subject.info),
                _ => self.score_trace(method, &subject.answer_trace(), &subject.info),
            },
            Family::Consistency => self.score_set(method, self.samples(subject)?),
            Family::Verbalized => self.score_verbalized(method, &subject.info, &subject.diagnosis.answer),
            Family::Medconf => {
                let audit = self.medconf().score_diagnosis(&subject.info, &subject.diagnosis.answer)?;
                medconf::audit_result(&audit)
            }
        }
    }

    /// Token-level methods on a given trace; `context` is the input the
    /// relevance-weighted methods compare against.
    pub fn score_trace(&self, method: Method, trace: &TokenTrace, context: &str) -> Result<EstimatorResult> {
        let p = &self.settings.token;
        let score = match method {
            Method::Asp => token::asp(trace)?,
            Method::Msp => token::msp(trace)?,
            Method::Perplexity => token::perplexity(trace)?,
            Method::Entropy => token::mean_entropy(trace)?,
            Method::Pmi => token::pmi(trace)?,
            Method::Cpmi => token::cpmi(trace, p.cpmi_lambda, p.cpmi_tau)?,
            Method::Renyi => token::renyi_uniform(trace, p.renyi_alpha)?,
            Method::FisherRao => token::fisher_rao_uniform(trace)?,
            Method::TokenSar => {
                token::token_sar(trace, context, &EmbeddingSimilarity::new(&*self.backends.general))?
            }
            Method::Ccp => token::ccp(trace, &*self.backends.nli, p.ccp_k)?,
            other => return Err(Error::invalid(format!("{other} is not a token-level method"))),
        };
        EstimatorResult::new(method.id(), score, method.scale())
    }

    pub fn score_set(&self, method: Method, set: &ResponseSet) -> Result<EstimatorResult> {
        let b = &self.backends;
        let nli = &*b.nli;
        let texts = set.texts();
        let sim = EmbeddingSimilarity::new(&*b.general);
        let (score, aux) = match method {
            Method::Poc => (consistency::poc(set)?, json!({ "mode": consistency::mode_response(set) })),
            Method::Lexsim => (consistency::lexical_sim(set)?, json!(null)),
            Method::SemsimGeneral => (consistency::semantic_sim(set, &*b.general)?, json!(null)),
            Method::SemsimMedical => (consistency::semantic_sim(set, &*b.medical)?, json!(null)),
            Method::Numset => {
                let c = SemanticClustering::from_nli(&texts, nli)?;
                (consistency::num_sets_from(&c), json!({ "clusters": c.len() }))
            }
            Method::Eigv => (consistency::eigv(&SimilarityMatrix::from_nli(&texts, nli)?)?, json!(null)),
            Method::Deg => (consistency::deg(&SimilarityMatrix::from_nli(&texts, nli)?)?, json!(null)),
            Method::Ecc => {
                let k_eigs = SemanticClustering::from_nli(&texts, nli)?.len();
                let s = SimilarityMatrix::from_nli(&texts, nli)?;
                (consistency::ecc(&s, k_eigs)?, json!({ "k_eigs": k_eigs }))
            }
            Method::McSe => (consistency::mc_se(set)?, json!(null)),
            Method::McNse => (consistency::mc_nse(set)?, json!(null)),
            Method::SemanticEntropy => {
                let c = SemanticClustering::from_nli(&texts, nli)?;
                let lp = set.responses.iter().map(|r| r.sequence_log_prob()).collect::<Result<Vec<_>>>()?;
                (consistency::semantic_entropy_from(&lp, &c)?, json!({ "clusters": c.len() }))
            }
            Method::SentenceSar => (consistency::sentence_sar(set, &sim, self.settings.sar_t)?, json!(null)),
            Method::Sar => (consistency::sar(set, &sim, self.settings.sar_t)?, json!(null)),
            other => return Err(Error::invalid(format!("{other} is not a consistency-level method"))),
        };
        Ok(EstimatorResult::new(method.id(), score, method.scale())?.with_aux(aux))
    }

    pub fn score_verbalized(&self, method: Method, info: &str, answer: &str) -> Result<EstimatorResult> {
        let b = &self.backends;
        let greedy = GenParams::sampling(self.settings.elicit_temperature).with_seed(self.settings.seed);
        let style = match method {
            Method::Ce => ElicitStyle::Vanilla,
            Method::CeCot => ElicitStyle::Cot,
            Method::CeTopk => ElicitStyle::Topk,
            Method::PTrue => {
                let params = GenParams::sampling(self.settings.sample_temperature).with_seed(self.settings.seed);
                let r = verbalized::p_true(&b.gateway, &b.prompts, info, answer, self.settings.sample_k, &params)?;
                return Ok(EstimatorResult::new(method.id(), r.score, method.scale())?.with_aux(serde_json::to_value(r)?));
            }
            other => return Err(Error::invalid(format!("{other} is not a verbalized method"))),
        };
        let e = verbalized::elicit(&b.gateway, &b.prompts, style, info, answer, &greedy)?;
        Ok(EstimatorResult::new(method.id(), e.score, method.scale())?
            .with_aux(json!({ "reply": e.reply, "reprompted": e.reprompted })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.id());
        }
        assert!(matches!("nope".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn families_partition_the_methods() {
        let count = |f| Method::ALL.iter().filter(|m| m.family() == f).count();
        assert_eq!(count(Family::Token), 10);
        assert_eq!(count(Family::Consistency), 13);
        assert_eq!(count(Family::Verbalized), 4);
        assert_eq!(count(Family::Medconf), 1);
    }
}
