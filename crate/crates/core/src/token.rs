//! Token-level confidence measures over a single generated sequence.
//!
//! All functions are pure and use natural logarithms. Entropy, Rényi and
//! Fisher-Rao work on a [`TruncatedDistribution`]: the provider's top-k
//! alternatives plus one tail bucket holding the residual mass, with the
//! reference distribution uniform over those buckets.
//!
//! PMI is `log P(y|y<) − log P(y|y<,x)`, so it grows when the input makes
//! the generated tokens *less* likely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alternative, TokenTrace};
use crate::oracles::{NliLabel, NliOracle, Similarity};

/// Residual mass below this is treated as no tail bucket at all.
const TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenParams {
    pub renyi_alpha: f64,
    pub cpmi_lambda: f64,
    /// Entropy threshold in nats.
    pub cpmi_tau: f64,
    pub ccp_k: usize,
}

impl Default for TokenParams {
    fn default() -> Self {
        Self { renyi_alpha: 0.5, cpmi_lambda: 1.0, cpmi_tau: 2.0, ccp_k: 10 }
    }
}

/// Per-position distribution reconstructed from top-k alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl TruncatedDistribution {
    pub fn from_alternatives(alts: &[Alternative]) -> Result<Self> {
        if alts.is_empty() {
            return Err(Error::unsupported("needs top-k alternatives"));
        }
        let mut probs: Vec<f64> = alts.iter().map(|a| a.prob).collect();
        let sum: f64 = probs.iter().sum();
        let tail_mass = if sum > 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
            0.0
        } else if 1.0 - sum < TAIL_EPS {
            0.0
        } else {
            1.0 - sum
        };
        Ok(Self { probs, tail_mass })
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Number of listed alternatives, excluding the tail bucket.
    pub fn n_eff(&self) -> usize {
        self.probs.len()
    }

    pub fn buckets(&self) -> impl Iterator<Item = f64> + '_ {
        self.probs
            .iter()
            .copied()
            .chain((self.tail_mass > 0.0).then_some(self.tail_mass))
    }

    pub fn support(&self) -> usize {
        self.probs.len() + usize::from(self.tail_mass > 0.0)
    }

    pub fn entropy(&self) -> f64 {
        -self.buckets().filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn renyi_to_uniform(&self, alpha: f64) -> f64 {
        let q = 1.0 / self.support() as f64;
        let s: f64 = self
            .buckets()
            .filter(|&p| p > 0.0)
            .map(|p| p.powf(alpha) * q.powf(1.0 - alpha))
            .sum();
        s.ln() / (alpha - 1.0)
    }

    pub fn fisher_rao_to_uniform(&self) -> f64 {
        let q = 1.0 / self.support() as f64;
        let bc: f64 = self.buckets().map(|p| (p * q).sqrt()).sum();
        std::f64::consts::FRAC_2_PI * bc.clamp(0.0, 1.0).acos()
    }
}

fn probs(trace: &TokenTrace) -> Result<&[f64]> {
    if trace.token_probs.is_empty() {
        return Err(Error::unsupported("needs generated token probabilities"));
    }
    Ok(&trace.token_probs)
}

fn distributions(trace: &TokenTrace) -> Result<Vec<TruncatedDistribution>> {
    probs(trace)?;
    let alts = trace
        .topk_alternatives
        .as_ref()
        .ok_or_else(|| Error::unsupported("needs top-k alternatives"))?;
    alts.iter().map(|a| TruncatedDistribution::from_alternatives(a)).collect()
}

fn uncond(trace: &TokenTrace) -> Result<&[f64]> {
    trace
        .uncond_probs
        .as_deref()
        .ok_or_else(|| Error::unsupported("needs teacher-forced unconditional probabilities"))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Average sequence probability.
pub fn asp(trace: &TokenTrace) -> Result<f64> {
    Ok(mean(probs(trace)?.iter().copied()))
}

/// Maximum token probability.
pub fn msp(trace: &TokenTrace) -> Result<f64> {
    Ok(probs(trace)?.iter().copied().fold(f64::MIN, f64::max))
}

pub fn perplexity(trace: &TokenTrace) -> Result<f64> {
    Ok(mean(probs(trace)?.iter().map(|p| -p.ln())).exp())
}

pub fn mean_entropy(trace: &TokenTrace) -> Result<f64> {
    Ok(mean(distributions(trace)?.iter().map(TruncatedDistribution::entropy)))
}

pub fn pmi(trace: &TokenTrace) -> Result<f64> {
    let cond = probs(trace)?;
    let unc = uncond(trace)?;
    Ok(mean(cond.iter().zip(unc).map(|(c, u)| (u / c).ln())))
}

/// Conditional PMI: mean conditional log-prob plus λ/L times the unconditional
/// log-probs of positions whose entropy is at least τ.
pub fn cpmi(trace: &TokenTrace, lambda: f64, tau: f64) -> Result<f64> {
    let cond = probs(trace)?;
    let unc = uncond(trace)?;
    let l = cond.len() as f64;
    let base: f64 = cond.iter().map(|p| p.ln()).sum::<f64>() / l;
    if lambda == 0.0 || tau == f64::INFINITY {
        return Ok(base);
    }
    let selected: f64 = distributions(trace)?
        .iter()
        .zip(unc)
        .filter(|(d, _)| d.entropy() >= tau)
        .map(|(_, u)| u.ln())
        .sum();
    Ok(base + lambda / l * selected)
}

pub fn renyi_uniform(trace: &TokenTrace, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Err(Error::invalid("alpha = 1: use entropy-based measure"));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha {alpha} must be > 0")));
    }
    Ok(mean(distributions(trace)?.iter().map(|d| d.renyi_to_uniform(alpha))))
}

pub fn fisher_rao_uniform(trace: &TokenTrace) -> Result<f64> {
    Ok(mean(distributions(trace)?.iter().map(TruncatedDistribution::fisher_rao_to_uniform)))
}

fn join_context(context: &str, response: &str) -> String {
    if context.is_empty() {
        response.to_string()
    } else {
        format!("{context}\n{response}")
    }
}

/// Unnormalized token relevances `1 − g(x∪y, x∪y∖{y_l})`.
pub fn token_relevance(trace: &TokenTrace, context: &str, sim: &dyn Similarity) -> Result<Vec<f64>> {
    probs(trace)?;
    let full = join_context(context, &trace.tokens.concat());
    (0..trace.tokens.len())
        .map(|l| {
            let without: String = trace
                .tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != l)
                .map(|(_, t)| t.as_str())
                .collect();
            Ok(1.0 - sim.similarity(&full, &join_context(context, &without))?)
        })
        .collect()
}

/// Relevance-weighted negative log-likelihood, given raw relevances.
pub fn token_sar_weighted(trace: &TokenTrace, relevance: &[f64]) -> Result<f64> {
    let p = probs(trace)?;
    if relevance.len() != p.len() {
        return Err(Error::invalid("one relevance per token required"));
    }
    let total: f64 = relevance.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate("degenerate relevance"));
    }
    Ok(-relevance.iter().zip(p).map(|(r, p)| r / total * p.ln()).sum::<f64>())
}

pub fn token_sar(trace: &TokenTrace, context: &str, sim: &dyn Similarity) -> Result<f64> {
    let relevance = token_relevance(trace, context, sim)?;
    token_sar_weighted(trace, &relevance)
}

/// Per-position claim-conditioned probability: entailing mass over
/// entailing-plus-contradicting mass among the top-k substitutions. `None`
/// when no alternative entails or contradicts.
pub fn ccp_position(
    trace: &TokenTrace,
    position: usize,
    nli: &dyn NliOracle,
    k: usize,
) -> Result<Option<f64>> {
    let alts = trace
        .topk_alternatives
        .as_ref()
        .and_then(|a| a.get(position))
        .filter(|a| !a.is_empty())
        .ok_or_else(|| Error::unsupported("needs top-k alternatives"))?;
    let original = trace.tokens.concat();
    let (mut entail, mut contra) = (0.0, 0.0);
    for alt in alts.iter().take(k) {
        let perturbed: String = trace
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| if i == position { alt.token.as_str() } else { t.as_str() })
            .collect();
        match nli.nli(&perturbed, &original)?.label {
            NliLabel::Entail => entail += alt.prob,
            NliLabel::Contradict => contra += alt.prob,
            NliLabel::Neutral => {}
        }
    }
    let denom = entail + contra;
    Ok((denom > 0.0).then(|| entail / denom))
}

/// Whole-answer CCP: per-position ratios combined by geometric mean over the
/// positions that have a defined ratio.
pub fn ccp(trace: &TokenTrace, nli: &dyn NliOracle, k: usize) -> Result<f64> {
    probs(trace)?;
    let mut ratios = Vec::new();
    for pos in 0..trace.len() {
        if let Some(r) = ccp_position(trace, pos, nli, k)? {
            ratios.push(r);
        }
    }
    if ratios.is_empty() {
        return Err(Error::degenerate("ccp: no position has entailing or contradicting alternatives"));
    }
    if ratios.contains(&0.0) {
        return Ok(0.0);
    }
    Ok(mean(ratios.iter().map(|r| r.ln())).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ReferenceNli;
    use approx::assert_abs_diff_eq;

    fn case_study() -> TokenTrace {
        TokenTrace::from_tokens(&["append", "icit", "is"], &[0.3204, 0.9722, 0.9999]).unwrap()
    }

    fn trace(p: &[f64]) -> TokenTrace {
        let toks: Vec<String> = (0..p.len()).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
        TokenTrace::from_tokens(&refs, p).unwrap()
    }

    fn with_alts(t: TokenTrace, alts: Vec<Vec<(&str, f64)>>) -> TokenTrace {
        t.with_alternatives(
            alts.into_iter()
                .map(|v| v.into_iter().map(|(tok, p)| Alternative::new(tok, p)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn asp_examples() {
        assert_abs_diff_eq!(asp(&case_study()).unwrap(), 0.7642, epsilon = 5e-5);
        assert_eq!(asp(&trace(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(asp(&trace(&[0.5, 0.5])).unwrap(), 0.5);
        assert!(asp(&TokenTrace::text_only("x")).unwrap_err().is_unsupported());
    }

    #[test]
    fn msp_examples() {
        assert_eq!(msp(&case_study()).unwrap(), 0.9999);
        assert_eq!(msp(&trace(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(msp(&trace(&[0.1])).unwrap(), 0.1);
    }

    #[test]
    fn perplexity_examples() {
        assert_eq!(perplexity(&trace(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_abs_diff_eq!(perplexity(&trace(&[0.5, 0.5])).unwrap(), 2.0, epsilon = 1e-12);
        // exp(-(ln .3204 + ln .9722 + ln .9999)/3), evaluated by hand
        assert_abs_diff_eq!(perplexity(&case_study()).unwrap(), 1.4752, epsilon = 1e-3);
    }

    #[test]
    fn entropy_examples() {
        let onehot = with_alts(trace(&[1.0, 1.0]), vec![vec![("t0", 1.0)], vec![("t1", 1.0)]]);
        assert_eq!(mean_entropy(&onehot).unwrap(), 0.0);
        let uniform = with_alts(trace(&[0.25]), vec![vec![("t0", 0.25), ("b", 0.25), ("c", 0.25)]]);
        assert_abs_diff_eq!(mean_entropy(&uniform).unwrap(), 4f64.ln(), epsilon = 1e-12);
        // two positions: H([.5,.5]) = ln 2 and H([.7,.2,tail .1])
        let two = with_alts(
            trace(&[0.5, 0.7]),
            vec![vec![("t0", 0.5), ("x", 0.5)], vec![("t1", 0.7), ("y", 0.2)]],
        );
        let h2 = -(0.7f64 * 0.7f64.ln() + 0.2 * 0.2f64.ln() + 0.1 * 0.1f64.ln());
        assert_abs_diff_eq!(mean_entropy(&two).unwrap(), (2f64.ln() + h2) / 2.0, epsilon = 1e-12);
        assert!(mean_entropy(&trace(&[0.5])).unwrap_err().is_unsupported());
    }

    #[test]
    fn pmi_examples() {
        let same = trace(&[0.4, 0.9]).with_uncond_probs(vec![0.4, 0.9]).unwrap();
        assert_eq!(pmi(&same).unwrap(), 0.0);
        let a = trace(&[0.8]).with_uncond_probs(vec![0.4]).unwrap();
        assert_abs_diff_eq!(pmi(&a).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
        let b = trace(&[0.4]).with_uncond_probs(vec![0.8]).unwrap();
        assert_abs_diff_eq!(pmi(&b).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(pmi(&trace(&[0.4])).unwrap_err().is_unsupported());
    }

    #[test]
    fn cpmi_examples() {
        let t = with_alts(
            trace(&[0.5, 0.9]),
            vec![vec![("t0", 0.5), ("x", 0.5)], vec![("t1", 0.9), ("y", 0.1)]],
        )
        .with_uncond_probs(vec![0.2, 0.6])
        .unwrap();
        let base = (0.5f64.ln() + 0.9f64.ln()) / 2.0;
        assert_abs_diff_eq!(cpmi(&t, 1.0, f64::INFINITY).unwrap(), base, epsilon = 1e-15);
        assert_abs_diff_eq!(cpmi(&t, 0.0, 0.0).unwrap(), base, epsilon = 1e-15);
        // H(pos0) = ln 2 ≈ 0.693 ≥ 0.5; H(pos1) ≈ 0.325 < 0.5
        assert_abs_diff_eq!(cpmi(&t, 1.0, 0.5).unwrap(), base + 0.2f64.ln() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn renyi_examples() {
        let uniform = with_alts(trace(&[0.5]), vec![vec![("t0", 0.5), ("x", 0.5)]]);
        assert_abs_diff_eq!(renyi_uniform(&uniform, 0.5).unwrap(), 0.0, epsilon = 1e-12);
        let onehot4 = with_alts(trace(&[1.0]), vec![vec![("t0", 1.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)]]);
        assert_abs_diff_eq!(renyi_uniform(&onehot4, 0.5).unwrap(), 4f64.ln(), epsilon = 1e-12);
        let both = with_alts(
            trace(&[0.5, 1.0]),
            vec![vec![("t0", 0.5), ("x", 0.5)], vec![("t1", 1.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)]],
        );
        assert_abs_diff_eq!(renyi_uniform(&both, 0.5).unwrap(), 4f64.ln() / 2.0, epsilon = 1e-12);
        assert!(renyi_uniform(&uniform, 1.0).unwrap_err().to_string().contains("use entropy-based measure"));
    }

    #[test]
    fn fisher_rao_examples() {
        let uniform = with_alts(trace(&[0.5]), vec![vec![("t0", 0.5), ("x", 0.5)]]);
        assert_abs_diff_eq!(fisher_rao_uniform(&uniform).unwrap(), 0.0, epsilon = 1e-7);
        let onehot4 = with_alts(trace(&[1.0]), vec![vec![("t0", 1.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)]]);
        assert_abs_diff_eq!(fisher_rao_uniform(&onehot4).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let both = with_alts(
            trace(&[0.5, 1.0]),
            vec![vec![("t0", 0.5), ("x", 0.5)], vec![("t1", 1.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)]],
        );
        assert_abs_diff_eq!(fisher_rao_uniform(&both).unwrap(), 1.0 / 3.0, epsilon = 1e-7);
    }

    struct Table(Vec<f64>);
    impl Similarity for Table {
        fn similarity(&self, _a: &str, b: &str) -> Result<f64> {
            // relevance of dropping token i is 1 - g; index by which token is missing
            let idx = if b.contains("t0") { 1 } else { 0 };
            Ok(1.0 - self.0[idx])
        }
    }

    #[test]
    fn token_sar_examples() {
        let ones = trace(&[1.0, 1.0]);
        assert_eq!(token_sar_weighted(&ones, &[1.0, 1.0]).unwrap(), 0.0);
        let t = trace(&[0.5, 0.25]);
        assert_abs_diff_eq!(
            token_sar_weighted(&t, &[1.0, 1.0]).unwrap(),
            -(0.5f64.ln() + 0.25f64.ln()) / 2.0,
            epsilon = 1e-12
        );
        // relevances 0.75 / 0.25 from a fixture similarity
        let sar = token_sar(&t, "", &Table(vec![0.75, 0.25])).unwrap();
        assert_abs_diff_eq!(sar, -(0.75 * 0.5f64.ln() + 0.25 * 0.25f64.ln()), epsilon = 1e-12);
        assert!(matches!(token_sar_weighted(&t, &[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ccp_examples() {
        // entail mass 0.6 (the original token), contra 0.2, neutral 0.2
        let t = with_alts(trace(&[0.6]), vec![vec![("t0", 0.6), ("c", 0.2), ("n", 0.2)]]);
        let nli = ReferenceNli::new().with("c", "t0", NliLabel::Contradict);
        assert_abs_diff_eq!(ccp(&t, &nli, 10).unwrap(), 0.75, epsilon = 1e-12);

        let all_entail = with_alts(trace(&[0.6]), vec![vec![("t0", 0.6), ("x", 0.4)]]);
        let nli = ReferenceNli::new().with("x", "t0", NliLabel::Entail);
        assert_eq!(ccp(&all_entail, &nli, 10).unwrap(), 1.0);

        let all_contra = with_alts(trace(&[0.6]), vec![vec![("a", 0.6), ("b", 0.4)]]);
        let nli = ReferenceNli::new()
            .with("a", "t0", NliLabel::Contradict)
            .with("b", "t0", NliLabel::Contradict);
        assert_eq!(ccp(&all_contra, &nli, 10).unwrap(), 0.0);

        let neutral = with_alts(trace(&[0.6]), vec![vec![("a", 0.6)]]);
        assert!(ccp(&neutral, &ReferenceNli::new(), 10).is_err());
    }

    #[test]
    fn tail_bucket_absent_when_mass_is_covered() {
        let d = TruncatedDistribution::from_alternatives(&[Alternative::new("a", 0.3), Alternative::new("b", 0.7)]).unwrap();
        assert_eq!(d.support(), 2);
        let d = TruncatedDistribution::from_alternatives(&[Alternative::new("a", 0.6)]).unwrap();
        assert_eq!(d.support(), 2);
        assert_abs_diff_eq!(d.tail_mass(), 0.4, epsilon = 1e-15);
        let sum: f64 = d.buckets().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }
}
