//! Confidence from agreement among K sampled responses.

mod spectral;

pub use spectral::{deg, ecc, eigv, SimilarityConstruction, SimilarityMatrix, Spectrum};

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ResponseSet;
use crate::oracles::{cosine, lexical_similarity, Embedder, NliOracle, Similarity};
use crate::text::normalize_answer;
use crate::token::token_sar;

pub const DEFAULT_SAR_T: f64 = 0.001;

/// Partition of the responses into semantic-equivalence clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticClustering {
    /// Cluster index per response.
    pub assignment: Vec<usize>,
    /// Members per cluster, ordered by first member.
    pub clusters: Vec<Vec<usize>>,
}

impl SemanticClustering {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Builds the partition from a symmetric "same meaning" predicate by
    /// connected components.
    pub fn from_links(k: usize, mut linked: impl FnMut(usize, usize) -> Result<bool>) -> Result<Self> {
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for i in 0..k {
            for j in i + 1..k {
                if find(&mut parent, i) != find(&mut parent, j) && linked(i, j)? {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut assignment = Vec::with_capacity(k);
        for i in 0..k {
            let root = find(&mut parent, i);
            let c = *index.entry(root).or_insert_with(|| {
                clusters.push(Vec::new());
                clusters.len() - 1
            });
            clusters[c].push(i);
            assignment.push(c);
        }
        Ok(Self { assignment, clusters })
    }

    /// Responses i and j share a cluster when `p_entail > p_contra` holds in
    /// both directions, closed transitively.
    pub fn from_nli<S: AsRef<str>>(texts: &[S], nli: &dyn NliOracle) -> Result<Self> {
        Self::from_links(texts.len(), |i, j| {
            let (a, b) = (texts[i].as_ref(), texts[j].as_ref());
            let fwd = nli.nli(a, b)?;
            if fwd.p_entail <= fwd.p_contra {
                return Ok(false);
            }
            let back = nli.nli(b, a)?;
            Ok(back.p_entail > back.p_contra)
        })
    }
}

fn need_two(set: &ResponseSet, what: &str) -> Result<()> {
    if set.k() < 2 {
        return Err(Error::invalid(format!("{what} needs K >= 2 responses")));
    }
    Ok(())
}

fn log_probs(set: &ResponseSet) -> Result<Vec<f64>> {
    set.responses.iter().map(|r| r.sequence_log_prob()).collect()
}

/// Share of responses equal to the most frequent one after normalization.
pub fn poc(set: &ResponseSet) -> Result<f64> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in set.texts() {
        *counts.entry(normalize_answer(t)).or_default() += 1;
    }
    let mode = counts.values().copied().max().unwrap_or(0);
    Ok(mode as f64 / set.k() as f64)
}

/// The most frequent normalized response; ties go to the first seen.
pub fn mode_response(set: &ResponseSet) -> String {
    let norm: Vec<String> = set.texts().iter().map(|t| normalize_answer(t)).collect();
    let count = |s: &String| norm.iter().filter(|n| *n == s).count();
    let mut best = &norm[0];
    for n in &norm {
        if count(n) > count(best) {
            best = n;
        }
    }
    best.clone()
}

fn mean_ordered_pairs(k: usize, mut f: impl FnMut(usize, usize) -> Result<f64>) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                total += f(i, j)?;
            }
        }
    }
    Ok(total / (k * (k - 1)) as f64)
}

/// Mean ROUGE-L F over ordered pairs.
pub fn lexical_sim(set: &ResponseSet) -> Result<f64> {
    need_two(set, "lexical_sim")?;
    let texts = set.texts();
    mean_ordered_pairs(set.k(), |i, j| Ok(lexical_similarity(texts[i], texts[j])))
}

/// Mean embedding cosine over ordered pairs.
pub fn semantic_sim(set: &ResponseSet, embedder: &dyn Embedder) -> Result<f64> {
    need_two(set, "semantic_sim")?;
    let vecs = set.texts().iter().map(|t| embedder.embed(t)).collect::<Result<Vec<_>>>()?;
    mean_ordered_pairs(set.k(), |i, j| cosine(&vecs[i], &vecs[j]))
}

/// `1 − N/K` for N semantic clusters.
pub fn num_sets(set: &ResponseSet, nli: &dyn NliOracle) -> Result<f64> {
    let clusters = SemanticClustering::from_nli(&set.texts(), nli)?;
    Ok(num_sets_from(&clusters))
}

pub fn num_sets_from(clusters: &SemanticClustering) -> f64 {
    1.0 - clusters.len() as f64 / clusters.assignment.len() as f64
}

/// `−(1/K) Σ log P(y_k|x)`
pub fn mc_se(set: &ResponseSet) -> Result<f64> {
    let lp = log_probs(set)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

/// `−(1/K) Σ log P(y_k|x) / L_k`
pub fn mc_nse(set: &ResponseSet) -> Result<f64> {
    let lp = log_probs(set)?;
    let total: f64 = lp.iter().zip(&set.responses).map(|(l, r)| l / r.len() as f64).sum();
    Ok(-total / lp.len() as f64)
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−Σ_n (|C_n|/K) log P̃_n` with `P̃_n` the summed sequence probability of
/// cluster n.
pub fn semantic_entropy(set: &ResponseSet, nli: &dyn NliOracle) -> Result<f64> {
    let lp = log_probs(set)?;
    let clusters = SemanticClustering::from_nli(&set.texts(), nli)?;
    semantic_entropy_from(&lp, &clusters)
}

pub fn semantic_entropy_from(log_probs: &[f64], clusters: &SemanticClustering) -> Result<f64> {
    let k = log_probs.len() as f64;
    let mut h = 0.0;
    for members in &clusters.clusters {
        let log_mass = log_sum_exp(members.iter().map(|&i| log_probs[i]));
        if !log_mass.is_finite() {
            return Err(Error::degenerate("semantic cluster with zero probability"));
        }
        h -= members.len() as f64 / k * log_mass;
    }
    Ok(h)
}

/// `(1/K) Σ_k [ℓ_k + R_S(k)/t]` with `R_S(k) = Σ_{j≠k} g(y_k, y_j) exp(ℓ_j)`,
/// for per-response log-scores `ℓ`.
pub fn relevance_weighted<S: AsRef<str>>(texts: &[S], scores: &[f64], sim: &dyn Similarity, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("temperature t = {t} must be positive")));
    }
    let k = texts.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut r = 0.0;
        if t.is_finite() {
            for j in 0..k {
                if j != i {
                    r += sim.similarity(texts[i].as_ref(), texts[j].as_ref())? * scores[j].exp();
                }
            }
        }
        total += scores[i] + r / t;
    }
    Ok(total / k as f64)
}

pub fn sentence_sar(set: &ResponseSet, sim: &dyn Similarity, t: f64) -> Result<f64> {
    let lp = log_probs(set)?;
    relevance_weighted(&set.texts(), &lp, sim, t)
}

/// SentenceSAR with each `log P(y_k|x)` replaced by `−TokenSAR(y_k)`.
pub fn sar(set: &ResponseSet, sim: &dyn Similarity, t: f64) -> Result<f64> {
    let scores = set
        .responses
        .iter()
        .map(|r| token_sar(r, &set.input, sim).map(|v| -v))
        .collect::<Result<Vec<_>>>()?;
    relevance_weighted(&set.texts(), &scores, sim, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Sampling, TokenTrace};
    use crate::oracles::{NliLabel, ReferenceNli};
    use approx::assert_abs_diff_eq;

    fn texts(ts: &[&str]) -> ResponseSet {
        ResponseSet::from_texts("q", ts).unwrap()
    }

    fn with_probs(items: &[(&str, &[f64])]) -> ResponseSet {
        let rs = items
            .iter()
            .map(|(t, ps)| {
                let toks: Vec<String> = (0..ps.len()).map(|i| if i == 0 { t.to_string() } else { String::new() }).collect();
                TokenTrace::new(*t, toks, ps.to_vec()).unwrap()
            })
            .collect();
        ResponseSet::new("q", rs, Sampling { temperature: 0.5, k: items.len(), seed: 0 }).unwrap()
    }

    struct Const(f64);
    impl Similarity for Const {
        fn similarity(&self, _: &str, _: &str) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn poc_examples() {
        let mut v = vec!["[appendicitis]"; 10];
        v.extend(["acute gastroenteritis"; 3]);
        v.extend(["viral gastroenteritis"; 2]);
        assert_abs_diff_eq!(poc(&texts(&v)).unwrap(), 10.0 / 15.0, epsilon = 1e-12);
        assert_eq!(poc(&texts(&["a b", "c", "d", "e", "f"])).unwrap(), 0.2);
        assert_eq!(poc(&texts(&["The Flu", "flu.", "FLU"])).unwrap(), 1.0);
        assert_eq!(mode_response(&texts(&["x", "y", "y", "x"])), "x");
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(lexical_sim(&texts(&["a b", "a b", "a b"])).unwrap(), 1.0);
        assert_eq!(lexical_sim(&texts(&["a b", "c d"])).unwrap(), 0.0);
        assert!(lexical_sim(&texts(&["a"])).is_err());
    }

    #[test]
    fn clustering_is_transitive() {
        let nli = ReferenceNli::new()
            .with("a", "b", NliLabel::Entail)
            .with("b", "a", NliLabel::Entail)
            .with("b", "c", NliLabel::Entail)
            .with("c", "b", NliLabel::Entail)
            .with("a", "d", NliLabel::Entail);
        let c = SemanticClustering::from_nli(&["a", "b", "c", "d"], &nli).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(c.assignment, vec![0, 0, 0, 1]);
    }

    #[test]
    fn num_sets_examples() {
        let nli = ReferenceNli::new();
        assert_abs_diff_eq!(num_sets(&texts(&["flu"; 15]), &nli).unwrap(), 1.0 - 1.0 / 15.0, epsilon = 1e-12);
        let mut v = vec!["a"; 5];
        v.extend(["b"; 5]);
        v.extend(["c"; 5]);
        assert_abs_diff_eq!(num_sets(&texts(&v), &nli).unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn mc_examples() {
        let set = with_probs(&[("a", &[0.5]), ("b", &[0.25])]);
        assert_abs_diff_eq!(mc_se(&set).unwrap(), 1.0397207708399179, epsilon = 1e-12);
        let set = with_probs(&[("a", &[0.5, 0.5])]);
        assert_abs_diff_eq!(mc_nse(&set).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        let set = with_probs(&[("a", &[1.0, 1.0]), ("b", &[1.0])]);
        assert_eq!(mc_se(&set).unwrap(), 0.0);
        assert!(mc_se(&texts(&["a"])).unwrap_err().is_unsupported());
    }

    #[test]
    fn semantic_entropy_examples() {
        let nli = ReferenceNli::new();
        let set = with_probs(&[("a", &[0.25]), ("a", &[0.25]), ("b", &[0.25]), ("b", &[0.25])]);
        assert_abs_diff_eq!(semantic_entropy(&set, &nli).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        let set = with_probs(&[("a", &[0.3]), ("a", &[0.2])]);
        assert_abs_diff_eq!(semantic_entropy(&set, &nli).unwrap(), -(0.5f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn semantic_entropy_survives_tiny_probabilities() {
        let nli = ReferenceNli::new();
        let set = with_probs(&[("a", &[1e-200, 1e-200]), ("a", &[1e-200, 1e-200])]);
        let h = semantic_entropy(&set, &nli).unwrap();
        assert_abs_diff_eq!(h, -(2.0f64.ln() - 400.0 * 10f64.ln()), epsilon = 1e-9);
    }

    #[test]
    fn sentence_sar_examples() {
        let set = with_probs(&[("a", &[0.5]), ("b", &[0.25])]);
        let base = -mc_se(&set).unwrap();
        assert_abs_diff_eq!(sentence_sar(&set, &Const(0.5), f64::INFINITY).unwrap(), base, epsilon = 1e-12);
        // R(a) = 0.5·0.25, R(b) = 0.5·0.5
        let expected = base + (0.125 + 0.25) / 2.0 / 0.1;
        assert_abs_diff_eq!(sentence_sar(&set, &Const(0.5), 0.1).unwrap(), expected, epsilon = 1e-12);
        let one = with_probs(&[("a", &[0.5])]);
        assert_abs_diff_eq!(sentence_sar(&one, &Const(0.5), 0.001).unwrap(), 0.5f64.ln(), epsilon = 1e-12);
        assert!(sentence_sar(&set, &Const(0.5), 0.0).is_err());
    }

    #[test]
    fn sar_single_response_is_negated_token_sar() {
        let set = with_probs(&[("a", &[0.5])]);
        let tsar = token_sar(&set.responses[0], "q", &Const(0.2)).unwrap();
        assert_abs_diff_eq!(sar(&set, &Const(0.2), 0.001).unwrap(), -tsar, epsilon = 1e-12);
    }
}
