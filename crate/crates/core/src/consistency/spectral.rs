//! Response-similarity graphs and the spectral quantities derived from them.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{cosine, lexical_similarity, Embedder, NliOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityConstruction {
    /// `(p_entail(i,j) + p_entail(j,i)) / 2`
    NliSymmetrized,
    /// Embedding cosine clamped to [0, 1].
    Cosine,
    /// ROUGE-L F-measure.
    Lexical,
    /// Supplied directly.
    Given,
}

/// Symmetric K×K similarity with unit diagonal and entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    s: DMatrix<f64>,
    construction: SimilarityConstruction,
}

/// Eigen-decomposition of the normalized Laplacian, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("similarity matrix must be square and non-empty"));
        }
        let s = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        Self::checked(s, SimilarityConstruction::Given)
    }

    fn checked(mut s: DMatrix<f64>, construction: SimilarityConstruction) -> Result<Self> {
        let k = s.nrows();
        for i in 0..k {
            for j in 0..k {
                let v = s[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("similarity S[{i},{j}] = {v} outside [0, 1]")));
                }
                if (v - s[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("similarity matrix not symmetric at ({i},{j})")));
                }
            }
            s[(i, i)] = 1.0;
        }
        Ok(Self { s, construction })
    }

    fn build(k: usize, construction: SimilarityConstruction, mut f: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        let mut s = DMatrix::identity(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let v = f(i, j)?;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Self::checked(s, construction)
    }

    pub fn from_nli<S: AsRef<str>>(texts: &[S], nli: &dyn NliOracle) -> Result<Self> {
        Self::build(texts.len(), SimilarityConstruction::NliSymmetrized, |i, j| {
            let (a, b) = (texts[i].as_ref(), texts[j].as_ref());
            Ok((nli.nli(a, b)?.p_entail + nli.nli(b, a)?.p_entail) / 2.0)
        })
    }

    pub fn from_embeddings<S: AsRef<str>>(texts: &[S], embedder: &dyn Embedder) -> Result<Self> {
        let vecs = texts.iter().map(|t| embedder.embed(t.as_ref())).collect::<Result<Vec<_>>>()?;
        Self::build(texts.len(), SimilarityConstruction::Cosine, |i, j| {
            Ok(cosine(&vecs[i], &vecs[j])?.clamp(0.0, 1.0))
        })
    }

    pub fn from_lexical<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        Self::build(texts.len(), SimilarityConstruction::Lexical, |i, j| {
            Ok(lexical_similarity(texts[i].as_ref(), texts[j].as_ref()))
        })
    }

    pub fn k(&self) -> usize {
        self.s.nrows()
    }

    pub fn construction(&self) -> SimilarityConstruction {
        self.construction
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Row sums, the diagonal of D. Never zero because S_ii = 1.
    pub fn degrees(&self) -> Vec<f64> {
        self.s.row_iter().map(|r| r.sum()).collect()
    }

    /// `I − D^{-1/2} S D^{-1/2}`
    pub fn normalized_laplacian(&self) -> DMatrix<f64> {
        let inv_sqrt: Vec<f64> = self.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| {
            let off = inv_sqrt[i] * self.s[(i, j)] * inv_sqrt[j];
            if i == j {
                1.0 - off
            } else {
                -off
            }
        })
    }

    pub fn spectrum(&self) -> Spectrum {
        let eig = SymmetricEigen::new(self.normalized_laplacian());
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(self.k(), self.k(), |r, c| eig.eigenvectors[(r, order[c])]);
        Spectrum { eigenvalues, eigenvectors }
    }
}

fn need_two(s: &SimilarityMatrix, what: &str) -> Result<()> {
    if s.k() < 2 {
        return Err(Error::invalid(format!("{what} needs K >= 2 responses")));
    }
    Ok(())
}

/// `1 − Σ_k max(0, 1 − λ_k)`. Zero for a single semantic cluster, negative
/// for several.
pub fn eigv(s: &SimilarityMatrix) -> Result<f64> {
    need_two(s, "eigv")?;
    let total: f64 = s.spectrum().eigenvalues.iter().map(|l| (1.0 - l).max(0.0)).sum();
    Ok(1.0 - total)
}

/// `trace(D) / K²`
pub fn deg(s: &SimilarityMatrix) -> Result<f64> {
    let k = s.k() as f64;
    Ok(s.degrees().iter().sum::<f64>() / (k * k))
}

/// `1 − ‖[ṽ_1ᵀ … ṽ_Kᵀ]‖₂` with `v_j` the j-th row of the first `k_eigs`
/// eigenvectors, centered over responses.
pub fn ecc(s: &SimilarityMatrix, k_eigs: usize) -> Result<f64> {
    need_two(s, "ecc")?;
    if k_eigs == 0 || k_eigs > s.k() {
        return Err(Error::invalid(format!("k_eigs {k_eigs} must be in 1..={}", s.k())));
    }
    let spec = s.spectrum();
    let k = s.k();
    let mut norm_sq = 0.0;
    for c in 0..k_eigs {
        let col = spec.eigenvectors.column(c);
        let centroid = col.sum() / k as f64;
        norm_sq += col.iter().map(|x| (x - centroid).powi(2)).sum::<f64>();
    }
    Ok(1.0 - norm_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ones(k: usize) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(vec![vec![1.0; k]; k]).unwrap()
    }

    #[test]
    fn all_ones_spectrum() {
        let s = ones(4);
        let ev = s.spectrum().eigenvalues;
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-12);
        for l in &ev[1..] {
            assert_abs_diff_eq!(*l, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(eigv(&s).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(deg(&s).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ecc(&s, 1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_blocks() {
        let s = SimilarityMatrix::from_rows(vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        assert_abs_diff_eq!(eigv(&s).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_by_two_by_hand() {
        // L = I − S/1.5 has eigenvalues 0 and 1 − 0.5/1.5 = 2/3
        let s = SimilarityMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let ev = s.spectrum().eigenvalues;
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eigv(&s).unwrap(), 1.0 - 1.0 - 1.0 / 3.0, epsilon = 1e-12);
        // both eigenvectors, centered: (0, ±1/√2) rows → norm 1
        assert_abs_diff_eq!(ecc(&s, 2).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ecc(&s, 1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_degree() {
        let s = SimilarityMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_abs_diff_eq!(deg(&s).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let s = SimilarityMatrix::from_rows(vec![
            vec![1.0, 0.2, 0.4],
            vec![0.2, 1.0, 0.6],
            vec![0.4, 0.6, 1.0],
        ])
        .unwrap();
        // trace(D) = 3 + 2·(0.2 + 0.4 + 0.6) = 5.4
        assert_abs_diff_eq!(deg(&s).unwrap(), 5.4 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(SimilarityMatrix::from_rows(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(SimilarityMatrix::from_rows(vec![vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
        assert!(eigv(&ones(1)).is_err());
    }
}
