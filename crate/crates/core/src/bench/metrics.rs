//! Correlation, discrimination and dispersion statistics.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
}

/// Above this n, Spearman p-values use the t approximation.
const EXACT_PERMUTATION_MAX_N: usize = 8;

fn check_pair(xs: &[f64], ys: &[f64], what: &str) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("{what}: length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::invalid(format!("{what} needs n >= 3, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite value")));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate("degenerate correlation"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of r under the t distribution with n − 2 df.
fn t_test_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_pair(xs, ys, "pearson")?;
    let r = pearson_r(xs, ys)?;
    Ok(Correlation { r, p: t_test_p(r, xs.len()) })
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Heap's algorithm, calling `f` on every permutation of `v`.
fn for_each_permutation(v: &mut [f64], f: &mut impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Spearman ρ with average ranks. For n ≤ 8 the two-sided p-value is the
/// share of all n! rank permutations with |ρ| at least the observed one.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    check_pair(xs, ys, "spearman")?;
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let rho = pearson_r(&rx, &ry)?;
    let n = xs.len();
    if n > EXACT_PERMUTATION_MAX_N {
        return Ok(Correlation { r: rho, p: t_test_p(rho, n) });
    }
    let mut perm = ry.clone();
    let (mut hits, mut total) = (0u64, 0u64);
    let threshold = rho.abs() - 1e-12;
    for_each_permutation(&mut perm, &mut |p| {
        total += 1;
        if pearson_r(&rx, p).is_ok_and(|r| r.abs() >= threshold) {
            hits += 1;
        }
    });
    Ok(Correlation { r: rho, p: hits as f64 / total as f64 })
}

/// Mann-Whitney AUROC; a tied positive/negative pair counts one half.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::invalid("auroc: length mismatch"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("auroc needs both classes"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("auroc: non-finite score"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Average precision: Σ (R_i − R_{i−1}) · P_i over distinct score
/// thresholds, highest first, with no interpolation.
pub fn auprc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::invalid("auprc: length mismatch"));
    }
    let total_pos = labels.iter().filter(|l| **l).count();
    if total_pos == 0 {
        return Err(Error::degenerate("auprc needs at least one positive"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("auprc: non-finite score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut gained = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
                gained += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        if gained > 0 {
            ap += gained as f64 / total_pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
        i = j;
    }
    Ok(ap)
}

/// `100 · σ / |μ|` with the population standard deviation.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("coefficient of variation of no values"));
    }
    let mu = mean(values);
    if mu == 0.0 {
        return Err(Error::degenerate("coefficient of variation with zero mean"));
    }
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(100.0 * var.sqrt() / mu.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_linear() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_eq!(pearson(&xs, &ys).unwrap().r, 1.0);
        let s = spearman(&xs, &ys).unwrap();
        assert_eq!(s.r, 1.0);
        // only the identity and the reversal reach |ρ| = 1
        assert_abs_diff_eq!(s.p, 2.0 / 720.0, epsilon = 1e-15);
        let rev: Vec<f64> = ys.iter().rev().copied().collect();
        assert_eq!(spearman(&xs, &rev).unwrap().r, -1.0);
        assert!(pearson(&xs, &rev).unwrap().r < 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap_err().to_string().contains("degenerate correlation"));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn auroc_examples() {
        let labels = [true, false, true, false];
        assert_eq!(auroc(&labels, &[0.9, 0.8, 0.7, 0.6]).unwrap(), 0.75);
        assert_eq!(auroc(&[true, false], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(auroc(&[true, true], &[0.1, 0.2]).is_err());
        assert_eq!(auprc(&[true, true], &[0.1, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn auprc_step_wise() {
        // ranked: + (P=1), − , + (P=2/3)
        let ap = auprc(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert_abs_diff_eq!(ap, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), epsilon = 1e-15);
        // a tied group is one threshold
        let ap = auprc(&[true, false], &[0.5, 0.5]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn cv_examples() {
        assert_abs_diff_eq!(coefficient_of_variation(&[9.0, 10.0, 11.0]).unwrap(), 8.16496580927726, epsilon = 1e-9);
        assert_eq!(coefficient_of_variation(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!(coefficient_of_variation(&[0.0, 0.0]).is_err());
    }
}
