//! Correlation and discrimination statistics used by the benchmark.
//!
//! cargo run --example rank_metrics

use medconf::bench::{auprc, auroc, coefficient_of_variation, pearson, spearman};

fn main() -> medconf::Result<()> {
    // mean accuracy and mean confidence at six information levels
    let accuracy = [0.08, 0.25, 0.42, 0.58, 0.75, 0.92];
    let confidence = [21.0, 30.0, 41.0, 47.0, 60.0, 66.0];
    let p = pearson(&accuracy, &confidence)?;
    let s = spearman(&accuracy, &confidence)?;
    println!("pearson  r={:.4} p={:.4}", p.r, p.p);
    println!("spearman r={:.4} p={:.4}", s.r, s.p);

    let correct = [true, false, true, false];
    let scores = [0.9, 0.8, 0.7, 0.6];
    println!("auroc {:.4}", auroc(&correct, &scores)?);
    println!("auprc {:.4}", auprc(&correct, &scores)?);

    println!("cv of [9, 10, 11]: {:.3}%", coefficient_of_variation(&[9.0, 10.0, 11.0])?);
    Ok(())
}
