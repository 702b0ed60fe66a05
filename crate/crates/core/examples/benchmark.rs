//! The graded-information benchmark on the bundled 12-case mock dataset.
//!
//! cargo run --release --example benchmark

use std::path::Path;

use medconf::bench::{self, InfoLevel};
use medconf::config::Config;
use medconf::registry::Method;

fn main() -> medconf::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench/config.json");
    let mut cfg = Config::load(&path)?;
    cfg.methods = vec![Method::Asp, Method::Poc, Method::Ce, Method::Medconf];
    let scorer = cfg.build_scorer()?;
    let out = bench::run_benchmark(&cfg.harness(&scorer), &cfg.load_datasets()?)?;

    for d in &out.report.datasets {
        println!("{}: {} cases, {} excluded", d.dataset, d.cases, d.excluded.len());
        for (level, acc) in InfoLevel::ALL.iter().zip(&d.level_accuracy) {
            println!("  {:>3}%  accuracy {acc:.3}", level.percent());
        }
        for m in &d.methods {
            let rho = m.spearman.map_or(f64::NAN, |c| c.r);
            let auroc = m.auroc.unwrap_or(f64::NAN);
            println!("  {:<8} spearman {rho:+.3}  auroc {auroc:.3}", m.method);
        }
    }
    let dir = std::env::temp_dir().join("medconf-bench");
    bench::write_outputs(&out, &dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
