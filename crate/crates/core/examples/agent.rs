//! Confidence-gated inquiry: keep asking until MedConf reaches the threshold.
//!
//! cargo run --release --example agent -- 50

use std::path::Path;

use medconf::bench;
use medconf::config::Config;
use medconf::registry::Method;

fn main() -> medconf::Result<()> {
    let threshold: f64 = std::env::args().nth(1).and_then(|t| t.parse().ok()).unwrap_or(50.0);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench/config.json");
    let cfg = Config::load(&path)?;
    let scorer = cfg.build_scorer()?;
    let h = cfg.harness(&scorer);
    for d in cfg.load_datasets()? {
        let r = bench::run_agent(&h, &d, Method::Medconf, threshold)?;
        for c in &r.cases {
            println!("{}  asked {}/{}  {:?}  correct={}", c.case_id, c.utterances, c.available, c.scores, c.correct);
        }
        println!("mean utterances {:?}, accuracy {:?}", r.mean_utterances, r.accuracy);
    }
    Ok(())
}
