//! Score dispersion when paraphrased turns are appended to the input.
//!
//! cargo run --release --example robustness

use std::path::Path;

use medconf::bench;
use medconf::config::Config;
use medconf::registry::Method;

fn main() -> medconf::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench/config.json");
    let cfg = Config::load(&path)?;
    let scorer = cfg.build_scorer()?;
    let mut h = cfg.harness(&scorer);
    h.methods = vec![Method::Medconf, Method::Ce];
    for d in cfg.load_datasets()? {
        let r = bench::run_robustness(&h, &d, 3)?;
        for m in r.methods {
            println!(
                "{:<8} cv_group {:?}  cv_sample {:?}  group means {:?}",
                m.method, m.cv_group, m.cv_sample, m.group_means
            );
        }
    }
    Ok(())
}
