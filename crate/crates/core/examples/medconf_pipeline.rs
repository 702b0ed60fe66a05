//! Evidence-grounded confidence end to end: diagnosis, keyword, retrieval,
//! symptom profile, evidence ledger and score.
//!
//! cargo run --example medconf_pipeline

use std::path::Path;

use medconf::gateway::{Gateway, MockFixture};
use medconf::medconf::MedConf;
use medconf::medconf::ledger::{Importance, SupportLevel};
use medconf::prompts::Prompts;
use medconf::retrieval::{ingest, Bm25Index, DEFAULT_B, DEFAULT_K1, DEFAULT_MAX_CHARS};

fn main() -> medconf::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/case_study");
    let gateway = Gateway::mock(MockFixture::load(&dir.join("mock.json"))?);
    let prompts = Prompts::default();
    let corpus = ingest(&[dir.join("corpus.jsonl")], DEFAULT_MAX_CHARS)?;
    let index = Bm25Index::build(corpus.chunks, DEFAULT_K1, DEFAULT_B)?;

    let info = std::fs::read_to_string(dir.join("patient.txt"))?;
    let (diagnosis, audit) = MedConf::new(&gateway, &prompts, Some(&index)).run(info.trim())?;

    println!("diagnosis: {}", diagnosis.answer);
    println!("keyword:   {}", audit.keyword);
    for p in &audit.passages {
        println!("passage:   {} ({:.3})", p.title, p.score);
    }
    for c in &audit.profile {
        println!("criterion {} [{}]: {}", c.id, c.importance.as_str(), c.description);
    }
    for level in [SupportLevel::Supported, SupportLevel::Missing, SupportLevel::Contradicted] {
        for imp in Importance::ALL {
            let ids = audit.ledger.bucket(level, imp);
            if !ids.is_empty() {
                println!("{level} {}: {ids:?}", imp.as_str());
            }
        }
    }
    println!("confidence: {}", audit.ledger.score);
    Ok(())
}
