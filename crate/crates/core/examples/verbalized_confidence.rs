//! Asking the model for its confidence: vanilla, chain-of-thought, top-k
//! and P(True), against the scripted case-study replies.
//!
//! cargo run --example verbalized_confidence

use std::path::Path;

use medconf::gateway::{Gateway, GenParams, MockFixture};
use medconf::prompts::Prompts;
use medconf::verbalized::{self, ElicitStyle};

fn main() -> medconf::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/case_study");
    let gateway = Gateway::mock(MockFixture::load(&dir.join("mock.json"))?);
    let prompts = Prompts::default();
    let info = std::fs::read_to_string(dir.join("patient.txt"))?;
    let info = info.trim();

    for style in [ElicitStyle::Vanilla, ElicitStyle::Cot, ElicitStyle::Topk] {
        let e = verbalized::elicit(&gateway, &prompts, style, info, "appendicitis", &GenParams::greedy())?;
        println!("{style:?}: {} (reprompted: {})", e.score, e.reprompted);
    }

    let r = verbalized::p_true(&gateway, &prompts, info, "appendicitis", 15, &GenParams::sampling(0.5))?;
    println!("p_true: {} ({} of {} labelled true)", r.score, r.n_true, r.n_labelled);
    Ok(())
}
