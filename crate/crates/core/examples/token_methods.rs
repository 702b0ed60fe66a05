//! Token-level confidence on the appendicitis trace.
//!
//! cargo run --example token_methods

use std::path::Path;

use medconf::gateway::{Gateway, MockFixture};
use medconf::model::TokenTrace;
use medconf::oracles::{EmbeddingSimilarity, HashingEmbedder, ReferenceNli};
use medconf::token;

fn main() -> medconf::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/case_study");
    let raw = std::fs::read_to_string(dir.join("trace.json"))?;
    let full: TokenTrace = serde_json::from_str(&raw)?;
    // only the tokens inside the brackets count
    let trace = full.answer_span();
    println!("answer {:?} over tokens {:?}", trace.text, trace.tokens);

    println!("asp         {:.4}", token::asp(&trace)?);
    println!("msp         {:.4}", token::msp(&trace)?);
    println!("perplexity  {:.4}", token::perplexity(&trace)?);
    println!("entropy     {:.4}", token::mean_entropy(&trace)?);
    println!("renyi       {:.4}", token::renyi_uniform(&trace, 0.5)?);
    println!("fisher_rao  {:.4}", token::fisher_rao_uniform(&trace)?);

    let input = std::fs::read_to_string(dir.join("patient.txt"))?;
    let sim = EmbeddingSimilarity::new(HashingEmbedder::new(256, "general"));
    println!("token_sar   {:.4}", token::token_sar(&trace, input.trim(), &sim)?);
    println!("ccp         {:.4}", token::ccp(&trace, &ReferenceNli::new(), 10)?);

    // PMI needs the answer scored without the input
    let gateway = Gateway::mock(MockFixture::load(&dir.join("mock.json"))?);
    let scored = gateway.attach_uncond_probs(trace)?;
    println!("pmi         {:.4}", token::pmi(&scored)?);
    println!("cpmi        {:.4}", token::cpmi(&scored, 1.0, 2.0)?);
    Ok(())
}
