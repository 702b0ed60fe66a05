//! Scoring against a live OpenAI-compatible endpoint.
//!
//! MEDCONF_API_KEY=... cargo run --example openai_provider -- https://api.openai.com/v1 gpt-4.1-mini

use std::sync::Arc;

use medconf::gateway::{Gateway, GenParams, OpenAiProvider};

fn main() -> medconf::Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(base_url), Some(model)) = (args.next(), args.next()) else {
        eprintln!("usage: openai_provider <base_url> <model>");
        std::process::exit(2);
    };
    let provider = OpenAiProvider::new(base_url, model, OpenAiProvider::api_key_from_env())?;
    let gateway = Gateway::new(Arc::new(provider));
    let prompt = "Name the most likely diagnosis in square brackets: stomach pain, nausea, slight fever.";
    let trace = gateway.complete(prompt, &GenParams::greedy().with_logprobs(5))?;
    println!("{}", trace.text);
    let answer = trace.answer_span();
    if answer.has_token_data() {
        println!("asp {:.4}", medconf::token::asp(&answer)?);
    }
    Ok(())
}
