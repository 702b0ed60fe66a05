//! Sample-consistency confidence on fifteen sampled answers (10/3/2 split).
//!
//! cargo run --example consistency_methods

use medconf::consistency::{self, SemanticClustering, SimilarityMatrix};
use medconf::model::{ResponseSet, Sampling, TokenTrace};
use medconf::oracles::{EmbeddingSimilarity, HashingEmbedder, NliLabel, ReferenceNli};

fn main() -> medconf::Result<()> {
    let mut texts = vec!["appendicitis"; 10];
    texts.extend(["acute gastroenteritis"; 3]);
    texts.extend(["viral gastroenteritis"; 2]);
    // one token per answer, carrying the answer's sequence probability
    let traces = texts
        .iter()
        .map(|t| {
            let p = if *t == "appendicitis" { 0.31 } else { 0.12 };
            TokenTrace::new(*t, vec![t.to_string()], vec![p])
        })
        .collect::<medconf::Result<Vec<_>>>()?;
    let sampling = Sampling { temperature: 0.5, k: traces.len(), seed: 0 };
    let set = ResponseSet::new("stomach pain, nausea, slight fever", traces, sampling)?;

    // the two gastroenteritis answers mean the same thing
    let nli = ReferenceNli::new()
        .with("acute gastroenteritis", "viral gastroenteritis", NliLabel::Entail)
        .with("viral gastroenteritis", "acute gastroenteritis", NliLabel::Entail);

    println!("poc      {:.4}  mode {:?}", consistency::poc(&set)?, consistency::mode_response(&set));
    println!("lexsim   {:.4}", consistency::lexical_sim(&set)?);
    let embedder = HashingEmbedder::new(256, "general");
    println!("semsim   {:.4}", consistency::semantic_sim(&set, &embedder)?);

    let clusters = SemanticClustering::from_nli(&set.texts(), &nli)?;
    println!("clusters {}  numset {:.4}", clusters.len(), consistency::num_sets_from(&clusters));

    let s = SimilarityMatrix::from_nli(&set.texts(), &nli)?;
    println!("eigv     {:.4}", consistency::eigv(&s)?);
    println!("deg      {:.4}", consistency::deg(&s)?);
    println!("ecc      {:.4}", consistency::ecc(&s, clusters.len())?);

    println!("mc_se    {:.4}", consistency::mc_se(&set)?);
    println!("mc_nse   {:.4}", consistency::mc_nse(&set)?);
    let sim = EmbeddingSimilarity::new(embedder);
    println!("semantic_entropy {:.4}", consistency::semantic_entropy(&set, &nli)?);
    println!("sentence_sar {:.4}", consistency::sentence_sar(&set, &sim, consistency::DEFAULT_SAR_T)?);
    println!("sar      {:.4}", consistency::sar(&set, &sim, consistency::DEFAULT_SAR_T)?);
    Ok(())
}
