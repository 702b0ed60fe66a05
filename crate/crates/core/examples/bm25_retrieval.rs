//! Chunk a JSON-lines corpus, build a BM25 index, save it and query it.
//!
//! cargo run --example bm25_retrieval -- appendicitis

use std::path::Path;

use medconf::retrieval::{ingest, Bm25Index, DEFAULT_B, DEFAULT_K1};

fn main() -> medconf::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "appendicitis".into());
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench/corpus.jsonl");

    let ingested = ingest(&[corpus], 200)?;
    for w in &ingested.warnings {
        eprintln!("warning: {w}");
    }
    let index = Bm25Index::build(ingested.chunks, DEFAULT_K1, DEFAULT_B)?;
    println!("{} chunks indexed", index.len());

    let path = std::env::temp_dir().join("medconf-example.idx");
    index.save(&path)?;
    let index = Bm25Index::load(&path)?;

    for hit in index.query(&query, 5)? {
        println!("{:8.4}  {}  {}", hit.score, hit.chunk.id, hit.chunk.title);
    }
    Ok(())
}
