//! Corpus chunking and Okapi BM25 search.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::index_tokens;

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_MAX_CHARS: usize = 1000;
pub const DEFAULT_TOP_K: usize = 15;

const HEADER: &str = "MEDCONF-BM25 v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pubmed,
    Statpearls,
    Textbook,
    Wikipedia,
    #[default]
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub source: Source,
}

pub fn chunk_id(doc_id: &str, offset: usize) -> String {
    let mut h = Sha256::new();
    h.update(doc_id.as_bytes());
    h.update([0u8]);
    h.update(offset.to_string().as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Debug, Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    source: Source,
}

/// Paragraph pieces of at most `max_chars` characters, as (byte offset, text).
/// Paragraphs are separated by blank lines; long ones are cut at whitespace.
pub fn split_paragraphs(text: &str, max_chars: usize) -> Vec<(usize, String)> {
    let max_chars = max_chars.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    let mut push_para = |offset: usize, para: &str| {
        let lead = para.len() - para.trim_start().len();
        let para = para.trim();
        if para.is_empty() {
            return;
        }
        let mut base = offset + lead;
        let mut rest = para;
        while rest.chars().count() > max_chars {
            let limit = rest.char_indices().nth(max_chars).map_or(rest.len(), |(i, _)| i);
            let window = rest.char_indices().nth(max_chars + 1).map_or(rest.len(), |(i, _)| i);
            let cut = rest[..window]
                .rfind(char::is_whitespace)
                .filter(|&c| c > 0)
                .unwrap_or(limit);
            out.push((base, rest[..cut].trim_end().to_string()));
            let next = &rest[cut..];
            let skipped = next.len() - next.trim_start().len();
            base += cut + skipped;
            rest = next.trim_start();
        }
        if !rest.is_empty() {
            out.push((base, rest.to_string()));
        }
    };
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            // a blank line: "\n" followed by optional spaces and another "\n"
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t' || bytes[j] == b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                push_para(start, &text[start..i]);
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_para(start, &text[start..]);
    out
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub chunks: Vec<Chunk>,
    pub warnings: Vec<String>,
}

/// Reads JSONL corpus files (`{"id", "title", "text", "source"?}` per line).
/// Bad lines are reported and skipped.
pub fn ingest<P: AsRef<Path>>(files: &[P], max_chars: usize) -> Result<Ingested> {
    let mut out = Ingested::default();
    for file in files {
        let path = file.as_ref();
        let reader = BufReader::new(std::fs::File::open(path)?);
        let before = out.chunks.len();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusLine = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => {
                    out.warnings.push(format!("{}:{}: {e}", path.display(), n + 1));
                    continue;
                }
            };
            for (offset, text) in split_paragraphs(&doc.text, max_chars) {
                out.chunks.push(Chunk {
                    id: chunk_id(&doc.id, offset),
                    doc_id: doc.id.clone(),
                    title: doc.title.clone(),
                    text,
                    source: doc.source,
                });
            }
        }
        if out.chunks.len() == before {
            out.warnings.push(format!("{}: no chunks", path.display()));
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub k1: f64,
    pub b: f64,
    avgdl: f64,
    /// Sorted by chunk id.
    chunks: Vec<Chunk>,
    lengths: Vec<u32>,
    /// term → (chunk index, term frequency), ascending chunk index.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub chunk: &'a Chunk,
    pub score: f64,
}

impl Bm25Index {
    pub fn build(chunks: Vec<Chunk>, k1: f64, b: f64) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::invalid("cannot index zero chunks"));
        }
        if !(k1 >= 0.0) || !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid(format!("bad BM25 parameters k1={k1}, b={b}")));
        }
        let mut by_id: BTreeMap<String, Chunk> = BTreeMap::new();
        for c in chunks {
            by_id.entry(c.id.clone()).or_insert(c);
        }
        let chunks: Vec<Chunk> = by_id.into_values().collect();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            let toks = index_tokens(&format!("{} {}", c.title, c.text));
            lengths.push(toks.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let avgdl = lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64;
        Ok(Self { k1, b, avgdl, chunks, lengths, postings })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, |p| p.len()) as f64;
        let total = self.chunks.len() as f64;
        ((total - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Top `k` chunks by descending score, ties by chunk id. Chunks sharing
    /// no term with the query score 0 and rank last.
    pub fn query(&self, text: &str, k: usize) -> Result<Vec<Hit<'_>>> {
        if k == 0 {
            return Err(Error::invalid("query needs k >= 1"));
        }
        let terms: BTreeSet<String> = index_tokens(text).into_iter().collect();
        if terms.is_empty() {
            return Err(Error::invalid("query is empty after tokenization"));
        }
        let mut scores = vec![0.0; self.chunks.len()];
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(i, tf) in list {
                let tf = tf as f64;
                let dl = self.lengths[i as usize] as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl);
                scores[i as usize] += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        let mut order: Vec<usize> = (0..self.chunks.len()).collect();
        // chunks are id-sorted, so index order is the tie-break
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| Hit { chunk: &self.chunks[i], score: scores[i] })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{HEADER}")?;
        serde_json::to_writer(&mut f, self)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let (header, body) = raw.split_once('\n').unwrap_or((raw.as_str(), ""));
        if header.trim_end() != HEADER {
            return Err(Error::parse(format!("{}: not a BM25 index ({header:?})", path.display())));
        }
        let index: Self = serde_json::from_str(body)?;
        if index.lengths.len() != index.chunks.len() {
            return Err(Error::parse(format!("{}: corrupt index", path.display())));
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, text: &str) -> String {
        serde_json::json!({ "id": id, "title": title, "text": text }).to_string()
    }

    fn write(dir: &Path, name: &str, lines: &[String]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn paragraphs_become_chunks() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "c.jsonl", &[doc("d1", "T", "First para.\n\nSecond para.")]);
        let a = ingest(&[&f], DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(a.chunks.len(), 2);
        assert_eq!(a.chunks[1].text, "Second para.");
        let b = ingest(&[&f], DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(a.chunks, b.chunks);
    }

    #[test]
    fn bad_lines_and_empty_files_warn() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "c.jsonl", &[doc("d1", "T", "ok"), "{oops".into()]);
        let e = write(dir.path(), "e.jsonl", &[]);
        let out = ingest(&[&f, &e], DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(out.chunks.len(), 1);
        assert!(out.warnings[0].contains("c.jsonl:2"));
        assert!(out.warnings[1].contains("e.jsonl: no chunks"));
    }

    #[test]
    fn long_paragraphs_split_at_whitespace() {
        let text = "alpha beta gamma delta epsilon";
        let parts = split_paragraphs(text, 12);
        for (off, p) in &parts {
            assert!(p.chars().count() <= 12, "{p:?}");
            assert!(text[*off..].starts_with(p.as_str()));
        }
        let joined: Vec<&str> = parts.iter().map(|(_, p)| p.as_str()).collect();
        assert_eq!(joined.join(" "), text);
        assert_eq!(split_paragraphs("abcdefghij", 4).len(), 3);
        let greek = split_paragraphs("αβγ δεζ ηθι", 5);
        assert_eq!(greek.iter().map(|(_, p)| p.as_str()).collect::<Vec<_>>(), ["αβγ", "δεζ", "ηθι"]);
    }

    fn toy() -> Bm25Index {
        let chunks = [
            ("a", "Appendicitis", "Appendicitis presents with right lower quadrant pain and fever."),
            ("b", "Gastroenteritis", "Gastroenteritis causes diarrhea, vomiting and sometimes fever."),
            ("c", "Migraine", "Migraine is a recurrent headache disorder."),
        ]
        .iter()
        .map(|(d, t, x)| Chunk {
            id: chunk_id(d, 0),
            doc_id: d.to_string(),
            title: t.to_string(),
            text: x.to_string(),
            source: Source::Fixture,
        })
        .collect();
        Bm25Index::build(chunks, DEFAULT_K1, DEFAULT_B).unwrap()
    }

    #[test]
    fn query_ranks_and_pads() {
        let idx = toy();
        let hits = idx.query("appendicitis fever", 3).unwrap();
        assert_eq!(hits[0].chunk.doc_id, "a");
        assert_eq!(hits[1].chunk.doc_id, "b");
        assert_eq!(hits[2].score, 0.0);
        assert_eq!(idx.query("migraine", 10).unwrap().len(), 3);
        assert!(idx.query("!!", 3).is_err());
        let short = idx.query("fever", 1).unwrap();
        assert_eq!(short[0], idx.query("fever", 2).unwrap()[0]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = toy();
        let p = dir.path().join("idx.bm25");
        idx.save(&p).unwrap();
        let back = Bm25Index::load(&p).unwrap();
        assert_eq!(back, idx);
        let q = |i: &Bm25Index| {
            i.query("fever pain", 3).unwrap().iter().map(|h| (h.chunk.id.clone(), h.score.to_bits())).collect::<Vec<_>>()
        };
        assert_eq!(q(&back), q(&idx));
        std::fs::write(&p, "nope\n{}").unwrap();
        assert!(Bm25Index::load(&p).is_err());
    }
}
