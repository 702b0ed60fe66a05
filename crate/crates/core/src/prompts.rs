//! Prompt templates. Built-in copies are compiled in; a directory of
//! same-named `.txt` files can replace any of them.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub ce_vanilla: String,
    pub ce_cot: String,
    pub ce_topk: String,
    pub p_true: String,
    pub diagnosis: String,
    pub keyword: String,
    pub symptom_profile: String,
    pub confidence: String,
    pub paraphrase: String,
    /// Appended to a prompt when the first reply could not be parsed.
    pub format_reminder: String,
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/prompts/", $name, ".txt"))
    };
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            ce_vanilla: asset!("ce_vanilla").into(),
            ce_cot: asset!("ce_cot").into(),
            ce_topk: asset!("ce_topk").into(),
            p_true: asset!("p_true").into(),
            diagnosis: asset!("diagnosis").into(),
            keyword: asset!("keyword").into(),
            symptom_profile: asset!("symptom_profile").into(),
            confidence: asset!("confidence").into(),
            paraphrase: asset!("paraphrase").into(),
            format_reminder: asset!("format_reminder").into(),
        }
    }
}

impl Prompts {
    /// Built-ins, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut p = Self::default();
        for (name, slot) in p.slots_mut() {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(p)
    }

    fn slots_mut(&mut self) -> [(&'static str, &mut String); 10] {
        [
            ("ce_vanilla", &mut self.ce_vanilla),
            ("ce_cot", &mut self.ce_cot),
            ("ce_topk", &mut self.ce_topk),
            ("p_true", &mut self.p_true),
            ("diagnosis", &mut self.diagnosis),
            ("keyword", &mut self.keyword),
            ("symptom_profile", &mut self.symptom_profile),
            ("confidence", &mut self.confidence),
            ("paraphrase", &mut self.paraphrase),
            ("format_reminder", &mut self.format_reminder),
        ]
    }
}

/// Substitutes `{name}` slots in one left-to-right pass, so filled-in values
/// are never re-scanned. Braces that do not name a slot are kept verbatim.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut used = vec![false; slots.len()];
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            slots.iter().position(|(n, _)| *n == name).map(|i| (i, close))
        });
        match hit {
            Some((i, close)) => {
                out.push_str(slots[i].1);
                used[i] = true;
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::invalid(format!("template has no {{{}}} slot", slots[i].0)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn sha(s: &str) -> String {
        hex::encode(Sha256::digest(s.as_bytes()))
    }

    #[test]
    fn builtin_checksums() {
        let p = Prompts::default();
        let expected = [
            (&p.ce_vanilla, "432a3096af1b0b486c3270b1aedb06efc7eb912eb5d49490bb7dec0846a580c3"),
            (&p.ce_cot, "1e152ab853f105a59809ad3da354921b1ff3b647a720ac69260e1ff8188c237b"),
            (&p.ce_topk, "e2220483698b5383cc7435a413235a1310364fc7ebeefab6b107e8ae16068fd2"),
            (&p.diagnosis, "6f5685d362cc83de83cc964ed350727ae7002b1b779c62d46f3036a3533d500a"),
            (&p.symptom_profile, "9ca2dfb29853ea0102be7f19afd991109d15de082bdc73543fc6c58b0760ffa8"),
            (&p.confidence, "bb8460bed7b8750a3e701494ed2a6a06be40964440808a5558025de110d00cdf"),
        ];
        for (text, hash) in expected {
            assert_eq!(sha(text), hash, "prompt drifted:\n{text}");
        }
        assert!(p.diagnosis.contains("Provide a  specific diagnosis"));
    }

    #[test]
    fn fill_is_single_pass() {
        let out = fill("A {x} B {y} {z}", &[("x", "{y}"), ("y", "2")]).unwrap();
        assert_eq!(out, "A {y} B 2 {z}");
        assert!(fill("no slots", &[("x", "1")]).is_err());
    }

    #[test]
    fn json_braces_survive() {
        let p = Prompts::default();
        let out = fill(&p.confidence, &[("criteria", "[]"), ("inform", "I feel sick")]).unwrap();
        assert!(out.contains("\"criteria evaluation\": ["));
        assert!(out.contains("Patient Information: I feel sick"));
    }

    #[test]
    fn overrides_replace_named_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("keyword.txt"), "K: {diagnosis}").unwrap();
        let p = Prompts::with_overrides(dir.path()).unwrap();
        assert_eq!(p.keyword, "K: {diagnosis}");
        assert_eq!(p.diagnosis, Prompts::default().diagnosis);
    }
}
