//! Text normalization shared by the estimators, the judge and the retriever.

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercased alphanumeric words; everything else separates.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical form of a free-text answer: lowercase, punctuation and
/// articles removed, single spaces.
pub fn normalize_answer(text: &str) -> String {
    words(text)
        .into_iter()
        .filter(|w| !ARTICLES.contains(&w.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Retrieval tokens: ASCII-folded, lowercased, split on non-alphanumerics.
/// No stemming.
pub fn index_tokens(text: &str) -> Vec<String> {
    let folded = deunicode::deunicode(text);
    folded
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect()
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whole-word containment on normalized answers.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let h = normalize_answer(haystack);
    let n = normalize_answer(needle);
    if n.is_empty() {
        return false;
    }
    format!(" {h} ").contains(&format!(" {n} "))
}
