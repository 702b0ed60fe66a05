use crate::text::words;

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure over lowercased words. Recall is taken against `a`,
/// precision against `b`; the F-measure is symmetric.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (words(a), words(b));
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_len(&ta, &tb) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let recall = lcs / ta.len() as f64;
    let precision = lcs / tb.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(lexical_similarity("flu", "flu"), 1.0);
        assert!((lexical_similarity("a b c", "a c") - 0.8).abs() < 1e-12);
        assert_eq!(lexical_similarity("x", "y"), 0.0);
        assert_eq!(lexical_similarity("", ""), 1.0);
        assert_eq!(lexical_similarity("", "flu"), 0.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
            let ab = lexical_similarity(&a, &b);
            prop_assert_eq!(ab, lexical_similarity(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, words(&a) == words(&b));
        }
    }
}
