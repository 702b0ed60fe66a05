//! Confidence stated by the model itself: bracketed 0–100 scores and P(True).

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenParams};
use crate::prompts::{fill, Prompts};
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElicitStyle {
    Vanilla,
    Cot,
    Topk,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Elicitation {
    pub score: f64,
    pub reply: String,
    pub reprompted: bool,
}

const NUMBER: &str = r"\[\s*(\d+(?:\.\d+)?)\s*\]";

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(NUMBER).unwrap())
}

fn g1_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"(?i)\bG1\b[^\[\n]*{NUMBER}")).unwrap())
}

fn in_range(caps: regex::Captures<'_>) -> Option<f64> {
    let v: f64 = caps[1].parse().ok()?;
    (0.0..=100.0).contains(&v).then_some(v)
}

/// The first `[n]` marker. An out-of-range first marker is a failed parse.
pub fn parse_bracket_score(text: &str) -> Option<f64> {
    bracket_re().captures(text).and_then(in_range)
}

/// The `[n]` following the `G1` label.
pub fn parse_topk_score(text: &str) -> Option<f64> {
    g1_re().captures(text).and_then(in_range)
}

pub fn parse_elicitation(style: ElicitStyle, text: &str) -> Option<f64> {
    match style {
        ElicitStyle::Topk => parse_topk_score(text),
        _ => parse_bracket_score(text),
    }
}

pub fn elicit_prompt(prompts: &Prompts, style: ElicitStyle, input: &str, answer: &str) -> Result<String> {
    let template = match style {
        ElicitStyle::Vanilla => &prompts.ce_vanilla,
        ElicitStyle::Cot => &prompts.ce_cot,
        ElicitStyle::Topk => &prompts.ce_topk,
    };
    fill(template, &[("dialogue", input), ("answer", answer)])
}

/// Asks for a 0–100 score; one reprompt with a format reminder on a bad reply.
pub fn elicit(
    gateway: &Gateway,
    prompts: &Prompts,
    style: ElicitStyle,
    input: &str,
    answer: &str,
    params: &GenParams,
) -> Result<Elicitation> {
    let prompt = elicit_prompt(prompts, style, input, answer)?;
    let reply = gateway.complete(&prompt, params)?.text;
    if let Some(score) = parse_elicitation(style, &reply) {
        return Ok(Elicitation { score, reply, reprompted: false });
    }
    let retry = format!("{prompt}{}", prompts.format_reminder);
    let reply = gateway.complete(&retry, params)?.text;
    match parse_elicitation(style, &reply) {
        Some(score) => Ok(Elicitation { score, reply, reprompted: true }),
        None => Err(Error::parse(format!("unparseable elicitation: {reply:?}"))),
    }
}

/// The first "true"/"false" word of a reply.
pub fn parse_true_false(text: &str) -> Option<bool> {
    words(text).into_iter().find_map(|w| match w.as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PTrue {
    pub score: f64,
    pub n_true: usize,
    pub n_labelled: usize,
    pub n_excluded: usize,
}

/// Share of K sampled judgments that call the answer true. Replies with
/// neither label are left out of both counts.
pub fn p_true(
    gateway: &Gateway,
    prompts: &Prompts,
    input: &str,
    answer: &str,
    k: usize,
    params: &GenParams,
) -> Result<PTrue> {
    let prompt = fill(&prompts.p_true, &[("dialogue", input), ("answer", answer)])?;
    let set = gateway.sample(&prompt, params, k)?;
    p_true_from_replies(&set.texts())
}

pub fn p_true_from_replies<S: AsRef<str>>(replies: &[S]) -> Result<PTrue> {
    let labels: Vec<bool> = replies.iter().filter_map(|r| parse_true_false(r.as_ref())).collect();
    if labels.is_empty() {
        return Err(Error::parse("no sample gave a True/False label"));
    }
    let n_true = labels.iter().filter(|l| **l).count();
    Ok(PTrue {
        score: n_true as f64 / labels.len() as f64,
        n_true,
        n_labelled: labels.len(),
        n_excluded: replies.len() - labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockEntry, MockFixture};
    use proptest::prelude::*;

    #[test]
    fn bracket_examples() {
        assert_eq!(parse_bracket_score("I think [50]"), Some(50.0));
        assert_eq!(parse_bracket_score("Explanation: ... as 60.\nConfidence: [60]"), Some(60.0));
        assert_eq!(parse_bracket_score("[ 72.5 ] and [10]"), Some(72.5));
        assert_eq!(parse_bracket_score("[150]"), None);
        assert_eq!(parse_bracket_score("no marker, 60"), None);
        assert_eq!(parse_bracket_score("[0-100] scale ... [40]"), Some(40.0));
    }

    #[test]
    fn topk_takes_first_guess() {
        let reply = "G1: [70]\nG2: [65]\nG3: [60]\nG4: [50]\nG5: [40]";
        assert_eq!(parse_topk_score(reply), Some(70.0));
        assert_eq!(parse_topk_score("G2: [30]\nG1: [80]"), Some(80.0));
        assert_eq!(parse_topk_score("[70]"), None);
    }

    #[test]
    fn true_false_labels() {
        assert_eq!(parse_true_false("True."), Some(true));
        assert_eq!(parse_true_false("(B) False"), Some(false));
        assert_eq!(parse_true_false("Not sure"), None);
        let r = p_true_from_replies(&["True", "True", "False", "True", "maybe"]).unwrap();
        assert_eq!((r.score, r.n_excluded), (0.75, 1));
        assert_eq!(p_true_from_replies(&["False"; 3]).unwrap().score, 0.0);
        assert!(p_true_from_replies(&["?"]).is_err());
    }

    #[test]
    fn reprompts_once() {
        let prompts = Prompts::default();
        let prompt = elicit_prompt(&prompts, ElicitStyle::Vanilla, "info", "flu").unwrap();
        let mut fixture = MockFixture::default();
        fixture.entries.push(MockEntry::exact(format!("{prompt}{}", prompts.format_reminder), &["[35]"]));
        fixture.entries.push(MockEntry::contains(["Answer: flu"], &["fairly sure"]));
        let gw = Gateway::mock(fixture);
        let e = elicit(&gw, &prompts, ElicitStyle::Vanilla, "info", "flu", &GenParams::greedy()).unwrap();
        assert_eq!((e.score, e.reprompted), (35.0, true));

        let mut fixture = MockFixture::default();
        fixture.entries.push(MockEntry::contains(["Answer: flu"], &["fairly sure"]));
        let gw = Gateway::mock(fixture);
        let err = elicit(&gw, &prompts, ElicitStyle::Cot, "info", "flu", &GenParams::greedy()).unwrap_err();
        assert!(err.to_string().contains("unparseable elicitation"));
    }

    proptest! {
        #[test]
        fn parse_is_idempotent(text in "[ -~\\n]{0,60}", v in 0u32..=100) {
            let text = format!("{text} [{v}] tail");
            if let Some(x) = parse_bracket_score(&text) {
                prop_assert_eq!(parse_bracket_score(&format!("[{x}]")), Some(x));
            }
            if let Some(x) = parse_topk_score(&format!("G1: {text}")) {
                prop_assert_eq!(parse_topk_score(&format!("G1: [{x}]")), Some(x));
            }
        }
    }
}
