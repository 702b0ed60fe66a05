//! OpenAI-compatible chat-completions client.
//!
//! Generated-token probabilities come from `logprobs.content`. Teacher-forced
//! scoring uses the legacy `/completions` endpoint with `echo`, which vLLM and
//! similar servers still expose; it is off unless the capability is enabled
//! in config.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Capabilities, GenParams, Provider};
use crate::error::{Error, Result};
use crate::model::{Alternative, TokenTrace};

pub struct OpenAiProvider {
    base_url: String,
    model: String,
    api_key: Option<String>,
    capabilities: Capabilities,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    logprobs: Option<CompletionLogprobs>,
}

#[derive(Deserialize)]
struct CompletionLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
}

/// exp of a logprob, nudged into (0, 1] so rounding noise and -inf never
/// violate the trace invariants.
fn to_prob(logprob: f64) -> f64 {
    logprob.exp().clamp(f64::MIN_POSITIVE, 1.0)
}

impl OpenAiProvider {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            capabilities: Capabilities {
                returns_generated_logprobs: true,
                returns_topk_alternatives: true,
                supports_teacher_forced_scoring: false,
                max_top_logprobs: 20,
            },
            client,
        })
    }

    /// Key from `MEDCONF_API_KEY`, falling back to `OPENAI_API_KEY`.
    pub fn api_key_from_env() -> Option<String> {
        std::env::var("MEDCONF_API_KEY")
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.is_empty())
    }

    pub fn with_capabilities(mut self, caps: Capabilities) -> Self {
        self.capabilities = caps;
        self
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut req = self.client.post(format!("{}{path}", self.base_url)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Error::Provider(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| Error::Provider(format!("bad response body: {e}")))
    }

    fn chat_body(&self, prompt: &str, params: &GenParams) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        if params.logprobs && self.capabilities.returns_generated_logprobs {
            body["logprobs"] = json!(true);
            if params.top_logprobs > 0 && self.capabilities.returns_topk_alternatives {
                body["top_logprobs"] = json!(params.top_logprobs);
            }
        }
        body
    }
}

pub(crate) fn parse_chat_response(value: serde_json::Value) -> Result<TokenTrace> {
    let resp: ChatResponse =
        serde_json::from_value(value).map_err(|e| Error::Provider(format!("bad chat response: {e}")))?;
    let choice = resp.choices.into_iter().next().ok_or(Error::EmptyGeneration)?;
    let text = choice.message.content.unwrap_or_default();
    let Some(content) = choice.logprobs.and_then(|l| l.content) else {
        return Ok(TokenTrace::text_only(text));
    };
    let tokens = content.iter().map(|t| t.token.clone()).collect();
    let probs = content.iter().map(|t| to_prob(t.logprob)).collect();
    let mut trace = TokenTrace::new(text, tokens, probs)?;
    if content.iter().any(|t| !t.top_logprobs.is_empty()) {
        let alts = content
            .iter()
            .map(|t| {
                let mut list: Vec<Alternative> = t
                    .top_logprobs
                    .iter()
                    .map(|a| Alternative::new(a.token.clone(), to_prob(a.logprob)))
                    .collect();
                list.sort_by(|a, b| b.prob.total_cmp(&a.prob));
                list
            })
            .collect();
        trace = trace.with_alternatives(alts)?;
    }
    Ok(trace)
}

impl Provider for OpenAiProvider {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<TokenTrace> {
        let value = self.post("/chat/completions", &self.chat_body(prompt, params))?;
        parse_chat_response(value)
    }

    fn score_sequence(&self, prompt: &str, target: &[String]) -> Result<Vec<f64>> {
        if !self.capabilities.supports_teacher_forced_scoring {
            return Err(Error::unsupported("teacher-forced scoring"));
        }
        let body = json!({
            "model": self.model,
            "prompt": format!("{prompt}{}", target.concat()),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let resp: CompletionResponse = serde_json::from_value(self.post("/completions", &body)?)
            .map_err(|e| Error::Provider(format!("bad completion response: {e}")))?;
        let lp = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| Error::Provider("completion response has no logprobs".into()))?;
        if lp.tokens.len() < target.len() {
            return Err(Error::Provider("echoed sequence shorter than target".into()));
        }
        let start = lp.tokens.len() - target.len();
        if lp.tokens[start..] != *target {
            return Err(Error::Provider(
                "provider tokenization of the target differs from the generated tokens".into(),
            ));
        }
        lp.token_logprobs[start..]
            .iter()
            .map(|l| l.map(to_prob).ok_or_else(|| Error::Provider("missing echoed logprob".into())))
            .collect()
    }
}
