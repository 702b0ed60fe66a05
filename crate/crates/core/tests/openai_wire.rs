//! The OpenAI-compatible client against a one-shot local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use serde_json::{json, Value};

use medconf::error::Error;
use medconf::gateway::{Capabilities, GenParams, OpenAiProvider, Provider};

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: Value,
}

/// Serves `replies` in order, one connection each, and hands back what it received.
fn serve(replies: Vec<(u16, Value)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let text = reply.to_string();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
            tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&body).unwrap(),
            })
            .unwrap();
        }
    });
    (url, rx)
}

fn chat_reply() -> Value {
    json!({
        "choices": [{
            "message": { "role": "assistant", "content": "[flu]" },
            "logprobs": { "content": [
                { "token": "[", "logprob": 0.0, "top_logprobs": [{ "token": "[", "logprob": 0.0 }] },
                { "token": "flu", "logprob": -0.5, "top_logprobs": [
                    { "token": "cold", "logprob": -1.5 },
                    { "token": "flu", "logprob": -0.5 }
                ] },
                { "token": "]", "logprob": -0.01, "top_logprobs": [{ "token": "]", "logprob": -0.01 }] }
            ] }
        }]
    })
}

#[test]
fn chat_request_and_logprobs() {
    let (url, rx) = serve(vec![(200, chat_reply())]);
    let provider = OpenAiProvider::new(url, "test-model", Some("sk-test".into())).unwrap();
    let params = GenParams { seed: Some(9), ..GenParams::greedy().with_logprobs(5) };
    let trace = provider.complete("what is it?", &params).unwrap();

    let got = rx.recv().unwrap();
    assert_eq!(got.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert!(got.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
    assert_eq!(got.body["model"], "test-model");
    assert_eq!(got.body["messages"][0]["content"], "what is it?");
    assert_eq!(got.body["logprobs"], true);
    assert_eq!(got.body["top_logprobs"], 5);
    assert_eq!(got.body["seed"], 9);
    assert_eq!(got.body["temperature"], 0.0);

    assert_eq!(trace.text, "[flu]");
    assert_eq!(trace.tokens, ["[", "flu", "]"]);
    assert!((trace.token_probs[1] - (-0.5f64).exp()).abs() < 1e-12);
    let alts = trace.topk_alternatives.as_ref().unwrap();
    assert_eq!(alts[1][0].token, "flu");
    assert_eq!(alts[1][1].token, "cold");
}

#[test]
fn no_logprobs_requested_without_capability() {
    let (url, rx) = serve(vec![(200, json!({ "choices": [{ "message": { "content": "[flu]" } }] }))]);
    let caps = Capabilities {
        returns_generated_logprobs: false,
        returns_topk_alternatives: false,
        supports_teacher_forced_scoring: false,
        max_top_logprobs: 0,
    };
    let provider = OpenAiProvider::new(url, "m", None).unwrap().with_capabilities(caps);
    let trace = provider.complete("q", &GenParams::greedy().with_logprobs(5)).unwrap();
    let got = rx.recv().unwrap();
    assert!(got.body.get("logprobs").is_none());
    assert!(!got.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization")));
    assert_eq!(trace.text, "[flu]");
    assert!(trace.token_probs.is_empty());
}

#[test]
fn client_errors_are_provider_errors() {
    let (url, _rx) = serve(vec![(400, json!({ "error": { "message": "bad model" } }))]);
    let provider = OpenAiProvider::new(url, "m", None).unwrap();
    match provider.complete("q", &GenParams::greedy()) {
        Err(Error::Provider(msg)) => assert!(msg.contains("bad model")),
        other => panic!("expected provider error, got {other:?}"),
    }
}

#[test]
fn server_errors_are_transport_errors() {
    let (url, _rx) = serve(vec![(503, json!({ "error": "busy" }))]);
    let provider = OpenAiProvider::new(url, "m", None).unwrap();
    assert!(matches!(provider.complete("q", &GenParams::greedy()), Err(Error::Transport(_))));
}

#[test]
fn teacher_forced_scoring_echoes_the_target() {
    let reply = json!({
        "choices": [{ "logprobs": {
            "tokens": ["Q", ":", "[", "flu", "]"],
            "token_logprobs": [null, -2.0, -0.1, -0.7, -0.05]
        } }]
    });
    let (url, rx) = serve(vec![(200, reply)]);
    let caps = Capabilities {
        returns_generated_logprobs: true,
        returns_topk_alternatives: true,
        supports_teacher_forced_scoring: true,
        max_top_logprobs: 20,
    };
    let provider = OpenAiProvider::new(url, "m", None).unwrap().with_capabilities(caps);
    let target: Vec<String> = ["[", "flu", "]"].iter().map(|s| s.to_string()).collect();
    let probs = provider.score_sequence("Q:", &target).unwrap();
    let got = rx.recv().unwrap();
    assert_eq!(got.request_line, "POST /v1/completions HTTP/1.1");
    assert_eq!(got.body["prompt"], "Q:[flu]");
    assert_eq!(got.body["echo"], true);
    assert_eq!(got.body["max_tokens"], 0);
    let want = [-0.1f64, -0.7, -0.05].map(f64::exp);
    for (p, w) in probs.iter().zip(want) {
        assert!((p - w).abs() < 1e-12);
    }
}
