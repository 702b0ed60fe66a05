//! The `medconf` command line. Results go to stdout as JSON, logs to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bench::{self, to_pretty_json};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, MockFixture};
use crate::medconf::Diagnosis;
use crate::model::{ResponseSet, TokenTrace};
use crate::oracles::{EmbedderConfig, ReferenceNli};
use crate::prompts::Prompts;
use crate::registry::{Backends, Family, Method, ScoreSettings, Scorer, Subject};
use crate::retrieval::{ingest, Bm25Index, DEFAULT_B, DEFAULT_K1, DEFAULT_MAX_CHARS};

#[derive(Debug, Parser)]
#[command(name = "medconf", version, about = "Confidence estimation for diagnostic LLM outputs")]
pub struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one input with one method.
    Score(ScoreArgs),
    /// Run the graded-information benchmark.
    Bench(RunArgs),
    /// Build a BM25 index from JSON-lines corpus files.
    Index(IndexArgs),
    /// Measure score dispersion under appended paraphrases.
    Robustness(RunArgs),
    /// Simulate confidence-gated inquiry.
    Agent(AgentArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub method: String,
    /// A token trace (JSON), a response set (JSON) or plain patient text.
    #[arg(long)]
    pub input_file: PathBuf,
    /// Diagnosis to score instead of generating one.
    #[arg(long)]
    pub answer: Option<String>,
    #[arg(long)]
    pub sample_k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mock fixture file or directory, used when no config is given.
    #[arg(long, conflicts_with = "config")]
    pub fixture: Option<PathBuf>,
    /// Where to write the MedConf audit.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
    pub max_chars: usize,
    #[arg(long, default_value_t = DEFAULT_K1)]
    pub k1: f64,
    #[arg(long, default_value_t = DEFAULT_B)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub method: Option<String>,
}

/// Exit status for a failure: 2 for usage and configuration problems,
/// 1 for everything that went wrong at run time.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownMethod(_) => 2,
        _ => 1,
    }
}

pub fn error_json(e: &Error) -> Value {
    let mut v = json!({ "error": { "code": e.code(), "message": e.to_string() } });
    match e {
        Error::Config(problems) => v["error"]["problems"] = json!(problems),
        Error::Validation { raw: Some(raw), .. } => v["error"]["raw"] = json!(raw),
        _ => {}
    }
    v
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            emit(&e.to_string());
            return 0;
        }
        Err(e) => {
            let msg = e.render().to_string();
            emit(&json!({ "error": { "code": "usage", "message": msg.trim() } }).to_string());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(v) => {
            emit(&serde_json::to_string_pretty(&v).expect("serializable result"));
            0
        }
        Err(e) => {
            log::error!("{e}");
            emit(&error_json(&e).to_string());
            exit_code(&e)
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", text.trim_end());
    let _ = out.flush();
}

pub fn execute(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Score(a) => cmd_score(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Index(a) => cmd_index(a),
        Command::Robustness(a) => cmd_robustness(cli, a),
        Command::Agent(a) => cmd_agent(cli, a),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.scoring.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config(vec!["--jobs: must be at least 1".into()]));
        }
        cfg.jobs = Some(jobs);
    }
    Ok(cfg)
}

fn offline_scorer(fixture: Option<&Path>, settings: ScoreSettings) -> Result<Scorer> {
    let fixture = match fixture {
        Some(p) => MockFixture::load(p)?,
        None => MockFixture::default(),
    };
    let backends = Backends {
        gateway: Arc::new(Gateway::mock(fixture)),
        prompts: Prompts::default(),
        nli: Box::new(ReferenceNli::new()),
        general: EmbedderConfig::hashing("general").build()?,
        medical: EmbedderConfig::hashing("medical").build()?,
        index: None,
    };
    Ok(Scorer::new(backends, settings))
}

enum Input {
    Trace(TokenTrace),
    Set(ResponseSet),
    Text(String),
}

fn read_input(path: &Path) -> Result<Input> {
    let raw = std::fs::read_to_string(path)?;
    let Ok(value) = serde_json::from_str::<Value>(&raw) else {
        return Ok(Input::Text(raw.trim().to_string()));
    };
    let parse = |e: serde_json::Error| Error::parse(format!("{}: {e}", path.display()));
    match &value {
        Value::Object(o) if o.contains_key("responses") => Ok(Input::Set(serde_json::from_value(value).map_err(parse)?)),
        Value::Object(o) if o.contains_key("text") => Ok(Input::Trace(serde_json::from_value(value).map_err(parse)?)),
        Value::String(s) => Ok(Input::Text(s.clone())),
        _ => Err(Error::invalid(format!(
            "{}: expected a token trace, a response set or patient text",
            path.display()
        ))),
    }
}

fn cmd_score(cli: &Cli, a: &ScoreArgs) -> Result<Value> {
    let method: Method = a.method.parse()?;
    let mut scorer = match &a.config {
        Some(p) => load_config(cli, p)?.build_scorer()?,
        None => offline_scorer(a.fixture.as_deref(), ScoreSettings::default())?,
    };
    if let Some(seed) = cli.seed {
        scorer.settings.seed = seed;
    }
    if let Some(k) = a.sample_k {
        if k == 0 {
            return Err(Error::invalid("--sample-k must be at least 1"));
        }
        scorer.settings.sample_k = k;
    }
    let result = match read_input(&a.input_file)? {
        Input::Trace(trace) => {
            if method.family() != Family::Token {
                return Err(Error::invalid(format!("{method} does not score a token trace")));
            }
            let mut t = trace.answer_span();
            if matches!(method, Method::Pmi | Method::Cpmi) && t.uncond_probs.is_none() {
                t = scorer.gateway().attach_uncond_probs(t)?;
            }
            scorer.score_trace(method, &t, "")?
        }
        Input::Set(set) => {
            if method.family() != Family::Consistency {
                return Err(Error::invalid(format!("{method} does not score a response set")));
            }
            scorer.score_set(method, &set)?
        }
        Input::Text(info) => {
            let subject = match &a.answer {
                Some(ans) => Subject::new(
                    info,
                    Diagnosis { answer: ans.clone(), trace: TokenTrace::text_only(format!("[{ans}]")) },
                ),
                None => scorer.diagnose(&info, &[method])?,
            };
            scorer.score(method, &subject)?
        }
    };
    if let Some(path) = &a.audit {
        if method != Method::Medconf {
            return Err(Error::invalid("--audit applies to --method medconf only"));
        }
        std::fs::write(path, to_pretty_json(&result.aux)?)?;
    }
    Ok(serde_json::to_value(result)?)
}

fn out_dir(cfg: &Config, a: &RunArgs) -> PathBuf {
    a.out.clone().unwrap_or_else(|| cfg.output_dir())
}

fn cmd_bench(cli: &Cli, a: &RunArgs) -> Result<Value> {
    let cfg = load_config(cli, &a.config)?;
    let scorer = cfg.build_scorer()?;
    let out = bench::run_benchmark(&cfg.harness(&scorer), &cfg.load_datasets()?)?;
    let dir = out_dir(&cfg, a);
    bench::write_outputs(&out, &dir)?;
    Ok(json!({ "output": dir, "report": out.report }))
}

fn cmd_index(a: &IndexArgs) -> Result<Value> {
    let ing = ingest(&a.corpus, a.max_chars)?;
    for w in &ing.warnings {
        log::warn!("{w}");
    }
    let index = Bm25Index::build(ing.chunks, a.k1, a.b)?;
    index.save(&a.out)?;
    Ok(json!({ "index": a.out, "chunks": index.len(), "warnings": ing.warnings }))
}

fn cmd_robustness(cli: &Cli, a: &RunArgs) -> Result<Value> {
    let cfg = load_config(cli, &a.config)?;
    let scorer = cfg.build_scorer()?;
    let mut h = cfg.harness(&scorer);
    if let Some(m) = &cfg.robustness.methods {
        h.methods = m.clone();
    }
    let reports = cfg
        .load_datasets()?
        .iter()
        .map(|d| bench::run_robustness(&h, d, cfg.robustness.groups))
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(&cfg, a);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("robustness.json"), to_pretty_json(&reports)?)?;
    Ok(json!({ "output": dir, "reports": reports }))
}

fn cmd_agent(cli: &Cli, a: &AgentArgs) -> Result<Value> {
    let cfg = load_config(cli, &a.run.config)?;
    let method = match &a.method {
        Some(m) => m.parse()?,
        None => cfg.agent.method,
    };
    let threshold = a.threshold.unwrap_or(cfg.agent.threshold);
    let scorer = cfg.build_scorer()?;
    let h = cfg.harness(&scorer);
    let reports = cfg
        .load_datasets()?
        .iter()
        .map(|d| bench::run_agent(&h, d, method, threshold))
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(&cfg, &a.run);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("agent.json"), to_pretty_json(&reports)?)?;
    Ok(json!({ "output": dir, "reports": reports }))
}
