//! JSON run configuration. Relative paths resolve against the directory
//! holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::bench::{Dataset, Harness};
use crate::error::{Error, Result};
use crate::gateway::{Cache, CapabilityOverrides, Gateway, MockFixture, OpenAiProvider};
use crate::model::read_cases;
use crate::oracles::{EmbedderConfig, LlmNli, NliOracle, ReferenceNli};
use crate::prompts::Prompts;
use crate::registry::{Backends, Method, ScoreSettings, Scorer};
use crate::retrieval::{ingest, Bm25Index, DEFAULT_B, DEFAULT_K1, DEFAULT_MAX_CHARS};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Mock {
        fixture: PathBuf,
    },
    Openai {
        base_url: String,
        model: String,
        #[serde(default)]
        capabilities: CapabilityOverrides,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NliConfig {
    Reference {
        #[serde(default)]
        table: Option<PathBuf>,
    },
    Llm,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub cases: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Self { k1: DEFAULT_K1, b: DEFAULT_B }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddersConfig {
    pub general: EmbedderConfig,
    pub medical: EmbedderConfig,
}

impl Default for EmbeddersConfig {
    fn default() -> Self {
        Self { general: EmbedderConfig::hashing("general"), medical: EmbedderConfig::hashing("medical") }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub groups: usize,
    /// Methods to measure; the run's method list when absent.
    pub methods: Option<Vec<Method>>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self { groups: crate::bench::robustness::DEFAULT_GROUPS, methods: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub method: Method,
    pub threshold: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { method: Method::Medconf, threshold: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dir: PathBuf,
    pub model: String,
    pub provider: ProviderConfig,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub prompts_dir: Option<PathBuf>,
    pub datasets: Vec<DatasetConfig>,
    pub corpus: Vec<PathBuf>,
    pub index: Option<PathBuf>,
    pub chunk_max_chars: usize,
    pub bm25: Bm25Config,
    pub methods: Vec<Method>,
    pub nli: NliConfig,
    pub embedders: EmbeddersConfig,
    pub scoring: ScoreSettings,
    pub robustness: RobustnessConfig,
    pub agent: AgentConfig,
    pub output: PathBuf,
    pub jobs: Option<usize>,
    pub pooled_correlation: bool,
}

const KEYS: [&str; 20] = [
    "model",
    "provider",
    "cache_dir",
    "max_in_flight",
    "prompts_dir",
    "datasets",
    "corpus",
    "index",
    "chunk_max_chars",
    "bm25",
    "methods",
    "nli",
    "embedders",
    "scoring",
    "seed",
    "robustness",
    "agent",
    "output",
    "jobs",
    "pooled_correlation",
];

/// Reads sections one at a time so that every problem is reported.
struct Reader<'a> {
    root: &'a Map<String, Value>,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.root.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.problems.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn or<T: DeserializeOwned>(&mut self, key: &str, default: T) -> T {
        self.get(key).unwrap_or(default)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MethodList {
    All(String),
    Ids(Vec<String>),
}

fn parse_methods(r: &mut Reader) -> Vec<Method> {
    match r.get::<MethodList>("methods") {
        None => Method::ALL.to_vec(),
        Some(MethodList::All(s)) if s == "all" => Method::ALL.to_vec(),
        Some(MethodList::All(s)) => {
            r.problems.push(format!("methods: expected \"all\" or a list, got \"{s}\""));
            Vec::new()
        }
        Some(MethodList::Ids(ids)) => {
            let mut out = Vec::new();
            for id in ids {
                match id.parse::<Method>() {
                    Ok(m) if !out.contains(&m) => out.push(m),
                    Ok(_) => r.problems.push(format!("methods: {id} listed twice")),
                    Err(_) => r.problems.push(format!("methods: unknown method {id}")),
                }
            }
            out
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&raw, &dir)
    }

    pub fn from_str(raw: &str, dir: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Config(vec![format!("config: {e}")]))?;
        Self::from_value(&value, dir)
    }

    pub fn from_value(value: &Value, dir: &Path) -> Result<Self> {
        let Some(root) = value.as_object() else {
            return Err(Error::Config(vec!["config: expected a JSON object".into()]));
        };
        let mut r = Reader { root, problems: Vec::new() };
        for k in root.keys() {
            if !KEYS.contains(&k.as_str()) {
                r.problems.push(format!("{k}: unknown key"));
            }
        }
        let provider = r.get::<ProviderConfig>("provider");
        if !root.contains_key("provider") {
            r.problems.push("provider: missing".into());
        }
        let model = r.or("model", match &provider {
            Some(ProviderConfig::Openai { model, .. }) => model.clone(),
            _ => "mock".to_string(),
        });
        let mut scoring: ScoreSettings = r.or("scoring", ScoreSettings::default());
        if let Some(seed) = r.get::<u64>("seed") {
            let nested = root.get("scoring").and_then(|s| s.get("seed")).is_some();
            if nested && scoring.seed != seed {
                r.problems.push("seed: conflicts with scoring.seed".into());
            }
            scoring.seed = seed;
        }
        let methods = parse_methods(&mut r);
        let cfg = Config {
            dir: dir.to_path_buf(),
            model,
            provider: provider.unwrap_or(ProviderConfig::Mock { fixture: PathBuf::new() }),
            cache_dir: r.get("cache_dir"),
            max_in_flight: r.or("max_in_flight", 8),
            prompts_dir: r.get("prompts_dir"),
            datasets: r.or("datasets", Vec::new()),
            corpus: r.or("corpus", Vec::new()),
            index: r.get("index"),
            chunk_max_chars: r.or("chunk_max_chars", DEFAULT_MAX_CHARS),
            bm25: r.or("bm25", Bm25Config::default()),
            methods,
            nli: r.or("nli", NliConfig::Reference { table: None }),
            embedders: r.or("embedders", EmbeddersConfig::default()),
            scoring,
            robustness: r.or("robustness", RobustnessConfig::default()),
            agent: r.or("agent", AgentConfig::default()),
            output: r.or("output", PathBuf::from("out")),
            jobs: r.get("jobs"),
            pooled_correlation: r.or("pooled_correlation", false),
        };
        let mut problems = r.problems;
        problems.extend(cfg.semantic_problems(root));
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    fn semantic_problems(&self, root: &Map<String, Value>) -> Vec<String> {
        let mut p = Vec::new();
        let s = &self.scoring;
        if s.sample_k == 0 {
            p.push("scoring.sample_k: must be at least 1".into());
        }
        if !(s.sample_temperature >= 0.0) {
            p.push("scoring.sample_temperature: must be non-negative".into());
        }
        if !(s.sar_t > 0.0) {
            p.push("scoring.sar_t: must be positive".into());
        }
        if s.medconf.top_k == 0 {
            p.push("scoring.medconf.top_k: must be at least 1".into());
        }
        if self.max_in_flight == 0 {
            p.push("max_in_flight: must be at least 1".into());
        }
        if self.chunk_max_chars == 0 {
            p.push("chunk_max_chars: must be at least 1".into());
        }
        if !(self.bm25.k1 >= 0.0) || !(0.0..=1.0).contains(&self.bm25.b) {
            p.push("bm25: need k1 >= 0 and b in [0, 1]".into());
        }
        if self.jobs == Some(0) {
            p.push("jobs: must be at least 1".into());
        }
        if self.robustness.groups < 2 {
            p.push("robustness.groups: must be at least 2".into());
        }
        if self.agent.threshold.is_nan() {
            p.push("agent.threshold: must be a number".into());
        }
        if root.contains_key("methods") && self.methods.is_empty() {
            p.push("methods: no method selected".into());
        }
        if !self.corpus.is_empty() && self.index.is_some() {
            p.push("corpus: give either corpus or index, not both".into());
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            p.push("datasets: duplicate name".into());
        }
        let mut must_exist = |key: String, path: &Path| {
            if !self.resolve(path).exists() {
                p.push(format!("{key}: {} not found", self.resolve(path).display()));
            }
        };
        if let ProviderConfig::Mock { fixture } = &self.provider {
            if root.contains_key("provider") {
                must_exist("provider.fixture".into(), fixture);
            }
        }
        for (i, d) in self.datasets.iter().enumerate() {
            must_exist(format!("datasets[{i}].cases"), &d.cases);
        }
        for (i, c) in self.corpus.iter().enumerate() {
            must_exist(format!("corpus[{i}]"), c);
        }
        if let Some(ix) = &self.index {
            must_exist("index".into(), ix);
        }
        if let Some(d) = &self.prompts_dir {
            must_exist("prompts_dir".into(), d);
        }
        if let NliConfig::Reference { table: Some(t) } = &self.nli {
            must_exist("nli.table".into(), t);
        }
        p
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn build_gateway(&self) -> Result<Gateway> {
        let gw = match &self.provider {
            ProviderConfig::Mock { fixture } => Gateway::mock(MockFixture::load(&self.resolve(fixture))?),
            ProviderConfig::Openai { base_url, model, capabilities } => {
                let p = OpenAiProvider::new(base_url.clone(), model.clone(), OpenAiProvider::api_key_from_env())?;
                Gateway::new(Arc::new(p)).with_capability_overrides(capabilities)
            }
        };
        let cache = match &self.cache_dir {
            Some(d) => Some(Cache::on_disk(self.resolve(d))?),
            None => None,
        };
        Ok(gw.with_cache(cache).with_max_in_flight(self.max_in_flight))
    }

    /// The BM25 index from `index`, or built from `corpus`; `None` when
    /// neither is configured.
    pub fn build_index(&self) -> Result<Option<Bm25Index>> {
        if let Some(ix) = &self.index {
            return Bm25Index::load(&self.resolve(ix)).map(Some);
        }
        if self.corpus.is_empty() {
            return Ok(None);
        }
        let files: Vec<PathBuf> = self.corpus.iter().map(|c| self.resolve(c)).collect();
        let ing = ingest(&files, self.chunk_max_chars)?;
        for w in &ing.warnings {
            log::warn!("corpus: {w}");
        }
        Bm25Index::build(ing.chunks, self.bm25.k1, self.bm25.b).map(Some)
    }

    pub fn build_scorer(&self) -> Result<Scorer> {
        let gateway = Arc::new(self.build_gateway()?);
        let prompts = match &self.prompts_dir {
            Some(d) => Prompts::with_overrides(&self.resolve(d))?,
            None => Prompts::default(),
        };
        let nli: Box<dyn NliOracle> = match &self.nli {
            NliConfig::Reference { table: Some(t) } => Box::new(ReferenceNli::from_file(&self.resolve(t))?),
            NliConfig::Reference { table: None } => Box::new(ReferenceNli::new()),
            NliConfig::Llm => Box::new(LlmNli::new(gateway.clone())),
        };
        let backends = Backends {
            gateway,
            prompts,
            nli,
            general: self.embedders.general.build()?,
            medical: self.embedders.medical.build()?,
            index: self.build_index()?,
        };
        Ok(Scorer::new(backends, self.scoring.clone()))
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        self.datasets
            .iter()
            .map(|d| Ok(Dataset { name: d.name.clone(), cases: read_cases(&self.resolve(&d.cases))? }))
            .collect()
    }

    pub fn harness<'a>(&self, scorer: &'a Scorer) -> Harness<'a> {
        Harness {
            scorer,
            model: self.model.clone(),
            methods: self.methods.clone(),
            jobs: self.jobs(),
            pooled_correlation: self.pooled_correlation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn problems(v: Value) -> Vec<String> {
        match Config::from_value(&v, Path::new("/nonexistent")) {
            Err(Error::Config(p)) => p,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn every_offending_key_is_listed() {
        let p = problems(json!({
            "provider": {"kind": "mock", "fixture": "m.json"},
            "colour": 1,
            "shape": 2,
            "methods": ["asp", "bogus"],
            "bm25": {"k1": 1.2, "typo": 0},
            "scoring": {"sample_k": 0}
        }));
        let joined = p.join("\n");
        for needle in ["colour", "shape", "bogus", "bm25", "sample_k", "provider.fixture"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
    }

    #[test]
    fn minimal_openai_config() {
        let cfg = Config::from_value(
            &json!({"provider": {"kind": "openai", "base_url": "http://x", "model": "m"}, "seed": 4}),
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.model, "m");
        assert_eq!(cfg.scoring.seed, 4);
        assert_eq!(cfg.methods.len(), Method::ALL.len());
        assert_eq!(cfg.agent.method, Method::Medconf);
    }
}
