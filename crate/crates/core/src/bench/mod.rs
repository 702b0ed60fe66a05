//! Graded-information benchmark: case slicing, judging, per-level
//! aggregation, robustness and agent simulations.

pub mod agent;
pub mod metrics;
pub mod robustness;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Case, CaseKind, Scale, Speaker};
use crate::registry::{Method, Scorer};
use crate::text::contains_phrase;

pub use agent::{run_agent, AgentCase, AgentReport};
pub use metrics::{auprc, auroc, coefficient_of_variation, pearson, spearman, Correlation};
pub use robustness::{run_robustness, RobustnessMethod, RobustnessReport};

/// Percentage of the patient information shown to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct InfoLevel(u32);

impl InfoLevel {
    pub const ALL: [InfoLevel; 6] =
        [InfoLevel(1), InfoLevel(20), InfoLevel(40), InfoLevel(60), InfoLevel(80), InfoLevel(100)];

    pub fn percent(self) -> u32 {
        self.0
    }

    /// Segments kept out of `total`: one at the 1% level, otherwise
    /// `ceil(percent · total / 100)`.
    pub fn keep(self, total: usize) -> usize {
        if total == 0 {
            return 0;
        }
        if self.0 == 1 {
            return 1;
        }
        (self.0 as usize * total).div_ceil(100).clamp(1, total)
    }
}

impl TryFrom<u32> for InfoLevel {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        InfoLevel::ALL
            .into_iter()
            .find(|l| l.0 == p)
            .ok_or_else(|| Error::invalid(format!("no information level {p}%")))
    }
}

/// Unit ranges that slicing never splits. A report sentence is its own
/// segment; a dialogue segment runs up to and including the next patient
/// (or narrator) turn, so a question always travels with its answer.
pub fn segments(case: &Case) -> Vec<std::ops::Range<usize>> {
    match case.kind {
        CaseKind::Report => (0..case.units.len()).map(|i| i..i + 1).collect(),
        CaseKind::Dialogue => {
            let mut out = Vec::new();
            let mut start = 0;
            for (i, u) in case.units.iter().enumerate() {
                if u.speaker != Speaker::Doctor {
                    out.push(start..i + 1);
                    start = i + 1;
                }
            }
            if start < case.units.len() {
                out.push(start..case.units.len());
            }
            out
        }
    }
}

/// The first `n` segments of a case.
pub fn reveal(case: &Case, n: usize) -> Case {
    let segs = segments(case);
    let end = match n {
        0 => 0,
        n => segs[n.min(segs.len()) - 1].end,
    };
    Case { units: case.units[..end].to_vec(), ..case.clone() }
}

pub fn slice(case: &Case, level: InfoLevel) -> Case {
    reveal(case, level.keep(segments(case).len()))
}

/// True when the diagnosis contains the gold answer or an alias as a whole
/// phrase after normalization.
pub fn judge(diagnosis: &str, gold: &str, aliases: &[String]) -> bool {
    std::iter::once(gold)
        .chain(aliases.iter().map(String::as_str))
        .any(|g| contains_phrase(diagnosis, g))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub cases: Vec<Case>,
}

/// Everything a run needs besides the cases.
pub struct Harness<'a> {
    pub scorer: &'a Scorer,
    pub model: String,
    pub methods: Vec<Method>,
    pub jobs: usize,
    /// Also correlate confidence with correctness over pooled records.
    pub pooled_correlation: bool,
}

impl Harness<'_> {
    /// Runs `f` on every case on a pool of `jobs` threads, keeping input order.
    pub(crate) fn map_cases<T: Send>(&self, cases: &[Case], f: impl Fn(&Case) -> T + Sync + Send) -> Result<Vec<T>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        Ok(pool.install(|| cases.par_iter().map(f).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub case_id: String,
    pub level: u32,
    pub diagnosis: String,
    pub correct: bool,
    pub scores: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub case_id: String,
    pub level: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDiscrimination {
    pub level: u32,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub scale: Scale,
    pub orientation: f64,
    pub scored_records: usize,
    pub failed_records: usize,
    /// Mean raw score per level, `None` where nothing was scored.
    pub level_confidence: Vec<Option<f64>>,
    pub pearson: Option<Correlation>,
    pub spearman: Option<Correlation>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub per_level: Vec<LevelDiscrimination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_pearson: Option<Correlation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub cases: usize,
    pub excluded: Vec<Excluded>,
    pub level_accuracy: Vec<f64>,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub model: String,
    pub provider: String,
    pub seed: u64,
    pub sample_k: usize,
    pub levels: Vec<u32>,
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub meta: RunMeta,
    pub datasets: Vec<DatasetReport>,
}

pub struct BenchOutput {
    pub report: BenchReport,
    pub records: Vec<EvalRecord>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Scores one case at every level. The first failed diagnosis excludes
/// the whole case.
fn run_case(h: &Harness, dataset: &str, case: &Case) -> std::result::Result<Vec<EvalRecord>, Excluded> {
    let mut out = Vec::with_capacity(InfoLevel::ALL.len());
    for level in InfoLevel::ALL {
        let info = slice(case, level).render();
        let subject = h.scorer.diagnose(&info, &h.methods).map_err(|e| Excluded {
            case_id: case.id.clone(),
            level: level.percent(),
            error: e.to_string(),
        })?;
        let correct = judge(&subject.diagnosis.answer, &case.gold_diagnosis, &case.aliases);
        let mut scores = BTreeMap::new();
        let mut errors = BTreeMap::new();
        for &m in &h.methods {
            match h.scorer.score(m, &subject) {
                Ok(r) => {
                    scores.insert(m.id().to_string(), r.score);
                }
                Err(e) => {
                    log::warn!("{} {}% {}: {e}", case.id, level.percent(), m);
                    errors.insert(m.id().to_string(), e.to_string());
                }
            }
        }
        out.push(EvalRecord {
            dataset: dataset.to_string(),
            case_id: case.id.clone(),
            level: level.percent(),
            diagnosis: subject.diagnosis.answer.clone(),
            correct,
            scores,
            errors,
        });
    }
    Ok(out)
}

fn note<T>(notes: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{what}: {e}"))).ok()
}

fn method_report(m: Method, records: &[EvalRecord], level_accuracy: &[f64], pooled: bool) -> MethodReport {
    let o = m.orientation();
    let mut notes = Vec::new();
    let scored: Vec<(&EvalRecord, f64)> =
        records.iter().filter_map(|r| r.scores.get(m.id()).map(|s| (r, *s))).collect();
    let level_confidence: Vec<Option<f64>> = InfoLevel::ALL
        .iter()
        .map(|l| {
            let xs: Vec<f64> = scored.iter().filter(|(r, _)| r.level == l.percent()).map(|(_, s)| *s).collect();
            mean(&xs)
        })
        .collect();
    let (pearson_c, spearman_c) = match level_confidence.iter().copied().collect::<Option<Vec<f64>>>() {
        Some(conf) => {
            let oriented: Vec<f64> = conf.iter().map(|c| o * c).collect();
            (
                note(&mut notes, "pearson", pearson(level_accuracy, &oriented)),
                note(&mut notes, "spearman", spearman(level_accuracy, &oriented)),
            )
        }
        None => {
            notes.push("correlation: a level has no scored records".into());
            (None, None)
        }
    };
    let discrimination = |rs: &[&(&EvalRecord, f64)], notes: &mut Vec<String>, tag: &str| {
        let labels: Vec<bool> = rs.iter().map(|(r, _)| r.correct).collect();
        let oriented: Vec<f64> = rs.iter().map(|(_, s)| o * s).collect();
        (
            note(notes, &format!("auroc{tag}"), auroc(&labels, &oriented)),
            note(notes, &format!("auprc{tag}"), auprc(&labels, &oriented)),
        )
    };
    let all: Vec<&(&EvalRecord, f64)> = scored.iter().collect();
    let (auroc_p, auprc_p) = discrimination(&all, &mut notes, "");
    let per_level = InfoLevel::ALL
        .iter()
        .map(|l| {
            let rs: Vec<_> = scored.iter().filter(|(r, _)| r.level == l.percent()).collect();
            let (auroc, auprc) = discrimination(&rs, &mut notes, &format!(" at {}%", l.percent()));
            LevelDiscrimination { level: l.percent(), auroc, auprc }
        })
        .collect();
    let pooled_pearson = if pooled {
        let acc: Vec<f64> = scored.iter().map(|(r, _)| f64::from(u8::from(r.correct))).collect();
        let conf: Vec<f64> = scored.iter().map(|(_, s)| o * s).collect();
        note(&mut notes, "pooled pearson", pearson(&acc, &conf))
    } else {
        None
    };
    MethodReport {
        method: m.id().to_string(),
        scale: m.scale(),
        orientation: o,
        scored_records: scored.len(),
        failed_records: records.len() - scored.len(),
        level_confidence,
        pearson: pearson_c,
        spearman: spearman_c,
        auroc: auroc_p,
        auprc: auprc_p,
        per_level,
        pooled_pearson,
        notes,
    }
}

pub fn run_dataset(h: &Harness, dataset: &Dataset) -> Result<(DatasetReport, Vec<EvalRecord>)> {
    let mut cases = dataset.cases.clone();
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let results = h.map_cases(&cases, |c| run_case(h, &dataset.name, c))?;
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(x) => {
                log::warn!("excluded case {} at {}%: {}", x.case_id, x.level, x.error);
                excluded.push(x);
            }
        }
    }
    let level_accuracy: Vec<f64> = InfoLevel::ALL
        .iter()
        .map(|l| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.level == l.percent())
                .map(|r| f64::from(u8::from(r.correct)))
                .collect();
            mean(&xs).unwrap_or(0.0)
        })
        .collect();
    let methods = h
        .methods
        .iter()
        .map(|&m| method_report(m, &records, &level_accuracy, h.pooled_correlation))
        .collect();
    let report = DatasetReport {
        dataset: dataset.name.clone(),
        cases: cases.len() - excluded.len(),
        excluded,
        level_accuracy,
        methods,
    };
    Ok((report, records))
}

pub fn run_benchmark(h: &Harness, datasets: &[Dataset]) -> Result<BenchOutput> {
    if h.methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    let mut reports = Vec::new();
    let mut records = Vec::new();
    for d in datasets {
        let (r, rs) = run_dataset(h, d)?;
        reports.push(r);
        records.extend(rs);
    }
    let s = &h.scorer.settings;
    let meta = RunMeta {
        model: h.model.clone(),
        provider: h.scorer.gateway().provider_name().to_string(),
        seed: s.seed,
        sample_k: s.sample_k,
        levels: InfoLevel::ALL.iter().map(|l| l.percent()).collect(),
        methods: h.methods.iter().map(|m| m.id().to_string()).collect(),
    };
    Ok(BenchOutput { report: BenchReport { meta, datasets: reports }, records })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from("dataset,model,method,pearson_r,pearson_p,spearman_r,spearman_p,auroc,auprc,scored_records\n");
    for d in &report.datasets {
        for m in &d.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                d.dataset,
                report.meta.model,
                m.method,
                opt(m.pearson.map(|c| c.r)),
                opt(m.pearson.map(|c| c.p)),
                opt(m.spearman.map(|c| c.r)),
                opt(m.spearman.map(|c| c.p)),
                opt(m.auroc),
                opt(m.auprc),
                m.scored_records
            );
        }
    }
    out
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes report.json, report.csv and records.jsonl into `dir`.
pub fn write_outputs(out: &BenchOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), to_pretty_json(&out.report)?)?;
    std::fs::write(dir.join("report.csv"), report_csv(&out.report))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?);
    for r in &out.records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Unit;

    fn report(n: usize) -> Case {
        Case {
            id: "r".into(),
            kind: CaseKind::Report,
            units: (0..n).map(|i| Unit::new(Speaker::Narrator, format!("s{i}."))).collect(),
            gold_diagnosis: "x".into(),
            aliases: vec![],
        }
    }

    fn dialogue(exchanges: usize) -> Case {
        let mut units = Vec::new();
        for i in 0..exchanges {
            units.push(Unit::new(Speaker::Doctor, format!("q{i}?")));
            units.push(Unit::new(Speaker::Patient, format!("a{i}.")));
        }
        Case { id: "d".into(), kind: CaseKind::Dialogue, units, gold_diagnosis: "x".into(), aliases: vec![] }
    }

    #[test]
    fn level_rounding() {
        let lv = |p| InfoLevel::try_from(p).unwrap();
        assert_eq!(slice(&report(10), lv(40)).units.len(), 4);
        assert_eq!(slice(&report(7), lv(20)).units.len(), 2);
        assert_eq!(slice(&report(7), lv(1)).units.len(), 1);
        assert_eq!(slice(&report(7), lv(100)), report(7));
        assert!(InfoLevel::try_from(50).is_err());
    }

    #[test]
    fn dialogue_slices_keep_pairs() {
        let d = dialogue(10);
        let first = slice(&d, InfoLevel::ALL[0]);
        assert_eq!(first.units.len(), 2);
        assert_eq!(first.units[1].speaker, Speaker::Patient);
        for l in InfoLevel::ALL {
            let s = slice(&d, l);
            assert_eq!(s.units.last().unwrap().speaker, Speaker::Patient);
            assert_eq!(s.units[..], d.units[..s.units.len()]);
        }
    }

    #[test]
    fn judging() {
        assert!(judge("It's appendicitis", "appendicitis", &[]));
        assert!(!judge("acute gastroenteritis", "appendicitis", &[]));
        let aliases = vec!["URTI".to_string(), "upper respiratory tract infection".to_string()];
        assert!(judge("likely an upper respiratory tract infection", "common cold", &aliases));
        assert!(judge("URTI", "common cold", &aliases));
    }
}
