//! Run orchestration: configuration, dataset ingestion, per-episode
//! execution across a worker pool, persistence, replay, and reports.
//!
//! A run directory holds `manifest.json`, `problems.jsonl`, `results.jsonl`,
//! `traces/<episode>.jsonl`, and `transcripts/<episode>.jsonl`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::answers_match;
use crate::backends::{
    write_transcript, Backend, BackendError, HttpBackend, HttpConfig, PromptSet, RecordingBackend, ReplayBackend, SimBackend, SimWorld, TranscriptEntry,
};
use crate::baselines::{best_of_n, greedy_cot, hybrid_cascade, vanilla_tot, TotConfig};
use crate::controller::{run_episode, ConfigError, ControllerConfig};
use crate::evaluation::{
    self, AuditCase, AuditSummary, EpisodeView, EvalError, PredictionRecord, RescueHurt, TokenEfficiency, TriageCase, TriageConfig, TriageReport,
};
use crate::problem::Problem;
use crate::session::{episode_id, EpisodeResult, Outcome, Session};
use crate::trace::{self, Clock, TraceError, TraceEvent};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Controller(#[from] ConfigError),
    #[error("{path} line {line}: {message}")]
    Dataset { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("episode {0} not found in run")]
    MissingEpisode(String),
    #[error("replay of {episode} diverged on {field}: recorded {recorded}, replayed {replayed}")]
    ReplayMismatch { episode: String, field: &'static str, recorded: String, replayed: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Controller,
    Greedy,
    /// Majority vote over as many samples as the budget allows.
    BestOfN,
    Tot,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Controller => "controller",
            Policy::Greedy => "greedy",
            Policy::BestOfN => "best_of_n",
            Policy::Tot => "tot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    #[serde(flatten)]
    pub http: HttpConfig,
    /// Prompt template file; the built-in set when absent.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Sim(SimWorld),
    Http(HttpSettings),
    /// Serves recorded transcripts from `<dir>/<episode>.jsonl`.
    Replay {
        dir: PathBuf,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Sim(SimWorld::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub policy: Policy,
    pub backend: BackendConfig,
    pub controller: ControllerConfig,
    pub tot: TotConfig,
    /// JSON-lines dataset; simulated problems are generated when absent.
    pub dataset: Option<PathBuf>,
    /// Problem count when generating a simulated dataset.
    pub sim_problems: usize,
    /// File of problem ids, one per line, restricting the dataset.
    pub subset: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Route abstentions and low-confidence answers to a Best-of-16 pass.
    pub fallback: bool,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub record_transcripts: bool,
    pub clock: Clock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Controller,
            backend: BackendConfig::default(),
            controller: ControllerConfig::default(),
            tot: TotConfig::default(),
            dataset: None,
            sim_problems: 50,
            subset: None,
            seeds: vec![0],
            out_dir: PathBuf::from("runs/latest"),
            fallback: false,
            workers: 0,
            record_transcripts: true,
            clock: Clock::Logical,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.controller.validate()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.tot.fanout == 0 || self.tot.fanout > 3 {
            return Err(HarnessError::Config("tot.fanout must be between 1 and 3".into()));
        }
        Ok(())
    }

    pub fn policy_label(&self) -> String {
        if self.fallback {
            format!("{}+fallback", self.policy.as_str())
        } else {
            self.policy.as_str().to_string()
        }
    }

    pub fn problems(&self) -> Result<Vec<Problem>, HarnessError> {
        let mut problems = match (&self.dataset, &self.backend) {
            (Some(path), _) => load_dataset(path)?,
            (None, BackendConfig::Sim(world)) => world.problems(self.sim_problems),
            (None, _) => return Err(HarnessError::Config("a dataset is required for non-simulated backends".into())),
        };
        if let Some(path) = &self.subset {
            let ids = load_subset(path)?;
            problems.retain(|p| ids.contains(&p.id));
        }
        Ok(problems)
    }
}

/// One `Problem` JSON object per non-empty line.
pub fn load_dataset(path: &Path) -> Result<Vec<Problem>, HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let dataset_err = |message: String| HarnessError::Dataset { path: path.to_path_buf(), line: i + 1, message };
        let p: Problem = serde_json::from_str(&line).map_err(|e| dataset_err(e.to_string()))?;
        if !seen.insert(p.id.clone()) {
            return Err(dataset_err(format!("duplicate id {}", p.id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, problems: &[Problem]) -> Result<(), HarnessError> {
    write_jsonl(path, problems)
}

fn load_subset(path: &Path) -> Result<HashSet<String>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Dataset { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?);
        }
    }
    Ok(out)
}

/// An episode result with its offline correctness label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(flatten)]
    pub result: EpisodeResult,
    /// Absent when the problem has no gold answer.
    pub correct: Option<bool>,
}

impl EpisodeRecord {
    pub fn prediction(&self) -> PredictionRecord {
        PredictionRecord {
            episode: self.result.episode.clone(),
            answer: self.result.answer.clone(),
            confidence: self.result.confidence,
            correct: self.correct.unwrap_or(false),
            calls: self.result.ledger.total_calls,
            tokens: self.result.ledger.total_tokens(),
        }
    }
}

pub fn is_correct(answer: Option<&str>, problem: &Problem) -> Option<bool> {
    let gold = problem.gold.as_deref()?;
    Some(answer.is_some_and(|a| answers_match(a, gold, problem.kind, &problem.options)))
}

/// Everything one episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub record: EpisodeRecord,
    pub trace: Vec<TraceEvent>,
    pub transcript: Option<Vec<TranscriptEntry>>,
}

/// Runs the configured policy inside `session`.
pub fn run_policy(session: &mut Session, cfg: &RunConfig) -> Outcome {
    let tot = cfg.tot;
    let controller = cfg.controller.clone();
    let primary = move |s: &mut Session| match cfg.policy {
        Policy::Controller => run_episode(s, &controller).outcome,
        Policy::Greedy => greedy_cot(s),
        Policy::BestOfN => {
            let n = s.ledger.remaining();
            best_of_n(s, n)
        }
        Policy::Tot => vanilla_tot(s, tot),
    };
    if cfg.fallback {
        hybrid_cascade(session, primary, cfg.controller.tau_abs)
    } else {
        primary(session)
    }
}

/// Runs one problem under one seed against `backend`. The policy only sees
/// the problem's online view; correctness is labelled afterwards.
pub fn execute_episode(backend: &dyn Backend, problem: &Problem, seed: u64, cfg: &RunConfig) -> (EpisodeRecord, Vec<TraceEvent>) {
    let episode = episode_id(&problem.id, seed);
    let mut session = Session::with_clock(backend, problem.view(), cfg.controller.budget, episode, cfg.clock);
    let outcome = run_policy(&mut session, cfg);
    let (result, events) = session.finish(&cfg.policy_label(), seed, outcome);
    let correct = is_correct(result.answer.as_deref(), problem);
    (EpisodeRecord { result, correct }, events)
}

enum SharedBackend {
    Sim(SimWorld),
    Http(Arc<HttpBackend>),
    Replay(PathBuf),
}

impl SharedBackend {
    fn new(cfg: &BackendConfig) -> Result<Self, HarnessError> {
        Ok(match cfg {
            BackendConfig::Sim(world) => SharedBackend::Sim(world.clone()),
            BackendConfig::Http(h) => {
                let prompts = match &h.prompts {
                    Some(p) => PromptSet::from_file(p).map_err(HarnessError::Config)?,
                    None => PromptSet::default(),
                };
                SharedBackend::Http(Arc::new(HttpBackend::new(h.http.clone(), prompts)?))
            }
            BackendConfig::Replay { dir } => SharedBackend::Replay(dir.clone()),
        })
    }

    fn for_episode(&self, episode: &str, seed: u64) -> Result<Box<dyn Backend>, HarnessError> {
        Ok(match self {
            SharedBackend::Sim(world) => Box::new(SimBackend::new(world.clone().with_seed(seed))),
            SharedBackend::Http(b) => Box::new(Arc::clone(b)),
            SharedBackend::Replay(dir) => Box::new(ReplayBackend::from_file(&dir.join(format!("{episode}.jsonl")))?),
        })
    }
}

fn run_one(shared: &SharedBackend, problem: &Problem, seed: u64, cfg: &RunConfig) -> Result<EpisodeRun, HarnessError> {
    let backend = shared.for_episode(&episode_id(&problem.id, seed), seed)?;
    if cfg.record_transcripts {
        let recorder = RecordingBackend::new(backend);
        let (record, trace) = execute_episode(&recorder, problem, seed, cfg);
        Ok(EpisodeRun { record, trace, transcript: Some(recorder.entries()) })
    } else {
        let (record, trace) = execute_episode(backend.as_ref(), problem, seed, cfg);
        Ok(EpisodeRun { record, trace, transcript: None })
    }
}

/// Executes every problem under every seed, in problem-major order.
pub fn run_episodes(cfg: &RunConfig, problems: &[Problem]) -> Result<Vec<EpisodeRun>, HarnessError> {
    cfg.validate()?;
    let shared = SharedBackend::new(&cfg.backend)?;
    let jobs: Vec<(&Problem, u64)> = problems.iter().flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|&(p, seed)| run_one(&shared, p, seed, cfg)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub episodes: usize,
    pub answered: usize,
    pub correct: usize,
    /// Episodes that ended on a backend failure.
    pub hard_failures: usize,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub manifest: Manifest,
    pub records: Vec<EpisodeRecord>,
}

fn ensure_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn trace_path(run_dir: &Path, episode: &str) -> PathBuf {
    run_dir.join("traces").join(format!("{episode}.jsonl"))
}

pub fn transcript_path(run_dir: &Path, episode: &str) -> PathBuf {
    run_dir.join("transcripts").join(format!("{episode}.jsonl"))
}

/// Runs the suite and persists it under `cfg.out_dir`.
pub fn run_suite(cfg: &RunConfig) -> Result<SuiteOutput, HarnessError> {
    let problems = cfg.problems()?;
    let runs = run_episodes(cfg, &problems)?;
    let dir = &cfg.out_dir;
    ensure_dir(&dir.join("traces"))?;
    if cfg.record_transcripts {
        ensure_dir(&dir.join("transcripts"))?;
    }
    write_dataset(&dir.join("problems.jsonl"), &problems)?;
    for run in &runs {
        let episode = &run.record.result.episode;
        let path = trace_path(dir, episode);
        let file = File::create(&path).map_err(io_err(&path))?;
        trace::write_ndjson(BufWriter::new(file), &run.trace).map_err(io_err(&path))?;
        if let Some(t) = &run.transcript {
            write_transcript(&transcript_path(dir, episode), t)?;
        }
    }
    let records: Vec<EpisodeRecord> = runs.into_iter().map(|r| r.record).collect();
    write_jsonl(&dir.join("results.jsonl"), &records)?;
    let manifest = Manifest {
        config: cfg.clone(),
        episodes: records.len(),
        answered: records.iter().filter(|r| !r.result.abstained).count(),
        correct: records.iter().filter(|r| r.correct == Some(true)).count(),
        hard_failures: records.iter().filter(|r| r.result.error.is_some()).count(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest is serializable")).map_err(io_err(&path))?;
    Ok(SuiteOutput { manifest, records })
}

/// A persisted run, loaded back for analysis.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub problems: HashMap<String, Problem>,
    pub records: Vec<EpisodeRecord>,
}

impl LoadedRun {
    pub fn open(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let problems = load_dataset(&dir.join("problems.jsonl"))?.into_iter().map(|p| (p.id.clone(), p)).collect();
        let records = read_jsonl(&dir.join("results.jsonl"))?;
        Ok(Self { dir: dir.to_path_buf(), manifest, problems, records })
    }

    pub fn trace(&self, episode: &str) -> Result<Vec<TraceEvent>, HarnessError> {
        let path = trace_path(&self.dir, episode);
        let file = File::open(&path).map_err(io_err(&path))?;
        Ok(trace::read_ndjson(BufReader::new(file))?)
    }

    pub fn view(&self, episode: &str) -> Result<EpisodeView, HarnessError> {
        Ok(EpisodeView::from_events(&self.trace(episode)?))
    }

    pub fn record(&self, episode: &str) -> Result<&EpisodeRecord, HarnessError> {
        self.records.iter().find(|r| r.result.episode == episode).ok_or_else(|| HarnessError::MissingEpisode(episode.to_string()))
    }

    pub fn problem(&self, id: &str) -> Result<&Problem, HarnessError> {
        self.problems.get(id).ok_or_else(|| HarnessError::MissingEpisode(id.to_string()))
    }

    pub fn predictions(&self) -> Vec<PredictionRecord> {
        self.records.iter().map(EpisodeRecord::prediction).collect()
    }
}

fn compare<T: PartialEq + std::fmt::Debug>(episode: &str, field: &'static str, recorded: &T, replayed: &T) -> Result<(), HarnessError> {
    if recorded == replayed {
        return Ok(());
    }
    Err(HarnessError::ReplayMismatch { episode: episode.to_string(), field, recorded: format!("{recorded:?}"), replayed: format!("{replayed:?}") })
}

/// Re-executes the episode of `trace` against its recorded transcript and
/// checks that answer, value, and ledger summary come out identical.
pub fn replay(trace: &Path) -> Result<EpisodeResult, HarnessError> {
    let episode = trace.file_stem().and_then(|s| s.to_str()).ok_or_else(|| HarnessError::MissingEpisode(trace.display().to_string()))?;
    let run_dir = trace.parent().and_then(Path::parent).ok_or_else(|| HarnessError::MissingEpisode(episode.to_string()))?;
    let run = LoadedRun::open(run_dir)?;
    let recorded = run.record(episode)?.clone();
    let problem = run.problem(&recorded.result.problem_id)?;
    let backend = ReplayBackend::from_file(&transcript_path(run_dir, episode))?;
    let (replayed, _) = execute_episode(&backend, problem, recorded.result.seed, &run.manifest.config);
    let (a, b) = (&recorded.result, &replayed.result);
    compare(episode, "answer", &a.answer, &b.answer)?;
    compare(episode, "value", &a.best_value, &b.best_value)?;
    compare(episode, "ledger", &a.ledger, &b.ledger)?;
    Ok(replayed.result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub policy: String,
    pub episodes: usize,
    pub accuracy: f64,
    pub accuracy_ci: (f64, f64),
    pub coverage: f64,
    pub selective_accuracy: Option<f64>,
    pub mean_calls: f64,
    pub mean_tokens: f64,
    pub stopped_early_rate: f64,
    pub fallback_rate: f64,
    pub ece: Option<f64>,
    pub brier: Option<f64>,
    pub aurc: Option<f64>,
    pub repair: RescueHurt,
    pub token_efficiency: Option<TokenEfficiency>,
}

fn rate(records: &[EpisodeRecord], pred: impl Fn(&EpisodeRecord) -> bool) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64
}

/// Metric tables for a run; `reference` (typically a greedy run) feeds the
/// token-efficiency comparison. Writes `report.json` and
/// `selective_curve.csv` into the run directory.
pub fn report(run: &LoadedRun, reference: Option<&LoadedRun>, seed: u64) -> Result<Report, HarnessError> {
    let preds = run.predictions();
    if preds.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let answered: Vec<PredictionRecord> = preds.iter().filter(|p| !p.abstained()).cloned().collect();
    let curve = evaluation::selective_curve(&preds).ok();
    let mut pairs = Vec::new();
    for r in &run.records {
        pairs.extend(evaluation::repair_pairs(&run.trace(&r.result.episode)?, run.problem(&r.result.problem_id)?));
    }
    let ref_preds = reference.map(LoadedRun::predictions).unwrap_or_default();
    let n = preds.len() as f64;
    let out = Report {
        policy: run.manifest.config.policy_label(),
        episodes: preds.len(),
        accuracy: evaluation::accuracy(&preds).unwrap_or(0.0),
        accuracy_ci: evaluation::bootstrap_ci(|r| evaluation::accuracy(r).unwrap_or(0.0), &preds, evaluation::BOOTSTRAP_RESAMPLES, 0.95, seed)?,
        coverage: answered.len() as f64 / n,
        selective_accuracy: evaluation::accuracy(&answered),
        mean_calls: preds.iter().map(|p| p.calls as f64).sum::<f64>() / n,
        mean_tokens: preds.iter().map(|p| p.tokens as f64).sum::<f64>() / n,
        stopped_early_rate: rate(&run.records, |r| r.result.stopped_early),
        fallback_rate: rate(&run.records, |r| r.result.fallback_used),
        ece: evaluation::ece(&preds, evaluation::ECE_BINS).ok(),
        brier: evaluation::brier(&preds).ok(),
        aurc: evaluation::aurc(&preds).ok(),
        repair: evaluation::rescue_hurt(&pairs),
        token_efficiency: evaluation::token_efficiency(&preds, &ref_preds),
    };
    let path = run.dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&out).expect("report is serializable")).map_err(io_err(&path))?;
    let path = run.dir.join("selective_curve.csv");
    let mut csv = String::from("coverage,selective_accuracy\n");
    for (c, a) in curve.unwrap_or_default() {
        csv.push_str(&format!("{c},{a}\n"));
    }
    fs::write(&path, csv).map_err(io_err(&path))?;
    Ok(out)
}

/// Configuration of the relaxed-pruning shadow run paired with `cfg`.
pub fn shadow_config(cfg: &RunConfig) -> RunConfig {
    let mut shadow = cfg.clone();
    shadow.controller.tau_prune = 0.0;
    shadow.out_dir = cfg.out_dir.join("shadow");
    shadow
}

/// Pairs two runs episode by episode.
pub fn audit_runs(original: &LoadedRun, shadow: &LoadedRun, k: usize) -> Result<AuditSummary, HarnessError> {
    let mut views = Vec::new();
    for r in &original.records {
        let ep = &r.result.episode;
        views.push((original.problem(&r.result.problem_id)?, original.view(ep)?, shadow.view(ep)?));
    }
    let cases: Vec<AuditCase> = views.iter().map(|(p, o, s)| AuditCase { problem: p, original: o, shadow: s }).collect();
    Ok(evaluation::pruning_audit(&cases, k))
}

/// Runs `cfg` into `<out>/original` and its shadow into `<out>/shadow`, then audits.
pub fn audit(cfg: &RunConfig, k: usize) -> Result<AuditSummary, HarnessError> {
    let mut original = cfg.clone();
    original.out_dir = cfg.out_dir.join("original");
    let shadow = shadow_config(cfg);
    run_suite(&original)?;
    run_suite(&shadow)?;
    let summary = audit_runs(&LoadedRun::open(&original.out_dir)?, &LoadedRun::open(&shadow.out_dir)?, k)?;
    let path = cfg.out_dir.join("audit.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("audit is serializable")).map_err(io_err(&path))?;
    Ok(summary)
}

/// Failure triage of `run`, with an optional shadow run and any number of
/// budget-matched baseline runs over the same problems and seeds.
pub fn triage(run: &LoadedRun, shadow: Option<&LoadedRun>, baselines: &[LoadedRun], cfg: &TriageConfig) -> Result<TriageReport, HarnessError> {
    let baseline_correct: Vec<HashMap<(String, u64), bool>> =
        baselines.iter().map(|b| b.records.iter().map(|r| ((r.result.problem_id.clone(), r.result.seed), r.correct == Some(true))).collect()).collect();
    let mut owned = Vec::new();
    for r in &run.records {
        let ep = &r.result.episode;
        let view = run.view(ep)?;
        let shadow_view = shadow.map(|s| s.view(ep)).transpose()?;
        let key = (r.result.problem_id.clone(), r.result.seed);
        let flags: Vec<bool> = baseline_correct.iter().filter_map(|m| m.get(&key).copied()).collect();
        owned.push((run.problem(&r.result.problem_id)?, view, shadow_view, flags));
    }
    let cases: Vec<TriageCase> = owned.iter().map(|(p, v, s, f)| TriageCase { problem: p, view: v, shadow: s.as_ref(), baselines_correct: f }).collect();
    Ok(evaluation::failure_triage(&cases, cfg))
}

/// Accuracy per policy label, for quick comparisons across runs.
pub fn accuracy_table(runs: &[LoadedRun]) -> BTreeMap<String, f64> {
    runs.iter().map(|r| (r.manifest.config.policy_label(), evaluation::accuracy(&r.predictions()).unwrap_or(0.0))).collect()
}
