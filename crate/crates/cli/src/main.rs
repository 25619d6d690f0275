use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use metareason::backends::SimWorld;
use metareason::controller::RepairMode;
use metareason::evaluation::TriageConfig;
use metareason::harness::{self, LoadedRun, Policy, RunConfig};

#[derive(Parser)]
#[command(name = "metareason", version, about = "Budgeted metacognitive reasoning runs and analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a policy over a dataset and persist results and traces.
    Run(RunArgs),
    /// Re-execute one recorded episode from its transcript and check it matches.
    Replay {
        /// Path to `traces/<episode>.jsonl` inside a run directory.
        trace: PathBuf,
    },
    /// Pruning audit against a relaxed-pruning shadow run.
    Audit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Failure triage of a finished run.
    Triage {
        run: PathBuf,
        #[arg(long)]
        shadow: Option<PathBuf>,
        /// Budget-matched baseline runs over the same problems and seeds.
        #[arg(long = "baseline")]
        baselines: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        entropy_threshold: f64,
    },
    /// Calibration, selective-risk, repair, and efficiency metrics of a run.
    Report {
        run: PathBuf,
        /// Reference run for token efficiency, usually greedy.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a simulated dataset with gold answers.
    SimDataset {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; defaults apply to anything omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    fallback: bool,
    #[arg(long, value_parser = parse_repair)]
    repair_mode: Option<RepairMode>,
    #[arg(long)]
    tau_prune: Option<f64>,
    #[arg(long)]
    tau_abs: Option<f64>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown policy {s}"))
}

fn parse_repair(s: &str) -> Result<RepairMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown repair mode {s}"))
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.policy {
            cfg.policy = p;
        }
        if let Some(b) = self.budget {
            cfg.controller.budget = b;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(m) = self.repair_mode {
            cfg.controller.repair_mode = m;
        }
        if let Some(t) = self.tau_prune {
            cfg.controller.tau_prune = t;
        }
        if let Some(t) = self.tau_abs {
            cfg.controller.tau_abs = t;
        }
        cfg.fallback |= self.fallback;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn open(dir: &Path) -> Result<LoadedRun> {
    LoadedRun::open(dir).with_context(|| format!("opening run {}", dir.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let out = harness::run_suite(&cfg)?;
            let m = &out.manifest;
            println!(
                "{}: {} episodes, {} answered, {} correct, {} hard failures -> {}",
                cfg.policy_label(),
                m.episodes,
                m.answered,
                m.correct,
                m.hard_failures,
                cfg.out_dir.display()
            );
            if m.hard_failures > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Replay { trace } => {
            let result = harness::replay(&trace).with_context(|| format!("replaying {}", trace.display()))?;
            println!("replay ok: {}", result.episode);
            print_json(&result)?;
        }
        Command::Audit { run, k } => {
            let cfg = run.resolve()?;
            let summary = harness::audit(&cfg, k)?;
            print_json(&serde_json::json!({
                "pruned": summary.pruned,
                "precision": summary.precision,
                "false_prune_rate": summary.false_prune_rate,
                "oracle_gap": summary.oracle_gap,
            }))?;
        }
        Command::Triage { run, shadow, baselines, entropy_threshold } => {
            let run = open(&run)?;
            let shadow = shadow.as_deref().map(open).transpose()?;
            let baselines = baselines.iter().map(|b| open(b)).collect::<Result<Vec<_>>>()?;
            let cfg = TriageConfig { tau_stop: run.manifest.config.controller.tau_stop, entropy_threshold, ..TriageConfig::default() };
            print_json(&harness::triage(&run, shadow.as_ref(), &baselines, &cfg)?)?;
        }
        Command::Report { run, reference, seed } => {
            let run = open(&run)?;
            let reference = reference.as_deref().map(open).transpose()?;
            print_json(&harness::report(&run, reference.as_ref(), seed)?)?;
        }
        Command::SimDataset { n, out } => {
            harness::write_dataset(&out, &SimWorld::default().problems(n))?;
            println!("wrote {n} problems to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
