//! `nva`: run optimizers and benchmarks from experiment files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nva::bench::{
    found_modes, read_summary, run_benchmark, write_summary, write_trajectories, write_traces, MetricsReport,
    SummaryRow,
};
use nva::experiment::{list_problems, preset, preset_names, resolve_problem, ConfigError, ExperimentConfig};
use nva::optimizers::run;

#[derive(Parser)]
#[command(name = "nva", version, about = "Multimodal optimization with annealed Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Experiment file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Root seed; overrides the file.
    #[arg(long, env = "NVA_SEED")]
    seed: Option<u64>,
    /// Results directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single run; prints the final mixture and which modes it found.
    Optimize {
        #[command(flatten)]
        source: Source,
    },
    /// Replicated runs; writes traces, report.json and summary.csv.
    Bench {
        #[command(flatten)]
        source: Source,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Registered problems with dimension and mode counts.
    ListProblems,
    /// Prints a preset as TOML.
    ShowPreset { name: Option<String> },
    /// Aggregates the summary.csv files under a results directory.
    Report { dir: PathBuf },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(source: &Source) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Failure::Config("pass --config or --preset".into())),
    };
    if let Some(seed) = source.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_root(source: &Source, cfg: &ExperimentConfig) -> PathBuf {
    source
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn optimize(source: &Source) -> Result<(), Failure> {
    let cfg = load(source)?;
    let problem = resolve_problem(&cfg.problem)?;
    let run_cfg = cfg.run_config(&problem, cfg.k)?;
    let rule = cfg.detection_rule(&problem);
    let trace = run(&problem.objective, &run_cfg).map_err(|e| match e {
        nva::optimizers::OptimizerError::Config(m) => Failure::Config(m),
        nva::optimizers::OptimizerError::Estimation(e) => Failure::Config(e.to_string()),
        other => Failure::Run(other.to_string()),
    })?;
    println!("problem {} algorithm {} K={} B={} T={} seed={}", problem.id, cfg.algorithm.name(), cfg.k, cfg.b, cfg.t, cfg.seed);
    for (k, (m, w)) in trace.final_means.iter().zip(&trace.final_weights).enumerate() {
        println!("component {k}: weight {w:.6} mean {}", fmt_vec(m.iter().cloned()));
    }
    let found = found_modes(&problem, &trace.final_means, &rule);
    for (j, mode) in problem.modes.iter().enumerate() {
        println!(
            "mode {j} ({}) at {}: {}",
            if mode.is_global { "global" } else { "local" },
            fmt_vec(mode.location.iter().cloned()),
            if found.contains(&j) { "found" } else { "missed" }
        );
    }
    println!(
        "evaluations: value {} gradient {} hessian {}",
        trace.counts.value, trace.counts.gradient, trace.counts.hessian
    );
    if source.out.is_some() || cfg.out_dir.is_some() {
        let dir = out_root(source, &cfg).join(cfg.name());
        fs::create_dir_all(&dir).map_err(|e| Failure::Run(e.to_string()))?;
        fs::write(dir.join("run-0.jsonl"), trace.to_jsonl()).map_err(|e| Failure::Run(e.to_string()))?;
    }
    Ok(())
}

fn bench(source: &Source, jobs: usize) -> Result<(), Failure> {
    let cfg = load(source)?;
    let problem = resolve_problem(&cfg.problem)?;
    let rule = cfg.detection_rule(&problem);
    let dir = out_root(source, &cfg).join(cfg.name());
    let io = |e: nva::bench::BenchError| Failure::Run(e.to_string());
    fs::create_dir_all(&dir).map_err(|e| Failure::Run(e.to_string()))?;
    let ks = cfg.k_values();
    let sweep = cfg.sweep.is_some();
    let mut rows = Vec::new();
    let mut reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    let mut any_failure = false;
    for k in ks {
        let run_cfg = cfg.run_config(&problem, k)?;
        let start = Instant::now();
        let outcome = run_benchmark(&problem, &run_cfg, cfg.replicates, &rule, jobs).map_err(|e| match e {
            nva::bench::BenchError::Config(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        })?;
        let tag = sweep.then(|| format!("K{k}"));
        write_traces(&dir, &outcome.runs, tag.as_deref()).map_err(io)?;
        if cfg.trajectories {
            let name = match &tag {
                Some(t) => format!("trajectories-{t}.csv"),
                None => "trajectories.csv".to_string(),
            };
            write_trajectories(&dir.join(name), &outcome.runs).map_err(io)?;
        }
        let r = &outcome.report;
        println!(
            "{} {} K={k} H={} gpr={:.3} apr={:.3} gsr={:.3} failures={} ({:.1}s)",
            cfg.name(),
            cfg.algorithm.name(),
            r.h,
            r.gpr,
            r.apr,
            r.gsr,
            r.failures.len(),
            start.elapsed().as_secs_f64()
        );
        for (rep, msg) in &r.failures {
            eprintln!("replicate {rep} failed: {msg}");
        }
        any_failure |= !r.failures.is_empty();
        rows.push(SummaryRow::new(cfg.name(), &run_cfg, &rule, r));
        reports.insert(format!("K{k}"), outcome.report);
    }
    let report_json = if sweep {
        serde_json::to_string_pretty(&reports)
    } else {
        serde_json::to_string_pretty(reports.values().next().expect("one K"))
    }
    .map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(dir.join("report.json"), report_json).map_err(|e| Failure::Run(e.to_string()))?;
    write_summary(&dir.join("summary.csv"), &rows).map_err(io)?;
    if any_failure {
        return Err(Failure::Run("some replicates aborted; see report.json".into()));
    }
    Ok(())
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.csv") {
            out.push(p);
        }
    }
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let mut files = Vec::new();
    find_summaries(dir, &mut files).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    let mut rows: Vec<SummaryRow> = Vec::new();
    for f in &files {
        rows.extend(read_summary(f).map_err(|e| Failure::Run(format!("{}: {e}", f.display())))?);
    }
    if rows.is_empty() {
        return Err(Failure::Run(format!("no results in {}", dir.display())));
    }
    println!(
        "{:<22} {:<10} {:>3} {:>3} {:>6} {:>4} {:>7} {:>6} {:>6} {:>6} {:>12} {:>12} {:>12}",
        "experiment", "algorithm", "K", "B", "T", "H", "epsilon", "gpr", "apr", "gsr", "feval_l", "feval_grad", "feval_hess"
    );
    let (mut l, mut g, mut h) = (0u64, 0u64, 0u64);
    for r in &rows {
        println!(
            "{:<22} {:<10} {:>3} {:>3} {:>6} {:>4} {:>7} {:>6.3} {:>6.3} {:>6.3} {:>12} {:>12} {:>12}",
            r.experiment, r.algorithm, r.k, r.b, r.t, r.h, r.epsilon, r.gpr, r.apr, r.gsr, r.feval_l, r.feval_grad, r.feval_hess
        );
        l += r.feval_l;
        g += r.feval_grad;
        h += r.feval_hess;
    }
    println!("total evaluations: value {l} gradient {g} hessian {h} over {} rows", rows.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize { source } => optimize(source),
        Command::Bench { source, jobs } => bench(source, *jobs),
        Command::ListProblems => {
            println!("{:<20} {:>3} {:>3} {:>3}  preset", "id", "d", "I", "J");
            for p in list_problems() {
                println!("{:<20} {:>3} {:>3} {:>3}  {}", p.id, p.dim, p.n_global, p.n_modes, p.preset);
            }
            println!("gmm-file:<path>      mixture JSON with weights, means, precisions");
            Ok(())
        }
        Command::ShowPreset { name: None } => {
            for n in preset_names() {
                println!("{n}");
            }
            Ok(())
        }
        Command::ShowPreset { name: Some(n) } => preset(n).map(|c| print!("{}", c.to_toml())).map_err(Failure::from),
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
