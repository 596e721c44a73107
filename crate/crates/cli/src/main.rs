//! Command-line driver: paired benchmark training, the frequency probe,
//! the kernel probe, acceptance checks and metric reports.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{KernelProbeConfig, RunConfig, SpectralRunConfig};
use xlstm_pinn::model::{Architecture, GateMode, ModelConfig, NetworkParams};
use xlstm_pinn::problems::{sample, Problem};
use xlstm_pinn::report::{self, emit_table, parse_table, Artifacts};
use xlstm_pinn::spectral::{frequency_benchmark, LinearizationProbe};
use xlstm_pinn::training::{train, train_paired, RunStatus, TrainOutcome};
use xlstm_pinn::verify::{self, select_suites, summary_json, VerifyConfig};

/// Environment variable that overrides the output root.
const OUT_ENV: &str = "XLSTM_PINN_OUT";

#[derive(Parser, Debug)]
#[command(name = "xlstm-pinn", version, about = "xLSTM-PINN and baseline PINN solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on one benchmark problem, alone or paired with the matched baseline.
    Train(TrainArgs),
    /// Plane-wave frequency sweep for both models, plus the kernel probe.
    Spectral(SpectralArgs),
    /// Linearized kernel lift of one untrained block.
    KernelProbe(KernelArgs),
    /// Run the acceptance suites.
    Verify(VerifyArgs),
    /// Collect every metrics table under the output root.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root (default `out`, or the XLSTM_PINN_OUT variable).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    problem: Option<String>,
    /// Train the xLSTM model and its parameter-matched baseline.
    #[arg(long)]
    paired: bool,
    /// Model for single runs: `xlstm-pinn` or `pinn`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Adam iterations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    micro_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct SpectralArgs {
    #[command(flatten)]
    common: Common,
    /// Probe wavenumbers 1..=kmax.
    #[arg(long)]
    kmax: Option<u32>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kmax: Option<u32>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    micro_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature sample points on [-1, 1].
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// JSON file with the frequency and benchmark settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only these suites (repeatable).
    #[arg(long)]
    only: Vec<String>,
    /// Checkpoint to load and evaluate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write the JSON summary here as well as to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// A run that finished with non-finite values; artifacts were still written.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct RunFailure(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {e:#}");
                eprintln!("see `xlstm-pinn --help` for usage");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Spectral(a) => cmd_spectral(a),
        Command::KernelProbe(a) => cmd_kernel_probe(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn out_root(flag: Option<PathBuf>, from_config: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or(from_config)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn usage<T>(r: xlstm_pinn::Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(e.to_string()).into())
}

fn write(root: &Path, files: &Artifacts) -> Result<()> {
    report::write_artifacts(root, files).with_context(|| format!("writing artifacts below {}", root.display()))
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg = match &a.common.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => {
            let name = a.problem.as_deref().ok_or_else(|| UsageError("--problem is required".into()))?;
            RunConfig::for_problem(usage(Problem::from_name(name))?)
        }
    };
    if let Some(name) = &a.problem {
        let problem = usage(Problem::from_name(name))?;
        if problem != cfg.problem {
            cfg = RunConfig { problem, ..cfg };
        }
    }
    let dim = cfg.problem.spec().dim();
    cfg.model.input_dim = dim;
    cfg.paired |= a.paired;
    if let Some(m) = &a.model {
        cfg.single_model = match m.as_str() {
            "xlstm-pinn" | "xlstm" => Architecture::Xlstm,
            "pinn" | "baseline" => Architecture::Baseline,
            other => return Err(UsageError(format!("unknown model `{other}` (expected xlstm-pinn or pinn)")).into()),
        };
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.budget {
        cfg.train.iterations = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.optimizer.learning_rate = lr;
    }
    if let Some(w) = a.width {
        cfg.model.width = w;
    }
    if let Some(l) = a.blocks {
        cfg.model.blocks = l;
    }
    if let Some(s) = a.micro_steps {
        cfg.model.micro_steps = s;
    }
    let root = out_root(a.common.out, cfg.out.clone());
    cfg.out = None;
    usage(cfg.model.validate())?;
    if cfg.train.iterations == 0 {
        return Err(UsageError("--budget must be at least 1".into()).into());
    }

    let spec = cfg.problem.spec();
    let snapshot = serde_json::to_value(&cfg)?;
    let sets = sample(&spec, cfg.seed);
    let outcomes: Vec<TrainOutcome> = if cfg.paired {
        let pair = train_paired(&spec, &cfg.model, &cfg.train, cfg.seed).map_err(|e| match e {
            xlstm_pinn::Error::Config(m) => UsageError(m).into(),
            other => anyhow::Error::from(other),
        })?;
        vec![pair.xlstm, pair.baseline]
    } else {
        let model = match cfg.single_model {
            Architecture::Xlstm => cfg.model.clone(),
            Architecture::Baseline => cfg.model.matched_baseline(),
        };
        let net = NetworkParams::init(&model, cfg.seed)?;
        vec![train(&spec, net, &sets, &cfg.train, cfg.seed)?]
    };
    let refs: Vec<&TrainOutcome> = outcomes.iter().collect();
    let (files, records) = report::run_artifacts(&spec, &refs, &sets, &snapshot)?;
    write(&root, &files)?;
    let (_, text) = emit_table(&records)?;
    print!("{text}");
    println!("artifacts written below {}", root.join("runs").join(&spec.name).display());
    let aborted: Vec<String> = outcomes
        .iter()
        .filter_map(|o| match &o.record.status {
            RunStatus::Aborted { iteration, reason } => {
                Some(format!("{} stopped at iteration {iteration}: {reason}", o.record.model.architecture.tag()))
            }
            RunStatus::Completed => None,
        })
        .collect();
    if aborted.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(RunFailure(aborted.join("; ")).into())
    }
}

fn cmd_spectral(a: SpectralArgs) -> Result<ExitCode> {
    let mut cfg = match &a.common.config {
        Some(p) => read_json::<SpectralRunConfig>(p)?,
        None => SpectralRunConfig::default(),
    };
    if let Some(k) = a.kmax {
        if k == 0 {
            return Err(UsageError("--kmax must be at least 1".into()).into());
        }
        cfg.frequency.wavenumbers = (1..=k).map(f64::from).collect();
    }
    if let Some(s) = a.seeds {
        cfg.frequency.seeds = s;
    }
    if let Some(b) = a.budget {
        cfg.frequency.train.iterations = b;
    }
    if let Some(t) = a.threshold {
        cfg.frequency.threshold = t;
    }
    let root = out_root(a.common.out, cfg.out.take());
    let report = usage_on_config(frequency_benchmark(&cfg.frequency))?;
    let mut files = report::spectral_artifacts(&report)?;
    let probe_cfg = KernelProbeConfig { wavenumbers: cfg.frequency.wavenumbers.clone(), ..cfg.kernel.clone() };
    let probe = kernel_probe(&probe_cfg)?;
    files.insert("spectral/kernel.csv".into(), probe.to_csv().into_bytes());
    files.insert("spectral/config.json".into(), serde_json::to_vec_pretty(&cfg)?);
    write(&root, &files)?;
    print!("{}", report.to_csv());
    let k = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |k| k.to_string());
    println!("k*_xlstm = {}, k*_base = {}", k(report.k_star_xlstm), k(report.k_star_base));
    for (k, seed, arch, reason) in &report.dropped {
        eprintln!("dropped k={k} seed={seed} {}: {reason}", arch.tag());
    }
    Ok(ExitCode::SUCCESS)
}

fn usage_on_config<T>(r: xlstm_pinn::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        xlstm_pinn::Error::Config(m) => UsageError(m).into(),
        other => anyhow::Error::from(other),
    })
}

fn kernel_probe(cfg: &KernelProbeConfig) -> Result<LinearizationProbe> {
    let model = ModelConfig {
        input_gate: GateMode::Sigmoid,
        forget_gate: GateMode::Sigmoid,
        ..ModelConfig::xlstm(1, 1, cfg.width, cfg.micro_steps)
    };
    let net = usage_on_config(NetworkParams::init(&model, cfg.seed))?;
    usage_on_config(LinearizationProbe::build(&net, 0, cfg.samples, &cfg.wavenumbers, cfg.phase))
}

fn cmd_kernel_probe(a: KernelArgs) -> Result<ExitCode> {
    let mut cfg = match &a.common.config {
        Some(p) => read_json::<KernelProbeConfig>(p)?,
        None => KernelProbeConfig::default(),
    };
    if let Some(k) = a.kmax {
        if k == 0 {
            return Err(UsageError("--kmax must be at least 1".into()).into());
        }
        cfg.wavenumbers = (1..=k).map(f64::from).collect();
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(s) = a.micro_steps {
        cfg.micro_steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.samples {
        cfg.samples = n;
    }
    let root = out_root(a.common.out, cfg.out.take());
    let probe = kernel_probe(&cfg)?;
    let mut files = Artifacts::new();
    files.insert("spectral/kernel.csv".into(), probe.to_csv().into_bytes());
    files.insert("spectral/kernel-config.json".into(), serde_json::to_vec_pretty(&cfg)?);
    write(&root, &files)?;
    print!("{}", probe.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<VerifyConfig>(p)?,
        None => VerifyConfig::default(),
    };
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint.clone();
    }
    let mut suites = usage(select_suites(&a.only))?;
    if a.only.is_empty() && cfg.checkpoint.is_none() {
        suites.retain(|s| *s != verify::Suite::Checkpoint);
    }
    let mut outcomes = Vec::with_capacity(suites.len());
    for s in suites {
        let o = verify::run_suite(s, &cfg);
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let summary = serde_json::to_string_pretty(&summary_json(&outcomes))?;
    println!("{summary}");
    if let Some(p) = &a.summary {
        std::fs::write(p, &summary).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(if outcomes.iter().all(|o| o.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let root = out_root(a.out, None);
    let runs = root.join("runs");
    let mut records = Vec::new();
    let mut problems: Vec<_> = std::fs::read_dir(&runs)
        .with_context(|| format!("no runs below {}", runs.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("metrics.csv").is_file())
        .collect();
    problems.sort();
    for dir in problems {
        let text = std::fs::read_to_string(dir.join("metrics.csv"))?;
        records.extend(parse_table(&text).with_context(|| format!("parsing {}", dir.display()))?);
    }
    let (csv, text) = emit_table(&records)?;
    let mut files = Artifacts::new();
    files.insert("report/metrics.csv".into(), csv.into_bytes());
    files.insert("report/metrics.txt".into(), text.clone().into_bytes());
    write(&root, &files)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
