use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use marlin::metrics::{self, StructureReport};
use marlin::rca::{self, RwrConfig};
use marlin::stream::{self, ResultsWriter};
use marlin::synth::{self, Mechanism, SynthConfig};
use marlin::{Backend, Engine, EpisodeRecord, Error, Execution, Mode, OnlineConfig, StreamBatch, Variance};
use nalgebra::DMatrix;

#[derive(Parser, Debug)]
#[command(name = "marlin", version, about = "Online causal discovery over non-stationary streams", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stream and its ground-truth graphs.
    Synth(SynthArgs),
    /// Learn one graph per batch of a stream.
    Run(RunArgs),
    /// Score results against ground truth, one row per state.
    Eval(EvalArgs),
    /// Rank root causes of a fault window on an estimated graph.
    Rca(RcaArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Injected noise edges per non-final state, in percent.
    #[arg(long, default_value_t = 1.0)]
    e: f64,
    #[arg(long, default_value = "LG")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
    #[arg(long, default_value_t = 500)]
    n_per_state: usize,
    #[arg(long, default_value_t = 50)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, overrides_with = "no_standardize")]
    standardize: bool,
    #[arg(long)]
    no_standardize: bool,
    /// Stream output (JSON Lines, `-` for stdout).
    #[arg(long, default_value = "stream.jsonl")]
    output: PathBuf,
    #[arg(long, default_value = "truth.json")]
    truth: PathBuf,
    /// Also write the stream as CSV plus a row-range sidecar.
    #[arg(long, requires = "sidecar")]
    csv: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreArg {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VarianceArg {
    PerNode,
    Shared,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExecutionArg {
    Sequential,
    Parallel,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value = "marlin")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.98)]
    xi_threshold: f64,
    #[arg(long, default_value_t = 64)]
    episodes: usize,
    /// Actions sampled per episode.
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 5e-4)]
    actor_lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    critic_lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "linear")]
    score: ScoreArg,
    #[arg(long, value_enum, default_value = "per-node")]
    variance: VarianceArg,
    #[arg(long, value_enum, default_value = "parallel")]
    execution: ExecutionArg,
    /// Report zero wall time so that outputs are reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    /// Input stream (JSON Lines, `-` for stdin), or CSV when `--sidecar` is given.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Results output (JSON Lines, `-` for stdout).
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Print per-state reports as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RcaArgs {
    #[arg(long)]
    results: PathBuf,
    /// State whose final estimate is used; defaults to the last state.
    #[arg(long)]
    state: Option<usize>,
    /// Normal-operation window as a JSON Lines stream.
    #[arg(long)]
    normal: PathBuf,
    /// Fault window as a JSON Lines stream.
    #[arg(long)]
    fault: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    restart: f64,
    /// True root causes; enables ranking metrics.
    #[arg(long, value_delimiter = ',')]
    roots: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    k: Vec<usize>,
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().map(|a| a.to_string_lossy().into_owned()).collect()) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Rca(a) => rca_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not a failure.
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn broken_pipe(e: &Error) -> bool {
    let mut cur: Option<&dyn std::error::Error> = Some(e);
    while let Some(err) = cur {
        if err.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) {
            return true;
        }
        if err.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()) == Some(io::ErrorKind::BrokenPipe) {
            return true;
        }
        cur = err.source();
    }
    false
}

/// Replaces `--config FILE` with the flags stored in `FILE`, a JSON object
/// keyed by long flag name. The inserted flags come right after the subcommand
/// so that explicit flags on the command line win.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => {
            let p = p.to_string();
            argv.remove(pos);
            p
        }
        None => {
            if pos + 1 >= argv.len() {
                return Err("--config needs a file".into());
            }
            argv.remove(pos);
            argv.remove(pos)
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
    let obj = value.as_object().ok_or_else(|| format!("{path}: expected a JSON object"))?;
    let mut flags = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => flags.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => flags.extend([flag, n.to_string()]),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                flags.extend([flag, joined.join(",")]);
            }
            serde_json::Value::Object(_) => return Err(format!("{path}: `{key}` must not be an object")),
        }
    }
    let insert_at = argv.iter().skip(1).position(|a| !a.starts_with('-')).map_or(argv.len(), |p| p + 2);
    argv.splice(insert_at..insert_at, flags);
    Ok(argv)
}

fn synth_cmd(a: SynthArgs) -> marlin::Result<()> {
    let standardize = if a.standardize {
        Some(true)
    } else if a.no_standardize {
        Some(false)
    } else {
        None
    };
    let cfg = SynthConfig {
        d: a.d,
        m: a.m,
        e: a.e,
        mechanism: a.mechanism,
        er_expected_degree: a.degree,
        n_per_state: a.n_per_state,
        batch_size: a.batch_size,
        seed: a.seed,
        noise_scale: a.noise_scale,
        standardize,
    };
    let (batches, truth) = synth::generate(&cfg)?;
    if a.output == Path::new("-") {
        stream::write_stream(&batches, io::stdout().lock())?;
    } else {
        stream::write_stream_file(&batches, &a.output)?;
    }
    stream::write_truth(&truth, &a.truth)?;
    if let (Some(csv), Some(sidecar)) = (a.csv, a.sidecar) {
        stream::write_csv_stream(&batches, &csv, &sidecar)?;
    }
    Ok(())
}

fn online_config(a: &RunArgs) -> OnlineConfig {
    let mut cfg = OnlineConfig {
        beta: a.beta,
        xi_threshold: a.xi_threshold,
        episodes_per_batch: a.episodes,
        samples_per_episode: a.samples,
        mode: a.mode,
        workers: a.workers,
        seed: a.seed,
        execution: match a.execution {
            ExecutionArg::Sequential => Execution::Sequential,
            ExecutionArg::Parallel => Execution::Parallel,
        },
        timing: !a.no_timing,
        ..Default::default()
    };
    cfg.score.backend = match a.score {
        ScoreArg::Linear => Backend::Linear,
        ScoreArg::Quadratic => Backend::Quadratic,
    };
    cfg.score.variance = match a.variance {
        VarianceArg::PerNode => Variance::PerNode,
        VarianceArg::Shared => Variance::Shared,
    };
    cfg.score.penalty_lambda1 = a.lambda1;
    cfg.score.penalty_lambda2 = a.lambda2;
    cfg.agent.gamma = a.gamma;
    cfg.agent.actor.lr = a.actor_lr;
    cfg.agent.critic.lr = a.critic_lr;
    cfg
}

fn run_cmd(a: RunArgs) -> marlin::Result<()> {
    let cfg = online_config(&a);
    let mut batches: Box<dyn Iterator<Item = marlin::Result<StreamBatch>>> = match &a.sidecar {
        Some(sidecar) => Box::new(stream::read_csv_stream(&a.input, sidecar)?.into_iter().map(Ok)),
        None => Box::new(stream::read_stream(&a.input)?),
    };
    let first = match batches.next() {
        Some(b) => b?,
        None => return Err(Error::Empty("input stream has no batches")),
    };
    let mut engine = Engine::new(cfg, first.x.ncols())?;
    let sink: Box<dyn Write> = if a.output == Path::new("-") {
        Box::new(io::stdout().lock())
    } else {
        Box::new(fs::File::create(&a.output).map_err(|e| Error::Io { context: a.output.display().to_string(), source: e })?)
    };
    let mut out = ResultsWriter::new(sink);
    out.write(&engine.process_batch(&first)?)?;
    for batch in batches {
        out.write(&engine.process_batch(&batch?)?)?;
    }
    Ok(())
}

/// Last record of every state, with the state's mean wall time.
fn final_per_state(records: &[EpisodeRecord]) -> Vec<(&EpisodeRecord, f64)> {
    let mut out: Vec<(&EpisodeRecord, f64)> = Vec::new();
    let mut start = 0;
    for i in 0..records.len() {
        if i + 1 == records.len() || records[i + 1].t != records[i].t {
            let span = &records[start..=i];
            let atb = span.iter().map(|r| r.wall_ms).sum::<f64>() / span.len() as f64;
            out.push((&records[i], atb));
            start = i + 1;
        }
    }
    out
}

fn eval_cmd(a: EvalArgs) -> marlin::Result<()> {
    let records = stream::read_results(&a.results)?;
    if records.is_empty() {
        return Err(Error::Empty("results file has no records"));
    }
    let truth = stream::read_truth(&a.truth)?;
    let mut rows: Vec<(usize, StructureReport)> = Vec::new();
    for (rec, atb) in final_per_state(&records) {
        let g = truth
            .graph(rec.t)
            .ok_or_else(|| Error::InvalidConfig(format!("truth has no graph for state {}", rec.t)))?;
        let mut report = metrics::structure_metrics(g, &rec.a_est, Some(&rec.edge_scores))?;
        report.atb_ms = atb;
        rows.push((rec.t, report));
    }
    let mut stdout = io::stdout().lock();
    let text = if a.json {
        let reports: Vec<_> = rows.iter().map(|(t, r)| serde_json::json!({ "t": t, "report": r })).collect();
        let mean = metrics::average(&rows.iter().map(|(_, r)| *r).collect::<Vec<_>>());
        serde_json::to_string_pretty(&serde_json::json!({ "states": reports, "mean": mean }))? + "\n"
    } else {
        metrics::summary_table(&rows)
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io { context: "stdout".into(), source: e })
}

fn stacked(path: &Path) -> marlin::Result<DMatrix<f64>> {
    let batches = stream::read_stream(path)?.collect::<marlin::Result<Vec<_>>>()?;
    let Some(first) = batches.first() else {
        return Err(Error::Empty("window stream has no batches"));
    };
    let d = first.x.ncols();
    let n: usize = batches.iter().map(|b| b.x.nrows()).sum();
    let mut x = DMatrix::zeros(n, d);
    let mut row = 0;
    for b in &batches {
        x.rows_mut(row, b.x.nrows()).copy_from(&b.x);
        row += b.x.nrows();
    }
    Ok(x)
}

fn rca_cmd(a: RcaArgs) -> marlin::Result<()> {
    let records = stream::read_results(&a.results)?;
    let finals = final_per_state(&records);
    let rec = match a.state {
        Some(t) => finals.iter().find(|(r, _)| r.t == t).map(|(r, _)| *r),
        None => finals.last().map(|(r, _)| *r),
    }
    .ok_or(Error::Empty("no estimate for the requested state"))?;
    let normal = stacked(&a.normal)?;
    let fault = stacked(&a.fault)?;
    if normal.ncols() != rec.a_est.d() {
        return Err(Error::DimensionMismatch(format!("windows have {} columns, graph has {} nodes", normal.ncols(), rec.a_est.d())));
    }
    let cfg = RwrConfig { restart_prob: a.restart, anomaly_scores: rca::anomaly_scores(&normal, &fault)?, ..Default::default() };
    let ranked = rca::rank_root_causes(&rec.a_est, &cfg)?;
    let order: Vec<usize> = ranked.iter().map(|r| r.node).collect();
    let ranking = if a.roots.is_empty() { None } else { Some(metrics::ranking_metrics(&order, &a.roots, &a.k)?) };
    let out = serde_json::json!({ "t": rec.t, "ranking": ranked, "metrics": ranking });
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?).map_err(|e| Error::Io { context: "stdout".into(), source: e })
}
