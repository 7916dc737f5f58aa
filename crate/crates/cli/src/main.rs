use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bornforge::compile::run_compile;
use bornforge::config::{save_config, RunConfig};
use bornforge::cost_sinkhorn::SinkhornOptions;
use bornforge::data::write_dataset;
use bornforge::kernels::Kernel;
use bornforge::metrics::bench;
use bornforge::train::run_training;
use bornforge::verify::oracle_suite;
use bornforge::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_CAPACITY: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_CHECK_FAILED: u8 = 6;

/// Train quantum circuit Ising Born machines by exact statevector simulation.
#[derive(Parser, Debug)]
#[command(name = "bornforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a Born machine on samples of a multi-mode target.
    Train,
    /// Fit a frozen-mixer QAOA circuit to a random IQP circuit.
    Compile,
    /// Check the distance inequalities on random distribution pairs.
    Bench {
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Compare the simulator, shift rules and cost gradients against dense references.
    OracleCheck,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for records and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for gradient and kernel evaluation.
    #[arg(long, global = true, env = "BORNFORGE_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    cost: Option<CostName>,
    #[arg(long, global = true)]
    kernel: Option<KernelName>,
    #[arg(long, global = true)]
    score: Option<ScoreName>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Number of qubits.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CostName {
    Mmd,
    Stein,
    Sinkhorn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelName {
    Gaussian,
    Hamming,
    Quantum,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreName {
    Exact,
    Identity,
    Spectral,
}

fn value_name(v: impl ValueEnum) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } | Error::Parse(_) | Error::Json(_) => EXIT_CONFIG,
            Error::Capacity(_) => EXIT_CAPACITY,
            Error::Io(_) | Error::Csv(_) => EXIT_IO,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        msg: msg.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        msg: format!("{}: {e}", path.display()),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Train => "train",
        Command::Compile => "compile",
        Command::Bench { .. } => "bench",
        Command::OracleCheck => "oracle-check",
    }
}

/// Cost object with an explicit `kind`, converting the shorthand string form.
fn cost_object<'a>(
    root: &'a mut Map<String, Value>,
    flag: &str,
) -> Result<&'a mut Map<String, Value>, Failure> {
    let cost = root
        .get_mut("cost")
        .ok_or_else(|| config_failure(format!("{flag} needs a cost (--cost or config)")))?;
    if let Value::String(name) = cost {
        *cost = json!({ "kind": name.clone() });
    }
    cost.as_object_mut()
        .ok_or_else(|| config_failure("config field `cost`: expected a name or an object"))
}

fn cost_kind(cost: &Map<String, Value>) -> &str {
    cost.get("kind").and_then(Value::as_str).unwrap_or("")
}

fn section<'a>(
    root: &'a mut Map<String, Value>,
    key: &str,
) -> Result<&'a mut Map<String, Value>, Failure> {
    root.entry(key)
        .or_insert_with(|| json!({}))
        .as_object_mut()
        .ok_or_else(|| config_failure(format!("config field `{key}`: expected an object")))
}

/// Merge command-line overrides into the raw config document.
fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let c = &cli.common;
    let mut doc = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| config_failure(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    let root = doc
        .as_object_mut()
        .ok_or_else(|| config_failure("config must be a JSON object"))?;
    let benchlike = matches!(cli.command, Command::Bench { .. } | Command::OracleCheck);
    root.insert("command".into(), json!(command_name(&cli.command)));

    if let Some(n) = c.n {
        if root.get("n") != Some(&json!(n)) {
            if let Some(Value::Object(data)) = root.get_mut("data") {
                data.remove("modes");
                data.remove("mode_count");
            }
            if let Some(Value::Object(compile)) = root.get_mut("compile") {
                compile.remove("target");
            }
        }
        root.insert("n".into(), json!(n));
    }
    if let Some(seed) = c.seed {
        root.insert("seed".into(), json!(seed));
    }
    if let Some(epochs) = c.epochs {
        root.insert("epochs".into(), json!(epochs));
    }
    if let Some(out) = &c.out {
        root.insert("output_dir".into(), json!(out));
    }
    if let Some(threads) = c.threads {
        root.insert("threads".into(), json!(threads));
    }
    if let Some(cost) = c.cost {
        root.insert("cost".into(), json!(value_name(cost)));
    }
    if benchlike && !root.contains_key("cost") {
        root.insert("cost".into(), json!("mmd"));
    }
    if let Command::Bench { pairs: Some(pairs) } = cli.command {
        section(root, "bench")?.insert("pairs".into(), json!(pairs));
    }
    if let Some(kernel) = c.kernel {
        let kernel = json!({ "kind": value_name(kernel) });
        if benchlike {
            section(root, "bench")?.insert("kernel".into(), kernel);
        } else {
            let cost = cost_object(root, "--kernel")?;
            if cost_kind(cost) == "sinkhorn" {
                return Err(config_failure(
                    "--kernel does not apply to the sinkhorn cost",
                ));
            }
            cost.insert("kernel".into(), kernel);
        }
    }
    if let Some(score) = c.score {
        let cost = cost_object(root, "--score")?;
        if cost_kind(cost) != "stein" {
            return Err(config_failure("--score only applies to the stein cost"));
        }
        if matches!(score, ScoreName::Identity) && !cost.contains_key("policy") {
            cost.insert("policy".into(), json!("drop_pair"));
        }
        cost.insert("score".into(), json!({ "method": value_name(score) }));
    }
    if let Some(eps) = c.epsilon {
        if benchlike {
            section(root, "bench")?.insert("epsilon".into(), json!(eps));
        } else {
            let cost = cost_object(root, "--epsilon")?;
            if cost_kind(cost) != "sinkhorn" {
                return Err(config_failure(
                    "--epsilon only applies to the sinkhorn cost",
                ));
            }
            cost.insert("epsilon".into(), json!(eps));
        }
    }
    Ok(RunConfig::from_json(&doc.to_string())?)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    save_config(&dir.join("config.json"), cfg)?;
    Ok(dir)
}

fn train(cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let run = run_training(cfg)?;
    let dir = prepare_output(cfg)?;
    let record = serde_json::to_string_pretty(&run.record).map_err(Error::from)? + "\n";
    write_text(&dir.join("record.json"), &record)?;
    write_text(&dir.join("trace.csv"), &run.record.trace_csv()?)?;
    write_dataset(&dir.join("dataset.txt"), &run.header, &run.dataset)?;
    println!(
        "{} on {} qubits: tv {:.4} -> {:.4} over {} epochs; wrote {}",
        cfg.cost.name(),
        cfg.n,
        run.record.initial_tv(),
        run.record.final_tv(),
        cfg.epochs,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn compile(cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let run = run_compile(cfg)?;
    let report = &run.report;
    let dir = prepare_output(cfg)?;
    let doc = serde_json::to_string_pretty(report).map_err(Error::from)? + "\n";
    write_text(&dir.join("compile.json"), &doc)?;
    write_text(&dir.join("trace.csv"), &report.record.trace_csv()?)?;
    write_dataset(&dir.join("dataset.txt"), &run.header, &run.dataset)?;
    println!(
        "{:<10} {:>10} {:>10} {:>10}",
        "param", "target", "initial", "learned"
    );
    for row in &report.parameters {
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4}",
            row.name, row.target, row.initial, row.learned
        );
    }
    println!("{:<10} {:>10} {:>10}", "bits", "target", "learned");
    for row in &report.probabilities {
        println!(
            "{:<10} {:>10.4} {:>10.4}",
            row.bits, row.target, row.learned
        );
    }
    println!(
        "tv {:.4} -> {:.4}; wrote {}",
        report.initial_tv,
        report.final_tv,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_report(cli: &Cli, name: &str, doc: Value) -> Result<(), Failure> {
    if let Some(dir) = &cli.common.out {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        write_text(
            &dir.join(name),
            &(serde_json::to_string_pretty(&doc).map_err(Error::from)? + "\n"),
        )?;
    }
    Ok(())
}

fn run_bench(cli: &Cli, cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let kernel = Kernel::new(&cfg.bench.kernel, cfg.n)?;
    let report = bench(
        cfg.n,
        cfg.bench.pairs,
        cfg.seed,
        cfg.bench.epsilon,
        &kernel,
        SinkhornOptions::default(),
    )?;
    println!(
        "{} pairs on {} qubits, epsilon {}, {} kernel",
        report.pairs, report.n, report.epsilon, report.kernel
    );
    for s in &report.summaries {
        let status = if s.violated > 0 { "VIOLATED" } else { "ok" };
        println!(
            "{:<32} holds {:>5} violated {:>5} n/a {:>5} worst lhs-rhs {:>12.3e} {status}",
            s.name, s.holds, s.violated, s.not_applicable, s.worst_margin
        );
    }
    write_report(
        cli,
        "bench.json",
        serde_json::to_value(&report).map_err(Error::from)?,
    )?;
    Ok(if report.all_hold() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn oracle_check(cli: &Cli, cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let report = oracle_suite(cfg.n, cfg.seed)?;
    for s in &report.suites {
        let status = if s.passed { "ok" } else { "FAILED" };
        println!(
            "{:<44} cases {:>3} max deviation {:>10.3e} tolerance {:>8.1e} {status}",
            s.name, s.cases, s.max_deviation, s.tolerance
        );
    }
    write_report(
        cli,
        "oracle.json",
        serde_json::to_value(&report).map_err(Error::from)?,
    )?;
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn run(cli: &Cli) -> Result<ExitCode, Failure> {
    let cfg = build_config(cli)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_RUNTIME,
                msg: format!("thread pool: {e}"),
            })?;
    }
    match cli.command {
        Command::Train => train(&cfg),
        Command::Compile => compile(&cfg),
        Command::Bench { .. } => run_bench(cli, &cfg),
        Command::OracleCheck => oracle_check(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("bornforge: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
