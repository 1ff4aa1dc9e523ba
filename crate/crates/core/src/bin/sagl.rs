use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use sagl::harness::requests::{answer, OracleRequest};
use sagl::harness::{evaluate, matrix, train, Against, ExperimentConfig, RunSummary, OUT_DIR_ENV};
use sagl::models::io::Checkpoint;
use sagl::Error;

#[derive(Parser)]
#[command(name = "sagl", version, about = "Stochastic-approximation learners with exact oracles")]
struct Cli {
    /// Override the seed of every config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "runs")]
    out_dir: PathBuf,
    /// Override the logging interval of every config.
    #[arg(long, global = true)]
    log_every: Option<u64>,
    /// Independent configs to run concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more experiment configs.
    Train {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Compare a checkpoint with the ground truth or the training data.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "truth")]
        against: AgainstArg,
    },
    /// Answer an oracle request given inline or as a JSON file.
    Oracle { request: String },
    /// Print the learner matrix.
    Matrix,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgainstArg {
    Truth,
    Data,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Diverged { .. } | Error::NonFinite { .. }) => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn report(e: &anyhow::Error) {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(lines)) => {
            eprintln!("error: invalid configuration");
            for l in lines.lines() {
                eprintln!("  {l}");
            }
        }
        _ => eprintln!("error: {e:#}"),
    }
}

fn load_config(path: &Path, cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("<json>: {e}")))?;
    if let Some(obj) = v.as_object_mut() {
        if let Some(s) = cli.seed {
            obj.insert("seed".into(), s.into());
        }
        if let Some(n) = cli.log_every {
            let run = obj.entry("run").or_insert_with(|| Value::Object(Default::default()));
            if let Some(r) = run.as_object_mut() {
                r.insert("log_every".into(), n.into());
            }
        }
    }
    Ok(ExperimentConfig::from_value(v)?)
}

fn summary_line(s: &RunSummary) -> String {
    let kl = s
        .final_kl()
        .map(|v| format!("{v:.5}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "{}: {} steps in {:.1}s, kl_to_truth {kl}, metrics {}",
        s.name,
        s.steps,
        s.seconds,
        s.metrics.display()
    )
}

fn run_train(cli: &Cli, paths: &[PathBuf]) -> u8 {
    let mut cfgs = Vec::new();
    let mut worst = 0;
    for p in paths {
        match load_config(p, cli) {
            Ok(c) => cfgs.push(c),
            Err(e) => {
                eprintln!("{}:", p.display());
                report(&e);
                worst = worst.max(exit_code(&e));
            }
        }
    }
    if worst != 0 {
        return worst;
    }
    let mut dirs: Vec<_> = cfgs.iter().map(|c| sagl::harness::run::run_dir(c, &cli.out_dir)).collect();
    dirs.sort();
    if dirs.windows(2).any(|w| w[0] == w[1]) {
        eprintln!("error: two configs write to the same run directory");
        return EXIT_CONFIG;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<RunSummary>>>> = Mutex::new((0..cfgs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..cli.jobs.clamp(1, cfgs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cfgs.len() {
                    break;
                }
                let r = train(&cfgs[i], &cli.out_dir).map_err(anyhow::Error::from);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    for (cfg, r) in cfgs.iter().zip(results.into_inner().unwrap()) {
        match r.expect("every config runs") {
            Ok(s) => println!("{}", summary_line(&s)),
            Err(e) => {
                eprintln!("{}:", cfg.name);
                report(&e);
                worst = worst.max(exit_code(&e));
            }
        }
    }
    worst
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Train { configs } => Ok(run_train(cli, configs)),
        Command::Eval { checkpoint, against } => {
            let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let against = match against {
                AgainstArg::Truth => Against::Truth,
                AgainstArg::Data => Against::Data,
            };
            let r = evaluate(&ck, against)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(0)
        }
        Command::Oracle { request } => {
            let req = OracleRequest::parse(request)?;
            println!("{}", serde_json::to_string_pretty(&answer(&req)?)?);
            Ok(0)
        }
        Command::Matrix => {
            print!("{}", matrix::render());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}
