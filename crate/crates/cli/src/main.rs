use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use crlbench_core::causal::selftest;
use crlbench_core::envs::{gen_dataset, OfflineEnv, OfflineEnvSpec};
use crlbench_core::exp::{plot, read_jsonl, run_study, ExpError, RunConfig, Study, SummaryRow};

#[derive(Parser)]
#[command(name = "crlbench", version, about = "Causal reinforcement learning benchmark studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study (a, b, c, e or causal-core) over several seeds.
    Run(RunArgs),
    /// Render a metrics.jsonl file as an SVG figure.
    Plot {
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Causal-inference utilities.
    CausalCore {
        #[command(subcommand)]
        command: CausalCommand,
    },
    /// Write a logged offline dataset as CSV.
    GenDataset {
        /// dosage, pricing or targeting.
        env: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.6)]
        strength: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CausalCommand {
    /// Check every estimator against brute-force enumeration.
    Selftest {
        /// Monte Carlo rollouts for the value-iteration check.
        #[arg(long)]
        rollouts: Option<usize>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    study: String,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed; seeds are `K, K+1, ...`.
    #[arg(long)]
    seed_base: Option<u64>,
    /// Training steps per run.
    #[arg(long)]
    steps: Option<usize>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, default `runs/<study>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<ExpError> for Failure {
    fn from(e: ExpError) -> Self {
        Self { code: e.exit_code() as u8, err: e.into() }
    }
}

fn config_error(err: anyhow::Error) -> Failure {
    Failure { code: 2, err }
}

fn run_failure(err: anyhow::Error) -> Failure {
    Failure { code: 1, err }
}

fn build_config(args: RunArgs) -> Result<RunConfig, Failure> {
    let study: Study = args.study.parse()?;
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = RunConfig::from_file(path)?;
            if cfg.study != study {
                return Err(config_error(anyhow::anyhow!(
                    "{} is a study {} config, not study {}",
                    path.display(),
                    cfg.study.as_str(),
                    study.as_str()
                )));
            }
            cfg
        }
        None => RunConfig::new(study),
    };
    if args.env.is_some() {
        cfg.env = args.env;
    }
    if args.algo.is_some() {
        cfg.algo = args.algo;
    }
    if args.seeds.is_some() || args.seed_base.is_some() {
        let n = args.seeds.unwrap_or(cfg.seeds.len()) as u64;
        let base = args.seed_base.unwrap_or(0);
        cfg.seeds = (base..base + n).collect();
    }
    if args.steps.is_some() {
        cfg.total_steps = args.steps;
    }
    if let Some(out) = args.out {
        cfg.out_dir = Some(out);
    } else if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("runs").join(study.as_str()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<28} {:<12} {:>8} {:<34} {:>3} {:>12} {:>10}", "env", "algo", "strength", "metric", "n", "mean", "ci95");
    for r in rows {
        let strength = r.strength.map(|s| format!("{s}")).unwrap_or_default();
        let ci = r.ci95.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into());
        let flag = if r.partial { " (partial)" } else { "" };
        println!("{:<28} {:<12} {:>8} {:<34} {:>3} {:>12.4} {:>10}{flag}", r.env, r.algo, strength, r.metric, r.n, r.mean, ci);
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = build_config(args)?;
    let out = run_study(&cfg)?;
    print_summary(&out.summary);
    if let Some(dir) = &cfg.out_dir {
        println!("wrote {}", dir.display());
    }
    if out.is_partial() {
        for (job, err) in &out.failures {
            eprintln!("failed: {job}: {err}");
        }
        return Err(run_failure(anyhow::anyhow!("{} of the study's runs failed", out.failures.len())));
    }
    Ok(())
}

fn plot_cmd(metrics: PathBuf, out: PathBuf) -> Result<(), Failure> {
    let file = fs::File::open(&metrics).with_context(|| format!("opening {}", metrics.display())).map_err(config_error)?;
    let records = read_jsonl(BufReader::new(file))?;
    let svg = plot::plot_records(&records)?;
    fs::write(&out, svg).with_context(|| format!("writing {}", out.display())).map_err(run_failure)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn selftest_cmd(rollouts: Option<usize>) -> Result<(), Failure> {
    if rollouts == Some(0) {
        return Err(config_error(anyhow::anyhow!("--rollouts must be positive")));
    }
    let checks = selftest::run_with(rollouts.unwrap_or(selftest::DEFAULT_ROLLOUTS));
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(run_failure(anyhow::anyhow!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn gen_dataset_cmd(env: String, n: usize, strength: f64, seed: u64, out: PathBuf) -> Result<(), Failure> {
    let env: OfflineEnv = env.parse().map_err(|e| config_error(anyhow::anyhow!("{e}")))?;
    if n == 0 || !(0.0..=1.0).contains(&strength) {
        return Err(config_error(anyhow::anyhow!("need --n > 0 and --strength in [0, 1]")));
    }
    let data = gen_dataset(&OfflineEnvSpec::new(env).with_strength(strength), n, seed).map_err(|e| config_error(e.into()))?;
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display())).map_err(run_failure)?;
    data.write_csv(file).context("writing dataset").map_err(run_failure)?;
    println!("wrote {n} samples to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Plot { metrics, out } => plot_cmd(metrics, out),
        Command::CausalCore { command: CausalCommand::Selftest { rollouts } } => selftest_cmd(rollouts),
        Command::GenDataset { env, n, strength, seed, out } => gen_dataset_cmd(env, n, strength, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
