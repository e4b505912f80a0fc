use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use carsm::envs::BanditConfig;
use carsm::trainer::{
    episodes_to_threshold, run_toy, write_episode_csv, write_heatmap_csv, ToyConfig, ToyOutcome, ToyPolicy,
};
use carsm::verify::{run_default_suite, VerifyConfig};
use carsm::{Algorithm, EnvKind, EpisodeLog, RunConfig, Trainer};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "carsm", version, about = "Swap-merge policy gradients with an action-value critic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its episode log as CSV.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// CSV destination; the manifest goes next to it with a `.json`
        /// extension. Without it the CSV is printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete vs Gaussian policy on the bimodal bandit.
    Toy(ToyArgs),
    /// Run the estimator and gradient oracle suites, print a JSON report.
    Verify(VerifyArgs),
    /// Train the same configuration over several seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Average return whose first crossing is reported per seed.
        #[arg(long)]
        threshold: Option<f64>,
        /// Directory for the per-seed CSVs, manifests and `summary.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Training flags; each one overrides the JSON config.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON file with a full or partial run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Option<Algorithm>,
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvKind>,
    /// Choices per action dimension.
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    lr_critic: Option<f64>,
    #[arg(long)]
    n_critic: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha_decay: Option<f64>,
    /// Stop once a full 100-episode window averages at least this.
    #[arg(long)]
    stop_at_avg: Option<f64>,
    /// Fill the `wall_ms` column (makes logs non-reproducible).
    #[arg(long)]
    wall_clock: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: carsm::Error| e.to_string())
}

fn parse_env(s: &str) -> Result<EnvKind, String> {
    s.parse().map_err(|e: carsm::Error| e.to_string())
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$target = v; })*
            };
        }
        set!(
            algo => algorithm,
            env => env,
            seed => seed,
            episodes => episodes,
            lr_policy => lr_policy,
            lr_critic => lr_critic,
            n_critic => n_critic,
            tau => tau,
            gamma => gamma,
            alpha0 => alpha0,
            alpha_decay => alpha_decay,
        );
        if self.c.is_some() {
            cfg.c = self.c;
        }
        if self.stop_at_avg.is_some() {
            cfg.stop_at_avg = self.stop_at_avg;
        }
        cfg.record_wall_clock |= self.wall_clock;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ToyArgs {
    /// Intersection point of the two reward bumps.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    m: f64,
    #[arg(long, default_value = "discrete", value_parser = parse_toy_policy)]
    policy: ToyPolicy,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 500_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record a heatmap row every this many iterations.
    #[arg(long, default_value_t = 1)]
    heatmap_every: usize,
    /// Heatmap CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_toy_policy(s: &str) -> Result<ToyPolicy, String> {
    s.parse().map_err(|e: carsm::Error| e.to_string())
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = VerifyConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = VerifyConfig::default().draws)]
    draws: usize,
    #[arg(long, default_value_t = VerifyConfig::default().sampling_draws)]
    sampling_draws: usize,
    #[arg(long, default_value_t = VerifyConfig::default().reruns)]
    reruns: usize,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    episodes_run: usize,
    final_avg100: Option<f64>,
    config: &'a RunConfig,
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_run(cfg: &RunConfig, logs: &[EpisodeLog], csv_path: &Path) -> Result<()> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = File::create(csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_episode_csv(logs, BufWriter::new(file))?;
    let manifest = Manifest {
        tool: "carsm",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        episodes_run: logs.len(),
        final_avg100: logs.last().map(|l| l.avg100),
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(manifest_path(csv_path), text)?;
    Ok(())
}

fn train(run: &RunArgs, out: Option<&Path>) -> Result<()> {
    let cfg = run.resolve()?;
    let logs = Trainer::new(cfg.clone())?.run()?;
    match out {
        Some(path) => {
            write_run(&cfg, &logs, path)?;
            let last = logs.last().expect("at least one episode");
            eprintln!(
                "{} on {}: {} episodes, final avg100 {:.1}",
                cfg.algorithm.name(),
                cfg.env.name(),
                logs.len(),
                last.avg100
            );
        }
        None => write_episode_csv(&logs, io::stdout().lock())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    seed: u64,
    csv: PathBuf,
    episodes_run: usize,
    final_avg100: f64,
    best_avg100: f64,
    episodes_to_threshold: Option<usize>,
}

#[derive(Serialize)]
struct SweepSummary {
    threshold: Option<f64>,
    runs: Vec<SweepEntry>,
}

fn sweep(run: &RunArgs, seeds: &[u64], threshold: Option<f64>, out: &Path) -> Result<()> {
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    let base = run.resolve()?;
    fs::create_dir_all(out)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        let logs = Trainer::new(cfg.clone())?.run()?;
        let csv = out.join(format!("{}_{}_seed{seed}.csv", cfg.algorithm.name(), cfg.env.name()));
        write_run(&cfg, &logs, &csv)?;
        let entry = SweepEntry {
            seed,
            csv,
            episodes_run: logs.len(),
            final_avg100: logs.last().map_or(f64::NAN, |l| l.avg100),
            best_avg100: logs.iter().map(|l| l.avg100).fold(f64::NEG_INFINITY, f64::max),
            episodes_to_threshold: threshold.and_then(|t| episodes_to_threshold(&logs, t)),
        };
        eprintln!("seed {seed}: final avg100 {:.1}", entry.final_avg100);
        runs.push(entry);
    }
    let mut text = serde_json::to_string_pretty(&SweepSummary { threshold, runs })?;
    text.push('\n');
    fs::write(out.join("summary.json"), text)?;
    Ok(())
}

#[derive(Serialize)]
struct ToySummary {
    policy: ToyPolicy,
    m: f64,
    trials: usize,
    samples: usize,
    global: usize,
    inferior: usize,
    unconverged: usize,
    outcomes: Vec<ToyOutcome>,
}

fn toy(args: &ToyArgs) -> Result<()> {
    let cfg = ToyConfig {
        bandit: BanditConfig::with_intersection(args.m),
        policy: args.policy,
        trials: args.trials,
        samples: args.samples,
        seed: args.seed,
        heatmap_every: args.heatmap_every,
        ..ToyConfig::default()
    };
    let report = run_toy(&cfg)?;
    if let Some(path) = &args.out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_heatmap_csv(&report, BufWriter::new(file))?;
    }
    let summary = ToySummary {
        policy: report.policy,
        m: args.m,
        trials: cfg.trials,
        samples: cfg.samples,
        global: report.global,
        inferior: report.inferior,
        unconverged: report.unconverged,
        outcomes: report.trials.iter().map(|t| t.outcome).collect(),
    };
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &summary)?;
    writeln!(stdout)?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = VerifyConfig {
        seed: args.seed,
        draws: args.draws,
        sampling_draws: args.sampling_draws,
        reruns: args.reruns,
    };
    let report = run_default_suite(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    if let Some(path) = &args.out {
        fs::write(path, &text)?;
    }
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { run, out } => train(run, out.as_deref()).map(|()| true),
        Command::Toy(args) => toy(args).map(|()| true),
        Command::Verify(args) => verify(args),
        Command::Sweep {
            run,
            seeds,
            threshold,
            out,
        } => sweep(run, seeds, *threshold, out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
