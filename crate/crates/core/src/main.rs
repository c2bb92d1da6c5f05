use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use ice::channel::{sample_prompt, ScenarioConfig};
use ice::harness::{evaluate_curve, results_csv, verify, with_worker_pool, EstimatorKind, EstimatorSpec, EvalOptions};
use ice::rng::{stream_rng, Domain};
use ice::sat::{train, Init, TrainConfig, WeightsFile};
use ice::Result;

/// In-context symbol estimation over simulated SIMO fading channels.
#[derive(Parser)]
#[command(name = "ice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset of sampled prompts (JSON lines).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Context examples per prompt.
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        /// Number of prompts.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Cross-entropy and MAP accuracy curves over context length (CSV).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        kmax: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Comma list of ca-post, cu-post, cu-post-h-mmse, cu-post-h-lmmse, sat, sat-limit, uniform.
        #[arg(long, default_value = "ca-post,cu-post,cu-post-h-mmse,cu-post-h-lmmse")]
        estimators: String,
        /// Trained attention weights for sat / sat-limit (default: noise precision).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Draw a fresh prompt for every k instead of truncating one long prompt.
        #[arg(long)]
        independent_prompts: bool,
    },
    /// Train the attention estimator; writes weights.json and trace.csv.
    TrainSat {
        #[command(flatten)]
        common: Common,
        /// Training settings as JSON (fields of the training config; missing ones take defaults).
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        context_len: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        eval_prompts: Option<usize>,
    },
    /// Run the invariant suite; exits non-zero if a check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario when no config file is given.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    /// Master seed (defaults to the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Output directory (stdout when omitted, where applicable).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<(ScenarioConfig, u64)> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None if self.scenario == 1 => ScenarioConfig::scenario1(),
            None => ScenarioConfig::scenario2(),
        };
        if let Some(snr) = self.snr_db {
            cfg.snr_db = snr;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        let seed = cfg.seed;
        Ok((cfg, seed))
    }
}

fn emit(out: Option<&Path>, file: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate { common, kmax, trials } => {
            let (cfg, seed) = common.scenario()?;
            let c = cfg.constellation();
            let noise = cfg.noise()?;
            let lines = with_worker_pool(|| {
                (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let p = sample_prompt(&cfg, kmax, &c, &noise, &mut stream_rng(seed, Domain::Simulation, t as u64))?;
                        Ok(serde_json::to_string(&p.to_record())?)
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let mut text = lines.join("\n");
            text.push('\n');
            emit(common.out.as_deref(), "prompts.jsonl", &text)?;
        }
        Command::Evaluate {
            common,
            kmax,
            trials,
            estimators,
            weights,
            independent_prompts,
        } => {
            let (cfg, seed) = common.scenario()?;
            let mut spec = EstimatorSpec::new(EstimatorKind::parse_list(&estimators)?);
            if let Some(path) = weights {
                let file: WeightsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
                spec = spec.with_sat_weights(file.weights()?);
            }
            let mut opts = EvalOptions::new(kmax, trials, seed);
            opts.prefix_truncation = !independent_prompts;
            let results = with_worker_pool(|| evaluate_curve(&cfg, &spec, &opts))??;
            emit(common.out.as_deref(), "eval.csv", &results_csv(&results))?;
        }
        Command::TrainSat {
            common,
            train_config,
            epochs,
            context_len,
            batch_size,
            learning_rate,
            eval_prompts,
        } => {
            let (cfg, seed) = common.scenario()?;
            let mut tc = match train_config {
                Some(path) => serde_json::from_str::<TrainConfig>(&fs::read_to_string(path)?)?,
                None => TrainConfig { init: Init::Zero, ..TrainConfig::default() },
            };
            tc.epochs = epochs.unwrap_or(tc.epochs);
            tc.context_len = context_len.unwrap_or(tc.context_len);
            tc.batch_size = batch_size.unwrap_or(tc.batch_size);
            tc.learning_rate = learning_rate.unwrap_or(tc.learning_rate);
            tc.eval_prompts = eval_prompts.unwrap_or(tc.eval_prompts);
            let outcome = with_worker_pool(|| train(&cfg, &tc, seed))??;
            let file = WeightsFile::new(&outcome.weights, cfg.constellation().len(), tc, seed);
            let dir = common.out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("weights.json"), serde_json::to_string_pretty(&file)? + "\n")?;
            fs::write(dir.join("trace.csv"), outcome.trace_csv())?;
            if let Some(last) = outcome.trace.last() {
                eprintln!("final held-out cross-entropy {:.6} nats after {} steps", last.eval_ce, last.epoch);
            }
        }
        Command::Verify { seed, out } => {
            let report = with_worker_pool(|| verify(seed))??;
            emit(out.as_deref(), "verify.txt", &report.render())?;
            if !report.passed() {
                eprintln!("verification failed");
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ice: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
