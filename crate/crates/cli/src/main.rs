use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use powerdrop::bounds::bound_report;
use powerdrop::family::{evaluate_dataset, frequency_bucket_report, Bucket};
use powerdrop::harness::{
    output_path, run_selftest, sweep, temperature_linear_search, train, write_bucket_csv,
    write_sweep_csv, Checkpoint, ExperimentConfig, SweepGrid, TemperatureGrid,
};
use powerdrop::{Alpha, Error, FamilyParams, Result, SplitSeed};

/// Train dropout networks and evaluate them as a family of models.
#[derive(Parser)]
#[command(name = "powerdrop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config and save a checkpoint.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "checkpoint.json")]
        out: PathBuf,
    },
    /// Cross entropy and perplexity of one family member.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long)]
        max_targets: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a grid of family members and write a CSV report.
    Sweep {
        checkpoint: PathBuf,
        /// Grid file; defaults to the checkpoint config's eval grid on the
        /// validation split.
        grid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo decomposition of the training lower bound.
    Bounds {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        max_targets: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear search for the softmax temperature minimising cross entropy.
    TuneTemp {
        checkpoint: PathBuf,
        /// "tmin,tmax,n"
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long, default_value_t = 1000)]
        max_targets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross entropy per training-frequency bucket on train and valid.
    Buckets {
        checkpoint: PathBuf,
        /// Comma-separated bucket predicates ("N<", "<N", "A..B").
        #[arg(long)]
        thresholds: Option<String>,
        /// Comma-separated alphas of the compared members.
        #[arg(long, default_value = "det,1")]
        alphas: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        temp: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        max_targets: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in enumeration-oracle and gap-sandwich checks.
    Selftest,
}

#[derive(clap::Args)]
struct FamilyArgs {
    /// "det" or a power in [0, 1].
    #[arg(long, default_value = "det")]
    alpha: Alpha,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

impl FamilyArgs {
    fn params(&self) -> Result<FamilyParams> {
        FamilyParams::new(self.alpha, self.lambda, self.temp, self.samples)
    }
}

/// Writes to the resolved `out` path, or stdout.
fn write_output(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let path = output_path(p);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            let file = File::create(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| Error::Io { path, source: e })
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)
        }
    }
}

fn json_line(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ckpt = train(&cfg)?;
            let path = output_path(&out);
            ckpt.save(&path)?;
            let last = ckpt.history.last().expect("history starts at step 0");
            json_line(&serde_json::json!({
                "checkpoint": path,
                "steps": ckpt.step,
                "train_xe": last.train_xe,
            }))?;
        }
        Command::Eval {
            checkpoint,
            family,
            split,
            max_targets,
            seed,
        } => {
            let fp = family.params()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = ckpt.dataset()?;
            let model = ckpt.model(&data)?;
            let examples = data.split(&split)?.eval_examples(max_targets);
            let split_seed = SplitSeed::new(seed).child(data.split_index(&split)? as u64);
            let e = evaluate_dataset(&model, &examples, &fp, &split_seed)?;
            json_line(&serde_json::json!({
                "split": split,
                "alpha": fp.alpha.to_string(),
                "lambda": fp.lambda,
                "temperature": fp.temperature,
                "samples": fp.samples,
                "targets": e.targets,
                "xe": e.xe,
                "perplexity": e.perplexity,
            }))?;
        }
        Command::Sweep {
            checkpoint,
            grid,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let grid = match grid {
                Some(p) => SweepGrid::load(&p)?,
                None => ckpt.config.eval.to_sweep_grid(vec!["valid".into()], 0),
            };
            let data = ckpt.dataset()?;
            let model = ckpt.model(&data)?;
            let rows = sweep(&model, &data, &grid)?;
            write_output(out.as_deref(), |w| write_sweep_csv(&rows, w))?;
        }
        Command::Bounds {
            checkpoint,
            alpha,
            lambda,
            samples,
            split,
            max_targets,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = ckpt.dataset()?;
            let model = ckpt.model(&data)?;
            let examples = data.split(&split)?.eval_examples(max_targets);
            let report = bound_report(
                &model,
                &examples,
                alpha,
                lambda,
                samples,
                &SplitSeed::new(seed),
                ckpt.config.weight_decay,
            )?;
            write_output(out.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w).map_err(|e| Error::Io {
                    path: "<output>".into(),
                    source: e,
                })
            })?;
        }
        Command::TuneTemp {
            checkpoint,
            grid,
            family,
            split,
            max_targets,
            seed,
        } => {
            let grid = TemperatureGrid::parse(&grid)?;
            let fp = family.params()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = ckpt.dataset()?;
            let model = ckpt.model(&data)?;
            let examples = data.split(&split)?.eval_examples(Some(max_targets));
            let split_seed = SplitSeed::new(seed).child(data.split_index(&split)? as u64);
            let r = temperature_linear_search(&model, &examples, &fp, &grid, &split_seed)?;
            json_line(&serde_json::json!({
                "split": split,
                "alpha": fp.alpha.to_string(),
                "temperature": r.temperature,
                "xe": r.xe,
                "curve": r.curve,
            }))?;
        }
        Command::Buckets {
            checkpoint,
            thresholds,
            alphas,
            lambda,
            temp,
            samples,
            max_targets,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let specs: Vec<String> = match thresholds {
                Some(t) => t.split(',').map(|s| s.trim().to_string()).collect(),
                None => ckpt.config.buckets.clone(),
            };
            let buckets = specs
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Bucket>())
                .collect::<Result<Vec<_>>>()?;
            let families = alphas
                .split(',')
                .map(|a| FamilyParams::new(a.parse()?, lambda, temp, samples))
                .collect::<Result<Vec<_>>>()?;
            let data = ckpt.dataset()?;
            let model = ckpt.model(&data)?;
            let train_set = data.split("train")?.eval_examples(max_targets);
            let valid_set = data.split("valid")?.eval_examples(max_targets);
            let report = frequency_bucket_report(
                &model,
                &train_set,
                &valid_set,
                &families,
                &buckets,
                &data.frequencies,
                &SplitSeed::new(seed),
            )?;
            write_output(out.as_deref(), |w| write_bucket_csv(&report, w))?;
        }
        Command::Selftest => {
            let checks = run_selftest()?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
