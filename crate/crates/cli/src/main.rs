//! `drrl`: collect offline data, fit robust planners and regenerate the
//! experiment tables as CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drrl::algorithms::{Algorithm, RobustPolicy};
use drrl::dataset::OfflineDataset;
use drrl::experiments::{self as exp, ExperimentConfig};
use drrl::Result;

#[derive(Parser)]
#[command(name = "drrl", version, about = "Distributionally robust offline RL with linear features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set algo.rho=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<ExperimentConfig> {
        let mut sets = self.sets.clone();
        sets.extend_from_slice(extra);
        ExperimentConfig::load(&self.config, &sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the behavior policy and write a `.jsonl` dataset.
    Collect {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit a policy on a dataset and write it as `.json`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long, default_value = "drvi")]
        algo: Algorithm,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the fit time as a one-row CSV.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Monte Carlo returns of a policy across perturbed environments.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        policy: PathBuf,
        /// Comma-separated up-move probabilities; defaults to `eval.p0`.
        #[arg(long, value_delimiter = ',')]
        p0: Vec<f64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Robust and nominal optimal values of the configured model.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Value-estimation error over the `sweep` grid of dimensions and sizes.
    ErrorSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write per-(d, N) means and standard errors.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Robust value curves of the two-component Gaussian bandit.
    Bandit {
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit-time scaling in the feature dimension and the dataset size.
    Bench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Collect { cfg, out } => {
            let cfg = cfg.load(&[])?;
            let data = exp::run_collect(&cfg)?;
            data.save(&out)?;
            eprintln!(
                "wrote {} transitions from {} episodes to {}",
                data.transitions().len(),
                data.num_episodes(),
                out.display()
            );
        }
        Command::Train {
            cfg,
            data,
            algo,
            out,
            timing,
        } => {
            let cfg = cfg.load(&[])?;
            let dataset = OfflineDataset::load(&data)?;
            let (policy, record) = exp::run_train(&cfg, &dataset, algo)?;
            policy.save(&out)?;
            eprintln!("fit {} (d={}, N={}) in {:.3}s", record.algorithm, record.d, record.n, record.seconds);
            if let Some(t) = timing {
                exp::write_csv(output(Some(&t))?, &cfg.hash(), cfg.data.seed, &[record])?;
            }
        }
        Command::Evaluate {
            cfg,
            policy,
            p0,
            episodes,
            seed,
            out,
        } => {
            let mut extra = Vec::new();
            if !p0.is_empty() {
                let list: Vec<String> = p0.iter().map(|p| format!("{p:?}")).collect();
                extra.push(format!("eval.p0=[{}]", list.join(",")));
            }
            if let Some(n) = episodes {
                extra.push(format!("eval.episodes={n}"));
            }
            if let Some(s) = seed {
                extra.push(format!("eval.seed={s}"));
            }
            let cfg = cfg.load(&extra)?;
            let policy = RobustPolicy::load(&policy)?;
            let rows = exp::run_evaluate(&cfg, &policy)?;
            exp::write_csv(output(out.as_deref())?, &cfg.hash(), cfg.eval.seed, &rows)?;
        }
        Command::Oracle { cfg, out } => {
            let cfg = cfg.load(&[])?;
            let report = exp::run_oracle(&cfg)?;
            eprintln!(
                "initial value: robust {:.6}, nominal {:.6}",
                report.robust_initial, report.nominal_initial
            );
            exp::write_csv(output(out.as_deref())?, &cfg.hash(), cfg.data.seed, &report.rows)?;
        }
        Command::ErrorSweep { cfg, out, summary } => {
            let cfg = cfg.load(&[])?;
            let rows = exp::run_error_sweep(&cfg)?;
            exp::write_csv(output(out.as_deref())?, &cfg.hash(), cfg.data.seed, &rows)?;
            if let Some(p) = summary {
                exp::write_csv(output(Some(&p))?, &cfg.hash(), cfg.data.seed, &exp::summarize_errors(&rows))?;
            }
        }
        Command::Bandit { rho, resolution, out } => {
            let rows = exp::run_bandit(rho, resolution)?;
            let hash = exp::bandit_hash(rho, resolution);
            exp::write_csv(output(out.as_deref())?, &hash, 0, &rows)?;
        }
        Command::Bench { cfg, out } => {
            let cfg = cfg.load(&[])?;
            let rows = exp::run_bench(&cfg)?;
            exp::write_csv(output(out.as_deref())?, &cfg.hash(), cfg.data.seed, &rows)?;
        }
    }
    Ok(())
}
