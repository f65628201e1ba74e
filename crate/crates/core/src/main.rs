use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robandit::harness::{self, ConfigError, Experiment, ExperimentConfig, HarnessError};

const USAGE: &str = "usage: robandit <run|sweep|report|validate> ... (see `robandit --help`)";
const THREADS_ENV: &str = "ROBANDIT_THREADS";

#[derive(Parser)]
#[command(name = "robandit", version, about = "Robust linear contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, mean files, a summary and a plot.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to ROBANDIT_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-run a config over the cartesian product of parameter values.
    Sweep {
        config: PathBuf,
        /// Config key to vary; repeat together with --values.
        #[arg(long, required = true)]
        param: Vec<String>,
        /// Comma-separated values for the matching --param.
        #[arg(long, required = true)]
        values: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check traces in a run directory and regenerate summary and plot.
    Report { dir: PathBuf },
    /// Check a config and print derived quantities.
    Validate { config: PathBuf },
}

enum Failure {
    Usage(String),
    Runtime(HarnessError),
    Violations(Vec<String>),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(ConfigError::Parse { .. } | ConfigError::Invalid(_)) => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Runtime(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        HarnessError::from(e).into()
    }
}

fn threads(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be an integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn run_config(config: ExperimentConfig, out: &Path, threads: usize) -> Result<(), Failure> {
    let experiment = Experiment::new(config)?;
    let result = harness::run::with_threads(threads, || experiment.run_experiment())?;
    harness::emit_all(experiment.config(), &result, out)?;
    for row in harness::report::summarize(&result) {
        println!(
            "{:<28} mean final regret {:>12.3}  sd {:>10.3}  budget spent {:>8.3}",
            row.policy, row.mean_final_regret, row.sd_final_regret, row.mean_budget_spent
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        Failure::Runtime(
            ConfigError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
            .into(),
        )
    })
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn sweep(
    config: &Path,
    params: &[String],
    values: &[String],
    out: &Path,
    threads: usize,
) -> Result<(), Failure> {
    if params.len() != values.len() {
        return Err(Failure::Usage(
            "each --param needs a matching --values".into(),
        ));
    }
    let base: toml::Table = toml::from_str(&read_text(config)?).map_err(|e| {
        Failure::Usage(format!("malformed config {}: {}", config.display(), e.message()))
    })?;
    let axes: Vec<Vec<&str>> = values
        .iter()
        .map(|v| v.split(',').map(str::trim).collect())
        .collect();

    let mut combo = vec![0usize; axes.len()];
    loop {
        let mut table = base.clone();
        let mut name = Vec::new();
        for ((param, axis), &i) in params.iter().zip(&axes).zip(&combo) {
            table.insert(param.clone(), parse_value(axis[i]));
            name.push(format!("{param}={}", axis[i].replace(['/', ' '], "_")));
        }
        let cfg = ExperimentConfig::from_file_text(&table.to_string(), config)?;
        let dir = out.join(name.join(","));
        println!("== {}", dir.display());
        run_config(cfg, &dir, threads)?;

        // odometer over the value axes
        let mut k = axes.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            combo[k] += 1;
            if combo[k] < axes[k].len() {
                break;
            }
            combo[k] = 0;
        }
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let config = ExperimentConfig::load(path)?;
    let d = config.derived();
    println!("config: {}", path.display());
    println!(
        "T = {}, K = {}, d = {}, C = {}",
        config.horizon, config.arms, config.dim, config.budget
    );
    if d.epoch_length_is_auto {
        println!(
            "H = {} (auto: ceil(beta_T * gamma_bar / sqrt(e - 1) * sqrt(T)), beta_T = {:.6}, \
             gamma_bar = gamma_bound(T+1, d, max(lambda, 1)) = {:.6} stands in for gamma_(T+1))",
            d.epoch_length, d.beta_horizon, d.gamma_bar
        );
    } else {
        println!("H = {} (fixed)", d.epoch_length);
    }
    println!("epochs = {}", d.epochs);
    println!("|J| = {}", d.candidates.len());
    let last = d.candidates.last().copied().unwrap_or(0.0);
    println!("J = {{0, 1, 2, ..., {last}}}");
    println!("alpha (robustbandit, per epoch) = {:.6}", d.alpha_epochs);
    println!("alpha (bob_no_restart, per round) = {:.6}", d.alpha_rounds);
    println!("top N = {}", d.top_n);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads: t,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            run_config(cfg, &out, threads(t)?)
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            threads: t,
        } => sweep(&config, &param, &values, &out, threads(t)?),
        Command::Report { dir } => {
            let outcome = harness::report(&dir)?;
            for row in &outcome.summary {
                println!("{:<28} mean final regret {:>12.3}", row.policy, row.mean_final_regret);
            }
            if outcome.violations.is_empty() {
                println!("all invariants hold");
                Ok(())
            } else {
                Err(Failure::Violations(outcome.violations))
            }
        }
        Command::Validate { config } => validate(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            let code = match &e {
                HarnessError::Factor(f) => f.code(),
                _ => 1,
            };
            ExitCode::from(code as u8)
        }
        Err(Failure::Violations(v)) => {
            for line in &v {
                eprintln!("violation: {line}");
            }
            ExitCode::from(3)
        }
    }
}
