mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byzagg::sim::{rate_sweep, run_experiment, ExperimentConfig, SweepAxis};
use byzagg::Error;

use output::{manifest_json, metrics_csv, run_id, sweep_csv, write_atomic};

#[derive(Parser)]
#[command(name = "byzagg", version, about = "Byzantine-robust federated learning experiments")]
struct Cli {
    /// Print a config file with every default filled in and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "BYZAGG_OUT", default_value = "out")]
        out: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grid over one axis and several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of d, epsilon, m, n.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Number of seeds, counting up from `experiment.seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "BYZAGG_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run acceptance criteria.
    Accept {
        /// Comma-separated ids (A1..A9) or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

const DEFAULTS_HEADER: &str = "\
# Every key with its default. The five keys under [experiment] without a
# library default (m, n, d, epsilon, rounds) are shown with example values.
# Optional keys left unset: experiment.k, experiment.step, experiment.radius,
# task.sigma_h, estimator.beta, estimator.f, estimator.threshold,
# estimator.xi, estimator.interval_size, attack.scale, attack.boost,
# attack.target, secure.clip.
";

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        let cfg = ExperimentConfig::new(100, 20, 32, 0.2, 100);
        print!("{DEFAULTS_HEADER}\n{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no command given (try --help)");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Run { config, out, seed } => cmd_run(&config, &out, seed),
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            jobs,
            out,
        } => cmd_sweep(&config, &axis, &values, seeds, jobs, &out),
        Command::Accept { suite } => cmd_accept(&suite),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    let dir = write_run(&cfg, out)?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

/// Runs `cfg` and writes its metrics and manifest under `parent/<run-id>`.
fn write_run(cfg: &ExperimentConfig, parent: &Path) -> Result<PathBuf, Failure> {
    let output = run_experiment(cfg)?;
    let id = run_id(cfg);
    let dir = parent.join(&id);
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&id, cfg, output.k, &output.records).as_bytes())?;
    write_atomic(&dir.join("manifest.json"), manifest_json(&id, cfg, &output).as_bytes())?;
    Ok(dir)
}

fn cmd_sweep(config: &Path, axis: &str, values: &str, seeds: u64, jobs: usize, out: &Path) -> Result<ExitCode, Failure> {
    let cfg = load_config(config)?;
    let axis = SweepAxis::parse(axis)
        .ok_or_else(|| Failure::Config(format!("unknown axis `{axis}` (expected d, epsilon, m or n)")))?;
    let values: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Failure::Config(format!("bad value `{s}`"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(Failure::Config("`--values` is empty".into()));
    }
    if seeds == 0 {
        return Err(Failure::Config("`--seeds` must be at least 1".into()));
    }
    let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.experiment.seed.wrapping_add(i)).collect();
    let (runs, cells) = rate_sweep(&cfg, axis, &values, &seed_list, jobs)?;

    let dir = out.join(format!("sweep-{}", output::sweep_id(&cfg, axis, &values, &seed_list)));
    std::fs::create_dir_all(&dir)?;
    let mut ids = Vec::with_capacity(runs.len());
    for run in &runs {
        let id = run_id(&run.config);
        let run_dir = dir.join(&id);
        std::fs::create_dir_all(&run_dir)?;
        write_atomic(
            &run_dir.join("metrics.csv"),
            metrics_csv(&id, &run.config, run.k, &run.records).as_bytes(),
        )?;
        ids.push(id);
    }
    write_atomic(&dir.join("sweep.csv"), sweep_csv(axis, &cells, &ids, seed_list.len()).as_bytes())?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_accept(suite: &str) -> Result<ExitCode, Failure> {
    let ids: Vec<String> = if suite.trim().eq_ignore_ascii_case("all") {
        byzagg_accept::ALL.iter().map(|s| s.to_string()).collect()
    } else {
        suite.split(',').map(|s| s.trim().to_ascii_uppercase()).filter(|s| !s.is_empty()).collect()
    };
    if ids.is_empty() {
        return Err(Failure::Config("empty suite".into()));
    }
    if let Some(bad) = ids.iter().find(|id| !byzagg_accept::ALL.contains(&id.as_str())) {
        return Err(Failure::Config(format!("unknown criterion `{bad}`")));
    }
    let mut all_pass = true;
    for id in &ids {
        let report = byzagg_accept::run(id)
            .expect("id checked above")
            .map_err(|e| Failure::Runtime(format!("{id}: {e}")))?;
        println!("{report}");
        for line in &report.details {
            println!("    {line}");
        }
        all_pass &= report.pass;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
