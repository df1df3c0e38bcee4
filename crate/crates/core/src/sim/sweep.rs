use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig, MetricsRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    D,
    Epsilon,
    M,
    N,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::D => "d",
            Self::Epsilon => "epsilon",
            Self::M => "m",
            Self::N => "n",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "d" => Some(Self::D),
            "epsilon" | "eps" => Some(Self::Epsilon),
            "m" => Some(Self::M),
            "n" => Some(Self::N),
            _ => None,
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("`{}` must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            Self::D => {
                cfg.experiment.d = count()?;
                if cfg.attack.target.is_some() {
                    return Err(Error::Config("cannot sweep `d` with a fixed `attack.target`".into()));
                }
            }
            Self::Epsilon => cfg.experiment.epsilon = value,
            Self::M => cfg.experiment.m = count()?,
            Self::N => cfg.experiment.n = count()?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One `(value, seed)` run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    pub k: Option<usize>,
}

/// Plateau statistics for one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    /// Per-seed plateaus in seed order.
    pub plateaus: Vec<f64>,
    pub median: f64,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median parameter error over the last 10% of rounds (at least one).
pub fn plateau(records: &[MetricsRecord]) -> f64 {
    let tail = records.len().div_ceil(10).max(1).min(records.len());
    let mut errs: Vec<f64> = records[records.len() - tail..].iter().map(|r| r.param_err).collect();
    median(&mut errs)
}

/// Runs every `(value, seed)` pair, at most `jobs` at a time, and returns the
/// runs in `(value, seed)` order together with the per-value plateau table.
pub fn rate_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<(Vec<SweepRun>, Vec<SweepCell>)> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut jobs_list = Vec::with_capacity(values.len() * seeds.len());
    for &v in values {
        let cfg = axis.apply(base, v)?;
        for &s in seeds {
            let mut c = cfg.clone();
            c.experiment.seed = s;
            jobs_list.push((v, s, c));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<SweepRun> = pool.install(|| {
        jobs_list
            .into_par_iter()
            .map(|(value, seed, config)| {
                let out = run_experiment(&config)?;
                Ok(SweepRun {
                    value,
                    seed,
                    config,
                    records: out.records,
                    k: out.k,
                })
            })
            .collect::<Result<_>>()
    })?;
    let cells = runs
        .chunks(seeds.len())
        .map(|chunk| {
            let plateaus: Vec<f64> = chunk.iter().map(|r| plateau(&r.records)).collect();
            let mut sorted = plateaus.clone();
            SweepCell {
                value: chunk[0].value,
                median: median(&mut sorted),
                plateaus,
            }
        })
        .collect();
    Ok((runs, cells))
}
