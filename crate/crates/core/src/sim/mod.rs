//! Round-based federated training with Byzantine clients.

mod config;
mod envelope;
mod sweep;

use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentSection, ScheduleKind, TaskSection};
pub use envelope::{contraction_factors, theorem31_envelope, DeltaSource, EnvelopeReport};
pub use sweep::{plateau, rate_sweep, SweepAxis, SweepCell, SweepRun};

use crate::attacks::{apply_attack, AttackKind, AttackSpec, RoundContext};
use crate::error::{Error, Result};
use crate::estimators::{aggregate, aggregate_bucket_means, bucket_means, bucketize, EstimatorConfig, EstimatorKind, NoiseModel};
use crate::lower_bound::LowerBoundInstance;
use crate::rng::{DetRng, RngState, StreamKind};
use crate::secure_agg::{bucket_sum_and_dequantize, SecureAggTranscript};
use crate::space::ParamSpace;
use crate::task::{TaskKind, TaskSpec};
use crate::vector::{ParamVector, SampleMatrix};

/// Metrics after the update of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    /// `|w_t - w*|`.
    pub param_err: f64,
    /// Distance of the aggregate to the mean of the honest uploads.
    pub agg_err: f64,
    /// Distance of the aggregate to the population gradient step from the
    /// same model (the `h`-step displacement under `grad F`).
    pub step_err: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// The estimator returned an error; the round applied a zero update.
    pub estimator_failed: bool,
    pub elapsed_ms: u64,
}

/// Everything exchanged in one round, for inspection in tests.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub record: MetricsRecord,
    pub eta: f64,
    pub honest: SampleMatrix,
    pub uploads: SampleMatrix,
    pub buckets: Vec<Vec<usize>>,
    /// Rows the estimator saw: bucket means, or the uploads themselves.
    pub estimator_input: SampleMatrix,
    /// Per-bucket protocol transcripts in secure mode.
    pub transcripts: Vec<SecureAggTranscript>,
    pub aggregate: ParamVector,
    pub error: Option<Error>,
}

impl RoundTrace {
    /// What the server observes in secure mode: masked uploads and bucket sums.
    pub fn server_view(&self) -> Vec<(&[Vec<u64>], &[u64])> {
        self.transcripts
            .iter()
            .map(|t| (t.masked.as_slice(), t.sum.as_slice()))
            .collect()
    }
}

/// State of a run between rounds.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: ExperimentConfig,
    pub estimator: EstimatorConfig,
    pub task: TaskSpec,
    pub space: ParamSpace,
    pub w: ParamVector,
    pub w0_err: f64,
    pub client_data: Vec<SampleMatrix>,
    /// Corrupted copies of the client data for data-poisoning attacks.
    pub alt_data: Option<Vec<SampleMatrix>>,
    pub attack: AttackSpec,
    /// Noise scale of one local update.
    pub sigma_h: f64,
    pub round: usize,
}

fn stream(seed: u64, kind: StreamKind, round: usize, index: usize) -> DetRng {
    RngState::derive(seed, kind, round as u64, index as u64).rng()
}

/// `h` gradient steps of size `eta` on `data` from `w`; returns the displacement.
pub fn local_update(task: &TaskSpec, w: &ParamVector, data: &SampleMatrix, eta: f64, h: usize) -> Result<ParamVector> {
    let mut wi = w.clone();
    for _ in 0..h {
        let g = task.local_gradient(&wi, data)?;
        wi = wi.sub(&g.scaled(eta));
    }
    Ok(wi.sub(w))
}

/// The same `h` steps on the population risk.
pub fn population_update(task: &TaskSpec, w: &ParamVector, eta: f64, h: usize) -> ParamVector {
    let mut wi = w.clone();
    for _ in 0..h {
        wi = wi.sub(&task.population_gradient(&wi).scaled(eta));
    }
    wi.sub(w)
}

fn flip_labels(task: &TaskSpec, data: &SampleMatrix, prob: f64, rng: &mut DetRng) -> SampleMatrix {
    let mut out = data.clone();
    let d = task.dim();
    for i in 0..out.rows() {
        if rng.uniform() >= prob {
            continue;
        }
        let row = out.row_mut(i);
        match task.kind {
            TaskKind::MeanEstimation => row.iter_mut().for_each(|x| *x = -*x),
            TaskKind::LinearRegression => row[d] = -row[d],
        }
    }
    out
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let e = &cfg.experiment;
        let seed = e.seed;
        let mut init = stream(seed, StreamKind::TaskInit, 0, 0);
        let w_star = ParamVector::new(init.unit_vector(e.d)).scaled(e.w_star_norm);
        let task = TaskSpec::new(cfg.task.kind, cfg.task.sigma, w_star.clone())?;
        let w = ParamVector::zeros(e.d);
        let space = match e.radius {
            Some(r) => ParamSpace::new(ParamVector::zeros(e.d), r)?,
            None => ParamSpace::default_for(&w, &w_star),
        };
        let w = space.project(&w)?;
        let w0_err = w.distance(&w_star);
        let sigma_h = cfg
            .task
            .sigma_h
            .unwrap_or(e.h as f64 * task.gradient_sigma());

        let mut estimator = cfg.resolved_estimator();
        if estimator.kind == EstimatorKind::Bucketing && estimator.k.is_none() {
            estimator.k = Some(estimator.bucket_count(e.m));
        }
        if cfg.secure.enabled {
            let largest = if estimator.kind == EstimatorKind::Bucketing {
                e.m.div_ceil(estimator.bucket_count(e.m))
            } else {
                1
            };
            cfg.secure
                .check_bucket_size(largest)
                .map_err(|err| Error::Config(err.to_string()))?;
        }

        let mut attack_cfg = cfg.attack.clone();
        if attack_cfg.kind == AttackKind::Mra && attack_cfg.target.is_none() {
            let mut target = w_star.as_slice().to_vec();
            target[0] += 5.0;
            attack_cfg.target = Some(target);
        }

        let (client_data, alt_data, attack) = if attack_cfg.kind == AttackKind::LowerBound {
            if task.kind != TaskKind::MeanEstimation {
                return Err(Error::Config("the lower-bound attack needs the mean-estimation task".into()));
            }
            if e.epsilon == 0.0 {
                return Err(Error::Config("the lower-bound attack needs epsilon > 0".into()));
            }
            let inst = LowerBoundInstance::new(e.epsilon, e.n, cfg.task.sigma)?;
            let direction = ParamVector::new(init.unit_vector(e.d));
            // Shift so that the two-point law has mean w*.
            let base = w_star.sub(&direction.scaled(inst.gap));
            let mut data = Vec::with_capacity(e.m);
            let mut alt = Vec::with_capacity(e.m);
            let mut holders = Vec::new();
            for i in 0..e.m {
                let mut rng = stream(seed, StreamKind::ClientData, 0, i);
                let (x, mask) = inst.client_data(&base, &direction, &mut rng);
                if mask.iter().any(|&b| b) {
                    holders.push(i);
                }
                alt.push(inst.erase_atoms(&x, &mask, &direction));
                data.push(x);
            }
            let budget = crate::attacks::malicious_count(e.epsilon, e.m);
            let ids = if holders.len() > budget {
                let mut rng = stream(seed, StreamKind::MaliciousSet, 0, 0);
                rng.sample_indices(holders.len(), budget)
                    .into_iter()
                    .map(|j| holders[j])
                    .collect()
            } else {
                holders
            };
            let spec = AttackSpec::with_ids(attack_cfg, e.epsilon, ids);
            (data, Some(alt), spec)
        } else {
            let data: Vec<SampleMatrix> = (0..e.m)
                .map(|i| task.sample_client_data(e.n, &mut stream(seed, StreamKind::ClientData, 0, i)))
                .collect();
            let alt = (attack_cfg.kind == AttackKind::LabelNoise).then(|| {
                data.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let mut rng = stream(seed, StreamKind::AttackData, 0, i);
                        flip_labels(&task, x, attack_cfg.flip_prob, &mut rng)
                    })
                    .collect()
            });
            let mut rng = stream(seed, StreamKind::MaliciousSet, 0, 0);
            let spec = AttackSpec::new(attack_cfg, e.epsilon, e.m, &mut rng);
            (data, alt, spec)
        };

        Ok(Self {
            cfg: cfg.clone(),
            estimator,
            task,
            space,
            w,
            w0_err,
            client_data,
            alt_data,
            attack,
            sigma_h,
            round: 0,
        })
    }

    /// Step size for round index `t` (starting at 0).
    pub fn step_size(&self, t: usize) -> f64 {
        let e = &self.cfg.experiment;
        let l = self.task.smoothness;
        let lambda = self.task.strong_convexity;
        let decaying = match e.schedule {
            ScheduleKind::Auto => e.h >= 2,
            ScheduleKind::Constant => false,
            ScheduleKind::Decaying => true,
        };
        if decaying {
            let a = (l + lambda) / lambda;
            a / (l * (t as f64 + a))
        } else {
            e.step.unwrap_or(1.0 / l)
        }
    }

    fn uses_buckets(&self) -> bool {
        self.estimator.kind == EstimatorKind::Bucketing && self.estimator.epsilon > 0.0
    }

    /// Runs one round and returns its full trace.
    pub fn step(&mut self) -> Result<RoundTrace> {
        let started = Instant::now();
        let e = self.cfg.experiment.clone();
        let seed = e.seed;
        let t = self.round;
        let r = t + 1;
        let eta = self.step_size(t);

        if self.attack.config.resample_each_round && self.attack.config.kind != AttackKind::LowerBound && t > 0 {
            let mut rng = stream(seed, StreamKind::MaliciousSet, r, 0);
            self.attack = AttackSpec::new(self.attack.config.clone(), e.epsilon, e.m, &mut rng);
        }

        let task = &self.task;
        let w = &self.w;
        let rows: Vec<ParamVector> = self
            .client_data
            .par_iter()
            .map(|x| local_update(task, w, x, eta, e.h))
            .collect::<Result<_>>()?;
        let honest = SampleMatrix::from_rows(&rows)?;

        let alternative = match &self.alt_data {
            Some(alt) => {
                let mut out = honest.clone();
                for &i in &self.attack.malicious_ids {
                    out.set_row(i, local_update(task, w, &alt[i], eta, e.h)?.as_slice());
                }
                Some(out)
            }
            None => None,
        };
        let mut ctx = RoundContext::new(r, w);
        ctx.alternative = alternative.as_ref();
        let uploads = apply_attack(&self.attack, &honest, &ctx)?;

        let honest_ids: Vec<usize> = (0..e.m).filter(|&i| !self.attack.is_malicious(i)).collect();
        let honest_mean = if honest_ids.is_empty() {
            honest.mean()
        } else {
            honest.mean_of(&honest_ids)
        };

        let buckets: Vec<Vec<usize>> = if self.uses_buckets() {
            let k = self.estimator.bucket_count(e.m);
            bucketize(e.m, k, &mut stream(seed, StreamKind::Bucketing, r, 0))?
        } else {
            (0..e.m).map(|i| vec![i]).collect()
        };

        let noise = NoiseModel {
            sigma: self.sigma_h,
            n: e.n,
            eta_t: eta,
        };
        let mut est_rng = stream(seed, StreamKind::Estimator, r, 0);

        let mut transcripts = Vec::new();
        let estimator_input = if self.cfg.secure.enabled {
            let quantizer = self.cfg.secure.quantizer(self.sigma_h, eta, e.d);
            let secure = &self.cfg.secure;
            let per_bucket: Vec<(SecureAggTranscript, ParamVector)> = buckets
                .par_iter()
                .enumerate()
                .map(|(b, members)| {
                    let codes = members
                        .iter()
                        .map(|&i| {
                            let row = uploads.row_vector(i);
                            if secure.stochastic_rounding {
                                quantizer.quantize_stochastic(&row, &mut stream(seed, StreamKind::Rounding, r, i))
                            } else {
                                quantizer.quantize(&row)
                            }
                        })
                        .collect();
                    let mut rng = stream(seed, StreamKind::Masks, r, b);
                    let transcript = SecureAggTranscript::run(b, members, codes, quantizer.modulus, &mut rng);
                    let mean = bucket_sum_and_dequantize(secure, &quantizer, &transcript.masked)?;
                    Ok((transcript, mean))
                })
                .collect::<Result<_>>()?;
            let mut means = Vec::with_capacity(per_bucket.len());
            for (tr, mean) in per_bucket {
                transcripts.push(tr);
                means.push(mean);
            }
            SampleMatrix::from_rows(&means)?
        } else if self.uses_buckets() {
            bucket_means(&uploads, &buckets)
        } else {
            uploads.clone()
        };

        let result = if self.uses_buckets() {
            aggregate_bucket_means(&self.estimator, &estimator_input, e.m, &noise, &mut est_rng)
        } else {
            aggregate(&self.estimator, &estimator_input, &noise, &mut est_rng)
        };
        let (g_hat, converged, error) = match result {
            Ok(a) => (a.value, a.converged && a.eigen_converged, None),
            Err(err) => (ParamVector::zeros(e.d), false, Some(err)),
        };

        let reference = population_update(&self.task, &self.w, eta, e.h);
        let step_err = g_hat.distance(&reference);
        let agg_err = g_hat.distance(&honest_mean);
        self.w = self.space.project(&self.w.add(&g_hat))?;
        self.round = r;

        let elapsed_ms = if e.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let record = MetricsRecord {
            round: r,
            param_err: self.w.distance(&self.task.w_star),
            agg_err,
            step_err,
            loss: self.task.population_loss(&self.w),
            grad_norm: self.task.population_gradient(&self.w).norm(),
            converged,
            estimator_failed: error.is_some(),
            elapsed_ms,
        };
        Ok(RoundTrace {
            record,
            eta,
            honest,
            uploads,
            buckets,
            estimator_input,
            transcripts,
            aggregate: g_hat,
            error,
        })
    }

    /// Runs one round and keeps only its metrics.
    pub fn run_round(&mut self) -> Result<MetricsRecord> {
        Ok(self.step()?.record)
    }
}

/// Output of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub w_final: ParamVector,
    pub w0_err: f64,
    pub malicious_ids: Vec<usize>,
    pub task: TaskSpec,
    /// Bucket count used by the bucketing estimator, if any.
    pub k: Option<usize>,
}

/// Runs `rounds` rounds of the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg)?;
    let mut records = Vec::with_capacity(cfg.experiment.rounds);
    for _ in 0..cfg.experiment.rounds {
        records.push(sim.run_round()?);
    }
    let k = (sim.estimator.kind == EstimatorKind::Bucketing).then(|| sim.estimator.bucket_count(cfg.experiment.m));
    Ok(RunOutput {
        records,
        w_final: sim.w,
        w0_err: sim.w0_err,
        malicious_ids: sim.attack.malicious_ids,
        task: sim.task,
        k,
    })
}
