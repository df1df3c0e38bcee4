use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::secure_agg::SecureAggConfig;
use crate::spectral::PowerConfig;
use crate::task::TaskKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Constant `1/L` when `h = 1`, decaying when `h >= 2`.
    #[default]
    Auto,
    Constant,
    Decaying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub rounds: usize,
    /// Local steps between communications.
    #[serde(default = "one")]
    pub h: usize,
    /// Bucket count for the bucketing estimator; unset uses the default rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    /// Overrides the constant step `1/L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Record wall-clock time per round (makes CSV output non-reproducible).
    #[serde(default)]
    pub timing: bool,
    /// Norm of the randomly oriented optimum `w*`.
    #[serde(default = "default_w_star_norm")]
    pub w_star_norm: f64,
    /// Radius of the parameter ball; defaults to `10 |w0 - w*|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_delta() -> f64 {
    0.1
}

fn default_w_star_norm() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    /// Per-direction data noise.
    pub sigma: f64,
    /// Noise scale of an `h`-step local update; defaults to `h` times the
    /// single-gradient scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_h: Option<f64>,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            kind: TaskKind::MeanEstimation,
            sigma: 1.0,
            sigma_h: None,
        }
    }
}

/// Every knob of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub secure: SecureAggConfig,
    #[serde(default)]
    pub spectral: PowerConfig,
}

impl ExperimentConfig {
    /// Minimal config with library defaults everywhere else.
    pub fn new(m: usize, n: usize, d: usize, epsilon: f64, rounds: usize) -> Self {
        Self {
            experiment: ExperimentSection {
                m,
                n,
                d,
                epsilon,
                rounds,
                h: 1,
                k: None,
                delta: default_delta(),
                schedule: ScheduleKind::Auto,
                step: None,
                seed: 0,
                timing: false,
                w_star_norm: default_w_star_norm(),
                radius: None,
            },
            task: TaskSection::default(),
            estimator: EstimatorConfig::default(),
            attack: AttackConfig::default(),
            secure: SecureAggConfig::default(),
            spectral: PowerConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Estimator settings with the experiment-level values filled in.
    pub fn resolved_estimator(&self) -> EstimatorConfig {
        let mut est = self.estimator.clone();
        est.epsilon = self.experiment.epsilon;
        est.delta = self.experiment.delta;
        est.power = self.spectral;
        est.k = self.experiment.k;
        est
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let fail = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("m", e.m), ("n", e.n), ("d", e.d), ("h", e.h)] {
            if v == 0 {
                return fail(format!("`{name}` must be at least 1"));
            }
        }
        if !(0.0..0.5).contains(&e.epsilon) {
            return fail(format!("`epsilon` must lie in [0, 1/2), got {}", e.epsilon));
        }
        if !(e.delta > 0.0 && e.delta <= 1.0) {
            return fail(format!("`delta` must lie in (0, 1], got {}", e.delta));
        }
        if e.k == Some(0) || e.k.is_some_and(|k| k > e.m) {
            return fail(format!("`k` must lie in [1, m], got {:?}", e.k));
        }
        if let Some(s) = e.step {
            if !(s > 0.0 && s.is_finite()) {
                return fail(format!("`step` must be positive, got {s}"));
            }
        }
        if let Some(r) = e.radius {
            if !(r > 0.0 && r.is_finite()) {
                return fail(format!("`radius` must be positive, got {r}"));
            }
        }
        if !(e.w_star_norm >= 0.0 && e.w_star_norm.is_finite()) {
            return fail("`w_star_norm` must be finite and non-negative".into());
        }
        if !(self.task.sigma >= 0.0 && self.task.sigma.is_finite()) {
            return fail(format!("`task.sigma` must be non-negative, got {}", self.task.sigma));
        }
        if let Some(s) = self.task.sigma_h {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("`task.sigma_h` must be non-negative, got {s}"));
            }
        }
        if !(self.spectral.tol > 0.0) || self.spectral.max_iter == 0 {
            return fail("`spectral.tol` must be positive and `spectral.max_iter` at least 1".into());
        }
        if let Some(t) = &self.attack.target {
            if t.len() != e.d {
                return fail(format!("`attack.target` has length {}, expected d = {}", t.len(), e.d));
            }
        }
        self.resolved_estimator()
            .validate()
            .map_err(|err| Error::Config(err.to_string()))?;
        self.attack.validate().map_err(|err| Error::Config(err.to_string()))?;
        self.secure.validate().map_err(|err| Error::Config(err.to_string()))?;
        Ok(())
    }
}
