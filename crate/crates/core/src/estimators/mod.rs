//! Aggregation rules and the dispatcher the simulator calls each round.

mod bucketing;
mod coordinate;
mod filtering;
mod geomed;
mod krum;
mod no_regret;
mod threshold;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bucketing::{bucket_means, bucketize, default_bucket_count, BucketRule};
pub use coordinate::{coord_median, coord_trim_count, coord_trimmed_mean};
pub use filtering::{filtering, FilteringOutcome};
pub use geomed::{geometric_median, GeoMedConfig, GeoMedOutcome};
pub use krum::{bulyan, bulyan_selection, krum, krum_index, BulyanInner};
pub use no_regret::{kl_project_capped_simplex, no_regret, prefilter, NoRegretConfig, NoRegretOutcome};
pub use threshold::{
    compute_threshold, ThresholdConstants, ThresholdParams, ThresholdSpec, ThresholdVariant,
};

use crate::error::{Error, Result};
use crate::rng::{DetRng, RngState};
use crate::spectral::{split_intervals, PowerConfig};
use crate::vector::{ParamVector, SampleMatrix};

/// No-regret on bucket means runs with a fixed corruption parameter and step
/// constant, independent of the client-level `epsilon`.
pub const BUCKETED_NO_REGRET_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mean,
    CoordMedian,
    TrimmedMean,
    GeometricMedian,
    Krum,
    Bulyan,
    Filtering,
    NoRegret,
    Bucketing,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::CoordMedian => "coord-median",
            Self::TrimmedMean => "trimmed-mean",
            Self::GeometricMedian => "geometric-median",
            Self::Krum => "krum",
            Self::Bulyan => "bulyan",
            Self::Filtering => "filtering",
            Self::NoRegret => "no-regret",
            Self::Bucketing => "bucketing",
        }
    }

    pub const ALL: [EstimatorKind; 9] = [
        Self::Mean,
        Self::CoordMedian,
        Self::TrimmedMean,
        Self::GeometricMedian,
        Self::Krum,
        Self::Bulyan,
        Self::Filtering,
        Self::NoRegret,
        Self::Bucketing,
    ];
}

/// Spectral estimator run on bucket means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustInner {
    #[default]
    Filtering,
    NoRegret,
}

/// Per-upload noise model used by the threshold formulas: each honest row has
/// covariance at most `eta_t^2 sigma^2 / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub n: usize,
    pub eta_t: f64,
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        self.eta_t * self.eta_t * self.sigma * self.sigma / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Trimming fraction; defaults to `epsilon`.
    pub beta: Option<f64>,
    /// Assumed Byzantine count for Krum and Bulyan; defaults to `floor(eps m)`.
    pub f: Option<usize>,
    pub bulyan_inner: BulyanInner,
    pub bucket_inner: RobustInner,
    /// Bucket count; defaults to the `bucket_rule` formula. Supplied by the experiment.
    #[serde(skip)]
    pub k: Option<usize>,
    pub bucket_rule: BucketRule,
    /// Defaults: eq2 (filtering), eq1 (no-regret), eq7 / eq6 (bucketed).
    pub threshold: Option<ThresholdVariant>,
    /// Threshold for `threshold = "manual"`.
    pub xi: Option<f64>,
    pub constants: ThresholdConstants,
    /// No-regret step constant.
    pub eta: f64,
    pub eps_min: f64,
    /// Coordinate block length for spectral estimators; unset runs on all coordinates.
    pub interval_size: Option<usize>,
    pub max_iter: usize,
    pub prefilter_c0: f64,
    pub geomed: GeoMedConfig,
    /// Supplied by the experiment.
    #[serde(skip)]
    pub epsilon: f64,
    /// Supplied by the experiment.
    #[serde(skip)]
    pub delta: f64,
    /// Supplied by the experiment.
    #[serde(skip)]
    pub power: PowerConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Filtering,
            beta: None,
            f: None,
            bulyan_inner: BulyanInner::Krum,
            bucket_inner: RobustInner::Filtering,
            k: None,
            bucket_rule: BucketRule::Double,
            threshold: None,
            xi: None,
            constants: ThresholdConstants::default(),
            eta: 0.1,
            eps_min: 1e-3,
            interval_size: None,
            max_iter: 500,
            prefilter_c0: 4.0,
            geomed: GeoMedConfig::default(),
            epsilon: 0.0,
            delta: 0.1,
            power: PowerConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(0.0..0.5).contains(&self.epsilon) {
            return bad("epsilon", format!("must lie in [0, 1/2), got {}", self.epsilon));
        }
        if let Some(beta) = self.beta {
            if !(0.0..0.5).contains(&beta) {
                return bad("beta", format!("must lie in [0, 1/2), got {beta}"));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta", format!("must lie in (0, 1), got {}", self.eta));
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0 && xi.is_finite()) {
                return bad("xi", format!("must be finite and non-negative, got {xi}"));
            }
        }
        if self.threshold == Some(ThresholdVariant::Manual) && self.xi.is_none() {
            return bad("xi", "threshold = \"manual\" requires `xi`".into());
        }
        if self.interval_size == Some(0) {
            return bad("interval_size", "must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta", format!("must lie in (0, 1], got {}", self.delta));
        }
        if !(self.eps_min > 0.0) {
            return bad("eps_min", "must be positive".into());
        }
        if self.k == Some(0) {
            return bad("k", "must be at least 1".into());
        }
        Ok(())
    }

    /// Byzantine count assumed by Krum and Bulyan on `m` rows.
    pub fn byzantine_count(&self, m: usize) -> usize {
        self.f
            .unwrap_or_else(|| (self.epsilon * m as f64 + 1e-9).floor() as usize)
    }

    /// Buckets used for `m` clients, clamped into `[1, m]`.
    pub fn bucket_count(&self, m: usize) -> usize {
        match self.k {
            Some(k) => k.clamp(1, m.max(1)),
            None => default_bucket_count(self.epsilon, m, self.delta, self.bucket_rule),
        }
    }

    /// True when the rule reduces to the plain mean (spectral kinds at `eps = 0`).
    pub fn short_circuits(&self) -> bool {
        matches!(
            self.kind,
            EstimatorKind::Filtering | EstimatorKind::NoRegret | EstimatorKind::Bucketing
        ) && self.epsilon == 0.0
    }

    fn variant_for(&self, inner: RobustInner, bucketed: bool) -> ThresholdVariant {
        self.threshold.unwrap_or(match (inner, bucketed) {
            (RobustInner::Filtering, false) => ThresholdVariant::Eq2,
            (RobustInner::NoRegret, false) => ThresholdVariant::Eq1,
            (RobustInner::Filtering, true) => ThresholdVariant::Eq7,
            (RobustInner::NoRegret, true) => ThresholdVariant::Eq6,
        })
    }
}

/// Output of one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: ParamVector,
    /// False when an iterative rule stopped at its iteration cap.
    pub converged: bool,
    /// Largest iteration count over coordinate intervals.
    pub iterations: usize,
    /// False when some eigen-solve hit its own cap.
    pub eigen_converged: bool,
}

impl Aggregate {
    fn exact(value: ParamVector) -> Self {
        Self {
            value,
            converged: true,
            iterations: 0,
            eigen_converged: true,
        }
    }
}

/// Runs the configured rule on `updates`.
///
/// Spectral rules split the coordinates into intervals when
/// `interval_size` is set, run independently per interval (each with its
/// own random stream) and concatenate the results.
pub fn aggregate(
    cfg: &EstimatorConfig,
    updates: &SampleMatrix,
    noise: &NoiseModel,
    rng: &mut DetRng,
) -> Result<Aggregate> {
    cfg.validate()?;
    if updates.rows() == 0 {
        return Err(Error::Empty("updates"));
    }
    updates.check_finite("updates")?;
    if cfg.short_circuits() {
        return Ok(Aggregate::exact(updates.mean()));
    }
    let m = updates.rows();
    match cfg.kind {
        EstimatorKind::Mean => Ok(Aggregate::exact(updates.mean())),
        EstimatorKind::CoordMedian => Ok(Aggregate::exact(coord_median(updates)?)),
        EstimatorKind::TrimmedMean => Ok(Aggregate::exact(coord_trimmed_mean(
            updates,
            cfg.beta.unwrap_or(cfg.epsilon),
        )?)),
        EstimatorKind::GeometricMedian => {
            let out = geometric_median(updates, cfg.geomed)?;
            Ok(Aggregate {
                value: out.value,
                converged: out.converged,
                iterations: out.iterations,
                eigen_converged: true,
            })
        }
        EstimatorKind::Krum => Ok(Aggregate::exact(krum(updates, cfg.byzantine_count(m))?)),
        EstimatorKind::Bulyan => Ok(Aggregate::exact(bulyan(
            updates,
            cfg.byzantine_count(m),
            cfg.bulyan_inner,
        )?)),
        EstimatorKind::Filtering => spectral(cfg, RobustInner::Filtering, updates, None, noise, rng),
        EstimatorKind::NoRegret => spectral(cfg, RobustInner::NoRegret, updates, None, noise, rng),
        EstimatorKind::Bucketing => bucketed_aggregate(cfg, updates, noise, rng),
    }
}

/// Buckets `updates` at random, averages each bucket and runs the inner
/// spectral rule on the bucket means.
pub fn bucketed_aggregate(
    cfg: &EstimatorConfig,
    updates: &SampleMatrix,
    noise: &NoiseModel,
    rng: &mut DetRng,
) -> Result<Aggregate> {
    cfg.validate()?;
    updates.check_finite("updates")?;
    let m = updates.rows();
    if m == 0 {
        return Err(Error::Empty("updates"));
    }
    if cfg.epsilon == 0.0 {
        return Ok(Aggregate::exact(updates.mean()));
    }
    let buckets = bucketize(m, cfg.bucket_count(m), rng)?;
    let means = bucket_means(updates, &buckets);
    aggregate_bucket_means(cfg, &means, m, noise, rng)
}

/// Inner spectral rule on precomputed bucket means of `m_clients` uploads.
pub fn aggregate_bucket_means(
    cfg: &EstimatorConfig,
    means: &SampleMatrix,
    m_clients: usize,
    noise: &NoiseModel,
    rng: &mut DetRng,
) -> Result<Aggregate> {
    cfg.validate()?;
    means.check_finite("bucket means")?;
    if cfg.epsilon == 0.0 {
        // Equal-size buckets up to one row; the clear-text path averages rows directly.
        return Ok(Aggregate::exact(means.mean()));
    }
    spectral(cfg, cfg.bucket_inner, means, Some(m_clients), noise, rng)
}

struct IntervalRun {
    value: Vec<f64>,
    converged: bool,
    iterations: usize,
    eigen_converged: bool,
}

fn spectral(
    cfg: &EstimatorConfig,
    inner: RobustInner,
    rows: &SampleMatrix,
    bucketed_from: Option<usize>,
    noise: &NoiseModel,
    rng: &mut DetRng,
) -> Result<Aggregate> {
    let d = rows.dim();
    let ranges = split_intervals(d, cfg.interval_size.unwrap_or(d).min(d.max(1)));
    let seeds: Vec<u64> = ranges.iter().map(|_| rng.next_u64()).collect();
    let runs: Vec<Result<IntervalRun>> = ranges
        .par_iter()
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(idx, (range, &seed))| {
            let block = if ranges.len() == 1 {
                rows.clone()
            } else {
                rows.column_range(range.start, range.end)
            };
            let mut sub_rng = RngState::new(seed, idx as u64).rng();
            run_block(cfg, inner, &block, bucketed_from, noise, &mut sub_rng)
        })
        .collect();

    let mut value = Vec::with_capacity(d);
    let mut out = Aggregate {
        value: ParamVector::zeros(0),
        converged: true,
        iterations: 0,
        eigen_converged: true,
    };
    for run in runs {
        let run = run?;
        value.extend_from_slice(&run.value);
        out.converged &= run.converged;
        out.eigen_converged &= run.eigen_converged;
        out.iterations = out.iterations.max(run.iterations);
    }
    out.value = ParamVector::new(value);
    Ok(out)
}

fn run_block(
    cfg: &EstimatorConfig,
    inner: RobustInner,
    block: &SampleMatrix,
    bucketed_from: Option<usize>,
    noise: &NoiseModel,
    rng: &mut DetRng,
) -> Result<IntervalRun> {
    let rows = block.rows();
    let variant = cfg.variant_for(inner, bucketed_from.is_some());
    let bucket_specific = matches!(variant, ThresholdVariant::Eq6 | ThresholdVariant::Eq7);
    // Bucket-specific forms are written in terms of clients; the generic
    // forms see each bucket mean as one sample averaging `n m / k` draws.
    let (m_param, n_param) = match bucketed_from {
        Some(m_clients) if bucket_specific => (m_clients, noise.n as f64),
        Some(m_clients) => (rows, noise.n as f64 * m_clients as f64 / rows as f64),
        None => (rows, noise.n as f64),
    };
    let epsilon = match (bucketed_from, inner) {
        (Some(_), RobustInner::NoRegret) => BUCKETED_NO_REGRET_EPSILON,
        _ => cfg.epsilon,
    };
    let params = ThresholdParams {
        epsilon,
        eta: cfg.eta,
        sigma: noise.sigma,
        d: block.dim(),
        m: m_param,
        n: n_param,
        delta: cfg.delta,
        eta_t: noise.eta_t,
        k: rows,
        constants: cfg.constants,
        eps_min: cfg.eps_min,
        manual_xi: cfg.xi,
    };
    let xi = compute_threshold(variant, &params)?.xi;
    match inner {
        RobustInner::Filtering => {
            let q0 = vec![1.0 / rows as f64; rows];
            let out = filtering(block, &q0, xi, cfg.max_iter, cfg.power, rng)?;
            Ok(IntervalRun {
                value: out.value.into_inner(),
                converged: out.converged,
                iterations: out.iterations,
                eigen_converged: out.eigen_converged,
            })
        }
        RobustInner::NoRegret => {
            // Per-row covariance bound handed to the step size.
            let sigma2 = match bucketed_from {
                Some(m_clients) => {
                    rows as f64 * noise.eta_t * noise.eta_t * noise.sigma * noise.sigma
                        / (m_clients as f64 * noise.n as f64)
                }
                None => noise.variance(),
            };
            // A noiseless task makes every honest row identical; any positive
            // scale keeps the step well defined.
            let sigma2 = if sigma2 > 0.0 { sigma2 } else { f64::MIN_POSITIVE.sqrt() };
            let nr = NoRegretConfig {
                eta: cfg.eta,
                prefilter_c0: cfg.prefilter_c0,
                max_iter: cfg.max_iter,
            };
            let out = no_regret(block, epsilon, sigma2, xi, nr, cfg.power, rng)?;
            Ok(IntervalRun {
                value: out.value.into_inner(),
                converged: out.converged,
                iterations: out.iterations,
                eigen_converged: out.eigen_converged,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise() -> NoiseModel {
        NoiseModel {
            sigma: 1.0,
            n: 1,
            eta_t: 1.0,
        }
    }

    fn rng(seed: u64) -> DetRng {
        RngState::new(seed, 0).rng()
    }

    fn col(values: &[f64]) -> SampleMatrix {
        SampleMatrix::from_flat(values.to_vec(), values.len(), 1).unwrap()
    }

    #[test]
    fn dispatch_examples() {
        let x = SampleMatrix::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let cfg = EstimatorConfig::new(EstimatorKind::Mean, 0.0);
        assert_eq!(aggregate(&cfg, &x, &noise(), &mut rng(0)).unwrap().value.as_slice(), &[1.0, 1.0]);

        let cfg = EstimatorConfig::new(EstimatorKind::CoordMedian, 0.1);
        let out = aggregate(&cfg, &col(&[1.0, 2.0, 100.0]), &noise(), &mut rng(0)).unwrap();
        assert_eq!(out.value[0], 2.0);

        let mut v = vec![0.0; 90];
        v.extend(std::iter::repeat_n(50.0, 10));
        let cfg = EstimatorConfig {
            threshold: Some(ThresholdVariant::Manual),
            xi: Some(1.0),
            ..EstimatorConfig::new(EstimatorKind::Filtering, 0.1)
        };
        let out = aggregate(&cfg, &col(&v), &noise(), &mut rng(0)).unwrap();
        assert!(out.value[0].abs() < 0.2);
    }

    #[test]
    fn zero_epsilon_short_circuits_spectral_rules() {
        let x = SampleMatrix::from_rows(&[[0.0, 1.0], [5.0, -3.0], [100.0, 2.0]]).unwrap();
        for kind in [EstimatorKind::Filtering, EstimatorKind::NoRegret, EstimatorKind::Bucketing] {
            let out = aggregate(&EstimatorConfig::new(kind, 0.0), &x, &noise(), &mut rng(1)).unwrap();
            assert_eq!(out.value, x.mean());
        }
    }

    #[test]
    fn non_finite_rows_are_rejected() {
        let x = col(&[1.0, f64::NAN, 2.0]);
        let cfg = EstimatorConfig::new(EstimatorKind::Mean, 0.0);
        assert!(matches!(aggregate(&cfg, &x, &noise(), &mut rng(0)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn singleton_buckets_match_unbucketed_filtering() {
        let mut r = rng(5);
        let mut rows: Vec<Vec<f64>> = (0..40).map(|_| r.normal_vec(3)).collect();
        rows.extend((0..8).map(|_| vec![30.0, 0.0, 0.0]));
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let manual = EstimatorConfig {
            threshold: Some(ThresholdVariant::Manual),
            xi: Some(2.0),
            k: Some(48),
            ..EstimatorConfig::new(EstimatorKind::Bucketing, 0.2)
        };
        let bucketed = bucketed_aggregate(&manual, &x, &noise(), &mut rng(7)).unwrap();
        let plain = aggregate(
            &EstimatorConfig { kind: EstimatorKind::Filtering, ..manual.clone() },
            &x,
            &noise(),
            &mut rng(8),
        )
        .unwrap();
        assert!(bucketed.value.distance(&plain.value) < 1e-6);
    }

    #[test]
    fn identical_updates_pass_through_buckets() {
        let x = SampleMatrix::from_rows(&[[1.5, -2.0]; 30]).unwrap();
        for inner in [RobustInner::Filtering, RobustInner::NoRegret] {
            let cfg = EstimatorConfig {
                bucket_inner: inner,
                ..EstimatorConfig::new(EstimatorKind::Bucketing, 0.2)
            };
            let out = aggregate(&cfg, &x, &noise(), &mut rng(2)).unwrap();
            for (a, b) in out.value.as_slice().iter().zip([1.5, -2.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interval_splitting_concatenates_blocks() {
        let mut r = rng(6);
        let mut rows: Vec<Vec<f64>> = (0..60).map(|_| r.normal_vec(10)).collect();
        rows.extend((0..10).map(|_| vec![20.0; 10]));
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let cfg = EstimatorConfig {
            interval_size: Some(4),
            ..EstimatorConfig::new(EstimatorKind::Filtering, 0.15)
        };
        let a = aggregate(&cfg, &x, &noise(), &mut rng(3)).unwrap();
        let b = aggregate(&cfg, &x, &noise(), &mut rng(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value.dim(), 10);
        assert!(a.value.norm() < 1.5, "{:?}", a.value);
    }

    #[test]
    fn krum_defaults_to_floor_eps_m() {
        let cfg = EstimatorConfig::new(EstimatorKind::Krum, 0.2);
        assert_eq!(cfg.byzantine_count(100), 20);
        assert_eq!(cfg.byzantine_count(9), 1);
    }

    fn instance(seed: u64, m: usize, d: usize) -> SampleMatrix {
        let mut r = RngState::new(seed, 3).rng();
        let mut rows: Vec<Vec<f64>> = (0..m).map(|_| r.normal_vec(d)).collect();
        for row in rows.iter_mut().take(m / 8) {
            row.iter_mut().for_each(|v| *v = *v * 0.1 + 12.0);
        }
        SampleMatrix::from_rows(&rows).unwrap()
    }

    fn deterministic_kinds() -> Vec<EstimatorConfig> {
        let mut out: Vec<EstimatorConfig> = [
            EstimatorKind::Mean,
            EstimatorKind::CoordMedian,
            EstimatorKind::TrimmedMean,
            EstimatorKind::GeometricMedian,
            EstimatorKind::Krum,
            EstimatorKind::Bulyan,
            EstimatorKind::Filtering,
            EstimatorKind::NoRegret,
        ]
        .into_iter()
        .map(|k| EstimatorConfig::new(k, 0.15))
        .collect();
        out.push(EstimatorConfig {
            bulyan_inner: BulyanInner::CoordMedian,
            ..EstimatorConfig::new(EstimatorKind::Bulyan, 0.15)
        });
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn permutation_invariance(seed in 0u64..10_000) {
            let x = instance(seed, 40, 3);
            let mut r = RngState::new(seed, 4).rng();
            let perm = r.permutation(40);
            let y = x.select_rows(&perm);
            for cfg in deterministic_kinds() {
                let a = aggregate(&cfg, &x, &noise(), &mut rng(seed)).unwrap().value;
                let b = aggregate(&cfg, &y, &noise(), &mut rng(seed)).unwrap().value;
                prop_assert!(a.distance(&b) <= 1e-9 * (1.0 + a.norm()), "{:?}: {:?} vs {:?}", cfg.kind, a, b);
            }
        }

        #[test]
        fn translation_equivariance(seed in 0u64..10_000, shift in prop::collection::vec(-20.0f64..20.0, 3)) {
            let x = instance(seed, 40, 3);
            let y = x.translated(&shift);
            for kind in [
                EstimatorKind::Mean,
                EstimatorKind::CoordMedian,
                EstimatorKind::TrimmedMean,
                EstimatorKind::Filtering,
                EstimatorKind::NoRegret,
            ] {
                let cfg = EstimatorConfig::new(kind, 0.15);
                let a = aggregate(&cfg, &x, &noise(), &mut rng(seed)).unwrap().value;
                let b = aggregate(&cfg, &y, &noise(), &mut rng(seed)).unwrap().value;
                let expected = a.add(&ParamVector::new(shift.clone()));
                prop_assert!(b.distance(&expected) <= 1e-8 * (1.0 + expected.norm()), "{kind:?}");
            }
        }

        #[test]
        fn spectral_rules_stay_bounded_under_corruption(seed in 0u64..10_000, scale in 1.0f64..1e4) {
            let mut r = RngState::new(seed, 8).rng();
            let mut rows: Vec<Vec<f64>> = (0..80).map(|_| r.normal_vec(4)).collect();
            let max_inlier = rows.iter().map(|v| crate::vector::norm(v)).fold(0.0, f64::max);
            let dir = r.unit_vector(4);
            rows.extend((0..20).map(|_| dir.iter().map(|v| v * scale).collect::<Vec<_>>()));
            let x = SampleMatrix::from_rows(&rows).unwrap();
            for kind in [EstimatorKind::Filtering, EstimatorKind::NoRegret] {
                let cfg = EstimatorConfig::new(kind, 0.2);
                let out = aggregate(&cfg, &x, &noise(), &mut rng(seed)).unwrap().value;
                let xi = compute_threshold(cfg.variant_for(
                    if kind == EstimatorKind::Filtering { RobustInner::Filtering } else { RobustInner::NoRegret },
                    false,
                ), &ThresholdParams {
                    epsilon: 0.2, eta: 0.1, sigma: 1.0, d: 4, m: 100, n: 1.0, delta: 0.1,
                    eta_t: 1.0, k: 100, constants: ThresholdConstants::default(), eps_min: 1e-3, manual_xi: None,
                }).unwrap().xi;
                prop_assert!(out.norm() <= max_inlier + 3.0 * xi.sqrt(), "{kind:?}: {}", out.norm());
            }
        }
    }
}
