//! Acceptance criteria A1 to A9, each returning a measured-vs-threshold report.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use byzagg::attacks::{malicious_count, tma, AttackConfig, AttackKind};
use byzagg::estimators::{
    aggregate, bucketize, bulyan, coord_median, default_bucket_count, kl_project_capped_simplex, krum_index,
    BucketRule, BulyanInner, EstimatorConfig, EstimatorKind, NoiseModel,
};
use byzagg::secure_agg::{Quantizer, SecureAggTranscript, MERSENNE_61};
use byzagg::sim::{contraction_factors, plateau, run_experiment, theorem31_envelope, DeltaSource, ExperimentConfig};
use byzagg::spectral::{top_eigenpair, PowerConfig, WeightedEmpirical};
use byzagg::{Result, RngState, SampleMatrix};
use byzagg_oracle::{bulyan_krum_exhaustive, dense_covariance, jacobi_eigen, kl_divergence, kl_projection_grid, krum_exhaustive};

pub const ALL: [&str; 9] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"];

#[derive(Debug, Clone)]
pub struct Report {
    pub id: &'static str,
    pub pass: bool,
    pub measured: String,
    pub threshold: String,
    pub elapsed: Duration,
    /// Extra lines printed under the verdict.
    pub details: Vec<String>,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} measured: {} | threshold: {} | {:.1}s",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.measured,
            self.threshold,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs one criterion by id; `None` for an unknown id.
pub fn run(id: &str) -> Option<Result<Report>> {
    let started = Instant::now();
    let out = match id.to_ascii_uppercase().as_str() {
        "A1" => a1(),
        "A2" => a2(),
        "A3" => a3(),
        "A4" => a4(),
        "A5" => a5(),
        "A6" => a6(),
        "A7" => a7(),
        "A8" => a8(),
        "A9" => a9(),
        _ => return None,
    };
    Some(out.map(|mut r| {
        r.elapsed = started.elapsed();
        r
    }))
}

fn report(id: &'static str, pass: bool, measured: String, threshold: String, details: Vec<String>) -> Report {
    Report {
        id,
        pass,
        measured,
        threshold,
        elapsed: Duration::ZERO,
        details,
    }
}

fn within(started: Instant, limit_s: f64) -> bool {
    started.elapsed().as_secs_f64() < limit_s
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

fn plateaus(cfg: &ExperimentConfig, seeds: std::ops::Range<u64>) -> Result<Vec<f64>> {
    seeds
        .into_par_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.experiment.seed = s;
            Ok(plateau(&run_experiment(&c)?.records))
        })
        .collect()
}

/// Errors of coordinate median and Filtering on one TMA-corrupted sample:
/// `(median, filtering)` against the inlier sample mean and against the true mean.
fn a1_errors(d: usize, seed: u64) -> Result<([f64; 2], [f64; 2])> {
    let m = 200;
    let eps = 0.2;
    let bad = malicious_count(eps, m);
    let mut rng = RngState::new(seed, 0xa1).rng();
    let inliers: Vec<Vec<f64>> = (0..m - bad).map(|_| rng.normal_vec(d)).collect();
    let honest = SampleMatrix::from_rows(&inliers)?;
    let attack = tma(&honest, 0.1);
    let mut rows = inliers;
    rows.extend((0..bad).map(|_| attack.as_slice().to_vec()));
    let x = SampleMatrix::from_rows(&rows)?;

    let cm = coord_median(&x)?;
    let cfg = EstimatorConfig::new(EstimatorKind::Filtering, eps);
    let noise = NoiseModel {
        sigma: 1.0,
        n: 1,
        eta_t: 1.0,
    };
    let filt = aggregate(&cfg, &x, &noise, &mut RngState::new(seed, 0xa1f).rng())?.value;
    let inlier_mean = honest.mean();
    Ok((
        [cm.distance(&inlier_mean), filt.distance(&inlier_mean)],
        [cm.norm(), filt.norm()],
    ))
}

/// Dimension dependence of coordinate median versus Filtering under TMA.
pub fn a1() -> Result<Report> {
    let started = Instant::now();
    let mut stats = Vec::new();
    for d in [16usize, 256] {
        let runs: Vec<_> = (0..20u64)
            .into_par_iter()
            .map(|s| a1_errors(d, s))
            .collect::<Result<_>>()?;
        let col = |f: fn(&([f64; 2], [f64; 2])) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
        stats.push([
            col(|r| r.0[0]),
            col(|r| r.0[1]),
            col(|r| r.1[0]),
            col(|r| r.1[1]),
        ]);
    }
    let cm_ratio = stats[1][0] / stats[0][0];
    let f_ratio = stats[1][1] / stats[0][1];
    let half = stats[1][1] < 0.5 * stats[1][0];
    let fast = within(started, 120.0);
    let pass = cm_ratio >= 2.5 && f_ratio <= 1.8 && half && fast;
    Ok(report(
        "A1",
        pass,
        format!(
            "median ratio {cm_ratio:.3}, filtering ratio {f_ratio:.3}, filtering/median at d=256 {:.3}",
            stats[1][1] / stats[1][0]
        ),
        ">= 2.5, <= 1.8, < 0.5, runtime < 120s".into(),
        vec![
            format!(
                "errors vs inlier sample mean: median {:.4} -> {:.4}, filtering {:.4} -> {:.4} (d = 16 -> 256)",
                stats[0][0], stats[1][0], stats[0][1], stats[1][1]
            ),
            format!(
                "errors vs true mean: median {:.4} -> {:.4}, filtering {:.4} -> {:.4}",
                stats[0][2], stats[1][2], stats[0][3], stats[1][3]
            ),
        ],
    ))
}

/// No-attack plateaus of every estimator against the plain mean.
pub fn a2() -> Result<Report> {
    let started = Instant::now();
    let mut base = ExperimentConfig::new(100, 20, 32, 0.0, 30);
    base.estimator.kind = EstimatorKind::Mean;
    let mean = median(&plateaus(&base, 0..20)?);
    let mut worst: (f64, &str) = (0.0, "");
    let mut details = vec![format!("mean plateau {mean:.4}")];
    for kind in EstimatorKind::ALL {
        if kind == EstimatorKind::Mean {
            continue;
        }
        let mut cfg = base.clone();
        cfg.estimator.kind = kind;
        let p = median(&plateaus(&cfg, 0..20)?);
        let ratio = p / mean;
        details.push(format!("{:<16} plateau {p:.4} ratio {ratio:.3}", kind.name()));
        if ratio > worst.0 {
            worst = (ratio, kind.name());
        }
    }
    let pass = worst.0 <= 3.0 && within(started, 60.0);
    Ok(report(
        "A2",
        pass,
        format!("worst ratio {:.3} ({})", worst.0, worst.1),
        "<= 3.0 for every estimator, runtime < 60s".into(),
        details,
    ))
}

fn a3_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(100, 20, 32, 0.2, 100);
    cfg.attack = AttackConfig::new(AttackKind::Ima);
    cfg.estimator.kind = EstimatorKind::Filtering;
    cfg.experiment.seed = seed;
    cfg
}

/// Linear-convergence envelope for Filtering under IMA.
pub fn a3() -> Result<Report> {
    let started = Instant::now();
    let mut violations = 0;
    let mut agg_violations = 0;
    let mut worst_factor = 0.0f64;
    let mut rho = 0.0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let cfg = a3_config(seed);
        let out = run_experiment(&cfg)?;
        let (l, lambda) = (out.task.smoothness, out.task.strong_convexity);
        let env = theorem31_envelope(&out.records, l, lambda, out.w0_err, DeltaSource::StepErr, 0.1);
        let env_agg = theorem31_envelope(&out.records, l, lambda, out.w0_err, DeltaSource::AggErr, 0.1);
        rho = env.rho;
        violations += env.violations();
        agg_violations += env_agg.violations();
        let p = plateau(&out.records);
        let factors = contraction_factors(&out.records, out.w0_err, 2.0 * p);
        let f = factors.iter().copied().fold(0.0, f64::max);
        worst_factor = worst_factor.max(f);
        details.push(format!(
            "seed {seed}: plateau {p:.4}, contraction {factors:.3?}, violations {} (honest-mean reference: {})",
            env.violations(),
            env_agg.violations()
        ));
    }
    let pass = violations == 0 && worst_factor <= rho + 0.05 && within(started, 60.0);
    details.push(format!(
        "with Delta measured against the honest mean instead: {agg_violations} violations"
    ));
    Ok(report(
        "A3",
        pass,
        format!("violations {violations}, worst contraction {worst_factor:.3}"),
        format!("0 violations (slack 0.1), contraction <= {:.3}, runtime < 60s", rho + 0.05),
        details,
    ))
}

/// Exact mask cancellation on random buckets.
pub fn a4() -> Result<Report> {
    let mut rng = RngState::new(0, 0xa4).rng();
    let mut failures = 0;
    for b in 0..100 {
        let size = 1 + rng.below(16) as usize;
        let d = 1 + rng.below(64) as usize;
        let members: Vec<usize> = rng.sample_indices(1000, size);
        let codes: Vec<Vec<u64>> = (0..size)
            .map(|_| (0..d).map(|_| rng.below(1 << 16)).collect())
            .collect();
        let t = SecureAggTranscript::run(b, &members, codes, MERSENNE_61, &mut rng);
        if !t.cancels(MERSENNE_61) {
            failures += 1;
        }
    }
    Ok(report(
        "A4",
        failures == 0,
        format!("{failures} failures in 100 buckets"),
        "0 failures".into(),
        Vec::new(),
    ))
}

/// Quantizer round trip and the end-to-end effect of secure mode.
pub fn a5() -> Result<Report> {
    let mut rng = RngState::new(0, 0xa5).rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = 1 + rng.below(64) as usize;
        let clip = 0.01 + 10.0 * rng.uniform();
        let q = Quantizer {
            modulus: MERSENNE_61,
            levels: 1 << 16,
            clip,
        };
        let v: Vec<f64> = (0..d).map(|_| clip * (2.0 * rng.uniform() - 1.0)).collect();
        let back = q.dequantize(&q.quantize(&v.clone().into()));
        for (a, b) in v.iter().zip(back.as_slice()) {
            worst = worst.max((a - b).abs() / (clip / (q.levels - 1) as f64));
        }
    }
    // Plateau statistic: per-run median of the last 10% of rounds, then the
    // median over 10 seeds.
    let mut plain = Vec::new();
    let mut secure = Vec::new();
    for seed in 0..10 {
        plain.push(plateau(&run_experiment(&a3_config(seed))?.records));
        let mut cfg = a3_config(seed);
        cfg.secure.enabled = true;
        secure.push(plateau(&run_experiment(&cfg)?.records));
    }
    let (mp, ms) = (median(&plain), median(&secure));
    let change = (ms - mp).abs() / mp;
    let per_seed: Vec<String> = plain
        .iter()
        .zip(&secure)
        .map(|(p, s)| format!("{:.2e}", (s - p).abs() / p))
        .collect();
    let pass = worst <= 1.0 + 1e-9 && change < 0.01;
    Ok(report(
        "A5",
        pass,
        format!("max error / (C/(levels-1)) {worst:.6}, plateau change {:.4}%", 100.0 * change),
        "<= 1, < 1%".into(),
        vec![
            format!("plateau {mp:.5} plaintext, {ms:.5} secure"),
            format!("per-seed relative change {per_seed:?}"),
        ],
    ))
}

/// Filtering plateau at eps = 0.4 against eps = 0.2 under IMA.
pub fn a6() -> Result<Report> {
    let mut at = Vec::new();
    for eps in [0.2, 0.4] {
        let mut cfg = ExperimentConfig::new(100, 20, 32, eps, 30);
        cfg.attack = AttackConfig::new(AttackKind::Ima);
        at.push(median(&plateaus(&cfg, 0..10)?));
    }
    let ratio = at[1] / at[0];
    Ok(report(
        "A6",
        ratio <= 2.0,
        format!("plateau {:.4} (eps 0.2), {:.4} (eps 0.4), ratio {ratio:.3}", at[0], at[1]),
        "ratio <= 2".into(),
        Vec::new(),
    ))
}

/// Corrupted buckets never exceed the number of Byzantine clients.
pub fn a7() -> Result<Report> {
    let delta = 0.1;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut details = Vec::new();
    for (m, eps) in [(100usize, 0.1), (100, 0.2), (100, 0.3), (37, 0.25)] {
        let k = default_bucket_count(eps, m, delta, BucketRule::Double);
        let expected = (2.0 * eps * m as f64 + (1.0 / delta).ln()).floor() as usize;
        if k != expected.min(m) {
            failures += 1;
        }
        let bad = malicious_count(eps, m);
        let mut max_frac = 0.0f64;
        for trial in 0..1000u64 {
            let mut rng = RngState::new(trial, 0xa7).rng();
            let ids = rng.sample_indices(m, bad);
            let buckets = bucketize(m, k, &mut rng)?;
            let corrupted = buckets.iter().filter(|b| b.iter().any(|i| ids.contains(i))).count();
            if corrupted > bad {
                failures += 1;
            }
            max_frac = max_frac.max(corrupted as f64 / k as f64);
        }
        let bound = bad as f64 / k as f64;
        if max_frac > bound {
            failures += 1;
        }
        worst = worst.max(max_frac / bound);
        details.push(format!("m={m} eps={eps} k={k}: max corrupted fraction {max_frac:.3}, bound {bound:.3}"));
    }
    Ok(report(
        "A7",
        failures == 0,
        format!("{failures} violations, worst fraction / bound {worst:.3}"),
        "0 violations in 1000 trials per setting".into(),
        details,
    ))
}

/// Agreement with the test-only oracles.
pub fn a8() -> Result<Report> {
    let mut rng = RngState::new(0, 0xa8).rng();
    let mut kl_gap = 0.0f64;
    let mut kl_fail = 0;
    for _ in 0..50 {
        let raw: Vec<f64> = (0..4).map(|_| rng.uniform() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let qt: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let cap = (260.0 + (90.0 * rng.uniform()).floor()) * 1e-3;
        let q = kl_project_capped_simplex(&qt, cap)?;
        let (_, grid) = kl_projection_grid(&qt, cap, 1e-3);
        let kl = kl_divergence(&q, &qt);
        kl_gap = kl_gap.max((kl - grid).abs());
        if (kl - grid).abs() > 1e-3 {
            kl_fail += 1;
        }
    }

    let mut eig_rel = 0.0f64;
    let mut eig_fail = 0;
    for _ in 0..50 {
        let d = 1 + rng.below(8) as usize;
        let m = d + 2 + rng.below(10) as usize;
        let rows: Vec<Vec<f64>> = (0..m).map(|_| rng.normal_vec(d)).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.uniform() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let x = SampleMatrix::from_rows(&rows)?;
        let we = WeightedEmpirical::new(&x, &q)?;
        let e = top_eigenpair(&we, PowerConfig::default(), &mut rng);
        let (vals, _) = jacobi_eigen(&dense_covariance(&rows, &q));
        let rel = (e.value - vals[0]).abs() / vals[0];
        eig_rel = eig_rel.max(rel);
        if rel > 1e-6 {
            eig_fail += 1;
        }
    }

    let mut krum_fail = 0;
    for _ in 0..50 {
        let m = 3 + rng.below(6) as usize;
        let d = 1 + rng.below(3) as usize;
        let f = rng.below(((m - 3) / 4 + 1) as u64) as usize;
        let rows: Vec<Vec<f64>> = (0..m).map(|_| rng.normal_vec(d)).collect();
        let x = SampleMatrix::from_rows(&rows)?;
        if krum_index(&x, f)? != krum_exhaustive(&rows, f) {
            krum_fail += 1;
        }
        let got = bulyan(&x, f, BulyanInner::Krum)?;
        let want = bulyan_krum_exhaustive(&rows, f);
        if got.as_slice().iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
            krum_fail += 1;
        }
    }
    let pass = kl_fail == 0 && eig_fail == 0 && krum_fail == 0;
    Ok(report(
        "A8",
        pass,
        format!(
            "KL gap {kl_gap:.2e} ({kl_fail} fail), eigen rel {eig_rel:.2e} ({eig_fail} fail), Krum/Bulyan {krum_fail} mismatches"
        ),
        "KL <= 1e-3, rel <= 1e-6, exact match".into(),
        Vec::new(),
    ))
}

fn a9_config(eps: f64, n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(1000, n, 1, eps, 3);
    cfg.attack = AttackConfig::new(AttackKind::LowerBound);
    cfg
}

/// Rate shape of the Filtering plateau under the lower-bound adversary.
pub fn a9() -> Result<Report> {
    let started = Instant::now();
    let sigma = 1.0;
    let eps_values = [0.05, 0.1, 0.2, 0.4];
    let by_eps: Vec<f64> = eps_values
        .iter()
        .map(|&e| Ok(median(&plateaus(&a9_config(e, 20), 0..10)?)))
        .collect::<Result<_>>()?;
    let n_values = [10usize, 40, 160];
    let by_n: Vec<f64> = n_values
        .iter()
        .map(|&n| Ok(median(&plateaus(&a9_config(0.2, n), 0..10)?)))
        .collect::<Result<_>>()?;
    let eps_slope = log_log_slope(&eps_values, &by_eps);
    let n_slope = log_log_slope(&n_values.map(|n| n as f64), &by_n);

    let floor = 0.1 * sigma * (0.2f64 / 20.0).sqrt();
    let mut lowest = (f64::INFINITY, "");
    let mut details = vec![
        format!("eps sweep (n = 20): {by_eps:.4?}"),
        format!("n sweep (eps = 0.2): {by_n:.4?}"),
    ];
    for kind in EstimatorKind::ALL {
        let mut cfg = a9_config(0.2, 20);
        cfg.estimator.kind = kind;
        let p = median(&plateaus(&cfg, 0..10)?);
        details.push(format!("{:<16} plateau {p:.4}", kind.name()));
        if p < lowest.0 {
            lowest = (p, kind.name());
        }
    }
    let pass = (0.3..=0.7).contains(&eps_slope)
        && (-0.7..=-0.3).contains(&n_slope)
        && lowest.0 >= floor
        && within(started, 300.0);
    Ok(report(
        "A9",
        pass,
        format!(
            "eps slope {eps_slope:.3}, n slope {n_slope:.3}, lowest plateau {:.4} ({})",
            lowest.0, lowest.1
        ),
        format!("[0.3, 0.7], [-0.7, -0.3], >= {floor:.4}, runtime < 300s"),
        details,
    ))
}
