use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::spectral::{quasi_gradient, top_eigenpair_from, PowerConfig, WeightedEmpirical};
use crate::vector::{pairwise_sq_distances, ParamVector, SampleMatrix};

/// Exact KL projection of `q_tilde` onto `{q : sum q = 1, 0 <= q_i <= cap}`.
///
/// The minimizer has the form `q_i = min(cap, gamma * q_tilde_i)`; `gamma` is
/// found by scanning the entries in decreasing order for the number of
/// capped coordinates.
pub fn kl_project_capped_simplex(q_tilde: &[f64], cap: f64) -> Result<Vec<f64>> {
    if q_tilde.is_empty() {
        return Err(Error::Empty("q_tilde"));
    }
    if q_tilde.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeights("q_tilde must be finite and non-negative".into()));
    }
    let support = q_tilde.iter().filter(|v| **v > 0.0).count();
    if support == 0 {
        return Err(Error::InvalidWeights("q_tilde has no positive entry".into()));
    }
    if !(cap > 0.0) || cap * (support as f64) < 1.0 - 1e-12 {
        return Err(Error::InfeasibleCap { cap, support });
    }

    let mut order: Vec<usize> = (0..q_tilde.len()).filter(|&i| q_tilde[i] > 0.0).collect();
    order.sort_by(|&a, &b| q_tilde[b].total_cmp(&q_tilde[a]).then(a.cmp(&b)));
    let mut tail: f64 = order.iter().map(|&i| q_tilde[i]).sum();
    let mut gamma = 1.0 / tail;
    // With `t` entries capped, gamma = (1 - t cap) / (sum of the rest); the
    // right `t` is the first one at which the largest uncapped entry fits.
    for (t, &i) in order.iter().enumerate() {
        gamma = (1.0 - t as f64 * cap) / tail;
        if gamma * q_tilde[i] <= cap {
            break;
        }
        tail -= q_tilde[i];
        if tail <= 0.0 {
            gamma = f64::INFINITY;
            break;
        }
    }
    let q: Vec<f64> = q_tilde
        .iter()
        .map(|&v| if v > 0.0 { (gamma * v).min(cap) } else { 0.0 })
        .collect();
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoRegretConfig {
    /// Step constant, in (0, 1).
    pub eta: f64,
    /// Pre-filter cutoff multiplier `c0` in `c0 * sigma_est * sqrt(d ln m)`.
    pub prefilter_c0: f64,
    pub max_iter: usize,
}

impl Default for NoRegretConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            prefilter_c0: 4.0,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoRegretOutcome {
    pub value: ParamVector,
    /// Weights over the input rows (pre-filtered rows carry 0).
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub eigen_converged: bool,
    /// Rows removed by the distance pre-filter.
    pub prefiltered: usize,
    /// `|Cov_q|_2` at each visited iterate.
    pub spectral_history: Vec<f64>,
}

/// Indices surviving the distance pre-filter: a row is dropped when it lies
/// farther than `cutoff` from more than `2 eps m` other rows, with
/// `cutoff = c0 * sigma_est * sqrt(d ln m)` and `sigma_est` the median
/// pairwise distance over `sqrt(2 d)`.
pub fn prefilter(updates: &SampleMatrix, epsilon: f64, c0: f64) -> Vec<usize> {
    let m = updates.rows();
    if m < 2 {
        return (0..m).collect();
    }
    let d = updates.dim() as f64;
    let dist: Vec<Vec<f64>> = pairwise_sq_distances(updates)
        .into_iter()
        .map(|row| row.into_iter().map(f64::sqrt).collect())
        .collect();
    let mut all: Vec<f64> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| dist[i][j])
        .collect();
    let mid = all.len() / 2;
    let (_, median, _) = all.select_nth_unstable_by(mid, f64::total_cmp);
    let sigma_est = *median / (2.0 * d).sqrt();
    let cutoff = c0 * sigma_est * (d * (m as f64).ln()).sqrt();
    let limit = 2.0 * epsilon * m as f64;
    (0..m)
        .filter(|&i| {
            let far = dist[i].iter().filter(|&&t| t > cutoff).count();
            far as f64 <= limit
        })
        .collect()
}

/// No-regret multiplicative weights.
///
/// After the pre-filter, weights start uniform on the `m'` survivors and are
/// updated by `q_i (1 - tau g_i)` followed by KL projection onto the simplex
/// capped at `1 / ((1 - eps) m')`. The step is `tau = eta eps / (2 sigma2 d)`,
/// clamped to `eta / max_i g_i` so every factor stays in `[1 - eta, 1]`.
/// Returns once `|Cov_q|_2 <= xi`; otherwise the iterate with the smallest
/// spectral norm after `max_iter` steps.
pub fn no_regret(
    updates: &SampleMatrix,
    epsilon: f64,
    sigma2: f64,
    xi: f64,
    cfg: NoRegretConfig,
    power: PowerConfig,
    rng: &mut DetRng,
) -> Result<NoRegretOutcome> {
    updates.check_finite("updates")?;
    if !(cfg.eta > 0.0 && cfg.eta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must lie in (0, 1), got {}", cfg.eta),
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive, got {sigma2}"),
        });
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must lie in [0, 1/2), got {epsilon}"),
        });
    }
    let m = updates.rows();
    if m == 0 {
        return Err(Error::Empty("updates"));
    }
    let kept = prefilter(updates, epsilon, cfg.prefilter_c0);
    if kept.is_empty() {
        return Err(Error::PrefilterRemovedAll);
    }
    let x = updates.select_rows(&kept);
    let m_prime = kept.len();
    let d = x.dim() as f64;
    let cap = 1.0 / ((1.0 - epsilon) * m_prime as f64);
    let base_tau = cfg.eta * epsilon / (2.0 * sigma2 * d);

    let mut q = vec![1.0 / m_prime as f64; m_prime];
    let mut start = rng.unit_vector(x.dim());
    let mut eigen_converged = true;
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    loop {
        let we = WeightedEmpirical::new(&x, &q)?;
        let eig = top_eigenpair_from(&we, power, &start, rng);
        eigen_converged &= eig.converged;
        history.push(eig.value);
        if best.as_ref().is_none_or(|(v, _)| eig.value < *v) {
            best = Some((eig.value, q.clone()));
        }
        let done = eig.value <= xi;
        if done || iterations >= cfg.max_iter {
            let final_q = if done { q } else { best.take().unwrap().1 };
            let we = WeightedEmpirical::new(&x, &final_q)?;
            let mut weights = vec![0.0; m];
            for (w, &i) in final_q.iter().zip(&kept) {
                weights[i] = *w;
            }
            return Ok(NoRegretOutcome {
                value: we.mean(),
                weights,
                iterations,
                converged: done,
                eigen_converged,
                prefiltered: m - m_prime,
                spectral_history: history,
            });
        }
        iterations += 1;
        let g = quasi_gradient(&we, &eig.vector)?;
        let g_max = g.iter().copied().fold(0.0, f64::max);
        let tau = if g_max > 0.0 {
            base_tau.min(cfg.eta / g_max)
        } else {
            0.0
        };
        let q_tilde: Vec<f64> = q.iter().zip(&g).map(|(qi, gi)| qi * (1.0 - tau * gi)).collect();
        q = kl_project_capped_simplex(&q_tilde, cap)?;
        start = eig.vector.into_inner();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use byzagg_oracle::{kl_divergence, kl_projection_grid};
    use proptest::prelude::*;

    #[test]
    fn feasible_uniform_is_fixed() {
        let q = kl_project_capped_simplex(&[0.25; 4], 0.3).unwrap();
        assert!(q.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_point_projection() {
        let q = kl_project_capped_simplex(&[0.9, 0.1], 0.6).unwrap();
        assert!((q[0] - 0.6).abs() < 1e-15 && (q[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn infeasible_cap() {
        assert!(matches!(
            kl_project_capped_simplex(&[0.5, 0.5, 0.0], 0.4),
            Err(Error::InfeasibleCap { .. })
        ));
    }

    #[test]
    fn scale_invariant_input() {
        let a = kl_project_capped_simplex(&[3.0, 1.0, 1.0, 1.0], 0.4).unwrap();
        let b = kl_project_capped_simplex(&[0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0], 0.4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a[0] - 0.4).abs() < 1e-15 && (a[1] - 0.2).abs() < 1e-15);
    }

    fn gaussian(seed: u64, m: usize, d: usize) -> Vec<Vec<f64>> {
        let mut r = RngState::new(seed, 21).rng();
        (0..m).map(|_| r.normal_vec(d)).collect()
    }

    #[test]
    fn clean_cluster_returns_sample_mean_quickly() {
        let x = SampleMatrix::from_rows(&gaussian(1, 200, 4)).unwrap();
        let out = no_regret(
            &x,
            0.1,
            1.0,
            10.0,
            NoRegretConfig::default(),
            PowerConfig::default(),
            &mut RngState::new(2, 0).rng(),
        )
        .unwrap();
        assert!(out.iterations <= 2);
        assert!(out.converged);
        assert_eq!(out.prefiltered, 0);
        assert!(out.value.distance(&x.mean()) < 1e-12);
    }

    #[test]
    fn equal_gradients_leave_uniform_weights() {
        // Two antipodal clusters: every row has the same quasi-gradient.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let cfg = NoRegretConfig {
            max_iter: 3,
            ..NoRegretConfig::default()
        };
        let out = no_regret(&x, 0.1, 1.0, 0.5, cfg, PowerConfig::default(), &mut RngState::new(2, 0).rng())
            .unwrap();
        assert!(!out.converged);
        assert!(out.weights.iter().all(|w| (w - 0.1).abs() < 1e-12));
    }

    #[test]
    fn outliers_are_downweighted() {
        let mut rows = gaussian(3, 180, 2);
        rows.extend((0..20).map(|_| vec![50.0, 0.0]));
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let inlier_mean = SampleMatrix::from_rows(&rows[..180]).unwrap().mean();
        let out = no_regret(
            &x,
            0.1,
            1.0,
            1.5,
            NoRegretConfig::default(),
            PowerConfig::default(),
            &mut RngState::new(2, 0).rng(),
        )
        .unwrap();
        assert!(out.value.distance(&inlier_mean) < 0.2, "{:?}", out.value);
        let outlier_mass: f64 = out.weights[180..].iter().sum();
        assert!(outlier_mass < 1e-3, "{outlier_mass}");
    }

    #[test]
    fn prefilter_drops_far_cluster() {
        let mut rows = gaussian(4, 90, 3);
        rows.extend((0..10).map(|_| vec![1e3, 1e3, 1e3]));
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let kept = prefilter(&x, 0.1, 4.0);
        assert_eq!(kept, (0..90).collect::<Vec<_>>());
    }

    fn random_instance(seed: u64, m: usize) -> (Vec<f64>, f64) {
        let mut r = RngState::new(seed, 31).rng();
        let raw: Vec<f64> = (0..m).map(|_| r.uniform() + 0.02).collect();
        let cap = 1.0 / m as f64 + r.uniform() * 0.1 + 0.01;
        (raw, cap)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_lands_in_capped_simplex(seed in 0u64..100_000, m in 1usize..40) {
            let (raw, cap) = random_instance(seed, m);
            let q = kl_project_capped_simplex(&raw, cap).unwrap();
            let s: f64 = q.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(q.iter().all(|v| *v >= 0.0 && *v <= cap + 1e-12));
        }

        #[test]
        fn projection_beats_grid_search(seed in 0u64..100_000) {
            let mut r = RngState::new(seed, 41).rng();
            let raw: Vec<f64> = (0..4).map(|_| r.uniform() + 0.01).collect();
            // Caps on the grid, so the oracle can reach the boundary.
            let cap = (260.0 + (90.0 * r.uniform()).floor()) * 1e-3;
            let total: f64 = raw.iter().sum();
            let qt: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let q = kl_project_capped_simplex(&qt, cap).unwrap();
            let (_, grid_kl) = kl_projection_grid(&qt, cap, 1e-3);
            let kl = kl_divergence(&q, &qt);
            prop_assert!(kl <= grid_kl + 1e-9);
            prop_assert!((kl - grid_kl).abs() <= 1e-3);
        }
    }
}
