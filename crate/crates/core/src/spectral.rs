//! Weighted empirical moments and the top eigenpair of a weighted covariance.
//!
//! The covariance is never formed: power iteration only needs the product
//! `v -> sum_i q_i (x_i - mu)(x_i - mu)^T v`, which costs `O(m d)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::vector::{dot, norm, ParamVector, SampleMatrix};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Samples paired with a probability vector over them.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEmpirical<'a> {
    samples: &'a SampleMatrix,
    weights: &'a [f64],
}

impl<'a> WeightedEmpirical<'a> {
    pub fn new(samples: &'a SampleMatrix, weights: &'a [f64]) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::Empty("weighted samples"));
        }
        if weights.len() != samples.rows() {
            return Err(Error::DimensionMismatch {
                expected: samples.rows(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("negative or non-finite weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { samples, weights })
    }

    pub fn samples(&self) -> &SampleMatrix {
        self.samples
    }

    pub fn weights(&self) -> &[f64] {
        self.weights
    }

    fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, q)| *q > 0.0)
    }

    /// `E_q[x] = sum_i q_i x_i`.
    pub fn mean(&self) -> ParamVector {
        let mut out = vec![0.0; self.samples.dim()];
        for (i, q) in self.support() {
            for (o, x) in out.iter_mut().zip(self.samples.row(i)) {
                *o += q * x;
            }
        }
        ParamVector::new(out)
    }

    /// `Cov_q v` given the weighted mean `mu`.
    pub fn cov_times(&self, mu: &[f64], v: &[f64]) -> Vec<f64> {
        let mu_v = dot(mu, v);
        let mut y = vec![0.0; v.len()];
        for (i, q) in self.support() {
            let row = self.samples.row(i);
            let c = q * (dot(row, v) - mu_v);
            for ((yj, xj), mj) in y.iter_mut().zip(row).zip(mu) {
                *yj += c * (xj - mj);
            }
        }
        y
    }

    /// `tr(Cov_q) = E_q |x - mu|^2`.
    pub fn trace(&self, mu: &[f64]) -> f64 {
        self.support()
            .map(|(i, q)| q * crate::vector::dist_sq(self.samples.row(i), mu))
            .sum()
    }

    /// Rayleigh quotient `v^T Cov_q v`.
    pub fn rayleigh(&self, mu: &[f64], v: &[f64]) -> f64 {
        let mu_v = dot(mu, v);
        self.support()
            .map(|(i, q)| {
                let c = dot(self.samples.row(i), v) - mu_v;
                q * c * c
            })
            .sum()
    }
}

pub fn weighted_mean(we: &WeightedEmpirical<'_>) -> ParamVector {
    we.mean()
}

/// Stopping rule for power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Relative residual `|C v - theta v| <= tol * theta`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Estimate of `|Cov_q|_2`.
    pub value: f64,
    pub vector: ParamVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Top eigenpair of `Cov_q`, started from a random direction.
pub fn top_eigenpair(we: &WeightedEmpirical<'_>, cfg: PowerConfig, rng: &mut DetRng) -> EigenResult {
    let start = rng.unit_vector(we.samples.dim());
    top_eigenpair_from(we, cfg, &start, rng)
}

/// Top eigenpair of `Cov_q` from a caller-supplied start vector (warm start).
///
/// On reaching the residual tolerance the Rayleigh quotient is within
/// `tol` (relative) of an eigenvalue. If that eigenvalue is negligible next
/// to the trace the start was (nearly) orthogonal to the top space, and the
/// iteration restarts once from a fresh random direction.
pub fn top_eigenpair_from(
    we: &WeightedEmpirical<'_>,
    cfg: PowerConfig,
    start: &[f64],
    rng: &mut DetRng,
) -> EigenResult {
    let d = we.samples.dim();
    let mu = we.mean();
    let mu = mu.as_slice();
    let trace = we.trace(mu);

    let mut v = normalized_or_random(start, rng, d);
    if trace <= 0.0 {
        return EigenResult {
            value: 0.0,
            vector: ParamVector::new(v),
            iterations: 0,
            converged: true,
        };
    }

    let mut best_value = f64::NEG_INFINITY;
    let mut best_vector = v.clone();
    let mut restarted = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let y = we.cov_times(mu, &v);
        let theta = dot(&v, &y);
        if theta > best_value {
            best_value = theta;
            best_vector.clone_from(&v);
        }
        let resid = y
            .iter()
            .zip(&v)
            .map(|(yj, vj)| (yj - theta * vj).powi(2))
            .sum::<f64>()
            .sqrt();
        let stalled = theta <= cfg.tol * trace;
        if resid <= cfg.tol * theta.max(0.0) && !stalled {
            return EigenResult {
                value: theta,
                vector: ParamVector::new(v),
                iterations,
                converged: true,
            };
        }
        let ny = norm(&y);
        if stalled && (resid <= cfg.tol * trace || ny == 0.0) {
            if restarted {
                break;
            }
            restarted = true;
            v = rng.unit_vector(d);
            continue;
        }
        v = y.into_iter().map(|x| x / ny).collect();
    }
    EigenResult {
        value: best_value.max(0.0),
        vector: ParamVector::new(best_vector),
        iterations,
        converged: false,
    }
}

fn normalized_or_random(start: &[f64], rng: &mut DetRng, d: usize) -> Vec<f64> {
    let n = norm(start);
    if start.len() == d && n > 0.0 && n.is_finite() {
        start.iter().map(|x| x / n).collect()
    } else {
        rng.unit_vector(d)
    }
}

/// Quasi-gradient `g(q; x_i) = (v^T (x_i - mu_q))^2` for every sample.
pub fn quasi_gradient(we: &WeightedEmpirical<'_>, v: &ParamVector) -> Result<Vec<f64>> {
    v.check_dim(we.samples.dim())?;
    let mu = we.mean();
    let mu_v = mu.dot(v);
    Ok(we
        .samples
        .iter_rows()
        .map(|row| {
            let c = dot(row, v.as_slice()) - mu_v;
            c * c
        })
        .collect())
}

/// Contiguous coordinate blocks of length `interval_size` (the last may be shorter).
pub fn split_intervals(d: usize, interval_size: usize) -> Vec<Range<usize>> {
    let size = interval_size.max(1);
    (0..d)
        .step_by(size)
        .map(|start| start..(start + size).min(d))
        .collect()
}
