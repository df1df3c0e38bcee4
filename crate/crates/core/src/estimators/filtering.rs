use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::spectral::{quasi_gradient, top_eigenpair_from, PowerConfig, WeightedEmpirical};
use crate::vector::{ParamVector, SampleMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FilteringOutcome {
    pub value: ParamVector,
    /// Final weights over the input rows; removed rows carry 0.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` ran out before the spectral test passed.
    pub converged: bool,
    /// False if any eigen-solve hit its iteration cap.
    pub eigen_converged: bool,
    /// Unnormalized surviving mass after each downweighting step, relative to
    /// the mass entering it, accumulated from 1.
    pub mass_history: Vec<f64>,
    /// Rows dropped per iteration.
    pub removed: Vec<usize>,
}

/// Spectral filtering.
///
/// Starting from `q0`, repeat: if `|Cov_q|_2 <= xi` return `E_q[x]`;
/// otherwise scale each weight by `1 - g_i / max_j g_j`, renormalize and drop
/// rows whose weight is zero.
pub fn filtering(
    updates: &SampleMatrix,
    q0: &[f64],
    xi: f64,
    max_iter: usize,
    power: PowerConfig,
    rng: &mut DetRng,
) -> Result<FilteringOutcome> {
    updates.check_finite("updates")?;
    if !(xi >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "xi",
            reason: format!("must be non-negative, got {xi}"),
        });
    }
    let mut q = q0.to_vec();
    WeightedEmpirical::new(updates, &q)?;

    let mut mass_history = Vec::new();
    let mut removed = Vec::new();
    let mut eigen_converged = true;
    let mut start = rng.unit_vector(updates.dim());
    let mut iterations = 0;
    loop {
        let we = WeightedEmpirical::new(updates, &q)?;
        let eig = top_eigenpair_from(&we, power, &start, rng);
        eigen_converged &= eig.converged;
        if eig.value <= xi || iterations >= max_iter {
            return Ok(FilteringOutcome {
                value: we.mean(),
                converged: eig.value <= xi,
                weights: q,
                iterations,
                eigen_converged,
                mass_history,
                removed,
            });
        }
        iterations += 1;
        let g = quasi_gradient(&we, &eig.vector)?;
        let g_max = g
            .iter()
            .zip(&q)
            .filter(|(_, qi)| **qi > 0.0)
            .map(|(gi, _)| *gi)
            .fold(0.0, f64::max);
        let mut next: Vec<f64> = q
            .iter()
            .zip(&g)
            .map(|(qi, gi)| if *qi > 0.0 { qi * (1.0 - gi / g_max).max(0.0) } else { 0.0 })
            .collect();
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(Error::AllWeightDestroyed);
        }
        let before = q.iter().filter(|w| **w > 0.0).count();
        next.iter_mut().for_each(|w| *w /= total);
        let after = next.iter().filter(|w| **w > 0.0).count();
        mass_history.push(mass_history.last().copied().unwrap_or(1.0) * total);
        removed.push(before - after);
        q = next;
        start = eig.vector.into_inner();
    }
}
