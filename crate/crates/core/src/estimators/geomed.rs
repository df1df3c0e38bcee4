use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{dist_sq, ParamVector, SampleMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoMedConfig {
    /// Bound on the norm of the (sub)gradient `sum_i (y - x_i)/|y - x_i|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GeoMedConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoMedOutcome {
    pub value: ParamVector,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the minimal subgradient at `value`.
    pub gradient_norm: f64,
}

/// Weiszfeld iteration with the Vardi-Zhang modification at data points,
/// started from the coordinate mean.
pub fn geometric_median(updates: &SampleMatrix, cfg: GeoMedConfig) -> Result<GeoMedOutcome> {
    let m = updates.rows();
    if m == 0 {
        return Err(Error::Empty("updates"));
    }
    let d = updates.dim();
    let mut y = updates.mean().into_inner();
    let scale = updates
        .iter_rows()
        .map(|r| dist_sq(r, &y).sqrt())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(GeoMedOutcome {
            value: ParamVector::new(y),
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
        });
    }
    let snap = 1e-12 * scale;

    let mut iterations = 0;
    loop {
        let dists: Vec<f64> = updates.iter_rows().map(|r| dist_sq(r, &y).sqrt()).collect();
        // Rows coinciding with the iterate contribute a subgradient ball of
        // radius equal to their multiplicity.
        let multiplicity = dists.iter().filter(|&&t| t <= snap).count() as f64;
        let mut pull = vec![0.0; d];
        let mut weighted = vec![0.0; d];
        let mut inv_sum = 0.0;
        for (r, &t) in updates.iter_rows().zip(&dists) {
            if t <= snap {
                continue;
            }
            let w = 1.0 / t;
            inv_sum += w;
            for j in 0..d {
                pull[j] += (r[j] - y[j]) * w;
                weighted[j] += r[j] * w;
            }
        }
        let r_norm = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
        let grad_norm = (r_norm - multiplicity).max(0.0);
        if grad_norm <= cfg.tol || inv_sum == 0.0 {
            if multiplicity > 0.0 {
                if let Some(k) = dists.iter().position(|&t| t <= snap) {
                    y.copy_from_slice(updates.row(k));
                }
            }
            return Ok(GeoMedOutcome {
                value: ParamVector::new(y),
                iterations,
                converged: true,
                gradient_norm: grad_norm,
            });
        }
        if iterations >= cfg.max_iter {
            return Ok(GeoMedOutcome {
                value: ParamVector::new(y),
                iterations,
                converged: false,
                gradient_norm: grad_norm,
            });
        }
        iterations += 1;
        let step: Vec<f64> = weighted.iter().map(|v| v / inv_sum).collect();
        if multiplicity > 0.0 {
            let beta = (multiplicity / r_norm).min(1.0);
            for j in 0..d {
                y[j] = (1.0 - beta) * step[j] + beta * y[j];
            }
        } else {
            y = step;
        }
        // Land exactly on a data point once the iterate is within rounding of it.
        if let Some(k) = updates
            .iter_rows()
            .position(|r| dist_sq(r, &y).sqrt() <= snap)
        {
            y.copy_from_slice(updates.row(k));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(rows: &[Vec<f64>]) -> GeoMedOutcome {
        geometric_median(&SampleMatrix::from_rows(rows).unwrap(), GeoMedConfig::default()).unwrap()
    }

    #[test]
    fn two_points_give_the_midpoint() {
        let out = run(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        assert_eq!(out.value.as_slice(), &[1.0, 2.0]);
        assert!(out.converged);
    }

    #[test]
    fn equilateral_triangle_gives_the_centroid() {
        let h = 3f64.sqrt() / 2.0;
        let out = run(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]]);
        assert!((out.value[0] - 0.5).abs() < 1e-9);
        assert!((out.value[1] - h / 3.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_with_repeated_point() {
        let out = run(&[vec![0.0], vec![0.0], vec![10.0]]);
        assert_eq!(out.value[0], 0.0);
        assert!(out.converged);
    }

    #[test]
    fn robust_to_one_far_point() {
        let out = run(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1e6, 1e6],
        ]);
        assert!(out.value.norm() < 1.0);
        assert!(out.converged);
        assert!(out.gradient_norm <= 1e-6);
    }
}
