//! Synthetic convex learning tasks with closed-form gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::vector::{dot, ParamVector, SampleMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// `f(w; z) = |w - z|^2`, data `z ~ N(w*, sigma^2 I)`.
    MeanEstimation,
    /// `f(w; (x, y)) = (w.x - y)^2 / 2`, `x ~ N(0, I)`, `y = w*.x + sigma * noise`.
    /// Sample rows are `[x_1, .., x_d, y]`.
    LinearRegression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Per-direction noise scale of the data.
    pub sigma: f64,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub w_star: ParamVector,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, sigma: f64, w_star: ParamVector) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be finite and non-negative, got {sigma}"),
            });
        }
        if w_star.dim() == 0 {
            return Err(Error::Empty("w_star"));
        }
        let (smoothness, strong_convexity) = match kind {
            TaskKind::MeanEstimation => (2.0, 2.0),
            TaskKind::LinearRegression => (1.0, 1.0),
        };
        Ok(Self {
            kind,
            sigma,
            smoothness,
            strong_convexity,
            w_star,
        })
    }

    pub fn mean_estimation(sigma: f64, w_star: ParamVector) -> Result<Self> {
        Self::new(TaskKind::MeanEstimation, sigma, w_star)
    }

    pub fn linear_regression(sigma: f64, w_star: ParamVector) -> Result<Self> {
        Self::new(TaskKind::LinearRegression, sigma, w_star)
    }

    pub fn dim(&self) -> usize {
        self.w_star.dim()
    }

    /// Width of one data row.
    pub fn sample_width(&self) -> usize {
        match self.kind {
            TaskKind::MeanEstimation => self.dim(),
            TaskKind::LinearRegression => self.dim() + 1,
        }
    }

    /// Spectral bound on the covariance of a single-sample gradient at the optimum.
    pub fn gradient_sigma(&self) -> f64 {
        match self.kind {
            // grad f = 2 (w - z): covariance 4 sigma^2 I.
            TaskKind::MeanEstimation => 2.0 * self.sigma,
            // grad f = (x.w - y) x = -noise * x at w*.
            TaskKind::LinearRegression => self.sigma,
        }
    }

    /// Gradient of one client's empirical risk `(1/n) sum f(w; z_j)`.
    pub fn local_gradient(&self, w: &ParamVector, data: &SampleMatrix) -> Result<ParamVector> {
        if data.rows() == 0 {
            return Err(Error::Empty("client data"));
        }
        w.check_dim(self.dim())?;
        if data.dim() != self.sample_width() {
            return Err(Error::DimensionMismatch {
                expected: self.sample_width(),
                actual: data.dim(),
            });
        }
        let d = self.dim();
        match self.kind {
            TaskKind::MeanEstimation => {
                let mean = data.mean();
                Ok(w.sub(&mean).scaled(2.0))
            }
            TaskKind::LinearRegression => {
                let mut g = vec![0.0; d];
                for row in data.iter_rows() {
                    let (x, y) = row.split_at(d);
                    let resid = dot(w.as_slice(), x) - y[0];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += resid * xi;
                    }
                }
                let inv = 1.0 / data.rows() as f64;
                g.iter_mut().for_each(|v| *v *= inv);
                Ok(ParamVector::new(g))
            }
        }
    }

    /// Draws `n` i.i.d. samples for one client.
    pub fn sample_client_data(&self, n: usize, rng: &mut DetRng) -> SampleMatrix {
        let d = self.dim();
        let width = self.sample_width();
        let mut out = SampleMatrix::zeros(n, width);
        for i in 0..n {
            let row = out.row_mut(i);
            match self.kind {
                TaskKind::MeanEstimation => {
                    for (r, w) in row.iter_mut().zip(self.w_star.as_slice()) {
                        *r = w + self.sigma * rng.normal();
                    }
                }
                TaskKind::LinearRegression => {
                    for r in row[..d].iter_mut() {
                        *r = rng.normal();
                    }
                    let y = dot(&row[..d], self.w_star.as_slice()) + self.sigma * rng.normal();
                    row[d] = y;
                }
            }
        }
        out
    }

    /// Population risk `F(w)` under Gaussian data.
    pub fn population_loss(&self, w: &ParamVector) -> f64 {
        let gap_sq = {
            let diff = w.sub(&self.w_star);
            diff.dot(&diff)
        };
        match self.kind {
            TaskKind::MeanEstimation => gap_sq + self.dim() as f64 * self.sigma * self.sigma,
            TaskKind::LinearRegression => 0.5 * gap_sq + 0.5 * self.sigma * self.sigma,
        }
    }

    /// Population gradient `grad F(w)`.
    pub fn population_gradient(&self, w: &ParamVector) -> ParamVector {
        let diff = w.sub(&self.w_star);
        match self.kind {
            TaskKind::MeanEstimation => diff.scaled(2.0),
            TaskKind::LinearRegression => diff,
        }
    }
}
