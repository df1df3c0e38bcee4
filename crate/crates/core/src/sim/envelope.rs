use super::MetricsRecord;

/// Which per-round error plays the role of `Delta` in the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSource {
    /// Error against the mean of the honest uploads.
    AggErr,
    /// Error against the population gradient step.
    StepErr,
}

impl DeltaSource {
    fn of(self, r: &MetricsRecord) -> f64 {
        match self {
            Self::AggErr => r.agg_err,
            Self::StepErr => r.step_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub rho: f64,
    /// `bound_t` for each record.
    pub bounds: Vec<f64>,
    /// Rounds whose error exceeds `bound_t (1 + slack)`.
    pub violating_rounds: Vec<usize>,
}

impl EnvelopeReport {
    pub fn violations(&self) -> usize {
        self.violating_rounds.len()
    }
}

/// Linear-convergence envelope for strongly convex, smooth risks:
/// `bound_t = rho^t w0_err + (2 / lambda) max_{s <= t} Delta_s` with
/// `rho = 1 - lambda / (L + lambda)`.
pub fn theorem31_envelope(
    records: &[MetricsRecord],
    smoothness: f64,
    strong_convexity: f64,
    w0_err: f64,
    source: DeltaSource,
    slack: f64,
) -> EnvelopeReport {
    let rho = 1.0 - strong_convexity / (smoothness + strong_convexity);
    let mut running = 0.0f64;
    let mut bounds = Vec::with_capacity(records.len());
    let mut violating_rounds = Vec::new();
    for r in records {
        running = running.max(source.of(r));
        let bound = rho.powi(r.round as i32) * w0_err + 2.0 / strong_convexity * running;
        if r.param_err > bound * (1.0 + slack) {
            violating_rounds.push(r.round);
        }
        bounds.push(bound);
    }
    EnvelopeReport {
        rho,
        bounds,
        violating_rounds,
    }
}

/// Per-round ratios `err_t / err_{t-1}` while the error is still above
/// `floor`, starting from `w0_err`.
pub fn contraction_factors(records: &[MetricsRecord], w0_err: f64, floor: f64) -> Vec<f64> {
    let mut prev = w0_err;
    let mut out = Vec::new();
    for r in records {
        if prev <= floor {
            break;
        }
        out.push(r.param_err / prev);
        prev = r.param_err;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(round: usize, param_err: f64, delta: f64) -> MetricsRecord {
        MetricsRecord {
            round,
            param_err,
            agg_err: delta,
            step_err: delta,
            loss: 0.0,
            grad_norm: 0.0,
            converged: true,
            estimator_failed: false,
            elapsed_ms: 0,
        }
    }

    #[test]
    fn pure_geometric_envelope() {
        let records: Vec<_> = (1..=5).map(|t| rec(t, 0.5f64.powi(t as i32), 0.0)).collect();
        let rep = theorem31_envelope(&records, 3.0, 1.0, 1.0, DeltaSource::AggErr, 0.0);
        assert_eq!(rep.rho, 0.75);
        assert_eq!(rep.violations(), 0);
        assert!((rep.bounds[1] - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn counts_rounds_above_the_bound() {
        let records = vec![rec(1, 0.1, 0.05), rec(2, 5.0, 0.01), rec(3, 0.1, 0.01)];
        let rep = theorem31_envelope(&records, 2.0, 2.0, 1.0, DeltaSource::StepErr, 0.1);
        assert_eq!(rep.violating_rounds, vec![2]);
        // The running maximum keeps the early Delta.
        assert!((rep.bounds[2] - (0.125 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn contraction_stops_at_floor() {
        let records = vec![rec(1, 0.5, 0.0), rec(2, 0.25, 0.0), rec(3, 0.2, 0.0), rec(4, 0.2, 0.0)];
        assert_eq!(contraction_factors(&records, 1.0, 0.3), vec![0.5, 0.5]);
    }
}
