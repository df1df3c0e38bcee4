use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{dist_sq, ParamVector};

/// Closed Euclidean ball the global model is projected onto each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub center: ParamVector,
    pub radius: f64,
}

impl ParamSpace {
    pub fn new(center: ParamVector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be positive and finite, got {radius}"),
            });
        }
        Ok(Self { center, radius })
    }

    /// Ball of radius `10 * |w0 - w_star|` around the origin (at least 10).
    pub fn default_for(w0: &ParamVector, w_star: &ParamVector) -> Self {
        let gap = w0.distance(w_star);
        let radius = if gap > 0.0 { 10.0 * gap } else { 10.0 };
        Self {
            center: ParamVector::zeros(w0.dim()),
            radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, w: &ParamVector) -> bool {
        dist_sq(w.as_slice(), self.center.as_slice()).sqrt() <= self.radius
    }

    /// Euclidean projection onto the ball. Interior points are returned unchanged.
    pub fn project(&self, w: &ParamVector) -> Result<ParamVector> {
        w.check_dim(self.center.dim())?;
        let offset = w.sub(&self.center);
        let dist = offset.norm();
        // Points already on the sphere (up to rounding) are left alone so
        // projection is exactly idempotent.
        if dist <= self.radius * (1.0 + 1e-12) {
            return Ok(w.clone());
        }
        let scale = self.radius / dist;
        Ok(self.center.add(&offset.scaled(scale)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball(center: Vec<f64>, radius: f64) -> ParamSpace {
        ParamSpace::new(ParamVector::new(center), radius).unwrap()
    }

    #[test]
    fn interior_point_is_fixed() {
        let s = ball(vec![0.0, 0.0], 1.0);
        let w = ParamVector::zeros(2);
        assert_eq!(s.project(&w).unwrap(), w);
    }

    #[test]
    fn exterior_points_scale_radially() {
        let s = ball(vec![0.0, 0.0], 1.0);
        let p = s.project(&ParamVector::new(vec![3.0, 4.0])).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert!((p.norm() - 1.0).abs() < 1e-15);

        let s = ball(vec![1.0, 0.0], 2.0);
        let p = s.project(&ParamVector::new(vec![1.0, 5.0])).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
        assert!((p.distance(&s.center) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = ball(vec![0.0, 0.0], 1.0);
        assert!(s.project(&ParamVector::zeros(3)).is_err());
        assert!(ParamSpace::new(ParamVector::zeros(1), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_lands_in_ball(
            w in prop::collection::vec(-50.0f64..50.0, 3),
            c in prop::collection::vec(-2.0f64..2.0, 3),
            r in 0.5f64..10.0,
        ) {
            let s = ball(c, r);
            let pw = s.project(&ParamVector::new(w)).unwrap();
            prop_assert!(pw.distance(&s.center) <= r * (1.0 + 1e-12));
            let ppw = s.project(&pw).unwrap();
            prop_assert_eq!(&ppw, &pw);
        }

        #[test]
        fn projection_never_increases_distance_to_ball_points(
            w in prop::collection::vec(-50.0f64..50.0, 4),
            y in prop::collection::vec(-50.0f64..50.0, 4),
            r in 0.5f64..10.0,
        ) {
            let s = ball(vec![0.0; 4], r);
            let w = ParamVector::new(w);
            let inside = s.project(&ParamVector::new(y)).unwrap();
            let pw = s.project(&w).unwrap();
            prop_assert!(pw.distance(&inside) <= w.distance(&inside) + 1e-9);
        }
    }
}
