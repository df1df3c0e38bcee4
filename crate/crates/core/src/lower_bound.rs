//! Two-point hard instance for robust mean estimation from client averages.
//!
//! Each sample is `0` with probability `1 - eps'` and `atom` with probability
//! `eps'`, where `eps' = 1 - (1 - eps)^(1/n)` is chosen so that a client
//! holding `n` samples sees at least one atom with probability exactly `eps`.
//! An adversary controlling an `eps` fraction of clients can therefore erase
//! the atoms and make the data look like a point mass at zero, hiding a mean
//! shift of `eps' * atom`.

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::vector::{ParamVector, SampleMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundInstance {
    pub epsilon: f64,
    pub n: usize,
    pub sigma: f64,
    /// Per-sample atom probability.
    pub eps_prime: f64,
    /// Location of the atom.
    pub atom: f64,
    /// Mean of the two-point law; the gap to the alternative point mass at zero.
    pub gap: f64,
}

impl LowerBoundInstance {
    pub fn new(epsilon: f64, n: usize, sigma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must lie in (0, 1/2), got {epsilon}"),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "must be at least 1".into(),
            });
        }
        // 1 - (1 - eps)^(1/n), computed without cancellation.
        let eps_prime = -((-epsilon).ln_1p() / n as f64).exp_m1();
        let (atom, gap) = if eps_prime > 0.0 {
            let atom = sigma / 3.0 * ((1.0 - eps_prime) / eps_prime).sqrt();
            (atom, eps_prime * atom)
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            epsilon,
            n,
            sigma,
            eps_prime,
            atom,
            gap,
        })
    }

    /// Variance of the two-point law (at most `sigma^2 / 9`).
    pub fn variance(&self) -> f64 {
        self.atom * self.atom * self.eps_prime * (1.0 - self.eps_prime)
    }

    /// One-dimensional draws plus a mask marking the atoms.
    pub fn sample(&self, count: usize, rng: &mut DetRng) -> (SampleMatrix, Vec<bool>) {
        let mut data = Vec::with_capacity(count);
        let mut mask = Vec::with_capacity(count);
        for _ in 0..count {
            let hit = rng.uniform() < self.eps_prime;
            data.push(if hit { self.atom } else { 0.0 });
            mask.push(hit);
        }
        (
            SampleMatrix::from_flat(data, count, 1).expect("shape is consistent"),
            mask,
        )
    }

    /// `n` samples for one client in `d` dimensions: the two-point law along
    /// `direction`, isotropic Gaussian noise of scale `sigma` in the
    /// orthogonal complement, all shifted by `base`. Returns the samples and
    /// the number of atoms drawn.
    pub fn client_data(
        &self,
        base: &ParamVector,
        direction: &ParamVector,
        rng: &mut DetRng,
    ) -> (SampleMatrix, Vec<bool>) {
        let d = base.dim();
        let mut out = SampleMatrix::zeros(self.n, d);
        let mut mask = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let hit = rng.uniform() < self.eps_prime;
            let mut noise = rng.normal_vec(d);
            let along: f64 = crate::vector::dot(&noise, direction.as_slice());
            let offset = if hit { self.atom } else { 0.0 };
            let row = out.row_mut(i);
            for j in 0..d {
                noise[j] -= along * direction[j];
                row[j] = base[j] + self.sigma * noise[j] + offset * direction[j];
            }
            mask.push(hit);
        }
        (out, mask)
    }

    /// The same samples as seen under the alternative law: atoms erased.
    pub fn erase_atoms(
        &self,
        data: &SampleMatrix,
        mask: &[bool],
        direction: &ParamVector,
    ) -> SampleMatrix {
        let mut out = data.clone();
        for (i, &hit) in mask.iter().enumerate() {
            if hit {
                for (x, u) in out.row_mut(i).iter_mut().zip(direction.as_slice()) {
                    *x -= self.atom * u;
                }
            }
        }
        out
    }
}

/// Samples `count` draws from the two-point instance for `(epsilon, n, sigma)`.
pub fn gen_lower_bound_instance(
    epsilon: f64,
    n: usize,
    sigma: f64,
    count: usize,
    rng: &mut DetRng,
) -> Result<(LowerBoundInstance, SampleMatrix, Vec<bool>)> {
    let inst = LowerBoundInstance::new(epsilon, n, sigma)?;
    let (x, mask) = inst.sample(count, rng);
    Ok((inst, x, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn single_sample_clients() {
        let inst = LowerBoundInstance::new(0.2, 1, 3.0).unwrap();
        assert!((inst.eps_prime - 0.2).abs() < 1e-15);
        // sqrt(0.8 / 0.2) = 2, so the atom sits at (sigma / 3) * 2.
        assert!((inst.atom - 2.0).abs() < 1e-12);
        assert!(inst.variance() <= inst.sigma * inst.sigma / 9.0 + 1e-12);
    }

    #[test]
    fn vanishing_corruption_collapses_to_zero() {
        let inst = LowerBoundInstance::new(1e-14, 10, 1.0).unwrap();
        assert!(inst.gap < 1e-7);
        let (_, x, mask) =
            gen_lower_bound_instance(1e-14, 10, 1.0, 1000, &mut RngState::new(1, 0).rng()).unwrap();
        assert!(mask.iter().all(|m| !m));
        assert!(x.as_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gap_decreases_in_n() {
        let mut prev = f64::INFINITY;
        for n in [1, 2, 5, 10, 50, 200, 1000] {
            let g = LowerBoundInstance::new(0.1, n, 1.0).unwrap().gap;
            assert!(g < prev, "n={n}: {g} !< {prev}");
            prev = g;
        }
    }

    #[test]
    fn client_sees_an_atom_with_probability_epsilon() {
        let inst = LowerBoundInstance::new(0.2, 5, 1.0).unwrap();
        let mut rng = RngState::new(4, 0).rng();
        let trials = 40_000;
        let mut hits = 0;
        for _ in 0..trials {
            let (_, mask) = inst.sample(5, &mut rng);
            if mask.iter().any(|&m| m) {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        assert!((p - 0.2).abs() < 0.01, "p = {p}");
    }

    #[test]
    fn out_of_range_epsilon() {
        assert!(LowerBoundInstance::new(0.5, 1, 1.0).is_err());
        assert!(LowerBoundInstance::new(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn erasing_atoms_removes_the_shift() {
        let inst = LowerBoundInstance::new(0.3, 4, 1.0).unwrap();
        let base = ParamVector::new(vec![1.0, 2.0]);
        let dir = ParamVector::new(vec![0.6, 0.8]);
        let mut rng = RngState::new(8, 0).rng();
        for _ in 0..50 {
            let (x, mask) = inst.client_data(&base, &dir, &mut rng);
            let alt = inst.erase_atoms(&x, &mask, &dir);
            for r in alt.iter_rows() {
                let along = (r[0] - 1.0) * 0.6 + (r[1] - 2.0) * 0.8;
                assert!(along.abs() < 1e-12);
            }
        }
    }
}
