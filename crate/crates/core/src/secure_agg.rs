//! Simulated secure aggregation inside each bucket.
//!
//! Clients clip and quantize their update into `Z_Q`, add pairwise masks
//! `u_ij = -u_ji (mod Q)` and upload. The masks cancel in the bucket sum, so
//! the server learns only that sum. Masks come from a trusted pairwise
//! generator; key agreement and dropout recovery are not modelled.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::vector::ParamVector;

/// `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecureAggConfig {
    pub enabled: bool,
    pub modulus: u64,
    pub levels: u64,
    /// Clip range `C`; defaults to `3 sigma eta_t sqrt(d)` each round.
    pub clip: Option<f64>,
    /// Unbiased stochastic rounding instead of round-to-nearest.
    pub stochastic_rounding: bool,
}

impl Default for SecureAggConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            modulus: MERSENNE_61,
            levels: 1 << 16,
            clip: None,
            stochastic_rounding: false,
        }
    }
}

impl SecureAggConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modulus < 2 {
            return Err(Error::InvalidParameter {
                name: "modulus",
                reason: "must be at least 2".into(),
            });
        }
        if self.levels < 2 || self.levels > self.modulus {
            return Err(Error::InvalidParameter {
                name: "levels",
                reason: format!("must lie in [2, modulus], got {}", self.levels),
            });
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "clip",
                    reason: format!("must be positive, got {c}"),
                });
            }
        }
        Ok(())
    }

    /// Quantizer for one round: the configured clip, or the adaptive default.
    pub fn quantizer(&self, sigma: f64, eta_t: f64, d: usize) -> Quantizer {
        let adaptive = 3.0 * sigma * eta_t * (d as f64).sqrt();
        let clip = self
            .clip
            .unwrap_or(if adaptive > 0.0 { adaptive } else { 1.0 });
        Quantizer {
            modulus: self.modulus,
            levels: self.levels,
            clip,
        }
    }

    /// Errors unless `levels * size < modulus`, so a bucket sum cannot wrap.
    pub fn check_bucket_size(&self, size: usize) -> Result<()> {
        let total = self.levels as u128 * size as u128;
        if total >= self.modulus as u128 {
            return Err(Error::FieldOverflow {
                levels: self.levels,
                size,
                modulus: self.modulus,
            });
        }
        Ok(())
    }
}

/// Affine map between `[-clip, clip]` and `{0, .., levels - 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub modulus: u64,
    pub levels: u64,
    pub clip: f64,
}

impl Quantizer {
    fn step(&self) -> f64 {
        2.0 * self.clip / (self.levels - 1) as f64
    }

    fn position(&self, x: f64) -> f64 {
        let c = x.clamp(-self.clip, self.clip);
        (c + self.clip) / self.step()
    }

    /// Round-to-nearest codes.
    pub fn quantize(&self, v: &ParamVector) -> Vec<u64> {
        v.as_slice()
            .iter()
            .map(|&x| (self.position(x).round() as u64).min(self.levels - 1))
            .collect()
    }

    /// Stochastic rounding: rounds up with probability equal to the fractional part.
    pub fn quantize_stochastic(&self, v: &ParamVector, rng: &mut DetRng) -> Vec<u64> {
        v.as_slice()
            .iter()
            .map(|&x| {
                let p = self.position(x);
                let base = p.floor();
                let up = rng.uniform() < p - base;
                ((base as u64) + u64::from(up)).min(self.levels - 1)
            })
            .collect()
    }

    pub fn dequantize(&self, codes: &[u64]) -> ParamVector {
        ParamVector::new(codes.iter().map(|&c| c as f64 * self.step() - self.clip).collect())
    }

    /// Mean of `size` clients from the field sum of their codes.
    pub fn dequantize_mean(&self, sum: &[u64], size: usize) -> ParamVector {
        let s = size as f64;
        ParamVector::new(sum.iter().map(|&c| c as f64 / s * self.step() - self.clip).collect())
    }
}

/// Mask shared by clients `i < j`: client `i` adds `mask`, client `j` adds `-mask`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskShare {
    pub i: usize,
    pub j: usize,
    pub mask: Vec<u64>,
}

fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 + b as u128) % q as u128) as u64
}

fn neg_mod(a: u64, q: u64) -> u64 {
    let a = a % q;
    if a == 0 {
        0
    } else {
        q - a
    }
}

/// One uniform mask in `Z_Q^d` per unordered pair of bucket members.
pub fn gen_masks(ids: &[usize], d: usize, modulus: u64, rng: &mut DetRng) -> Vec<MaskShare> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for (a, &i) in sorted.iter().enumerate() {
        for &j in &sorted[a + 1..] {
            let mask = (0..d).map(|_| rng.below(modulus)).collect();
            out.push(MaskShare { i, j, mask });
        }
    }
    out
}

/// `g + sum_{j != i} u_ij (mod Q)`.
pub fn masked_upload(client: usize, quantized: &[u64], shares: &[MaskShare], modulus: u64) -> Vec<u64> {
    let mut out: Vec<u64> = quantized.iter().map(|&g| g % modulus).collect();
    for s in shares {
        if s.i == client {
            for (o, &u) in out.iter_mut().zip(&s.mask) {
                *o = add_mod(*o, u, modulus);
            }
        } else if s.j == client {
            for (o, &u) in out.iter_mut().zip(&s.mask) {
                *o = add_mod(*o, neg_mod(u, modulus), modulus);
            }
        }
    }
    out
}

/// Coordinate-wise field sum.
pub fn field_sum(uploads: &[Vec<u64>], modulus: u64) -> Vec<u64> {
    let d = uploads.first().map_or(0, Vec::len);
    let mut sum = vec![0u64; d];
    for u in uploads {
        for (s, &x) in sum.iter_mut().zip(u) {
            *s = add_mod(*s, x, modulus);
        }
    }
    sum
}

/// Field sum of the uploads, dequantized to the bucket mean.
pub fn bucket_sum_and_dequantize(
    cfg: &SecureAggConfig,
    quantizer: &Quantizer,
    uploads: &[Vec<u64>],
) -> Result<ParamVector> {
    let size = uploads.len();
    if size == 0 {
        return Err(Error::Empty("bucket uploads"));
    }
    cfg.check_bucket_size(size)?;
    let sum = field_sum(uploads, quantizer.modulus);
    Ok(quantizer.dequantize_mean(&sum, size))
}

/// Everything exchanged inside one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SecureAggTranscript {
    pub bucket_id: usize,
    pub members: Vec<usize>,
    /// Plain quantized updates; never visible to the server.
    pub quantized: Vec<Vec<u64>>,
    pub masked: Vec<Vec<u64>>,
    pub sum: Vec<u64>,
}

impl SecureAggTranscript {
    /// Runs the protocol for one bucket.
    pub fn run(
        bucket_id: usize,
        members: &[usize],
        quantized: Vec<Vec<u64>>,
        modulus: u64,
        rng: &mut DetRng,
    ) -> Self {
        let d = quantized.first().map_or(0, Vec::len);
        let shares = gen_masks(members, d, modulus, rng);
        let masked: Vec<Vec<u64>> = members
            .iter()
            .zip(&quantized)
            .map(|(&c, g)| masked_upload(c, g, &shares, modulus))
            .collect();
        let sum = field_sum(&masked, modulus);
        Self {
            bucket_id,
            members: members.to_vec(),
            quantized,
            masked,
            sum,
        }
    }

    /// True when the masked sum equals the plain sum exactly.
    pub fn cancels(&self, modulus: u64) -> bool {
        field_sum(&self.quantized, modulus) == self.sum
    }

    /// `bucket,client,kind,coord,value` rows for audit.
    pub fn to_csv(transcripts: &[SecureAggTranscript]) -> String {
        let mut out = String::from("bucket,client,kind,coord,value\n");
        for t in transcripts {
            for (c, (plain, masked)) in t.members.iter().zip(t.quantized.iter().zip(&t.masked)) {
                for (j, v) in plain.iter().enumerate() {
                    let _ = writeln!(out, "{},{},plain,{},{}", t.bucket_id, c, j, v);
                }
                for (j, v) in masked.iter().enumerate() {
                    let _ = writeln!(out, "{},{},masked,{},{}", t.bucket_id, c, j, v);
                }
            }
            for (j, v) in t.sum.iter().enumerate() {
                let _ = writeln!(out, "{},,sum,{},{}", t.bucket_id, j, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn q(levels: u64, clip: f64) -> Quantizer {
        Quantizer {
            modulus: MERSENNE_61,
            levels,
            clip,
        }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(q(3, 1.0).quantize(&ParamVector::new(vec![0.0])), vec![1]);
        assert_eq!(q(3, 1.0).quantize(&ParamVector::new(vec![5.0, -5.0])), vec![2, 0]);
    }

    #[test]
    fn round_trip_within_half_step() {
        let qz = q(1 << 16, 2.0);
        let mut r = RngState::new(3, 0).rng();
        for _ in 0..200 {
            let v = ParamVector::new(r.normal_vec(16));
            let back = qz.dequantize(&qz.quantize(&v));
            for (a, b) in v.as_slice().iter().zip(back.as_slice()) {
                assert!((a.clamp(-2.0, 2.0) - b).abs() <= 2.0 / 65535.0 + 1e-15);
            }
        }
    }

    #[test]
    fn stochastic_rounding_is_unbiased() {
        let qz = q(5, 1.0);
        let mut r = RngState::new(4, 0).rng();
        let v = ParamVector::new(vec![0.3]);
        let trials = 20_000;
        let mean: f64 = (0..trials)
            .map(|_| qz.dequantize(&qz.quantize_stochastic(&v, &mut r))[0])
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 0.3).abs() < 0.01, "{mean}");
    }

    #[test]
    fn mask_counts() {
        let mut r = RngState::new(1, 0).rng();
        assert!(gen_masks(&[4], 3, 97, &mut r).is_empty());
        assert_eq!(gen_masks(&[4, 9], 3, 97, &mut r).len(), 1);
        assert_eq!(gen_masks(&[1, 2, 3, 4], 3, 97, &mut r).len(), 6);
    }

    #[test]
    fn uploads_without_peers_are_plain() {
        assert_eq!(masked_upload(0, &[5, 6], &[], 97), vec![5, 6]);
    }

    #[test]
    fn two_client_cancellation() {
        let share = MaskShare {
            i: 0,
            j: 1,
            mask: vec![90, 3],
        };
        let a = masked_upload(0, &[10, 20], std::slice::from_ref(&share), 97);
        let b = masked_upload(1, &[30, 40], std::slice::from_ref(&share), 97);
        assert_eq!(a, vec![3, 23]);
        assert_eq!(b, vec![37, 37]);
        assert_eq!(field_sum(&[a, b], 97), vec![40, 60]);
    }

    #[test]
    fn random_buckets_cancel_exactly() {
        let mut r = RngState::new(7, 0).rng();
        for b in 0..100 {
            let size = 1 + r.below(16) as usize;
            let d = 1 + r.below(64) as usize;
            let members = r.sample_indices(100, size);
            let plain: Vec<Vec<u64>> = (0..size).map(|_| (0..d).map(|_| r.below(1 << 16)).collect()).collect();
            let t = SecureAggTranscript::run(b, &members, plain, MERSENNE_61, &mut r);
            assert!(t.cancels(MERSENNE_61));
        }
    }

    #[test]
    fn single_upload_looks_uniform() {
        // 16 equal bins over Z_Q; chi-square with 15 dof, 99.9% quantile ~ 37.7.
        let modulus = MERSENNE_61;
        let mut r = RngState::new(11, 0).rng();
        let trials = 16_000;
        let mut bins = [0usize; 16];
        for _ in 0..trials {
            let shares = gen_masks(&[0, 1, 2], 1, modulus, &mut r);
            let up = masked_upload(0, &[12345], &shares, modulus);
            bins[((up[0] as u128 * 16) / modulus as u128) as usize] += 1;
        }
        let expected = trials as f64 / 16.0;
        let chi2: f64 = bins.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn identical_uploads_give_dequantized_value() {
        let cfg = SecureAggConfig::default();
        let qz = cfg.quantizer(1.0, 0.5, 4);
        let v = ParamVector::new(vec![0.1, -0.7, 2.0, 0.0]);
        let code = qz.quantize(&v);
        let mut r = RngState::new(2, 0).rng();
        let t = SecureAggTranscript::run(0, &[0, 1, 2, 3, 4], vec![code.clone(); 5], cfg.modulus, &mut r);
        let mean = bucket_sum_and_dequantize(&cfg, &qz, &t.masked).unwrap();
        let single = qz.dequantize(&code);
        for (a, b) in mean.as_slice().iter().zip(single.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_guard() {
        let cfg = SecureAggConfig {
            modulus: 1 << 20,
            levels: 1 << 16,
            ..SecureAggConfig::default()
        };
        assert!(cfg.check_bucket_size(15).is_ok());
        assert!(matches!(cfg.check_bucket_size(16), Err(Error::FieldOverflow { .. })));
        let cfg = SecureAggConfig {
            modulus: (1 << 20) + 1,
            ..cfg
        };
        assert!(cfg.check_bucket_size(16).is_ok());
    }

    #[test]
    fn transcript_csv_shape() {
        let mut r = RngState::new(1, 0).rng();
        let t = SecureAggTranscript::run(3, &[2, 5], vec![vec![1, 2], vec![3, 4]], 97, &mut r);
        let csv = SecureAggTranscript::to_csv(&[t]);
        assert!(csv.starts_with("bucket,client,kind,coord,value\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 + 2);
        assert!(csv.contains("3,,sum,0,4\n"));
    }
}
