use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::vector::SampleMatrix;

/// Which formula picks the default bucket count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketRule {
    /// `floor(2 eps m + ln(1/delta))`.
    #[default]
    Double,
    /// `floor(eps m + ln(1/delta))`.
    Single,
}

/// Default bucket count, clamped into `[1, m]`.
pub fn default_bucket_count(epsilon: f64, m: usize, delta: f64, rule: BucketRule) -> usize {
    let factor = match rule {
        BucketRule::Double => 2.0,
        BucketRule::Single => 1.0,
    };
    let raw = factor * epsilon * m as f64 + (1.0 / delta).ln();
    let k = if raw.is_finite() {
        (raw + 1e-9).floor().max(0.0) as usize
    } else {
        m
    };
    k.clamp(1, m.max(1))
}

/// Random partition of `0..m` into `k` contiguous chunks of a random
/// permutation. The first `m mod k` chunks hold one extra index.
pub fn bucketize(m: usize, k: usize, rng: &mut DetRng) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > m {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("bucket count must lie in [1, {m}], got {k}"),
        });
    }
    let perm = rng.permutation(m);
    let base = m / k;
    let extra = m % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

/// Row `b` holds the mean of the rows in bucket `b`.
pub fn bucket_means(updates: &SampleMatrix, buckets: &[Vec<usize>]) -> SampleMatrix {
    let mut out = SampleMatrix::zeros(buckets.len(), updates.dim());
    for (b, idx) in buckets.iter().enumerate() {
        out.set_row(b, updates.mean_of(idx).as_slice());
    }
    out
}
