use serde::{Deserialize, Serialize};

use super::coordinate::{coord_median, coord_trim_count};
use crate::error::{Error, Result};
use crate::vector::{dist_sq, pairwise_sq_distances, ParamVector, SampleMatrix};

/// Selection rule used inside each Bulyan round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BulyanInner {
    Krum,
    CoordMedian,
    TrimmedMean,
}

/// Index of the Krum winner among `candidates`, using a precomputed distance
/// matrix. The score of a row is the sum of its `neighbors` smallest squared
/// distances to the other candidates. Ties go to the lowest index.
fn krum_select(dist: &[Vec<f64>], candidates: &[usize], neighbors: usize) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut buf = Vec::with_capacity(candidates.len());
    for &i in candidates {
        buf.clear();
        buf.extend(candidates.iter().filter(|&&j| j != i).map(|&j| dist[i][j]));
        let score: f64 = if neighbors == 0 {
            0.0
        } else {
            buf.select_nth_unstable_by(neighbors - 1, f64::total_cmp);
            buf[..neighbors].iter().sum()
        };
        if score < best.1 || (score == best.1 && i < best.0) {
            best = (i, score);
        }
    }
    best.0
}

/// Index of the row Krum selects with `f` assumed Byzantine rows.
pub fn krum_index(updates: &SampleMatrix, f: usize) -> Result<usize> {
    let m = updates.rows();
    if m < f + 3 {
        return Err(Error::TooFewRows {
            rule: "krum",
            rows: m,
            required: f + 3,
        });
    }
    let dist = pairwise_sq_distances(updates);
    let all: Vec<usize> = (0..m).collect();
    Ok(krum_select(&dist, &all, m - f - 2))
}

/// Krum: the input row with the smallest sum of squared distances to its
/// `m - f - 2` nearest neighbours.
pub fn krum(updates: &SampleMatrix, f: usize) -> Result<ParamVector> {
    Ok(updates.row_vector(krum_index(updates, f)?))
}

/// Bulyan: `m - 2f` rounds of selection with `inner`, removing each chosen
/// row, then a coordinate-wise trimmed mean over the selection dropping `f`
/// values per side.
///
/// A Krum round takes the Krum winner among the remaining rows. Median and
/// trimmed-mean rounds take the remaining row closest to the inner aggregate.
pub fn bulyan(updates: &SampleMatrix, f: usize, inner: BulyanInner) -> Result<ParamVector> {
    let selected = bulyan_selection(updates, f, inner)?;
    coord_trim_count(&updates.select_rows(&selected), f)
}

/// Row indices chosen by the Bulyan selection phase, in selection order.
pub fn bulyan_selection(updates: &SampleMatrix, f: usize, inner: BulyanInner) -> Result<Vec<usize>> {
    let m = updates.rows();
    if m < 4 * f + 3 {
        return Err(Error::TooFewRows {
            rule: "bulyan",
            rows: m,
            required: 4 * f + 3,
        });
    }
    let theta = m - 2 * f;
    let dist = match inner {
        BulyanInner::Krum => pairwise_sq_distances(updates),
        _ => Vec::new(),
    };
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut selected = Vec::with_capacity(theta);
    for _ in 0..theta {
        let r = remaining.len();
        let pick = match inner {
            BulyanInner::Krum => krum_select(&dist, &remaining, r.saturating_sub(f + 2)),
            BulyanInner::CoordMedian | BulyanInner::TrimmedMean => {
                let sub = updates.select_rows(&remaining);
                let center = if inner == BulyanInner::TrimmedMean && 2 * f < r {
                    coord_trim_count(&sub, f)?
                } else {
                    coord_median(&sub)?
                };
                nearest(updates, &remaining, center.as_slice())
            }
        };
        remaining.retain(|&i| i != pick);
        selected.push(pick);
    }
    Ok(selected)
}

fn nearest(updates: &SampleMatrix, candidates: &[usize], target: &[f64]) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for &i in candidates {
        let dd = dist_sq(updates.row(i), target);
        if dd < best.1 || (dd == best.1 && i < best.0) {
            best = (i, dd);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use byzagg_oracle::{bulyan_krum_exhaustive, krum_exhaustive};
    use proptest::prelude::*;

    fn col(values: &[f64]) -> SampleMatrix {
        SampleMatrix::from_flat(values.to_vec(), values.len(), 1).unwrap()
    }

    #[test]
    fn three_points_no_byzantine() {
        // One neighbour each: scores 0.01, 0.01, 98.01; tie goes to row 0.
        let x = col(&[0.0, 0.1, 10.0]);
        let oracle = krum_exhaustive(&[vec![0.0], vec![0.1], vec![10.0]], 0);
        assert_eq!(krum_index(&x, 0).unwrap(), oracle);
        assert_eq!(krum(&x, 0).unwrap()[0], 0.0);
    }

    #[test]
    fn identical_rows() {
        let x = SampleMatrix::from_rows(&[[1.0, 2.0]; 5]).unwrap();
        assert_eq!(krum(&x, 1).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(bulyan(&x, 0, BulyanInner::Krum).unwrap().as_slice(), &[1.0, 2.0]);
        let x = SampleMatrix::from_rows(&[[1.0, 2.0]; 7]).unwrap();
        assert_eq!(bulyan(&x, 1, BulyanInner::CoordMedian).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn outlier_is_never_chosen() {
        let x = col(&[0.0, 0.1, -0.1, 0.05, 1e3]);
        assert_ne!(krum_index(&x, 1).unwrap(), 4);
    }

    #[test]
    fn bulyan_without_byzantine_is_the_mean() {
        let x = SampleMatrix::from_rows(&[[0.0, 1.0], [3.0, -2.0], [1.5, 7.0], [4.0, 4.0]]).unwrap();
        let b = bulyan(&x, 0, BulyanInner::Krum).unwrap();
        let mean = x.mean();
        for j in 0..2 {
            assert!((b[j] - mean[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn bulyan_with_outlier_stays_in_cluster_hull() {
        let x = col(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 500.0]);
        for inner in [BulyanInner::Krum, BulyanInner::CoordMedian, BulyanInner::TrimmedMean] {
            let b = bulyan(&x, 1, inner).unwrap()[0];
            assert!((0.0..=1.0).contains(&b), "{inner:?}: {b}");
        }
    }

    #[test]
    fn size_preconditions() {
        assert!(krum(&col(&[1.0, 2.0]), 0).is_err());
        assert!(bulyan(&col(&[1.0; 6]), 1, BulyanInner::Krum).is_err());
    }

    fn random_rows(seed: u64, m: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = RngState::new(seed, 11).rng();
        (0..m).map(|_| rng.normal_vec(d)).collect()
    }

    proptest! {
        #[test]
        fn krum_matches_enumeration(seed in 0u64..10_000, m in 3usize..9, d in 1usize..4, f in 0usize..3) {
            prop_assume!(m >= f + 3);
            let rows = random_rows(seed, m, d);
            let x = SampleMatrix::from_rows(&rows).unwrap();
            prop_assert_eq!(krum_index(&x, f).unwrap(), krum_exhaustive(&rows, f));
        }

        #[test]
        fn bulyan_matches_enumeration(seed in 0u64..10_000, m in 3usize..9, d in 1usize..4, f in 0usize..2) {
            prop_assume!(m >= 4 * f + 3);
            let rows = random_rows(seed, m, d);
            let x = SampleMatrix::from_rows(&rows).unwrap();
            let got = bulyan(&x, f, BulyanInner::Krum).unwrap();
            let want = bulyan_krum_exhaustive(&rows, f);
            for j in 0..d {
                prop_assert!((got[j] - want[j]).abs() <= 1e-12 * (1.0 + want[j].abs()));
            }
        }

        #[test]
        fn outputs_lie_in_coordinate_hull(seed in 0u64..10_000, m in 7usize..12, d in 1usize..4) {
            let rows = random_rows(seed, m, d);
            let x = SampleMatrix::from_rows(&rows).unwrap();
            let k = krum(&x, 1).unwrap();
            prop_assert!(rows.iter().any(|r| r.as_slice() == k.as_slice()));
            for inner in [BulyanInner::Krum, BulyanInner::CoordMedian, BulyanInner::TrimmedMean] {
                let b = bulyan(&x, 1, inner).unwrap();
                for j in 0..d {
                    let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(b[j] >= lo - 1e-12 && b[j] <= hi + 1e-12);
                }
            }
        }
    }
}
