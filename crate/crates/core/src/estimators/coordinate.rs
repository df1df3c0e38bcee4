use crate::error::{Error, Result};
use crate::vector::{ParamVector, SampleMatrix};

fn column(updates: &SampleMatrix, j: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(updates.iter_rows().map(|r| r[j]));
    buf.sort_unstable_by(f64::total_cmp);
}

/// Coordinate-wise median (mean of the two middle values for even `m`).
pub fn coord_median(updates: &SampleMatrix) -> Result<ParamVector> {
    let m = updates.rows();
    if m == 0 {
        return Err(Error::Empty("updates"));
    }
    let mut buf = Vec::with_capacity(m);
    let out = (0..updates.dim())
        .map(|j| {
            column(updates, j, &mut buf);
            if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            }
        })
        .collect();
    Ok(ParamVector::new(out))
}

/// Coordinate-wise trimmed mean dropping `floor(beta m)` values from each end.
pub fn coord_trimmed_mean(updates: &SampleMatrix, beta: f64) -> Result<ParamVector> {
    let m = updates.rows();
    if m == 0 {
        return Err(Error::Empty("updates"));
    }
    if !(0.0..0.5).contains(&beta) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must lie in [0, 1/2), got {beta}"),
        });
    }
    let trim = (beta * m as f64 + 1e-9).floor() as usize;
    coord_trim_count(updates, trim)
}

/// Coordinate-wise mean after dropping `trim` values from each end.
pub fn coord_trim_count(updates: &SampleMatrix, trim: usize) -> Result<ParamVector> {
    let m = updates.rows();
    if 2 * trim >= m {
        return Err(Error::TooFewRows {
            rule: "trimmed mean",
            rows: m,
            required: 2 * trim + 1,
        });
    }
    let kept = (m - 2 * trim) as f64;
    let mut buf = Vec::with_capacity(m);
    let out = (0..updates.dim())
        .map(|j| {
            column(updates, j, &mut buf);
            buf[trim..m - trim].iter().sum::<f64>() / kept
        })
        .collect();
    Ok(ParamVector::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> SampleMatrix {
        SampleMatrix::from_flat(values.to_vec(), values.len(), 1).unwrap()
    }

    #[test]
    fn median_examples() {
        assert_eq!(coord_median(&col(&[1.0, 2.0, 100.0])).unwrap()[0], 2.0);
        assert_eq!(coord_median(&col(&[1.0, 2.0, 3.0, 100.0])).unwrap()[0], 2.5);
    }

    #[test]
    fn trimmed_mean_examples() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 100.0]);
        assert_eq!(coord_trimmed_mean(&x, 0.2).unwrap()[0], 2.0);
        assert!((coord_trimmed_mean(&x, 0.0).unwrap()[0] - x.mean()[0]).abs() < 1e-12);
        assert!(coord_trimmed_mean(&x, 0.5).is_err());
        let sym = SampleMatrix::from_rows(&[[-3.0, 1.0], [-1.0, 2.0], [1.0, 3.0], [3.0, 4.0]]).unwrap();
        let t = coord_trimmed_mean(&sym, 0.25).unwrap();
        let mean = sym.mean();
        assert!((t[0] - mean[0]).abs() < 1e-12 && (t[1] - mean[1]).abs() < 1e-12);
    }
}
