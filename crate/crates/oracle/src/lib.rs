//! Slow, obviously-correct reference computations used only by tests.
//!
//! Nothing here shares code with `byzagg`: covariances are dense, eigenpairs
//! come from cyclic Jacobi rotations, projections from grid search and
//! Krum/Bulyan from exhaustive subset enumeration.

/// Dense weighted covariance `sum_i q_i (x_i - mu)(x_i - mu)^T`.
pub fn dense_covariance(rows: &[Vec<f64>], q: &[f64]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let mut mu = vec![0.0; d];
    for (r, w) in rows.iter().zip(q) {
        for j in 0..d {
            mu[j] += w * r[j];
        }
    }
    let mut c = vec![vec![0.0; d]; d];
    for (r, w) in rows.iter().zip(q) {
        for a in 0..d {
            for b in 0..d {
                c[a][b] += w * (r[a] - mu[a]) * (r[b] - mu[b]);
            }
        }
    }
    c
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Grid search for `argmin_{q in capped simplex} KL(q || q_tilde)` on the
/// lattice `{k * step}`. The last coordinate absorbs the remaining mass.
///
/// Returns the best lattice point and its divergence.
pub fn kl_projection_grid(q_tilde: &[f64], cap: f64, step: f64) -> (Vec<f64>, f64) {
    let m = q_tilde.len();
    let units = (1.0 / step).round() as usize;
    let cap_units = (cap / step + 1e-9).floor() as usize;
    // term[i][k] = (k step) ln(k step / q_i)
    let term: Vec<Vec<f64>> = q_tilde
        .iter()
        .map(|&qi| {
            (0..=cap_units.min(units))
                .map(|k| {
                    let p = k as f64 * step;
                    if k == 0 {
                        0.0
                    } else {
                        p * (p / qi).ln()
                    }
                })
                .collect()
        })
        .collect();

    let mut best = (vec![0.0; m], f64::INFINITY);
    let mut current = vec![0usize; m];
    search(&term, 0, units, cap_units, 0.0, &mut current, &mut best, step);
    best
}

#[allow(clippy::too_many_arguments)]
fn search(
    term: &[Vec<f64>],
    i: usize,
    remaining: usize,
    cap_units: usize,
    acc: f64,
    current: &mut [usize],
    best: &mut (Vec<f64>, f64),
    step: f64,
) {
    let m = term.len();
    if i + 1 == m {
        if remaining > cap_units {
            return;
        }
        let total = acc + term[i][remaining];
        if total < best.1 {
            current[i] = remaining;
            best.0 = current.iter().map(|&k| k as f64 * step).collect();
            best.1 = total;
        }
        return;
    }
    let slots_after = (m - i - 1) * cap_units;
    let lo = remaining.saturating_sub(slots_after);
    let hi = cap_units.min(remaining);
    for k in lo..=hi {
        current[i] = k;
        search(term, i + 1, remaining - k, cap_units, acc + term[i][k], current, best, step);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

/// Krum by enumeration: a row's score is the smallest total squared distance
/// to any `m - f - 2` other rows (clamped at zero neighbours). Returns the index
/// of the lowest-scoring row, lowest index on ties.
pub fn krum_exhaustive(rows: &[Vec<f64>], f: usize) -> usize {
    let m = rows.len();
    let size = m.saturating_sub(f + 2);
    let mut best = (usize::MAX, f64::INFINITY);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let score = subsets(others.len(), size)
            .into_iter()
            .map(|s| s.iter().map(|&t| sq_dist(&rows[i], &rows[others[t]])).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if score < best.1 {
            best = (i, score);
        }
    }
    best.0
}

/// Bulyan with Krum selection: `m - 2f` rounds of exhaustive Krum on the
/// remaining rows, then per coordinate repeatedly drop the current max and
/// min `f` times and average the rest.
pub fn bulyan_krum_exhaustive(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let m = rows.len();
    let mut remaining: Vec<Vec<f64>> = rows.to_vec();
    let mut selected = Vec::new();
    for _ in 0..(m - 2 * f) {
        let k = krum_exhaustive(&remaining, f);
        selected.push(remaining.remove(k));
    }
    let d = rows[0].len();
    (0..d)
        .map(|j| {
            let mut col: Vec<f64> = selected.iter().map(|r| r[j]).collect();
            for _ in 0..f {
                let imax = (0..col.len())
                    .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
                    .unwrap();
                col.remove(imax);
                let imin = (0..col.len())
                    .min_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
                    .unwrap();
                col.remove(imin);
            }
            col.iter().sum::<f64>() / col.len() as f64
        })
        .collect()
}
