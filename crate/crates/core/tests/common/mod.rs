//! Independent oracles for the integration suites: a dense Jacobi
//! eigen-solver and a brute-force ECDF scan, both deliberately naive so they
//! share no code path with the implementations under test.

// Each test binary compiles this module and uses its own subset of oracles.
#![allow(dead_code)]

use specadapt_core::SpectraSet;

/// Sample covariance matrix (n−1 denominator) of a set's rows.
pub fn covariance_of(set: &SpectraSet) -> Vec<Vec<f64>> {
    let n = set.len();
    let d = set.dim;
    assert!(n >= 2);
    let mut mean = vec![0.0; d];
    for s in &set.spectra {
        for (m, &v) in mean.iter_mut().zip(&s.intensities) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in &set.spectra {
        let c: Vec<f64> = s
            .intensities
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| v - m)
            .collect();
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    cov
}

/// Full eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as rows), sorted by decreasing
/// eigenvalue.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut vecs = vec![vec![0.0; d]; d];
    for (i, row) in vecs.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    for _sweep in 0..200 {
        let off: f64 = (0..d)
            .flat_map(|p| ((p + 1)..d).map(move |q| (p, q)))
            .map(|(p, q)| m[p][q] * m[p][q])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if m[p][q].abs() < 1e-30 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let mkp = row[p];
                    let mkq = row[q];
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                let (top, rest) = m.split_at_mut(q);
                for (mpk, mqk) in top[p].iter_mut().zip(rest[0].iter_mut()) {
                    let a = *mpk;
                    let b = *mqk;
                    *mpk = c * a - s * b;
                    *mqk = s * a + c * b;
                }
                for row in vecs.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[i][i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| vecs.iter().map(|row| row[i]).collect())
        .collect();
    (values, vectors)
}

/// KS statistic by scanning every pooled sample point with quadratic-time
/// counting. The difference expression matches the production one so agreement
/// is exact, not approximate.
pub fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let m = b.len();
    let mut pool: Vec<f64> = a.iter().chain(b).copied().collect();
    pool.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pool.dedup();
    let mut best = 0.0_f64;
    for &x in &pool {
        let i = a.iter().filter(|&&v| v <= x).count();
        let j = b.iter().filter(|&&v| v <= x).count();
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if diff > best {
            best = diff;
        }
    }
    best
}
