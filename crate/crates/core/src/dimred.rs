//! Dimensionality reduction for spectra.
//!
//! The default reducer is PCA fitted once on the initial training data and
//! frozen afterward. Principal directions come from power iteration with
//! deflation so the crate needs no dense eigen-solver; the start vector is
//! derived from an explicit seed and component signs are normalized, which
//! makes fitted models reproducible bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectra::{SpectraSet, Spectrum};

/// Target dimension used when the input has more points than the default
/// reduction threshold.
pub const DEFAULT_K: usize = 100;

/// Frozen PCA basis: per-dimension mean and orthonormal component rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows, each of length D, orthonormal, sorted by decreasing variance.
    pub components: Vec<Vec<f64>>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// Default target dimension for a dataset of `n` spectra with `d` points.
///
/// Mirrors the 100-feature reduction for high-resolution spectra and stays
/// small for desk-scale synthetic data.
pub fn default_k(n: usize, d: usize) -> usize {
    let cap = n.saturating_sub(1);
    if d >= 101 {
        DEFAULT_K.min(cap)
    } else {
        cap.min(d).min(32)
    }
}

/// Fit a PCA basis on a normalized set by power iteration with deflation.
///
/// Iteration for one component stops once successive direction estimates
/// differ by less than `tol` in norm; exhausting `max_iter` first is an
/// error carrying the last residual.
pub fn fit_pca(
    set: &SpectraSet,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<PcaModel> {
    let n = set.len();
    let d = set.dim;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot fit PCA on an empty set".into(),
        ));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "k={k} out of range, need 1 <= k <= min(n-1={}, d={d})",
            n - 1
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }

    let mut mean = vec![0.0; d];
    for s in &set.spectra {
        for (m, &v) in mean.iter_mut().zip(&s.intensities) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Centered data, flattened row-major for the two matvecs per iteration.
    let mut centered = vec![0.0; n * d];
    for (i, s) in set.spectra.iter().enumerate() {
        for (j, &v) in s.intensities.iter().enumerate() {
            centered[i * d + j] = v - mean[j];
        }
    }

    // With at least as many samples as dimensions, accumulating the d x d
    // scatter matrix once is cheaper than streaming the data twice on every
    // iteration.
    let scatter = if n >= d {
        Some(build_scatter(&centered, d))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut top_eigenvalue = 0.0_f64;

    for comp_idx in 0..k {
        let mut v = draw_start_vector(&mut rng, d, &components)?;
        let null_threshold = if comp_idx == 0 {
            1e-300
        } else {
            1e-12 * top_eigenvalue.max(1e-300)
        };

        let mut eigenvalue = 0.0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..max_iter {
            let mut w = match &scatter {
                Some(s) => apply_scatter(s, n, d, &v),
                None => apply_covariance(&centered, n, d, &v),
            };
            orthogonalize(&mut w, &components);
            let norm_w = norm(&w);
            if norm_w < null_threshold {
                // The deflated covariance annihilates v: the data has rank
                // below comp_idx+1 and any remaining orthonormal direction
                // is a valid zero-variance component.
                eigenvalue = 0.0;
                converged = true;
                break;
            }
            for x in w.iter_mut() {
                *x /= norm_w;
            }
            residual = direction_distance(&w, &v);
            v = w;
            eigenvalue = norm_w;
            if residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { max_iter, residual });
        }

        fix_sign(&mut v);
        if comp_idx == 0 {
            top_eigenvalue = eigenvalue;
        }
        components.push(v);
    }

    Ok(PcaModel { mean, components })
}

/// Project a spectrum onto the basis; the label carries over.
pub fn transform(m: &PcaModel, s: &Spectrum) -> Result<Spectrum> {
    if s.dim() != m.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.input_dim(),
            got: s.dim(),
        });
    }
    let mut out = Vec::with_capacity(m.k());
    for c in &m.components {
        let mut acc = 0.0;
        for ((&ci, &xi), &mi) in c.iter().zip(&s.intensities).zip(&m.mean) {
            acc += ci * (xi - mi);
        }
        out.push(acc);
    }
    Ok(Spectrum::new(out, s.label))
}

/// Project every spectrum in the set.
pub fn transform_set(m: &PcaModel, set: &SpectraSet) -> Result<SpectraSet> {
    if set.dim != m.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.input_dim(),
            got: set.dim,
        });
    }
    let mut out = SpectraSet::new(m.k(), set.n_classes)?;
    for s in &set.spectra {
        out.spectra.push(transform(m, s)?);
    }
    Ok(out)
}

/// Map a reduced vector back to input space: mean + Σ z_i · component_i.
pub fn reconstruct(m: &PcaModel, reduced: &[f64]) -> Result<Vec<f64>> {
    if reduced.len() != m.k() {
        return Err(Error::DimensionMismatch {
            expected: m.k(),
            got: reduced.len(),
        });
    }
    let mut out = m.mean.clone();
    for (&z, c) in reduced.iter().zip(&m.components) {
        for (o, &ci) in out.iter_mut().zip(c) {
            *o += z * ci;
        }
    }
    Ok(out)
}

/// Sample variance of the set's projection onto each component, sorted in
/// nonincreasing order.
pub fn explained_variance(m: &PcaModel, set: &SpectraSet) -> Result<Vec<f64>> {
    if set.dim != m.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.input_dim(),
            got: set.dim,
        });
    }
    let n = set.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 spectra for a variance estimate, got {n}"
        )));
    }
    let mut projections: Vec<Vec<f64>> = Vec::with_capacity(n);
    for s in &set.spectra {
        projections.push(transform(m, s)?.intensities);
    }
    let mut variances = Vec::with_capacity(m.k());
    for j in 0..m.k() {
        let mean_j: f64 = projections.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        let ss: f64 = projections.iter().map(|p| (p[j] - mean_j).powi(2)).sum();
        variances.push(ss / (n - 1) as f64);
    }
    variances.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(variances)
}

// ── internals ───────────────────────────────────────────────────────────────

/// Scatter matrix XᵀX of the centered data, flat row-major d x d.
fn build_scatter(centered: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for (i, &xi) in row.iter().enumerate() {
            if xi != 0.0 {
                for (sv, &xj) in s[i * d..(i + 1) * d].iter_mut().zip(row) {
                    *sv += xi * xj;
                }
            }
        }
    }
    s
}

/// One covariance application via the precomputed scatter: (S·v)/(n−1).
fn apply_scatter(s: &[f64], n: usize, d: usize, v: &[f64]) -> Vec<f64> {
    let denom = (n - 1) as f64;
    s.chunks_exact(d)
        .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum::<f64>() / denom)
        .collect()
}

/// One application of the deflation-free sample covariance: Xᵀ(Xv)/(n−1).
fn apply_covariance(centered: &[f64], n: usize, d: usize, v: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; n];
    for i in 0..n {
        let row = &centered[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for (&r, &vj) in row.iter().zip(v) {
            acc += r * vj;
        }
        t[i] = acc;
    }
    let mut w = vec![0.0; d];
    for i in 0..n {
        let row = &centered[i * d..(i + 1) * d];
        let ti = t[i];
        for (wj, &r) in w.iter_mut().zip(row) {
            *wj += ti * r;
        }
    }
    let denom = (n - 1) as f64;
    for wj in w.iter_mut() {
        *wj /= denom;
    }
    w
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj: f64 = w.iter().zip(b).map(|(&wi, &bi)| wi * bi).sum();
        for (wi, &bi) in w.iter_mut().zip(b) {
            *wi -= proj * bi;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

/// Distance between unit direction estimates, ignoring overall sign.
fn direction_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut d_plus = 0.0;
    let mut d_minus = 0.0;
    for (&ai, &bi) in a.iter().zip(b) {
        d_plus += (ai - bi) * (ai - bi);
        d_minus += (ai + bi) * (ai + bi);
    }
    d_plus.sqrt().min(d_minus.sqrt())
}

/// Make the largest-magnitude entry positive; first such index wins on ties.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Unit start vector orthogonal to the basis found so far.
fn draw_start_vector(rng: &mut ChaCha8Rng, d: usize, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for _ in 0..100 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        orthogonalize(&mut v, basis);
        let n = norm(&v);
        if n > 1e-8 {
            for x in v.iter_mut() {
                *x /= n;
            }
            return Ok(v);
        }
    }
    Err(Error::InvalidArgument(
        "could not draw a start vector outside the span of found components".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_from_rows(rows: &[Vec<f64>]) -> SpectraSet {
        let mut set = SpectraSet::new(rows[0].len(), 12).unwrap();
        for r in rows {
            set.push(Spectrum::new(r.clone(), None)).unwrap();
        }
        set
    }

    #[test]
    fn line_data_yields_diagonal_component() {
        let set = set_from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let m = fit_pca(&set, 1, 500, 1e-10, 0).unwrap();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert!((m.components[0][0] - inv_sqrt2).abs() < 1e-6);
        assert!((m.components[0][1] - inv_sqrt2).abs() < 1e-6);
    }

    #[test]
    fn full_basis_reconstructs_exactly() {
        let set = set_from_rows(&[
            vec![0.3, 1.7, -0.4],
            vec![1.1, 0.2, 0.8],
            vec![-0.6, 0.9, 1.5],
            vec![2.0, -1.2, 0.1],
            vec![0.5, 0.5, -1.0],
            vec![-1.4, 2.2, 0.7],
        ]);
        let m = fit_pca(&set, 3, 5000, 1e-12, 1).unwrap();
        for s in &set.spectra {
            let z = transform(&m, s).unwrap();
            let back = reconstruct(&m, &z.intensities).unwrap();
            for (&b, &x) in back.iter().zip(&s.intensities) {
                assert!((b - x).abs() < 1e-8, "reconstruction drifted: {b} vs {x}");
            }
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let set = set_from_rows(&[
            vec![0.3, 1.7, -0.4, 0.9],
            vec![1.1, 0.2, 0.8, -0.3],
            vec![-0.6, 0.9, 1.5, 0.4],
            vec![2.0, -1.2, 0.1, 1.1],
            vec![0.5, 0.5, -1.0, -0.8],
        ]);
        let m = fit_pca(&set, 3, 5000, 1e-12, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = m.components[i]
                    .iter()
                    .zip(&m.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let set = set_from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![2.0, 4.0]]);
        let m = fit_pca(&set, 1, 500, 1e-10, 0).unwrap();
        let z = transform(&m, &Spectrum::new(m.mean.clone(), Some(2))).unwrap();
        assert!(z.intensities.iter().all(|&x| x.abs() < 1e-12));
        assert_eq!(z.label, Some(2));
    }

    #[test]
    fn single_axis_component_projects_one_coordinate() {
        let m = PcaModel {
            mean: vec![0.5, 2.0, -1.0],
            components: vec![vec![1.0, 0.0, 0.0]],
        };
        let z = transform(&m, &Spectrum::new(vec![3.25, 7.0, 9.0], None)).unwrap();
        assert_eq!(z.intensities, vec![3.25 - 0.5]);
    }

    #[test]
    fn transform_rejects_dimension_mismatch() {
        let m = PcaModel {
            mean: vec![0.0, 0.0],
            components: vec![vec![1.0, 0.0]],
        };
        assert!(transform(&m, &Spectrum::new(vec![1.0, 2.0, 3.0], None)).is_err());
    }

    #[test]
    fn variance_on_line_matches_hand_value() {
        let set = set_from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let m = fit_pca(&set, 1, 500, 1e-10, 0).unwrap();
        let var = explained_variance(&m, &set).unwrap();
        assert_eq!(var.len(), 1);
        assert!((var[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn variance_of_constant_data_is_zero() {
        let set = set_from_rows(&vec![vec![4.0, 4.0, 4.0]; 5]);
        let m = fit_pca(&set, 2, 500, 1e-10, 3).unwrap();
        let var = explained_variance(&m, &set).unwrap();
        assert!(var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isotropic_gaussian_spreads_variance_evenly() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let set = set_from_rows(&rows);
        let m = fit_pca(&set, 2, 50_000, 1e-4, 7).unwrap();
        let var = explained_variance(&m, &set).unwrap();
        assert!(var[0] / var[1] < 1.2, "ratio {}", var[0] / var[1]);
    }

    #[test]
    fn same_seed_gives_bit_identical_model() {
        let set = set_from_rows(&[
            vec![0.3, 1.7, -0.4, 0.9],
            vec![1.1, 0.2, 0.8, -0.3],
            vec![-0.6, 0.9, 1.5, 0.4],
            vec![2.0, -1.2, 0.1, 1.1],
            vec![0.5, 0.5, -1.0, -0.8],
        ]);
        let a = fit_pca(&set, 3, 5000, 1e-12, 9).unwrap();
        let b = fit_pca(&set, 3, 5000, 1e-12, 9).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            let bits_a: Vec<u64> = ca.iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = cb.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn rejects_k_out_of_range() {
        let set = set_from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert!(fit_pca(&set, 0, 100, 1e-8, 0).is_err());
        assert!(fit_pca(&set, 3, 100, 1e-8, 0).is_err());
    }

    #[test]
    fn default_k_tracks_data_scale() {
        assert_eq!(default_k(20_000, 40_002), 100);
        assert_eq!(default_k(1_000, 64), 32);
        assert_eq!(default_k(10, 64), 9);
    }
}
