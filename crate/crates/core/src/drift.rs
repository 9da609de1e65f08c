//! Two-sample Kolmogorov–Smirnov shift detection.
//!
//! The statistic is the exact supremum of the ECDF difference over the merged
//! samples; the p-value uses the asymptotic Kolmogorov distribution with the
//! standard small-sample correction. Detection is advisory: the streaming
//! harness retrains on its fixed schedule regardless of the verdict.

use crate::error::{Error, Result};
use crate::spectra::Spectrum;

/// Outcome of a two-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Size of sample A.
    pub n: usize,
    /// Size of sample B.
    pub m: usize,
}

/// Exact two-sample KS test on 1-D samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "KS test requires two nonempty samples".into(),
        ));
    }
    for &x in a.iter().chain(b) {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("sample value {x}")));
        }
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let n = sa.len();
    let m = sb.len();
    let mut i = 0;
    let mut j = 0;
    let mut statistic = 0.0_f64;
    while i < n && j < m {
        let x = sa[i].min(sb[j]);
        while i < n && sa[i] == x {
            i += 1;
        }
        while j < m && sb[j] == x {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if diff > statistic {
            statistic = diff;
        }
    }

    let p_value = if statistic == 0.0 {
        1.0
    } else {
        let n_e = (n as f64) * (m as f64) / ((n + m) as f64);
        let lambda = (n_e.sqrt() + 0.12 + 0.11 / n_e.sqrt()) * statistic;
        kolmogorov_q(lambda)
    };

    Ok(KsResult {
        statistic,
        p_value,
        n,
        m,
    })
}

/// Survival function of the Kolmogorov distribution,
/// Q(λ) = 2·Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²), clamped to [0, 1].
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-6 {
        return 1.0;
    }
    let mut sum = 0.0_f64;
    let mut sign = 1.0_f64;
    let mut j = 1.0_f64;
    loop {
        let term = (-2.0 * j * j * lambda * lambda).exp();
        if term < 1e-12 {
            break;
        }
        sum += sign * term;
        sign = -sign;
        j += 1.0;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// True when the test rejects the same-distribution hypothesis at `alpha`.
pub fn detect_shift(r: &KsResult, alpha: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(r.p_value < alpha)
}

/// KS test between two spectra, each treated as a 1-D sample of its
/// intensity values.
///
/// Meant for normalized spectra; callers wanting the raw-intensity variant
/// run [`ks_two_sample`] on unnormalized values directly.
pub fn spectrum_shift(a: &Spectrum, b: &Spectrum) -> Result<KsResult> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    ks_two_sample(&a.intensities, &b.intensities)
}
