//! Deterministic synthetic spectrum generator with controllable domain shift.
//!
//! Each class is a table of Gaussian emission lines over the wavelength axis;
//! a spectrum is the sum of its class's lines plus a baseline and Gaussian
//! noise. The shifted domain perturbs every spectrum independently: per-line
//! amplitude scaling, a baseline offset, extra noise, and line-position
//! jitter, so the target domain is a distribution rather than a fixed
//! transform of the source.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectra::{SpectraSet, Spectrum, DEFAULT_CLASSES};

/// Default wavelength-axis resolution.
pub const DEFAULT_DIM: usize = 1024;

const MIN_LINES: usize = 9;
const MAX_LINES: usize = 10;
/// Line centers keep this many bins clear of both axis ends.
const EDGE_MARGIN: usize = 16;
/// Every class carries these strong lines at the same positions and encodes
/// its identity mostly in their relative amplitudes; the remaining lines are
/// weak and sit at class-unique positions.
const STRONG_LINES: usize = 4;
const OVERLAP_RETRIES: usize = 1000;

/// Emission-line table for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTable {
    /// Line centers as bin positions, ascending.
    pub centers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub widths: Vec<f64>,
}

/// Full description of the synthetic source domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub lines: Vec<LineTable>,
    pub baseline: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if self.lines.len() != self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "{} line tables for {} classes",
                self.lines.len(),
                self.n_classes
            )));
        }
        for (c, t) in self.lines.iter().enumerate() {
            if t.centers.is_empty()
                || t.centers.len() != t.amplitudes.len()
                || t.centers.len() != t.widths.len()
            {
                return Err(Error::InvalidArgument(format!(
                    "class {c} line table is empty or ragged"
                )));
            }
            if t.centers
                .iter()
                .any(|&p| !(0.0..self.dim as f64).contains(&p))
            {
                return Err(Error::InvalidArgument(format!(
                    "class {c} has a line center outside [0, {})",
                    self.dim
                )));
            }
            if t.amplitudes.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "class {c} has a nonpositive amplitude"
                )));
            }
            if t.widths.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "class {c} has a nonpositive width"
                )));
            }
        }
        if !(self.baseline >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "baseline and noise sigma must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-spectrum perturbations defining the shifted domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    /// Multiplicative per-line amplitude jitter interval.
    pub amplitude_scale_range: (f64, f64),
    pub baseline_offset: f64,
    pub extra_noise_sigma: f64,
    /// Maximum line-position shift in bins, either direction.
    pub center_jitter: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            amplitude_scale_range: (0.5, 1.5),
            baseline_offset: 0.1,
            extra_noise_sigma: 0.05,
            center_jitter: 3.0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude_scale_range;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "amplitude scale range ({lo}, {hi}) is not well ordered"
            )));
        }
        if !(self.baseline_offset >= 0.0
            && self.extra_noise_sigma >= 0.0
            && self.center_jitter >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "shift magnitudes must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Which distribution to draw from.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Source,
    Shifted(ShiftSpec),
}

/// Standard 12-class source domain at the default resolution.
pub fn default_spec(seed: u64) -> Result<GeneratorSpec> {
    default_spec_sized(seed, DEFAULT_CLASSES, DEFAULT_DIM)
}

/// Source domain with explicit class count and resolution.
///
/// Every class carries the same few strong lines and encodes its identity in
/// their relative amplitudes, plus several weak lines at class-unique
/// positions. Any two classes share fewer than half of the smaller class's
/// positions, resampling a bounded number of times when unique positions
/// collide.
pub fn default_spec_sized(seed: u64, n_classes: usize, dim: usize) -> Result<GeneratorSpec> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if dim < 64 {
        return Err(Error::InvalidArgument(format!(
            "dim must be at least 64, got {dim}"
        )));
    }
    let span = dim - 2 * EDGE_MARGIN;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strong: Vec<usize> = rand::seq::index::sample(&mut rng, span, STRONG_LINES)
        .iter()
        .map(|p| p + EDGE_MARGIN)
        .collect();
    strong.sort_unstable();

    let mut tables: Vec<LineTable> = Vec::with_capacity(n_classes);
    let mut position_sets: Vec<Vec<usize>> = Vec::with_capacity(n_classes);

    for _ in 0..n_classes {
        let mut accepted = None;
        let mut worst_overlap = 0.0_f64;
        for _ in 0..OVERLAP_RETRIES {
            let n_lines = rng.random_range(MIN_LINES..=MAX_LINES);
            let unique: Vec<usize> =
                rand::seq::index::sample(&mut rng, span, n_lines - STRONG_LINES)
                    .iter()
                    .map(|p| p + EDGE_MARGIN)
                    .collect();
            if unique.iter().any(|p| strong.binary_search(p).is_ok()) {
                continue;
            }
            let mut lines: Vec<(usize, f64, f64)> = Vec::with_capacity(n_lines);
            for &p in &strong {
                lines.push((p, rng.random_range(1.0..2.0), rng.random_range(1.5..3.5)));
            }
            for &p in &unique {
                lines.push((p, rng.random_range(0.25..0.5), rng.random_range(1.5..3.5)));
            }
            lines.sort_unstable_by_key(|&(p, _, _)| p);
            let positions: Vec<usize> = lines.iter().map(|&(p, _, _)| p).collect();
            let overlap = position_sets
                .iter()
                .map(|other| overlap_fraction(&positions, other))
                .fold(0.0, f64::max);
            if overlap < 0.5 {
                accepted = Some(lines);
                break;
            }
            worst_overlap = worst_overlap.max(overlap);
        }
        let lines = accepted.ok_or(Error::NoConvergence {
            max_iter: OVERLAP_RETRIES,
            residual: worst_overlap,
        })?;
        tables.push(LineTable {
            centers: lines.iter().map(|&(p, _, _)| p as f64).collect(),
            amplitudes: lines.iter().map(|&(_, a, _)| a).collect(),
            widths: lines.iter().map(|&(_, _, w)| w).collect(),
        });
        position_sets.push(lines.into_iter().map(|(p, _, _)| p).collect());
    }

    Ok(GeneratorSpec {
        n_classes,
        dim,
        lines: tables,
        baseline: 0.05,
        noise_sigma: 0.05,
        seed,
    })
}

/// Shared positions as a fraction of the smaller class's line count.
fn overlap_fraction(a: &[usize], b: &[usize]) -> f64 {
    let shared = a.iter().filter(|p| b.binary_search(p).is_ok()).count();
    shared as f64 / a.len().min(b.len()) as f64
}

/// Draw `n` labeled spectra, labels round-robin over classes.
pub fn generate(spec: &GeneratorSpec, n: usize, domain: &Domain, seed: u64) -> Result<SpectraSet> {
    spec.validate()?;
    if let Domain::Shifted(s) = domain {
        s.validate()?;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one spectrum".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = SpectraSet::new(spec.dim, spec.n_classes)?;
    for i in 0..n {
        let class = i % spec.n_classes;
        let table = &spec.lines[class];

        let base_level = match domain {
            Domain::Source => spec.baseline,
            Domain::Shifted(s) => spec.baseline + s.baseline_offset,
        };
        let mut x = vec![base_level; spec.dim];

        for line in 0..table.centers.len() {
            let (amp, center) = match domain {
                Domain::Source => (table.amplitudes[line], table.centers[line]),
                Domain::Shifted(s) => {
                    let (lo, hi) = s.amplitude_scale_range;
                    let scale = if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    };
                    let jitter = if s.center_jitter > 0.0 {
                        rng.random_range(-s.center_jitter..s.center_jitter)
                    } else {
                        0.0
                    };
                    (table.amplitudes[line] * scale, table.centers[line] + jitter)
                }
            };
            let width = table.widths[line];
            let denom = 2.0 * width * width;
            for (j, v) in x.iter_mut().enumerate() {
                let d = j as f64 - center;
                *v += amp * (-d * d / denom).exp();
            }
        }

        if spec.noise_sigma > 0.0 {
            for v in x.iter_mut() {
                *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if let Domain::Shifted(s) = domain {
            if s.extra_noise_sigma > 0.0 {
                for v in x.iter_mut() {
                    *v += s.extra_noise_sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }

        set.push(Spectrum::new(x, Some(class)))?;
    }
    Ok(set)
}
