//! Spectrum data model, CSV ingestion, min-max normalization, and
//! deterministic dataset splitting.
//!
//! The CSV format is one spectrum per row: `label,(D intensities)` under a
//! header `label,w_0,...,w_{D-1}`. Label `-1` marks an unlabeled spectrum so
//! mixed labeled/unlabeled streams live in a single file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default number of mineral classes.
pub const DEFAULT_CLASSES: usize = 12;

/// A single spectrum: intensity per wavelength point, optionally labeled
/// with a class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub intensities: Vec<f64>,
    pub label: Option<usize>,
}

impl Spectrum {
    pub fn new(intensities: Vec<f64>, label: Option<usize>) -> Self {
        Spectrum { intensities, label }
    }

    pub fn dim(&self) -> usize {
        self.intensities.len()
    }
}

/// An ordered collection of spectra sharing one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraSet {
    pub spectra: Vec<Spectrum>,
    pub dim: usize,
    pub n_classes: usize,
    /// Wavelength axis in nm, informational only.
    pub wavelengths: Option<Vec<f64>>,
}

impl SpectraSet {
    /// Empty set with the given dimensionality and class count.
    pub fn new(dim: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_classes must be at least 2, got {n_classes}"
            )));
        }
        Ok(SpectraSet {
            spectra: Vec::new(),
            dim,
            n_classes,
            wavelengths: None,
        })
    }

    /// Append a spectrum, enforcing the shared dimension and label range.
    pub fn push(&mut self, s: Spectrum) -> Result<()> {
        if s.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: s.dim(),
            });
        }
        if let Some(label) = s.label {
            if label >= self.n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for {} classes",
                    self.n_classes
                )));
            }
        }
        self.spectra.push(s);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }
}

/// Load a spectra CSV with the default class count.
pub fn load_spectra<P: AsRef<Path>>(path: P) -> Result<SpectraSet> {
    load_spectra_with_classes(path, DEFAULT_CLASSES)
}

/// Load a spectra CSV, validating labels against `n_classes`.
///
/// The dimensionality is inferred from the header; row order is preserved.
pub fn load_spectra_with_classes<P: AsRef<Path>>(path: P, n_classes: usize) -> Result<SpectraSet> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Parse {
                row: 0,
                msg: "empty file, expected header".into(),
            })
        }
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first().map(|c| c.trim()) != Some("label") {
        return Err(Error::Parse {
            row: 0,
            msg: format!(
                "header must start with 'label', got {:?}",
                cols.first().unwrap_or(&"")
            ),
        });
    }
    let dim = cols.len() - 1;
    if dim == 0 {
        return Err(Error::Parse {
            row: 0,
            msg: "header declares no intensity columns".into(),
        });
    }

    let mut set = SpectraSet::new(dim, n_classes)?;
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("");
        let label_value: i64 = label_field.trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("label {label_field:?} is not an integer"),
        })?;
        let label = match label_value {
            -1 => None,
            v if v >= 0 && (v as usize) < n_classes => Some(v as usize),
            v => {
                return Err(Error::Parse {
                    row,
                    msg: format!("label {v} out of range for {n_classes} classes"),
                })
            }
        };

        let mut intensities = Vec::with_capacity(dim);
        for field in fields {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("intensity {field:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("non-finite intensity {value}"),
                });
            }
            intensities.push(value);
        }
        if intensities.len() != dim {
            return Err(Error::Parse {
                row,
                msg: format!(
                    "expected {dim} intensity values, found {}",
                    intensities.len()
                ),
            });
        }
        set.spectra.push(Spectrum::new(intensities, label));
    }
    Ok(set)
}

/// Write the set in the CSV format accepted by [`load_spectra`].
///
/// Intensities are written with Rust's shortest round-trip formatting, so a
/// save/load cycle reproduces every value exactly.
pub fn save_spectra<P: AsRef<Path>>(set: &SpectraSet, path: P) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "label")?;
    for i in 0..set.dim {
        write!(out, ",w_{i}")?;
    }
    out.write_all(b"\n")?;
    for s in &set.spectra {
        match s.label {
            Some(label) => write!(out, "{label}")?,
            None => write!(out, "-1")?,
        }
        for v in &s.intensities {
            write!(out, ",{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Min-max scale a spectrum's intensities to [0, 1] using its own range.
///
/// A constant spectrum maps to all zeros; the label is preserved.
pub fn min_max_normalize(s: &Spectrum) -> Result<Spectrum> {
    if s.intensities.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot normalize an empty spectrum".into(),
        ));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in &s.intensities {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("intensity {v}")));
        }
        min = min.min(v);
        max = max.max(v);
    }
    let range = max - min;
    let intensities = if range == 0.0 {
        vec![0.0; s.intensities.len()]
    } else {
        s.intensities.iter().map(|v| (v - min) / range).collect()
    };
    Ok(Spectrum {
        intensities,
        label: s.label,
    })
}

/// Normalize every spectrum in the set.
pub fn normalize_set(set: &SpectraSet) -> Result<SpectraSet> {
    let mut out = set.clone();
    for s in out.spectra.iter_mut() {
        *s = min_max_normalize(s)?;
    }
    Ok(out)
}

/// Deterministic shuffled partition of a set into parts of the given
/// proportions.
///
/// Sizes follow largest-remainder rounding, so each part's size differs from
/// `n * fraction` by less than one. The parts are disjoint and their union is
/// the input.
pub fn split(set: &SpectraSet, fractions: &[f64], seed: u64) -> Result<Vec<SpectraSet>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions given".into()));
    }
    for &f in fractions {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative or non-finite fraction {f}"
            )));
        }
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fractions sum to {total}, expected 1"
        )));
    }

    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let sizes = largest_remainder_sizes(n, fractions);
    let mut parts = Vec::with_capacity(fractions.len());
    let mut cursor = 0;
    for &size in &sizes {
        let mut part = SpectraSet::new(set.dim, set.n_classes)?;
        part.wavelengths = set.wavelengths.clone();
        for &idx in &order[cursor..cursor + size] {
            part.spectra.push(set.spectra[idx].clone());
        }
        cursor += size;
        parts.push(part);
    }
    Ok(parts)
}

/// Integer sizes for `n` items under the given proportions, largest-remainder
/// rounding, ties broken toward lower index.
pub(crate) fn largest_remainder_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        sizes[order[i % order.len()]] += 1;
    }
    sizes
}
