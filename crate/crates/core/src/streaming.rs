//! Prequential evaluation harness: test-then-train over a chunked stream.
//!
//! Each chunk is scored with the model as it stood before the chunk arrived;
//! only then may the harness refill the USTM from the chunk and retrain.
//! Stream labels are used for scoring alone and never reach training, so an
//! adaptive run's parameter trajectory is independent of them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{retrain, Lltm, Ustm, DEFAULT_RETRAIN_EPOCHS, DEFAULT_USTM_CAPACITY};
use crate::error::{Error, Result};
use crate::network::{evaluate_accuracy, MlpAdaptModel, TrainConfig};
use crate::spectra::SpectraSet;

/// How the USTM is refilled from each chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UstmFill {
    /// The chunk's most recent samples, in arrival order.
    Tail,
    /// A uniform without-replacement draw from the chunk, in arrival order.
    Uniform,
}

/// Harness configuration for one prequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub ustm_capacity: usize,
    /// When false the model is never retrained: the non-adapting baseline.
    pub adapt: bool,
    /// Retrain hyperparameters; the seed is advanced per chunk so a longer
    /// run is a bit-exact extension of a shorter one.
    pub retrain: TrainConfig,
    pub ustm_fill: UstmFill,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            chunk_size: 2500,
            n_chunks: 10,
            ustm_capacity: DEFAULT_USTM_CAPACITY,
            adapt: true,
            retrain: TrainConfig {
                epochs: DEFAULT_RETRAIN_EPOCHS,
                ..Default::default()
            },
            ustm_fill: UstmFill::Tail,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.n_chunks == 0 {
            return Err(Error::InvalidArgument(
                "chunk size and chunk count must be positive".into(),
            ));
        }
        if self.ustm_capacity == 0 {
            return Err(Error::InvalidArgument(
                "USTM capacity must be positive".into(),
            ));
        }
        self.retrain.validate()
    }
}

/// One scored chunk; `chunk` is 1-based in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub chunk: usize,
    pub n: usize,
    pub accuracy: f64,
    pub retrain_seconds: f64,
    pub inference_seconds: f64,
}

/// Full prequential run outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub records: Vec<ChunkRecord>,
    pub average_accuracy: f64,
}

impl StreamReport {
    pub fn new(records: Vec<ChunkRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument(
                "report needs at least one chunk".into(),
            ));
        }
        let average_accuracy =
            records.iter().map(|r| r.accuracy).sum::<f64>() / records.len() as f64;
        Ok(StreamReport {
            records,
            average_accuracy,
        })
    }
}

/// Per-chunk and average accuracy differences between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportComparison {
    pub per_chunk_delta: Vec<f64>,
    pub average_delta: f64,
}

/// Run the prequential protocol and return the report plus the final model.
///
/// Per chunk: score with the current model, then (adaptive runs only) refill
/// the USTM from the chunk with labels stripped and retrain from LLTM + USTM.
/// Baseline runs leave the model untouched.
pub fn prequential_run(
    model: MlpAdaptModel,
    stream: &SpectraSet,
    lltm: &Lltm,
    cfg: &StreamConfig,
) -> Result<(StreamReport, MlpAdaptModel)> {
    cfg.validate()?;
    let needed = cfg.chunk_size * cfg.n_chunks;
    if stream.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "stream holds {} samples but {} chunks of {} need {needed}",
            stream.len(),
            cfg.n_chunks,
            cfg.chunk_size
        )));
    }
    if stream.spectra.iter().any(|s| s.label.is_none()) {
        return Err(Error::InvalidArgument(
            "stream must be fully labeled for scoring".into(),
        ));
    }

    let mut model = model;
    let mut ustm = Ustm::new(cfg.ustm_capacity, stream.dim)?;
    let mut records = Vec::with_capacity(cfg.n_chunks);

    for chunk_idx in 0..cfg.n_chunks {
        let lo = chunk_idx * cfg.chunk_size;
        let hi = lo + cfg.chunk_size;
        let mut chunk = SpectraSet::new(stream.dim, stream.n_classes)?;
        chunk.spectra.extend_from_slice(&stream.spectra[lo..hi]);

        let started = Instant::now();
        let accuracy = evaluate_accuracy(&model, &chunk)?;
        let inference_seconds = started.elapsed().as_secs_f64();

        let mut retrain_seconds = 0.0;
        if cfg.adapt {
            fill_ustm(&mut ustm, &chunk, cfg, chunk_idx)?;
            let mut chunk_cfg = cfg.retrain.clone();
            chunk_cfg.seed = cfg.retrain.seed.wrapping_add(chunk_idx as u64);
            let (updated, stats) = retrain(model, lltm, &ustm, &chunk_cfg)?;
            model = updated;
            retrain_seconds = stats.wall_seconds;
        }

        records.push(ChunkRecord {
            chunk: chunk_idx + 1,
            n: chunk.len(),
            accuracy,
            retrain_seconds,
            inference_seconds,
        });
    }

    Ok((StreamReport::new(records)?, model))
}

fn fill_ustm(
    ustm: &mut Ustm,
    chunk: &SpectraSet,
    cfg: &StreamConfig,
    chunk_idx: usize,
) -> Result<()> {
    let take = cfg.ustm_capacity.min(chunk.len());
    match cfg.ustm_fill {
        UstmFill::Tail => {
            for s in &chunk.spectra[chunk.len() - take..] {
                ustm.push(s.intensities.clone())?;
            }
        }
        UstmFill::Uniform => {
            let seed = cfg.retrain.seed.wrapping_add(chunk_idx as u64) ^ 0x9e37_79b9_7f4a_7c15;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> =
                rand::seq::index::sample(&mut rng, chunk.len(), take).into_vec();
            picked.sort_unstable();
            for i in picked {
                ustm.push(chunk.spectra[i].intensities.clone())?;
            }
        }
    }
    Ok(())
}

/// Chunk-wise accuracy deltas, adaptive minus baseline.
pub fn compare_reports(
    adaptive: &StreamReport,
    baseline: &StreamReport,
) -> Result<ReportComparison> {
    if adaptive.records.len() != baseline.records.len() {
        return Err(Error::InvalidArgument(format!(
            "chunk counts differ: {} vs {}",
            adaptive.records.len(),
            baseline.records.len()
        )));
    }
    let per_chunk_delta: Vec<f64> = adaptive
        .records
        .iter()
        .zip(&baseline.records)
        .map(|(a, b)| a.accuracy - b.accuracy)
        .collect();
    let average_delta = per_chunk_delta.iter().sum::<f64>() / per_chunk_delta.len() as f64;
    Ok(ReportComparison {
        per_chunk_delta,
        average_delta,
    })
}

/// Report CSV header.
pub const REPORT_HEADER: &str = "chunk,n,accuracy,retrain_seconds,inference_seconds";

/// Write the report CSV: one row per chunk, times at millisecond resolution,
/// then the average-accuracy footer.
pub fn save_report<P: AsRef<Path>>(report: &StreamReport, path: P) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{REPORT_HEADER}")?;
    for r in &report.records {
        writeln!(
            out,
            "{},{},{:.6},{:.3},{:.3}",
            r.chunk, r.n, r.accuracy, r.retrain_seconds, r.inference_seconds
        )?;
    }
    writeln!(out, "# average_accuracy={:.6}", report.average_accuracy)?;
    out.flush()?;
    Ok(())
}

/// Read a report CSV, recomputing the average from the rows and checking it
/// against the footer.
pub fn load_report<P: AsRef<Path>>(path: P) -> Result<StreamReport> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse {
        row: 0,
        msg: "empty report file".into(),
    })?;
    if header.trim() != REPORT_HEADER {
        return Err(Error::Parse {
            row: 0,
            msg: format!("unexpected header {header:?}"),
        });
    }

    let mut records = Vec::new();
    let mut footer_average = None;
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# average_accuracy=") {
            let value: f64 = rest.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("unreadable footer average {rest:?}"),
            })?;
            footer_average = Some(value);
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad {what} {s:?}"),
            })
        };
        let record = ChunkRecord {
            chunk: fields[0].trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad chunk index {:?}", fields[0]),
            })?,
            n: fields[1].trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad sample count {:?}", fields[1]),
            })?,
            accuracy: parse_f64(fields[2], "accuracy")?,
            retrain_seconds: parse_f64(fields[3], "retrain time")?,
            inference_seconds: parse_f64(fields[4], "inference time")?,
        };
        if !(0.0..=1.0).contains(&record.accuracy) {
            return Err(Error::Parse {
                row,
                msg: format!("accuracy {} outside [0,1]", record.accuracy),
            });
        }
        records.push(record);
    }

    let report = StreamReport::new(records)?;
    match footer_average {
        Some(avg) if (avg - report.average_accuracy).abs() > 1e-5 => Err(Error::Parse {
            row: report.records.len() + 1,
            msg: format!(
                "footer average {avg} disagrees with row mean {}",
                report.average_accuracy
            ),
        }),
        Some(_) => Ok(report),
        None => Err(Error::Parse {
            row: 0,
            msg: "missing average_accuracy footer".into(),
        }),
    }
}
