//! Implementations of the six subcommands.
//!
//! Seed discipline: every source of randomness is derived from the single
//! experiment seed by xor with a fixed per-stage constant, so any command is
//! reproducible from its flags alone. Timings are the one exception.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use specadapt_core::network::TrainConfig;
use specadapt_core::*;

use crate::config::ExperimentConfig;

const SEED_GEN_SOURCE: u64 = 0x11;
const SEED_GEN_SHIFTED: u64 = 0x55;
const SEED_PCA: u64 = 0x66;
const SEED_INIT: u64 = 0x77;
const SEED_TRAIN: u64 = 0x88;
const SEED_LLTM: u64 = 0x99;
const SEED_RETRAIN: u64 = 0xaa;
const SEED_SPLIT: u64 = 0xbb;

const PCA_MAX_ITER: usize = 5000;
const PCA_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ShiftArg {
    /// Source-domain spectra.
    None,
    /// The default shifted domain.
    Default,
}

pub fn cmd_gen(cfg: &ExperimentConfig, n: usize, shift: ShiftArg, out: &Path) -> Result<()> {
    cfg.validate()?;
    if n == 0 {
        bail!("refusing to generate an empty dataset (--n 0)");
    }
    let spec = default_spec_sized(cfg.seed, cfg.classes, cfg.dim)?;
    let (domain, gen_seed) = match shift {
        ShiftArg::None => (Domain::Source, cfg.seed ^ SEED_GEN_SOURCE),
        ShiftArg::Default => (
            Domain::Shifted(ShiftSpec::default()),
            cfg.seed ^ SEED_GEN_SHIFTED,
        ),
    };
    let set = generate(&spec, n, &domain, gen_seed)?;
    save_spectra(&set, out)?;
    println!(
        "wrote {} spectra ({} classes, {} wavelength bins) to {}",
        set.len(),
        set.n_classes,
        set.dim,
        out.display()
    );
    Ok(())
}

/// Training data as configured: loaded from `data`, else synthetic source
/// spectra regenerated from the experiment seed.
fn training_data(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<SpectraSet> {
    match data.or(cfg.data.as_deref()) {
        Some(path) => load_spectra_with_classes(path, cfg.classes)
            .with_context(|| format!("loading training data {}", path.display())),
        None => {
            let spec = default_spec_sized(cfg.seed, cfg.classes, cfg.dim)?;
            Ok(generate(
                &spec,
                cfg.i,
                &Domain::Source,
                cfg.seed ^ SEED_GEN_SOURCE,
            )?)
        }
    }
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
    val_fraction: f64,
    out: &Path,
) -> Result<()> {
    cfg.validate()?;
    if !(0.0..0.5).contains(&val_fraction) {
        bail!("validation fraction must lie in [0, 0.5), got {val_fraction}");
    }

    let raw = training_data(cfg, data)?;
    let normalized = normalize_set(&raw)?;
    let (train, validation) = if val_fraction > 0.0 {
        let parts = split(
            &normalized,
            &[1.0 - val_fraction, val_fraction],
            cfg.seed ^ SEED_SPLIT,
        )?;
        let mut it = parts.into_iter();
        (it.next().unwrap(), it.next().unwrap())
    } else {
        (normalized.clone(), normalized.clone())
    };
    if train.is_empty() || validation.is_empty() {
        bail!(
            "dataset of {} spectra is too small to split for validation",
            normalized.len()
        );
    }

    let k = cfg.reduction_k(train.len());
    let pca = fit_pca(&train, k, PCA_MAX_ITER, PCA_TOL, cfg.seed ^ SEED_PCA)?;
    let train_reduced = transform_set(&pca, &train)?;
    let val_reduced = transform_set(&pca, &validation)?;

    let model = init_model(k, cfg.hidden, cfg.classes, cfg.seed ^ SEED_INIT)?;
    let net_cfg = TrainConfig {
        seed: cfg.seed ^ SEED_TRAIN,
        ..cfg.network.clone()
    };
    let (model, _) = train_supervised(model, &train_reduced, &net_cfg)?;

    let train_acc = evaluate_accuracy(&model, &train_reduced)?;
    let val_acc = evaluate_accuracy(&model, &val_reduced)?;
    println!(
        "train accuracy {train_acc:.4} ({} spectra)",
        train_reduced.len()
    );
    println!(
        "validation accuracy {val_acc:.4} ({} spectra)",
        val_reduced.len()
    );

    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta.insert("k".to_string(), k.to_string());
    meta.insert("classes".to_string(), cfg.classes.to_string());
    meta.insert("epochs".to_string(), net_cfg.epochs.to_string());
    let checkpoint = Checkpoint::new(pca, model, meta)?;
    save_checkpoint(&checkpoint, out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn load_reduced_stream(checkpoint: &Checkpoint, path: &Path, classes: usize) -> Result<SpectraSet> {
    let raw = load_spectra_with_classes(path, classes)
        .with_context(|| format!("loading stream {}", path.display()))?;
    let normalized = normalize_set(&raw)?;
    Ok(transform_set(&checkpoint.reduction, &normalized)?)
}

fn build_reduced_lltm(
    cfg: &ExperimentConfig,
    checkpoint: &Checkpoint,
    train: Option<&Path>,
) -> Result<Lltm> {
    let raw = training_data(cfg, train)?;
    let reduced = transform_set(&checkpoint.reduction, &normalize_set(&raw)?)?;
    Ok(build_lltm(
        &reduced,
        cfg.lltm_fraction(),
        cfg.seed ^ SEED_LLTM,
    )?)
}

pub fn cmd_stream(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    stream_path: &Path,
    train: Option<&Path>,
    adapt: bool,
    out: Option<&Path>,
) -> Result<()> {
    cfg.validate()?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let stream = load_reduced_stream(&checkpoint, stream_path, cfg.classes)?;
    let lltm = build_reduced_lltm(cfg, &checkpoint, train)?;

    let stream_cfg = StreamConfig {
        chunk_size: cfg.chunk_size,
        n_chunks: cfg.n_chunks,
        ustm_capacity: cfg.u,
        adapt,
        retrain: TrainConfig {
            seed: cfg.seed ^ SEED_RETRAIN,
            ..cfg.retrain.clone()
        },
        ..StreamConfig::default()
    };
    let (report, _) = prequential_run(checkpoint.network.clone(), &stream, &lltm, &stream_cfg)?;

    for r in &report.records {
        println!(
            "chunk {:2}: accuracy {:.4} ({} samples)",
            r.chunk, r.accuracy, r.n
        );
    }
    println!(
        "average prequential accuracy {:.4}",
        report.average_accuracy
    );
    if let Some(path) = out {
        save_report(&report, path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

pub fn cmd_compare(report_a: &Path, report_b: &Path, out: Option<&Path>) -> Result<()> {
    let a = load_report(report_a)?;
    let b = load_report(report_b)?;
    let comparison = compare_reports(&a, &b)?;

    let mut csv = String::from("chunk,acc_a,acc_b,delta\n");
    for (idx, delta) in comparison.per_chunk_delta.iter().enumerate() {
        let (ra, rb) = (&a.records[idx], &b.records[idx]);
        println!(
            "chunk {:2}: {:.4} vs {:.4}  delta {:+.4}",
            ra.chunk, ra.accuracy, rb.accuracy, delta
        );
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            ra.chunk, ra.accuracy, rb.accuracy, delta
        ));
    }
    println!("average delta {:+.4}", comparison.average_delta);
    if let Some(path) = out {
        std::fs::write(path, csv)?;
        println!("comparison written to {}", path.display());
    }
    Ok(())
}

fn mean_stddev(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn print_timing(label: &str, samples: &[f64]) {
    let (mean, stddev) = mean_stddev(samples);
    match stddev {
        Some(sd) => println!(
            "{label}: mean {mean:.6} s ± {sd:.6} s over {} repeats",
            samples.len()
        ),
        None => println!("{label}: {mean:.6} s (single measurement)"),
    }
}

pub fn cmd_bench(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    stream_path: &Path,
    train: Option<&Path>,
    repeat: usize,
    inference_only: bool,
) -> Result<()> {
    cfg.validate()?;
    if repeat == 0 {
        bail!("--repeat must be positive");
    }
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let stream = load_reduced_stream(&checkpoint, stream_path, cfg.classes)?;
    if stream.len() < cfg.chunk_size {
        bail!(
            "stream holds {} samples but one chunk needs {}",
            stream.len(),
            cfg.chunk_size
        );
    }
    let chunk = &stream.spectra[..cfg.chunk_size];

    let mut inference = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let started = Instant::now();
        for s in chunk {
            predict(&checkpoint.network, &s.intensities)?;
        }
        inference.push(started.elapsed().as_secs_f64());
    }
    print_timing(
        &format!("inference over a {}-sample chunk", cfg.chunk_size),
        &inference,
    );

    if !inference_only {
        let lltm = build_reduced_lltm(cfg, &checkpoint, train)?;
        let mut ustm = Ustm::new(cfg.u, checkpoint.reduction.k())?;
        for s in chunk.iter().rev().take(cfg.u).rev() {
            ustm.push(s.intensities.clone())?;
        }
        let retrain_cfg = TrainConfig {
            seed: cfg.seed ^ SEED_RETRAIN,
            ..cfg.retrain.clone()
        };
        let mut retraining = Vec::with_capacity(repeat);
        for _ in 0..repeat {
            let started = Instant::now();
            retrain(checkpoint.network.clone(), &lltm, &ustm, &retrain_cfg)?;
            retraining.push(started.elapsed().as_secs_f64());
        }
        print_timing(
            &format!("retrain episode ({} epochs)", retrain_cfg.epochs),
            &retraining,
        );
    }
    Ok(())
}

pub fn cmd_drift(file_a: &Path, file_b: &Path, alpha: f64) -> Result<()> {
    let pooled = |path: &Path| -> Result<Vec<f64>> {
        // Labels play no part in the test, so any label value is accepted.
        let raw = load_spectra_with_classes(path, usize::MAX)
            .with_context(|| format!("loading {}", path.display()))?;
        let normalized = normalize_set(&raw)?;
        Ok(normalized
            .spectra
            .iter()
            .flat_map(|s| s.intensities.iter().copied())
            .collect())
    };
    let a = pooled(file_a)?;
    let b = pooled(file_b)?;
    let result = ks_two_sample(&a, &b)?;
    let shifted = detect_shift(&result, alpha)?;
    println!("ks statistic {:.6}", result.statistic);
    println!("p-value {:.6}", result.p_value);
    println!("verdict: {}", if shifted { "shift" } else { "no shift" });
    Ok(())
}

/// Resolve the shared --config/--seed/--data layering for a subcommand.
pub fn resolve_config(
    config_path: Option<&PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = match config_path {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
