//! `specadapt`: experiment runner around the spectral adaptation library.
//!
//! Subcommands cover the full workflow: `gen` synthesizes datasets, `train`
//! produces a checkpoint, `stream` runs the prequential protocol with or
//! without adaptation, `compare` diffs two run reports, `bench` times
//! inference and retraining on the host, and `drift` applies the KS check to
//! two datasets. Exit code 0 means the tool completed; analytical verdicts
//! never change it.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::ShiftArg;

#[derive(Parser)]
#[command(
    name = "specadapt",
    version,
    about = "Spectral drift-adaptation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; stage seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic spectra CSV.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of spectra to generate.
        #[arg(long)]
        n: usize,
        /// Domain to sample from.
        #[arg(long, value_enum, default_value = "none")]
        shift: ShiftArg,
        /// Number of classes.
        #[arg(long)]
        classes: Option<usize>,
        /// Wavelength bins per spectrum.
        #[arg(long)]
        dim: Option<usize>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the offline model and write a checkpoint.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Labeled training CSV; synthetic data is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Initial training size for synthetic data.
        #[arg(long)]
        i: Option<usize>,
        /// Reduction dimension.
        #[arg(long)]
        k: Option<usize>,
        /// Training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Fraction of the data held out for validation.
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the prequential protocol over a stream CSV.
    Stream {
        #[command(flatten)]
        common: CommonArgs,
        /// Stream CSV to evaluate on.
        stream: PathBuf,
        /// Checkpoint from `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled training CSV for the LLTM; regenerated when absent.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Retrain after each chunk; without this the model stays frozen.
        #[arg(long)]
        adapt: bool,
        /// LLTM size as a fraction of i, or an absolute count.
        #[arg(long)]
        l: Option<f64>,
        /// USTM capacity.
        #[arg(long)]
        u: Option<usize>,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        n_chunks: Option<usize>,
        #[arg(long)]
        retrain_epochs: Option<usize>,
        /// Report CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two stream reports chunk by chunk.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        /// Plot-ready CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time chunk inference and retraining on this host.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Stream CSV supplying the timed chunk.
        stream: PathBuf,
        /// Checkpoint from `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled training CSV for the LLTM; regenerated when absent.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Measurement repetitions.
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        /// Skip the retrain measurement.
        #[arg(long)]
        inference_only: bool,
        #[arg(long)]
        chunk_size: Option<usize>,
        #[arg(long)]
        u: Option<usize>,
        #[arg(long)]
        retrain_epochs: Option<usize>,
    },
    /// Two-sample KS shift check between two spectra CSVs.
    Drift {
        file_a: PathBuf,
        file_b: PathBuf,
        /// Significance level for the shift verdict.
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            common,
            n,
            shift,
            classes,
            dim,
            out,
        } => {
            let mut cfg = commands::resolve_config(common.config.as_ref(), common.seed)?;
            if let Some(c) = classes {
                cfg.classes = c;
            }
            if let Some(d) = dim {
                cfg.dim = d;
            }
            commands::cmd_gen(&cfg, n, shift, &out)
        }
        Command::Train {
            common,
            data,
            i,
            k,
            epochs,
            val_fraction,
            out,
        } => {
            let mut cfg = commands::resolve_config(common.config.as_ref(), common.seed)?;
            if let Some(v) = i {
                cfg.i = v;
            }
            if let Some(v) = k {
                cfg.k = Some(v);
            }
            if let Some(v) = epochs {
                cfg.network.epochs = v;
            }
            commands::cmd_train(&cfg, data.as_deref(), val_fraction, &out)
        }
        Command::Stream {
            common,
            stream,
            checkpoint,
            train,
            adapt,
            l,
            u,
            chunk_size,
            n_chunks,
            retrain_epochs,
            out,
        } => {
            let mut cfg = commands::resolve_config(common.config.as_ref(), common.seed)?;
            if let Some(v) = l {
                cfg.l = v;
            }
            if let Some(v) = u {
                cfg.u = v;
            }
            if let Some(v) = chunk_size {
                cfg.chunk_size = v;
            }
            if let Some(v) = n_chunks {
                cfg.n_chunks = v;
            }
            if let Some(v) = retrain_epochs {
                cfg.retrain.epochs = v;
            }
            commands::cmd_stream(
                &cfg,
                &checkpoint,
                &stream,
                train.as_deref(),
                adapt,
                out.as_deref(),
            )
        }
        Command::Compare {
            report_a,
            report_b,
            out,
        } => commands::cmd_compare(&report_a, &report_b, out.as_deref()),
        Command::Bench {
            common,
            stream,
            checkpoint,
            train,
            repeat,
            inference_only,
            chunk_size,
            u,
            retrain_epochs,
        } => {
            let mut cfg = commands::resolve_config(common.config.as_ref(), common.seed)?;
            if let Some(v) = chunk_size {
                cfg.chunk_size = v;
            }
            if let Some(v) = u {
                cfg.u = v;
            }
            if let Some(v) = retrain_epochs {
                cfg.retrain.epochs = v;
            }
            commands::cmd_bench(
                &cfg,
                &checkpoint,
                &stream,
                train.as_deref(),
                repeat,
                inference_only,
            )
        }
        Command::Drift {
            file_a,
            file_b,
            alpha,
        } => commands::cmd_drift(&file_a, &file_b, alpha),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
