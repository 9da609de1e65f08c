//! Drift-adaptive spectrum classification.
//!
//! The pipeline normalizes high-resolution spectra, reduces them with PCA,
//! and classifies them with a small MLP that carries a gradient-reversal
//! domain head. When the input distribution drifts, the model retrains
//! against two memories: a stratified subsample of the original training
//! data and a ring buffer of recent unlabeled spectra. The [`streaming`]
//! module evaluates that loop prequentially, [`drift`] provides the
//! Kolmogorov-Smirnov detector, [`synthgen`] produces controllable test
//! data, and [`model_io`] checkpoints the whole pipeline losslessly.
//!
//! All randomness flows through explicit `u64` seeds; equal seeds give
//! bit-identical models, streams, and reports.

pub mod adaptation;
pub mod dimred;
pub mod drift;
pub mod error;
pub mod model_io;
pub mod network;
pub mod spectra;
pub mod streaming;
pub mod synthgen;

pub use adaptation::{build_lltm, retrain, Lltm, RetrainStats, Ustm};
pub use dimred::{
    default_k, explained_variance, fit_pca, reconstruct, transform, transform_set, PcaModel,
};
pub use drift::{detect_shift, ks_two_sample, spectrum_shift, KsResult};
pub use error::{Error, Result};
pub use model_io::{load_checkpoint, save_checkpoint, Checkpoint, Normalization};
pub use network::{
    evaluate_accuracy, init_model, predict, train_supervised, LambdaRamp, MlpAdaptModel,
    TrainConfig,
};
pub use spectra::{
    load_spectra, load_spectra_with_classes, min_max_normalize, normalize_set, save_spectra, split,
    SpectraSet, Spectrum,
};
pub use streaming::{
    compare_reports, load_report, prequential_run, save_report, ChunkRecord, ReportComparison,
    StreamConfig, StreamReport, UstmFill,
};
pub use synthgen::{default_spec, default_spec_sized, generate, Domain, GeneratorSpec, ShiftSpec};
