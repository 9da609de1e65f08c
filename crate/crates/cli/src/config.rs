//! Experiment configuration: defaults, config-file loading, flag overrides.
//!
//! Precedence is defaults < config file < command-line flags. The file format
//! is flat `key = value` lines; `#` starts a comment and unknown keys are
//! rejected with their line number.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use specadapt_core::adaptation::{DEFAULT_RETRAIN_EPOCHS, DEFAULT_USTM_CAPACITY};
use specadapt_core::default_k;
use specadapt_core::network::{TrainConfig, DEFAULT_HIDDEN};

/// Full description of one experiment, named after the i/L/U memory sizes.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Initial offline training size.
    pub i: usize,
    /// LLTM size: a fraction in (0, 1] or an absolute count in (1, i].
    pub l: f64,
    /// USTM capacity.
    pub u: usize,
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    /// Reduction target dimension; derived from the data size when absent.
    pub k: Option<usize>,
    pub hidden: usize,
    /// Labeled training CSV; a synthetic set is generated when absent.
    pub data: Option<PathBuf>,
    pub network: TrainConfig,
    pub retrain: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            i: 2000,
            l: 1.0,
            u: DEFAULT_USTM_CAPACITY,
            chunk_size: 2500,
            n_chunks: 10,
            seed: 1,
            classes: specadapt_core::spectra::DEFAULT_CLASSES,
            dim: specadapt_core::synthgen::DEFAULT_DIM,
            k: None,
            hidden: DEFAULT_HIDDEN,
            data: None,
            network: TrainConfig::default(),
            retrain: TrainConfig {
                epochs: DEFAULT_RETRAIN_EPOCHS,
                ..TrainConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", idx + 1))?;
            self.apply(key.trim(), value.trim())
                .with_context(|| format!("{} line {}", path.display(), idx + 1))?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| anyhow::anyhow!("invalid value {value:?} for {key}"))
        }
        match key {
            "i" => self.i = parse(key, value)?,
            "l" => self.l = parse(key, value)?,
            "u" => self.u = parse(key, value)?,
            "chunk_size" => self.chunk_size = parse(key, value)?,
            "n_chunks" => self.n_chunks = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "k" => self.k = Some(parse(key, value)?),
            "hidden" => self.hidden = parse(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "epochs" => self.network.epochs = parse(key, value)?,
            "retrain_epochs" => self.retrain.epochs = parse(key, value)?,
            "learning_rate" => {
                let v: f64 = parse(key, value)?;
                self.network.learning_rate = v;
                self.retrain.learning_rate = v;
            }
            "momentum" => {
                let v: f64 = parse(key, value)?;
                self.network.momentum = v;
                self.retrain.momentum = v;
            }
            "batch_size" => {
                let v: usize = parse(key, value)?;
                self.network.batch_size = v;
                self.retrain.batch_size = v;
            }
            "dropout_rate" => {
                let v: f64 = parse(key, value)?;
                self.network.dropout_rate = v;
                self.retrain.dropout_rate = v;
            }
            "grl_gamma" => {
                let v: f64 = parse(key, value)?;
                self.network.grl_gamma = v;
                self.retrain.grl_gamma = v;
            }
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.i == 0 {
            bail!("initial training size i must be positive");
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            bail!("L must be positive, got {}", self.l);
        }
        if self.l > 1.0 && (self.l.fract() != 0.0 || self.l > self.i as f64) {
            bail!(
                "absolute L must be an integer no larger than i = {}, got {}",
                self.i,
                self.l
            );
        }
        if self.u == 0 {
            bail!("USTM capacity u must be positive");
        }
        if self.chunk_size == 0 || self.n_chunks == 0 {
            bail!("chunk_size and n_chunks must be positive");
        }
        if self.classes < 2 {
            bail!("need at least 2 classes, got {}", self.classes);
        }
        if self.hidden == 0 {
            bail!("hidden width must be positive");
        }
        self.network.validate()?;
        self.retrain.validate()?;
        Ok(())
    }

    /// LLTM fraction of the training set, folding absolute counts down.
    pub fn lltm_fraction(&self) -> f64 {
        if self.l <= 1.0 {
            self.l
        } else {
            self.l / self.i as f64
        }
    }

    /// Reduction dimension for a training set of `n` spectra.
    pub fn reduction_k(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| default_k(n, self.dim))
    }
}
