//! Memory stores and on-device retraining.
//!
//! The labeled long-term memory (LLTM) is a frozen stratified subsample of
//! the initial training data; the unlabeled short-term memory (USTM) is a
//! small ring buffer of recently seen feature vectors. Retraining warm-starts
//! from the current weights and trains label loss on LLTM plus domain loss on
//! both memories under pseudo-labels 0 (LLTM) and 1 (USTM).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{labeled_pairs, run_training, MlpAdaptModel, TrainConfig};
use crate::spectra::SpectraSet;

/// Default USTM capacity; 50 is the smaller standard option.
pub const DEFAULT_USTM_CAPACITY: usize = 100;

/// Default number of retraining epochs per invocation.
pub const DEFAULT_RETRAIN_EPOCHS: usize = 30;

/// Frozen labeled memory of source-domain feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Lltm {
    samples: Vec<(Vec<f64>, usize)>,
}

impl Lltm {
    /// Wrap an explicit sample list; must be nonempty.
    pub fn from_samples(samples: Vec<(Vec<f64>, usize)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("LLTM must be nonempty".into()));
        }
        let dim = samples[0].0.len();
        if samples.iter().any(|(x, _)| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: 0,
            });
        }
        Ok(Lltm { samples })
    }

    pub fn samples(&self) -> &[(Vec<f64>, usize)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; construction rejects empty memories.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].0.len()
    }
}

/// Ring buffer of recent unlabeled feature vectors, oldest evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ustm {
    items: Vec<Vec<f64>>,
    capacity: usize,
    dim: usize,
}

impl Ustm {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "USTM capacity must be positive".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "USTM dimension must be positive".into(),
            ));
        }
        Ok(Ustm {
            items: Vec::with_capacity(capacity),
            capacity,
            dim,
        })
    }

    /// Append a vector, evicting the oldest entry when full.
    pub fn push(&mut self, x: Vec<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.items.len() == self.capacity {
            self.items.remove(0);
        }
        self.items.push(x);
        Ok(())
    }

    /// Contents in arrival order, oldest first.
    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Losses and timing of one retraining invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainStats {
    pub label_loss_trace: Vec<f64>,
    pub domain_loss_trace: Vec<f64>,
    pub wall_seconds: f64,
}

/// Stratified-by-class subsample of `round(n · fraction)` labeled vectors.
///
/// Per-class quotas follow largest-remainder rounding of the class counts;
/// which members fill each quota is decided by a seeded shuffle. Selected
/// samples keep their original order, so fraction 1.0 reproduces the input
/// exactly.
pub fn build_lltm(training_set: &SpectraSet, fraction: f64, seed: u64) -> Result<Lltm> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0,1], got {fraction}"
        )));
    }
    let pairs = labeled_pairs(training_set)?;
    let n = pairs.len();
    let target = (n as f64 * fraction).round() as usize;
    if target == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} samples rounds to an empty memory"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); training_set.n_classes];
    for (i, &(_, y)) in pairs.iter().enumerate() {
        by_class[y].push(i);
    }

    let quotas: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * fraction).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = take.iter().sum();
    let mut order: Vec<usize> = (0..by_class.len())
        .filter(|&c| !by_class[c].is_empty())
        .collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..target - assigned {
        take[order[i % order.len()]] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(target);
    for (class_members, &quota) in by_class.iter().zip(&take) {
        let mut members = class_members.clone();
        members.shuffle(&mut rng);
        selected.extend_from_slice(&members[..quota]);
    }
    selected.sort_unstable();

    Lltm::from_samples(selected.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Warm-start semi-supervised retraining from the two memories.
///
/// An empty USTM is a no-op: the model comes back unchanged with empty
/// traces. Otherwise each epoch runs balanced source/target mini-batches
/// with the GRL multiplier following the configured ramp.
pub fn retrain(
    model: MlpAdaptModel,
    lltm: &Lltm,
    ustm: &Ustm,
    cfg: &TrainConfig,
) -> Result<(MlpAdaptModel, RetrainStats)> {
    if ustm.is_empty() {
        return Ok((
            model,
            RetrainStats {
                label_loss_trace: Vec::new(),
                domain_loss_trace: Vec::new(),
                wall_seconds: 0.0,
            },
        ));
    }
    let started = Instant::now();
    let (model, label_loss_trace, domain_loss_trace) =
        run_training(model, lltm.samples(), Some(ustm.items()), cfg)?;
    let wall_seconds = started.elapsed().as_secs_f64();
    Ok((
        model,
        RetrainStats {
            label_loss_trace,
            domain_loss_trace,
            wall_seconds,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_model, train_supervised, LambdaRamp};
    use crate::spectra::Spectrum;
    use rand::Rng;

    fn labeled_set(n: usize, dim: usize, n_classes: usize) -> SpectraSet {
        let mut set = SpectraSet::new(dim, n_classes).unwrap();
        for i in 0..n {
            let x: Vec<f64> = (0..dim).map(|j| (i * 31 + j * 7) as f64 * 0.01).collect();
            set.push(Spectrum::new(x, Some(i % n_classes))).unwrap();
        }
        set
    }

    #[test]
    fn lltm_fractions_match_expected_sizes() {
        let set = labeled_set(18_000, 3, 12);
        assert_eq!(build_lltm(&set, 0.8, 1).unwrap().len(), 14_400);
        assert_eq!(build_lltm(&set, 0.5, 1).unwrap().len(), 9_000);
        assert_eq!(build_lltm(&set, 0.25, 1).unwrap().len(), 4_500);
    }

    #[test]
    fn lltm_full_fraction_preserves_input_order() {
        let set = labeled_set(60, 2, 6);
        let lltm = build_lltm(&set, 1.0, 9).unwrap();
        assert_eq!(lltm.len(), 60);
        for (sample, spectrum) in lltm.samples().iter().zip(&set.spectra) {
            assert_eq!(sample.0, spectrum.intensities);
            assert_eq!(Some(sample.1), spectrum.label);
        }
    }

    #[test]
    fn lltm_is_stratified_by_class() {
        let set = labeled_set(1_200, 2, 12);
        let lltm = build_lltm(&set, 0.25, 4).unwrap();
        let mut counts = [0usize; 12];
        for &(_, y) in lltm.samples() {
            counts[y] += 1;
        }
        assert!(
            counts.iter().all(|&c| c == 25),
            "per-class counts {counts:?}"
        );
    }

    #[test]
    fn lltm_is_seed_deterministic() {
        let set = labeled_set(600, 2, 12);
        let a = build_lltm(&set, 0.5, 7).unwrap();
        let b = build_lltm(&set, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = build_lltm(&set, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lltm_rejects_bad_fractions() {
        let set = labeled_set(100, 2, 4);
        assert!(build_lltm(&set, 0.0, 0).is_err());
        assert!(build_lltm(&set, 1.5, 0).is_err());
        let tiny = labeled_set(3, 2, 3);
        assert!(build_lltm(&tiny, 0.1, 0).is_err());
    }

    #[test]
    fn ustm_evicts_oldest_first() {
        let mut u = Ustm::new(2, 1).unwrap();
        u.push(vec![1.0]).unwrap();
        u.push(vec![2.0]).unwrap();
        u.push(vec![3.0]).unwrap();
        assert_eq!(u.items(), &[vec![2.0], vec![3.0]]);
    }

    #[test]
    fn ustm_push_into_empty() {
        let mut u = Ustm::new(5, 2).unwrap();
        assert!(u.is_empty());
        u.push(vec![0.1, 0.2]).unwrap();
        assert_eq!(u.len(), 1);
    }

    #[test]
    fn ustm_keeps_last_capacity_pushes_in_order() {
        let cap = 4;
        let mut u = Ustm::new(cap, 1).unwrap();
        for i in 0..cap + 5 {
            u.push(vec![i as f64]).unwrap();
        }
        assert_eq!(u.len(), cap);
        let expected: Vec<Vec<f64>> = (5..cap + 5).map(|i| vec![i as f64]).collect();
        assert_eq!(u.items(), expected.as_slice());
    }

    #[test]
    fn ustm_validates_dimensions_and_capacity() {
        assert!(Ustm::new(0, 3).is_err());
        let mut u = Ustm::new(2, 3).unwrap();
        assert!(u.push(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn retrain_with_empty_ustm_is_a_no_op() {
        let set = labeled_set(40, 4, 4);
        let lltm = build_lltm(&set, 1.0, 0).unwrap();
        let ustm = Ustm::new(10, 4).unwrap();
        let model = init_model(4, 8, 4, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let (out, stats) = retrain(model.clone(), &lltm, &ustm, &cfg).unwrap();
        assert_eq!(out, model);
        assert!(stats.label_loss_trace.is_empty());
        assert!(stats.domain_loss_trace.is_empty());
    }

    fn filled_ustm(dim: usize, n: usize, seed: u64) -> Ustm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Ustm::new(n, dim).unwrap();
        for _ in 0..n {
            u.push((0..dim).map(|_| rng.random::<f64>()).collect())
                .unwrap();
        }
        u
    }

    #[test]
    fn retrain_is_deterministic_and_traces_have_epoch_length() {
        let set = labeled_set(60, 4, 4);
        let lltm = build_lltm(&set, 1.0, 0).unwrap();
        let ustm = filled_ustm(4, 12, 3);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 16,
            seed: 5,
            ..Default::default()
        };
        let model = init_model(4, 8, 4, 1).unwrap();
        let (a, stats_a) = retrain(model.clone(), &lltm, &ustm, &cfg).unwrap();
        let (b, stats_b) = retrain(model, &lltm, &ustm, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats_a.label_loss_trace, stats_b.label_loss_trace);
        assert_eq!(stats_a.label_loss_trace.len(), 6);
        assert_eq!(stats_a.domain_loss_trace.len(), 6);
    }

    #[test]
    fn detached_retrain_equals_supervised_training() {
        let set = labeled_set(60, 4, 4);
        let lltm = build_lltm(&set, 1.0, 0).unwrap();
        let ustm = filled_ustm(4, 12, 3);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 16,
            seed: 11,
            lambda_ramp: LambdaRamp::Off,
            detach_domain: true,
            ..Default::default()
        };
        let model = init_model(4, 8, 4, 2).unwrap();
        let (adapted, _) = retrain(model.clone(), &lltm, &ustm, &cfg).unwrap();
        let (plain, _) = train_supervised(model, &set, &cfg).unwrap();
        assert_eq!(adapted, plain);
    }

    #[test]
    fn retrain_does_not_touch_memories() {
        let set = labeled_set(50, 4, 4);
        let lltm = build_lltm(&set, 0.5, 2).unwrap();
        let ustm = filled_ustm(4, 8, 9);
        let lltm_before = lltm.clone();
        let ustm_before = ustm.clone();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        };
        retrain(init_model(4, 8, 4, 0).unwrap(), &lltm, &ustm, &cfg).unwrap();
        assert_eq!(lltm, lltm_before);
        assert_eq!(ustm, ustm_before);
    }
}
