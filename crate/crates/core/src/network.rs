//! Two-hidden-layer MLP classifier with a gradient-reversal domain head.
//!
//! The shared trunk is input → 64 → 64 with ReLU and inverted dropout after
//! each hidden layer. The label head emits class logits; the domain head
//! branches off the second hidden layer through a gradient reversal step
//! (identity forward, times −λ backward) into one 64-unit hidden layer and a
//! 2-logit output. All passes are explicit; the optimizer is SGD with
//! momentum. Every randomized operation takes an explicit RNG or seed so
//! training runs are reproducible bit for bit.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectra::SpectraSet;

/// Default hidden width of both trunk layers and the domain hidden layer.
pub const DEFAULT_HIDDEN: usize = 64;

/// Default dropout probability after each trunk hidden layer.
pub const DEFAULT_DROPOUT: f64 = 0.25;

/// Fully connected layer, `out × in` weights plus one bias per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseLayer {
            weights: vec![vec![0.0; in_dim]; out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn he_uniform<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weights = (0..out_dim)
            .map(|_| {
                (0..in_dim)
                    .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
                    .collect()
            })
            .collect();
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, |r| r.len())
    }

    fn all_finite(&self) -> bool {
        self.bias.iter().all(|b| b.is_finite())
            && self.weights.iter().all(|r| r.iter().all(|w| w.is_finite()))
    }
}

/// The adaptable classifier: shared trunk, label head, and domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAdaptModel {
    pub feature1: DenseLayer,
    pub feature2: DenseLayer,
    pub label_head: DenseLayer,
    pub domain_hidden: DenseLayer,
    pub domain_out: DenseLayer,
    pub dropout_rate: f64,
}

impl MlpAdaptModel {
    pub fn input_dim(&self) -> usize {
        self.feature1.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.feature1.out_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.label_head.out_dim()
    }

    /// Check the dimension chain and that every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let checks = [
            (self.feature2.in_dim(), h, "feature2 input"),
            (self.feature2.out_dim(), h, "feature2 output"),
            (self.label_head.in_dim(), h, "label head input"),
            (self.domain_hidden.in_dim(), h, "domain hidden input"),
            (
                self.domain_out.in_dim(),
                self.domain_hidden.out_dim(),
                "domain output input",
            ),
            (self.domain_out.out_dim(), 2, "domain output width"),
        ];
        for (got, expected, what) in checks {
            if got != expected {
                return Err(Error::Checkpoint(format!(
                    "{what} is {got}, expected {expected}"
                )));
            }
        }
        if self.n_classes() < 2 {
            return Err(Error::Checkpoint(
                "label head needs at least 2 classes".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Checkpoint(format!(
                "dropout rate {} outside [0,1)",
                self.dropout_rate
            )));
        }
        let layers = [
            &self.feature1,
            &self.feature2,
            &self.label_head,
            &self.domain_hidden,
            &self.domain_out,
        ];
        if layers.iter().any(|l| !l.all_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(())
    }

    /// Assembles a model from raw layer matrices, rejecting ragged rows and
    /// any shape that breaks the dimension chain.
    pub fn from_parts(
        feature1: (Vec<Vec<f64>>, Vec<f64>),
        feature2: (Vec<Vec<f64>>, Vec<f64>),
        label_head: (Vec<Vec<f64>>, Vec<f64>),
        domain_hidden: (Vec<Vec<f64>>, Vec<f64>),
        domain_out: (Vec<Vec<f64>>, Vec<f64>),
        dropout_rate: f64,
    ) -> Result<Self> {
        let build = |(weights, bias): (Vec<Vec<f64>>, Vec<f64>), name: &str| {
            let layer = DenseLayer { weights, bias };
            if layer.weights.len() != layer.out_dim()
                || layer.weights.iter().any(|r| r.len() != layer.in_dim())
            {
                return Err(Error::Checkpoint(format!("layer {name} has ragged rows")));
            }
            Ok(layer)
        };
        let model = MlpAdaptModel {
            feature1: build(feature1, "feature1")?,
            feature2: build(feature2, "feature2")?,
            label_head: build(label_head, "label_head")?,
            domain_hidden: build(domain_hidden, "domain_hidden")?,
            domain_out: build(domain_out, "domain_out")?,
            dropout_rate,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Direction of the GRL multiplier ramp across training epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaRamp {
    /// λ grows from 0 toward 1 as epochs advance.
    Up,
    /// λ starts near 1 and decays toward 0.
    Down,
    /// λ pinned at 0 for the whole run.
    Off,
}

/// Hyperparameters for one training or retraining run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grl_gamma: f64,
    pub seed: u64,
    /// Applied to the model when training starts.
    pub dropout_rate: f64,
    pub lambda_ramp: LambdaRamp,
    /// Skip the domain path entirely: no target batches, no domain loss.
    /// Training then reduces exactly to supervised label training.
    pub detach_domain: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 100,
            batch_size: 64,
            grl_gamma: 10.0,
            seed: 0,
            dropout_rate: DEFAULT_DROPOUT,
            lambda_ramp: LambdaRamp::Up,
            detach_domain: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.grl_gamma.is_finite() && self.grl_gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {}",
                self.grl_gamma
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// One value per model parameter; holds gradients and momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub feature1: DenseLayer,
    pub feature2: DenseLayer,
    pub label_head: DenseLayer,
    pub domain_hidden: DenseLayer,
    pub domain_out: DenseLayer,
}

impl ParamSet {
    pub fn zeros_like(m: &MlpAdaptModel) -> Self {
        let z = |l: &DenseLayer| DenseLayer::zeros(l.out_dim(), l.in_dim());
        ParamSet {
            feature1: z(&m.feature1),
            feature2: z(&m.feature2),
            label_head: z(&m.label_head),
            domain_hidden: z(&m.domain_hidden),
            domain_out: z(&m.domain_out),
        }
    }
}

/// Fresh model with He-uniform weights and zero biases.
pub fn init_model(
    input_dim: usize,
    hidden: usize,
    n_classes: usize,
    seed: u64,
) -> Result<MlpAdaptModel> {
    if input_dim == 0 || hidden == 0 {
        return Err(Error::InvalidArgument("layer dims must be positive".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(MlpAdaptModel {
        feature1: DenseLayer::he_uniform(hidden, input_dim, &mut rng),
        feature2: DenseLayer::he_uniform(hidden, hidden, &mut rng),
        label_head: DenseLayer::he_uniform(n_classes, hidden, &mut rng),
        domain_hidden: DenseLayer::he_uniform(hidden, hidden, &mut rng),
        domain_out: DenseLayer::he_uniform(2, hidden, &mut rng),
        dropout_rate: DEFAULT_DROPOUT,
    })
}

// ── forward passes ──────────────────────────────────────────────────────────

fn affine(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, &b)| row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<f64>() + b)
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(probs: &[f64], class: usize) -> f64 {
    -probs[class].max(1e-300).ln()
}

struct ForwardCache {
    h1_pre: Vec<f64>,
    mask1: Vec<f64>,
    h1d: Vec<f64>,
    h2_pre: Vec<f64>,
    mask2: Vec<f64>,
    h2d: Vec<f64>,
}

/// Inverted-dropout mask: units keep value 1/(1−p) with probability 1−p.
/// Consumes one draw per unit; skipped entirely in eval mode or at p = 0.
fn dropout_mask<R: Rng>(len: usize, p: f64, active: bool, rng: &mut R) -> Vec<f64> {
    if !active || p == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

fn forward_trunk<R: Rng>(
    m: &MlpAdaptModel,
    x: &[f64],
    train_mode: bool,
    rng: &mut R,
) -> Result<ForwardCache> {
    if x.len() != m.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.input_dim(),
            got: x.len(),
        });
    }
    let h1_pre = affine(&m.feature1, x);
    let mask1 = dropout_mask(h1_pre.len(), m.dropout_rate, train_mode, rng);
    let h1d: Vec<f64> = h1_pre
        .iter()
        .zip(&mask1)
        .map(|(&a, &k)| a.max(0.0) * k)
        .collect();
    let h2_pre = affine(&m.feature2, &h1d);
    let mask2 = dropout_mask(h2_pre.len(), m.dropout_rate, train_mode, rng);
    let h2d: Vec<f64> = h2_pre
        .iter()
        .zip(&mask2)
        .map(|(&a, &k)| a.max(0.0) * k)
        .collect();
    Ok(ForwardCache {
        h1_pre,
        mask1,
        h1d,
        h2_pre,
        mask2,
        h2d,
    })
}

/// Class probabilities for one input.
pub fn forward_label<R: Rng>(
    m: &MlpAdaptModel,
    x: &[f64],
    train_mode: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cache = forward_trunk(m, x, train_mode, rng)?;
    Ok(softmax(&affine(&m.label_head, &cache.h2d)))
}

/// Domain probabilities (source, target) for one input. The reversal step
/// sits between the trunk and the domain head and is the identity here; it
/// only acts on gradients.
pub fn forward_domain<R: Rng>(
    m: &MlpAdaptModel,
    x: &[f64],
    train_mode: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cache = forward_trunk(m, x, train_mode, rng)?;
    let hd: Vec<f64> = affine(&m.domain_hidden, &cache.h2d)
        .iter()
        .map(|&a| a.max(0.0))
        .collect();
    Ok(softmax(&affine(&m.domain_out, &hd)))
}

/// Gradient reversal: scale the upstream gradient by −λ.
pub fn grl_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    upstream.iter().map(|&g| -lambda * g).collect()
}

/// GRL multiplier schedule 2/(1+exp(−γp)) − 1 over training progress p.
pub fn lambda_schedule(progress: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::InvalidArgument(format!(
            "progress must lie in [0,1], got {progress}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(2.0 / (1.0 + (-gamma * progress).exp()) - 1.0)
}

// ── backward pass ───────────────────────────────────────────────────────────

/// Accumulate `scale · (d ⊗ input)` into weight grads and `scale · d` into
/// bias grads. `d` is the already scaled output-side gradient.
fn accumulate_layer(g: &mut DenseLayer, d: &[f64], input: &[f64]) {
    for ((row, gb), &di) in g.weights.iter_mut().zip(&mut g.bias).zip(d) {
        for (cell, &xi) in row.iter_mut().zip(input) {
            *cell += di * xi;
        }
        *gb += di;
    }
}

/// Wᵀ · d for the given layer.
fn back_through(layer: &DenseLayer, d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layer.in_dim()];
    for (row, &di) in layer.weights.iter().zip(d) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += di * w;
        }
    }
    out
}

/// Backprop through the domain head for one sample. Returns the per-sample
/// cross-entropy and the (GRL-reversed) gradient flowing into the trunk.
fn backward_domain(
    m: &MlpAdaptModel,
    h2d: &[f64],
    domain_label: usize,
    inv_n: f64,
    lambda: f64,
    g: &mut ParamSet,
) -> (f64, Vec<f64>) {
    let hd_pre = affine(&m.domain_hidden, h2d);
    let hd: Vec<f64> = hd_pre.iter().map(|&a| a.max(0.0)).collect();
    let probs = softmax(&affine(&m.domain_out, &hd));
    let loss = cross_entropy(&probs, domain_label);

    let mut dz: Vec<f64> = probs;
    dz[domain_label] -= 1.0;
    for v in dz.iter_mut() {
        *v *= inv_n;
    }
    accumulate_layer(&mut g.domain_out, &dz, &hd);
    let dhd = back_through(&m.domain_out, &dz);
    let da: Vec<f64> = dhd
        .iter()
        .zip(&hd_pre)
        .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
        .collect();
    accumulate_layer(&mut g.domain_hidden, &da, h2d);
    let into_trunk = grl_backward(&back_through(&m.domain_hidden, &da), lambda);
    (loss, into_trunk)
}

/// Backprop a trunk-level gradient down to the inputs, accumulating into the
/// two feature layers.
fn backward_trunk(
    m: &MlpAdaptModel,
    x: &[f64],
    cache: &ForwardCache,
    dh2d: &[f64],
    g: &mut ParamSet,
) {
    let da2: Vec<f64> = dh2d
        .iter()
        .zip(&cache.mask2)
        .zip(&cache.h2_pre)
        .map(|((&d, &k), &a)| if a > 0.0 { d * k } else { 0.0 })
        .collect();
    accumulate_layer(&mut g.feature2, &da2, &cache.h1d);
    let dh1d = back_through(&m.feature2, &da2);
    let da1: Vec<f64> = dh1d
        .iter()
        .zip(&cache.mask1)
        .zip(&cache.h1_pre)
        .map(|((&d, &k), &a)| if a > 0.0 { d * k } else { 0.0 })
        .collect();
    accumulate_layer(&mut g.feature1, &da1, x);
}

fn check_batches(m: &MlpAdaptModel, source: &[(&[f64], usize)], target: &[&[f64]]) -> Result<()> {
    if source.is_empty() {
        return Err(Error::InvalidArgument(
            "source batch must be nonempty".into(),
        ));
    }
    for &(x, y) in source {
        if x.len() != m.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.input_dim(),
                got: x.len(),
            });
        }
        if y >= m.n_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                m.n_classes()
            )));
        }
    }
    for &x in target {
        if x.len() != m.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.input_dim(),
                got: x.len(),
            });
        }
    }
    Ok(())
}

/// Label and domain losses and full-model gradients for one mini-batch.
///
/// The label loss is the mean cross-entropy over the source batch; the domain
/// loss is the mean cross-entropy over source (domain 0) plus target
/// (domain 1) samples. An empty target batch drops the domain terms
/// entirely. Shared-trunk gradients combine the label pull and the reversed
/// domain push; head gradients follow their own loss alone. Dropout masks are
/// drawn per sample, source batch first, so a loss-only replay with a clone
/// of the RNG sees identical masks.
pub fn compute_grads<R: Rng>(
    m: &MlpAdaptModel,
    source: &[(&[f64], usize)],
    target: &[&[f64]],
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, f64, ParamSet)> {
    check_batches(m, source, target)?;
    if !((0.0..=1.0).contains(&lambda)) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0,1], got {lambda}"
        )));
    }
    let with_domain = !target.is_empty();
    let inv_src = 1.0 / source.len() as f64;
    let inv_dom = 1.0 / (source.len() + target.len()) as f64;

    let mut g = ParamSet::zeros_like(m);
    let mut label_loss = 0.0;
    let mut domain_loss = 0.0;

    for &(x, y) in source {
        let cache = forward_trunk(m, x, true, rng)?;
        let probs = softmax(&affine(&m.label_head, &cache.h2d));
        label_loss += cross_entropy(&probs, y);

        let mut dz: Vec<f64> = probs;
        dz[y] -= 1.0;
        for v in dz.iter_mut() {
            *v *= inv_src;
        }
        accumulate_layer(&mut g.label_head, &dz, &cache.h2d);
        let mut dh2d = back_through(&m.label_head, &dz);

        if with_domain {
            let (loss, into_trunk) = backward_domain(m, &cache.h2d, 0, inv_dom, lambda, &mut g);
            domain_loss += loss;
            for (d, t) in dh2d.iter_mut().zip(&into_trunk) {
                *d += t;
            }
        }
        backward_trunk(m, x, &cache, &dh2d, &mut g);
    }

    for &x in target {
        let cache = forward_trunk(m, x, true, rng)?;
        let (loss, into_trunk) = backward_domain(m, &cache.h2d, 1, inv_dom, lambda, &mut g);
        domain_loss += loss;
        backward_trunk(m, x, &cache, &into_trunk, &mut g);
    }

    label_loss *= inv_src;
    domain_loss = if with_domain {
        domain_loss * inv_dom
    } else {
        0.0
    };
    if !(label_loss.is_finite() && domain_loss.is_finite()) {
        return Err(Error::NonFinite(format!(
            "losses diverged: label {label_loss}, domain {domain_loss}"
        )));
    }
    Ok((label_loss, domain_loss, g))
}

/// Losses only, consuming the RNG exactly like [`compute_grads`] does.
pub fn compute_losses<R: Rng>(
    m: &MlpAdaptModel,
    source: &[(&[f64], usize)],
    target: &[&[f64]],
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_batches(m, source, target)?;
    let with_domain = !target.is_empty();
    let mut label_loss = 0.0;
    let mut domain_loss = 0.0;
    for &(x, y) in source {
        let cache = forward_trunk(m, x, true, rng)?;
        let probs = softmax(&affine(&m.label_head, &cache.h2d));
        label_loss += cross_entropy(&probs, y);
        if with_domain {
            let hd: Vec<f64> = affine(&m.domain_hidden, &cache.h2d)
                .iter()
                .map(|&a| a.max(0.0))
                .collect();
            domain_loss += cross_entropy(&softmax(&affine(&m.domain_out, &hd)), 0);
        }
    }
    for &x in target {
        let cache = forward_trunk(m, x, true, rng)?;
        let hd: Vec<f64> = affine(&m.domain_hidden, &cache.h2d)
            .iter()
            .map(|&a| a.max(0.0))
            .collect();
        domain_loss += cross_entropy(&softmax(&affine(&m.domain_out, &hd)), 1);
    }
    label_loss /= source.len() as f64;
    domain_loss = if with_domain {
        domain_loss / (source.len() + target.len()) as f64
    } else {
        0.0
    };
    Ok((label_loss, domain_loss))
}

/// Momentum SGD update: v ← momentum·v − lr·g, then w ← w + v.
pub fn sgd_step(
    m: &mut MlpAdaptModel,
    grads: &ParamSet,
    velocity: &mut ParamSet,
    lr: f64,
    momentum: f64,
) {
    let layers = [
        (&mut m.feature1, &grads.feature1, &mut velocity.feature1),
        (&mut m.feature2, &grads.feature2, &mut velocity.feature2),
        (
            &mut m.label_head,
            &grads.label_head,
            &mut velocity.label_head,
        ),
        (
            &mut m.domain_hidden,
            &grads.domain_hidden,
            &mut velocity.domain_hidden,
        ),
        (
            &mut m.domain_out,
            &grads.domain_out,
            &mut velocity.domain_out,
        ),
    ];
    for (layer, g, v) in layers {
        for ((wrow, grow), vrow) in layer
            .weights
            .iter_mut()
            .zip(&g.weights)
            .zip(v.weights.iter_mut())
        {
            for ((w, &gw), vw) in wrow.iter_mut().zip(grow).zip(vrow.iter_mut()) {
                *vw = momentum * *vw - lr * gw;
                *w += *vw;
            }
        }
        for ((b, &gb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(v.bias.iter_mut()) {
            *vb = momentum * *vb - lr * gb;
            *b += *vb;
        }
    }
}

// ── training loops ──────────────────────────────────────────────────────────

/// Index plan for one balanced epoch: every batch pairs exactly ⌈b/2⌉ source
/// indices with ⌊b/2⌋ target indices. Source indices come from one shuffled
/// pass over the set, switching to with-replacement draws when the set is
/// smaller than its quota; target indices are sampled without replacement
/// per batch when the pool is large enough, with replacement otherwise.
pub(crate) fn plan_balanced_epoch<R: Rng>(
    n_src: usize,
    n_tgt: usize,
    batch_size: usize,
    rng: &mut R,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let q_src = batch_size.div_ceil(2);
    let q_tgt = batch_size / 2;
    let src_order: Vec<usize> = if n_src >= q_src {
        let mut order: Vec<usize> = (0..n_src).collect();
        order.shuffle(rng);
        order
    } else {
        Vec::new()
    };
    let n_batches = if n_src >= q_src { n_src / q_src } else { 1 };
    let mut plan = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let src: Vec<usize> = if src_order.is_empty() {
            (0..q_src).map(|_| rng.random_range(0..n_src)).collect()
        } else {
            src_order[b * q_src..(b + 1) * q_src].to_vec()
        };
        let tgt: Vec<usize> = if q_tgt == 0 {
            Vec::new()
        } else if n_tgt >= q_tgt {
            rand::seq::index::sample(rng, n_tgt, q_tgt).iter().collect()
        } else {
            (0..q_tgt).map(|_| rng.random_range(0..n_tgt)).collect()
        };
        plan.push((src, tgt));
    }
    plan
}

/// Shared mini-batch engine behind supervised training and retraining.
///
/// Without target data each epoch shuffles the source set and walks it in
/// batches (trailing partial batch included). With target data epochs follow
/// [`plan_balanced_epoch`]. Returns the model plus per-epoch mean label and
/// domain losses.
pub(crate) fn run_training(
    mut model: MlpAdaptModel,
    source: &[(Vec<f64>, usize)],
    target: Option<&[Vec<f64>]>,
    cfg: &TrainConfig,
) -> Result<(MlpAdaptModel, Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::InvalidArgument(
            "training set must be nonempty".into(),
        ));
    }
    let target = match target {
        Some(t) if !t.is_empty() && !cfg.detach_domain => Some(t),
        _ => None,
    };
    model.dropout_rate = cfg.dropout_rate;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = ParamSet::zeros_like(&model);
    let mut label_trace = Vec::with_capacity(cfg.epochs);
    let mut domain_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let progress = if cfg.epochs <= 1 {
            0.0
        } else {
            epoch as f64 / (cfg.epochs - 1) as f64
        };
        let lambda = match cfg.lambda_ramp {
            LambdaRamp::Up => lambda_schedule(progress, cfg.grl_gamma)?,
            LambdaRamp::Down => lambda_schedule(1.0 - progress, cfg.grl_gamma)?,
            LambdaRamp::Off => 0.0,
        };

        let mut epoch_label = 0.0;
        let mut epoch_domain = 0.0;
        let mut n_batches = 0usize;

        match target {
            None => {
                let mut order: Vec<usize> = (0..source.len()).collect();
                order.shuffle(&mut rng);
                for chunk in order.chunks(cfg.batch_size) {
                    let batch: Vec<(&[f64], usize)> = chunk
                        .iter()
                        .map(|&i| (source[i].0.as_slice(), source[i].1))
                        .collect();
                    let (ll, dl, grads) = compute_grads(&model, &batch, &[], 0.0, &mut rng)?;
                    sgd_step(
                        &mut model,
                        &grads,
                        &mut velocity,
                        cfg.learning_rate,
                        cfg.momentum,
                    );
                    epoch_label += ll;
                    epoch_domain += dl;
                    n_batches += 1;
                }
            }
            Some(tgt) => {
                let plan = plan_balanced_epoch(source.len(), tgt.len(), cfg.batch_size, &mut rng);
                for (src_idx, tgt_idx) in plan {
                    let batch: Vec<(&[f64], usize)> = src_idx
                        .iter()
                        .map(|&i| (source[i].0.as_slice(), source[i].1))
                        .collect();
                    let tgt_batch: Vec<&[f64]> =
                        tgt_idx.iter().map(|&i| tgt[i].as_slice()).collect();
                    let (ll, dl, grads) =
                        compute_grads(&model, &batch, &tgt_batch, lambda, &mut rng)?;
                    sgd_step(
                        &mut model,
                        &grads,
                        &mut velocity,
                        cfg.learning_rate,
                        cfg.momentum,
                    );
                    epoch_label += ll;
                    epoch_domain += dl;
                    n_batches += 1;
                }
            }
        }

        label_trace.push(epoch_label / n_batches as f64);
        domain_trace.push(epoch_domain / n_batches as f64);
    }

    Ok((model, label_trace, domain_trace))
}

/// Offline supervised training on label loss only.
pub fn train_supervised(
    model: MlpAdaptModel,
    labeled: &SpectraSet,
    cfg: &TrainConfig,
) -> Result<(MlpAdaptModel, Vec<f64>)> {
    let pairs = labeled_pairs(labeled)?;
    let (model, label_trace, _) = run_training(model, &pairs, None, cfg)?;
    Ok((model, label_trace))
}

/// Extract (features, label) pairs, rejecting unlabeled members.
pub(crate) fn labeled_pairs(set: &SpectraSet) -> Result<Vec<(Vec<f64>, usize)>> {
    set.spectra
        .iter()
        .map(|s| match s.label {
            Some(y) => Ok((s.intensities.clone(), y)),
            None => Err(Error::InvalidArgument(
                "set contains an unlabeled spectrum".into(),
            )),
        })
        .collect()
}

/// Most probable class in eval mode; ties break toward the lowest index.
pub fn predict(m: &MlpAdaptModel, x: &[f64]) -> Result<usize> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let probs = forward_label(m, x, false, &mut unused)?;
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of the labeled set that `predict` gets right.
pub fn evaluate_accuracy(m: &MlpAdaptModel, set: &SpectraSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty set".into(),
        ));
    }
    let mut hits = 0usize;
    for s in &set.spectra {
        let label = s
            .label
            .ok_or_else(|| Error::InvalidArgument("set contains an unlabeled spectrum".into()))?;
        if predict(m, &s.intensities)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}
