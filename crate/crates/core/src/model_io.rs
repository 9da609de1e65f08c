//! Lossless checkpointing of the full pipeline: normalization mode, reduction
//! model, network weights, and free-form metadata in one JSON document.
//!
//! Every 64-bit float is stored as its 16-hex-digit IEEE-754 bit pattern, so
//! a reloaded pipeline reproduces the saved one bit for bit. Matrices are
//! flattened row-major next to an explicit shape field.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dimred::PcaModel;
use crate::error::{Error, Result};
use crate::network::MlpAdaptModel;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Input scaling applied before reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    MinMax,
}

impl Normalization {
    fn as_str(self) -> &'static str {
        match self {
            Normalization::MinMax => "min_max",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "min_max" => Ok(Normalization::MinMax),
            other => Err(Error::Checkpoint(format!(
                "unknown normalization mode {other:?}"
            ))),
        }
    }
}

/// Complete deployable pipeline state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub normalization: Normalization,
    pub reduction: PcaModel,
    pub network: MlpAdaptModel,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        reduction: PcaModel,
        network: MlpAdaptModel,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let c = Checkpoint {
            normalization: Normalization::MinMax,
            reduction,
            network,
            meta,
        };
        c.validate()?;
        Ok(c)
    }

    /// Checks the dimension chain (spectrum -> reduced -> network input) and
    /// that every stored parameter is finite.
    pub fn validate(&self) -> Result<()> {
        if self.reduction.k() == 0 || self.reduction.input_dim() == 0 {
            return Err(Error::Checkpoint("reduction model is empty".into()));
        }
        if self.network.input_dim() != self.reduction.k() {
            return Err(Error::Checkpoint(format!(
                "network expects {} inputs but reduction produces {}",
                self.network.input_dim(),
                self.reduction.k()
            )));
        }
        let finite = self.reduction.mean.iter().all(|v| v.is_finite())
            && self
                .reduction
                .components
                .iter()
                .all(|c| c.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Checkpoint(
                "reduction model has non-finite values".into(),
            ));
        }
        self.network.validate()
    }
}

fn f64_to_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_to_f64(s: &str) -> Result<f64> {
    let ok = s.len() == 16 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
    if !ok {
        return Err(Error::Checkpoint(format!(
            "{s:?} is not a 16-hex-digit float encoding"
        )));
    }
    let bits = u64::from_str_radix(s, 16)
        .map_err(|e| Error::Checkpoint(format!("bad float encoding {s:?}: {e}")))?;
    Ok(f64::from_bits(bits))
}

fn encode_vec(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(f64_to_hex).collect()
}

fn decode_vec(v: &[String], what: &str, expected: usize) -> Result<Vec<f64>> {
    if v.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{what}: expected {expected} values, found {}",
            v.len()
        )));
    }
    v.iter().map(|s| hex_to_f64(s)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReductionDto {
    mean: Vec<String>,
    /// Row-major, `shape[0]` component rows of `shape[1]` values each.
    components: Vec<String>,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDto {
    name: String,
    /// Row-major, `shape[0]` rows of `shape[1]` values each.
    weights: Vec<String>,
    bias: Vec<String>,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDto {
    layers: Vec<LayerDto>,
    dropout_rate: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDto {
    version: u32,
    normalization: String,
    reduction: ReductionDto,
    network: NetworkDto,
    meta: BTreeMap<String, String>,
}

const LAYER_NAMES: [&str; 5] = [
    "feature1",
    "feature2",
    "label_head",
    "domain_hidden",
    "domain_out",
];

fn layer_to_dto(name: &str, weights: &[Vec<f64>], bias: &[f64]) -> LayerDto {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    LayerDto {
        name: name.to_string(),
        weights: weights
            .iter()
            .flat_map(|row| row.iter().copied().map(f64_to_hex))
            .collect(),
        bias: encode_vec(bias),
        shape: [rows, cols],
    }
}

fn layer_from_dto(dto: &LayerDto, expected_name: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if dto.name != expected_name {
        return Err(Error::Checkpoint(format!(
            "expected layer {expected_name:?}, found {:?}",
            dto.name
        )));
    }
    let [rows, cols] = dto.shape;
    if rows == 0 || cols == 0 {
        return Err(Error::Checkpoint(format!(
            "layer {expected_name:?} has an empty shape"
        )));
    }
    let flat = decode_vec(
        &dto.weights,
        &format!("layer {expected_name:?} weights"),
        rows * cols,
    )?;
    let weights = flat.chunks_exact(cols).map(|c| c.to_vec()).collect();
    let bias = decode_vec(&dto.bias, &format!("layer {expected_name:?} bias"), rows)?;
    Ok((weights, bias))
}

fn to_dto(c: &Checkpoint) -> CheckpointDto {
    let d = c.reduction.input_dim();
    let layers = [
        ("feature1", &c.network.feature1),
        ("feature2", &c.network.feature2),
        ("label_head", &c.network.label_head),
        ("domain_hidden", &c.network.domain_hidden),
        ("domain_out", &c.network.domain_out),
    ]
    .into_iter()
    .map(|(name, layer)| layer_to_dto(name, &layer.weights, &layer.bias))
    .collect();
    CheckpointDto {
        version: CHECKPOINT_VERSION,
        normalization: c.normalization.as_str().to_string(),
        reduction: ReductionDto {
            mean: encode_vec(&c.reduction.mean),
            components: c
                .reduction
                .components
                .iter()
                .flat_map(|comp| comp.iter().copied().map(f64_to_hex))
                .collect(),
            shape: [c.reduction.k(), d],
        },
        network: NetworkDto {
            layers,
            dropout_rate: f64_to_hex(c.network.dropout_rate),
        },
        meta: c.meta.clone(),
    }
}

fn from_dto(dto: &CheckpointDto) -> Result<Checkpoint> {
    if dto.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (this build reads version {CHECKPOINT_VERSION})",
            dto.version
        )));
    }
    let normalization = Normalization::parse(&dto.normalization)?;

    let [k, d] = dto.reduction.shape;
    if k == 0 || d == 0 {
        return Err(Error::Checkpoint(
            "reduction shape has a zero dimension".into(),
        ));
    }
    let mean = decode_vec(&dto.reduction.mean, "reduction mean", d)?;
    let flat = decode_vec(&dto.reduction.components, "reduction components", k * d)?;
    let components = flat.chunks_exact(d).map(|c| c.to_vec()).collect();
    let reduction = PcaModel { mean, components };

    if dto.network.layers.len() != LAYER_NAMES.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} network layers, found {}",
            LAYER_NAMES.len(),
            dto.network.layers.len()
        )));
    }
    let mut decoded = Vec::with_capacity(LAYER_NAMES.len());
    for (dto_layer, name) in dto.network.layers.iter().zip(LAYER_NAMES) {
        decoded.push(layer_from_dto(dto_layer, name)?);
    }
    let mut it = decoded.into_iter();
    let network = MlpAdaptModel::from_parts(
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        hex_to_f64(&dto.network.dropout_rate)?,
    )?;

    let c = Checkpoint {
        normalization,
        reduction,
        network,
        meta: dto.meta.clone(),
    };
    c.validate()?;
    Ok(c)
}

/// Writes the checkpoint as a single JSON document.
pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    c.validate()?;
    let dto = to_dto(c);
    let mut text = serde_json::to_string_pretty(&dto)
        .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads and validates a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let dto: CheckpointDto = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    from_dto(&dto)
}
