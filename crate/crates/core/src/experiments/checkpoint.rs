//! Versioned JSON checkpoints.
//!
//! Reals are written in shortest round-trip form and parsed with correct
//! rounding, so a load reproduces every weight bit for bit and a
//! save-load-save cycle is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::StackedNetwork;
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// `(D, H)` per layer.
    pub layer_dims: Vec<(usize, usize)>,
    pub connectivity: f64,
    /// Seed the network was built from.
    pub seed: u64,
    /// Seed each layer's mask was sampled with.
    pub mask_seeds: Vec<u64>,
    pub window: usize,
    pub mu: f64,
    pub sigma: f64,
    pub train_config: TrainConfig,
    pub train_config_digest: String,
    pub network: StackedNetwork,
}

/// FNV-1a over the config's canonical JSON encoding, as 16 hex digits.
pub fn config_digest(cfg: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{hash:016x}")
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: StackedNetwork,
        connectivity: f64,
        seed: u64,
        mask_seeds: Vec<u64>,
        window: usize,
        mu: f64,
        sigma: f64,
        train_config: TrainConfig,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            layer_dims: network.layer_dims(),
            connectivity,
            seed,
            mask_seeds,
            window,
            mu,
            sigma,
            train_config_digest: config_digest(&train_config),
            train_config,
            network,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt("document", e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("format_version", "missing or not an integer"))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::CheckpointVersion { found: version as u32, expected: FORMAT_VERSION });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| corrupt("document", e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Enforces every shape and mask invariant of the stored network.
    pub fn validate(&self) -> Result<()> {
        let net = &self.network;
        if net.layers.is_empty() {
            return Err(shape("network.layers", "at least one layer", "0"));
        }
        if self.layer_dims.len() != net.layers.len() {
            return Err(shape("layer_dims", net.layers.len(), self.layer_dims.len()));
        }
        if self.mask_seeds.len() != net.layers.len() {
            return Err(shape("mask_seeds", net.layers.len(), self.mask_seeds.len()));
        }
        if !(0.0..=1.0).contains(&self.connectivity) {
            return Err(corrupt("connectivity", format!("{} is outside [0, 1]", self.connectivity)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite() && self.mu.is_finite()) {
            return Err(corrupt("sigma", "normalization statistics must be finite with sigma > 0"));
        }
        if self.window == 0 {
            return Err(corrupt("window", "must be positive"));
        }
        if self.train_config_digest != config_digest(&self.train_config) {
            return Err(corrupt("train_config_digest", "does not match train_config"));
        }

        let h = net.head_w.len();
        let mut expected_in = self.layer_dims[0].0;
        for (idx, (layer, &(d, lh))) in net.layers.iter().zip(&self.layer_dims).enumerate() {
            let field = |what: &str| format!("network.layers[{idx}].{what}");
            if d != expected_in || lh != h {
                return Err(shape(&field("dims"), format!("({expected_in}, {h})"), format!("({d}, {lh})")));
            }
            let cols = d + h;
            let names = ["input", "forget", "output", "cell"];
            let masks = layer.mask.gates.as_array();
            for (g, (w, m)) in layer.weights.as_array().into_iter().zip(masks).enumerate() {
                let name = names[g];
                if m.rows != h || m.cols != cols || m.bits.len() != h * cols {
                    return Err(shape(
                        &field(&format!("mask.{name}")),
                        format!("{h}x{cols}"),
                        format!("{}x{} with {} entries", m.rows, m.cols, m.bits.len()),
                    ));
                }
                if w.rows() != h || w.cols() != cols || w.data().len() != h * cols {
                    return Err(shape(
                        &field(&format!("weights.{name}")),
                        format!("{h}x{cols}"),
                        format!("{}x{} with {} entries", w.rows(), w.cols(), w.data().len()),
                    ));
                }
                if let Some(k) = m.bits.iter().position(|&b| b > 1) {
                    return Err(corrupt(
                        &field(&format!("mask.{name}")),
                        format!("entry {k} is {}, not 0 or 1", m.bits[k]),
                    ));
                }
                if let Some(k) = w.data().iter().position(|v| !v.is_finite()) {
                    return Err(corrupt(&field(&format!("weights.{name}")), format!("entry {k} is not finite")));
                }
                if let Some(k) = w.data().iter().zip(&m.bits).position(|(&v, &b)| b == 0 && v != 0.0) {
                    return Err(corrupt(&field(&format!("weights.{name}")), format!("masked entry {k} is nonzero")));
                }
            }
            for (g, b) in layer.biases.as_array().into_iter().enumerate() {
                if b.len() != h {
                    return Err(shape(&field(&format!("biases.{}", names[g])), h, b.len()));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(corrupt(&field(&format!("biases.{}", names[g])), "non-finite entry"));
                }
            }
            expected_in = h;
        }
        if !net.head_b.is_finite() || net.head_w.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("network.head", "non-finite entry"));
        }
        Ok(())
    }
}

fn corrupt(field: &str, reason: impl ToString) -> Error {
    Error::CheckpointCorrupt { field: field.to_owned(), reason: reason.to_string() }
}

fn shape(field: &str, expected: impl ToString, found: impl ToString) -> Error {
    Error::CheckpointShape { field: field.to_owned(), expected: expected.to_string(), found: found.to_string() }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_json()?).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    Checkpoint::from_json(&text)
}
