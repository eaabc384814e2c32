//! Stacked RCLSTM layers with a linear read-out on the last top-layer
//! hidden state.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cell::{forward_step, generate_mask, init_params, CellParams, CellState, GateCache, MaskSpec};
use crate::error::{Error, Result};
use crate::numcore::{dot, Vec64};
use crate::seeding::{derive_seed, rng_from, TAG_HEAD, TAG_INIT, TAG_MASK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedNetwork {
    pub layers: Vec<CellParams>,
    pub head_w: Vec64,
    pub head_b: f64,
}

/// Per-layer, per-timestep caches from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `caches[layer][t]`
    pub caches: Vec<Vec<GateCache>>,
    pub prediction: f64,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.caches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seq_len(&self) -> usize {
        self.caches.first().map_or(0, Vec::len)
    }
}

impl StackedNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.head_w.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// `(D, H)` for every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.input_dim(), l.hidden_dim())).collect()
    }

    pub fn mask_ones(&self) -> usize {
        self.layers.iter().map(|l| l.mask.ones()).sum()
    }

    pub fn potential_connections(&self) -> usize {
        self.layers.iter().map(|l| l.mask.potential_connections()).sum()
    }

    /// Realized connectivity pooled over every layer's mask.
    pub fn realized_connectivity(&self) -> f64 {
        self.mask_ones() as f64 / self.potential_connections() as f64
    }

    /// Unmasked recurrent weights, gate biases and the read-out head.
    pub fn trainable_count(&self) -> usize {
        self.layers.iter().map(CellParams::trainable_count).sum::<usize>() + self.hidden_dim() + 1
    }

    pub fn mask_respected(&self) -> bool {
        self.layers.iter().all(CellParams::mask_respected)
    }

    pub fn apply_masks(&mut self) {
        for l in &mut self.layers {
            l.apply_mask_in_place();
        }
    }

    /// Checks layer chaining and per-layer shapes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let h = self.hidden_dim();
        let mut expected_in = self.input_dim();
        for (idx, l) in self.layers.iter().enumerate() {
            if l.input_dim() != expected_in || l.hidden_dim() != h {
                return Err(Error::Config(format!(
                    "layer {idx} has D={}, H={}; expected D={expected_in}, H={h}",
                    l.input_dim(),
                    l.hidden_dim()
                )));
            }
            let cols = expected_in + h;
            for (w, m) in l.weights.as_array().iter().zip(l.mask.gates.as_array()) {
                if w.rows() != h || w.cols() != cols || m.rows != h || m.cols != cols || m.bits.len() != h * cols {
                    return Err(Error::Config(format!("layer {idx} weight or mask is not {h}x{cols}")));
                }
            }
            if l.biases.as_array().iter().any(|b| b.len() != h) {
                return Err(Error::Config(format!("layer {idx} bias is not length {h}")));
            }
            expected_in = h;
        }
        Ok(())
    }
}

/// Builds a stack with an independently sampled mask per layer.
pub fn build_network(
    layer_count: usize,
    input_dim: usize,
    hidden_dim: usize,
    connectivity: f64,
    seed: u64,
) -> Result<StackedNetwork> {
    if !(0.0..=1.0).contains(&connectivity) {
        return Err(Error::InvalidConnectivity(connectivity));
    }
    if layer_count == 0 || input_dim == 0 || hidden_dim == 0 {
        return Err(Error::Config(format!(
            "layers, input and hidden sizes must be positive (got {layer_count}, {input_dim}, {hidden_dim})"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for idx in 0..layer_count {
        let d = if idx == 0 { input_dim } else { hidden_dim };
        let spec = MaskSpec::new(connectivity, derive_seed(seed, &[TAG_MASK, idx as u64]))?;
        let mask = generate_mask(&spec, d, hidden_dim);
        layers.push(init_params(&mask, derive_seed(seed, &[TAG_INIT, idx as u64]), d, hidden_dim)?);
    }
    let scale = 1.0 / (hidden_dim as f64).sqrt();
    let mut rng = rng_from(derive_seed(seed, &[TAG_HEAD]));
    let head_w = Vec64((0..hidden_dim).map(|_| rng.gen_range(-scale..=scale)).collect());
    Ok(StackedNetwork { layers, head_w, head_b: 0.0 })
}

/// Runs the stack over `seq` from zero states and reads out the top layer's
/// final hidden state.
pub fn forward_sequence(net: &StackedNetwork, seq: &[Vec64]) -> Result<(f64, ForwardTrace)> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut caches: Vec<Vec<GateCache>> = Vec::with_capacity(net.layers.len());
    let mut states: Vec<CellState> = net.layers.iter().map(|l| CellState::zeros(l.hidden_dim())).collect();
    caches.resize_with(net.layers.len(), || Vec::with_capacity(seq.len()));
    for x in seq {
        let mut input: &[f64] = x;
        for (idx, layer) in net.layers.iter().enumerate() {
            let (next, cache) = forward_step(layer, &states[idx], input)?;
            states[idx] = next;
            caches[idx].push(cache);
            input = &states[idx].h;
        }
    }
    let top = &states.last().expect("at least one layer").h;
    let prediction = dot(&net.head_w, top) + net.head_b;
    Ok((prediction, ForwardTrace { caches, prediction }))
}

pub fn predict(net: &StackedNetwork, seq: &[Vec64]) -> Result<f64> {
    forward_sequence(net, seq).map(|(p, _)| p)
}
