//! Squared-error loss, backpropagation through time over the whole window,
//! and mini-batch Adam with global-norm clipping.
//!
//! Gradients at masked weight positions are forced to zero, and masks are
//! re-applied after every update, so pruned connections never come back.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cell::{CellParams, Gates};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::network::{forward_sequence, ForwardTrace, StackedNetwork};
use crate::numcore::{Mat64, Vec64};
use crate::seeding::{derive_seed, rng_from, TAG_SHUFFLE};

/// Single-sample squared error.
#[inline]
pub fn loss_mse(pred: f64, target: f64) -> f64 {
    let e = pred - target;
    e * e
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGrads {
    pub weights: Gates<Mat64>,
    pub biases: Gates<Vec64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<CellGrads>,
    pub head_w: Vec64,
    pub head_b: f64,
}

impl Gradients {
    pub fn zeros_like(net: &StackedNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| CellGrads {
                weights: l.weights.map(|w| Mat64::zeros(w.rows(), w.cols())),
                biases: l.biases.map(|b| Vec64::zeros(b.len())),
            })
            .collect();
        Gradients { layers, head_w: Vec64::zeros(net.hidden_dim()), head_b: 0.0 }
    }

    /// Every gradient buffer in canonical order: per layer the four weight
    /// matrices then the four biases, then the head weights and head bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(self.layers.len() * 8 + 2);
        for l in &self.layers {
            out.extend(l.weights.as_array().into_iter().map(|w| w.data()));
            out.extend(l.biases.as_array().into_iter().map(|b| b.as_slice()));
        }
        out.push(&self.head_w);
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(self.layers.len() * 8 + 2);
        for l in &mut self.layers {
            out.extend(l.weights.as_array_mut().into_iter().map(|w| w.data_mut()));
            out.extend(l.biases.as_array_mut().into_iter().map(|b| &mut b[..]));
        }
        out.push(&mut self.head_w);
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for x in s {
                *x *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for s in self.slices() {
            for x in s {
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// measured before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    fn apply_masks(&mut self, net: &StackedNetwork) {
        for (g, l) in self.layers.iter_mut().zip(&net.layers) {
            for (w, m) in g.weights.as_array_mut().into_iter().zip(l.mask.gates.as_array()) {
                for (v, &b) in w.data_mut().iter_mut().zip(&m.bits) {
                    if b == 0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

/// Parameter buffers of `net` in the same canonical order as
/// [`Gradients::slices`].
pub fn param_slices_mut(net: &mut StackedNetwork) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::with_capacity(net.layers.len() * 8 + 2);
    for l in &mut net.layers {
        out.extend(l.weights.as_array_mut().into_iter().map(|w| w.data_mut()));
        out.extend(l.biases.as_array_mut().into_iter().map(|b| &mut b[..]));
    }
    out.push(&mut net.head_w);
    out.push(std::slice::from_mut(&mut net.head_b));
    out
}

fn check_trace(net: &StackedNetwork, trace: &ForwardTrace, seq: &[Vec64]) -> Result<()> {
    if trace.caches.len() != net.layers.len() {
        return Err(Error::TraceMismatch(format!(
            "trace has {} layers, network has {}",
            trace.caches.len(),
            net.layers.len()
        )));
    }
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    for (idx, (caches, layer)) in trace.caches.iter().zip(&net.layers).enumerate() {
        if caches.len() != seq.len() {
            return Err(Error::TraceMismatch(format!(
                "layer {idx} trace covers {} steps, sequence has {}",
                caches.len(),
                seq.len()
            )));
        }
        let width = layer.input_dim() + layer.hidden_dim();
        if caches.iter().any(|c| c.a.len() != width || c.i.len() != layer.hidden_dim()) {
            return Err(Error::TraceMismatch(format!("layer {idx} cache shapes do not match the layer")));
        }
    }
    let d = net.input_dim();
    for (t, (cache, x)) in trace.caches[0].iter().zip(seq).enumerate() {
        if cache.a[..d] != x[..] {
            return Err(Error::TraceMismatch(format!("step {t} input differs from the traced input")));
        }
    }
    Ok(())
}

/// Exact gradient of `loss_mse(prediction, target)` with respect to every
/// parameter, with masked weight gradients zeroed.
pub fn backward_sequence(net: &StackedNetwork, trace: &ForwardTrace, seq: &[Vec64], target: f64) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    backward_into(net, trace, seq, target, &mut grads)?;
    Ok(grads)
}

/// Like [`backward_sequence`] but writes into a caller-owned buffer, which
/// is zeroed first.
pub fn backward_into(
    net: &StackedNetwork,
    trace: &ForwardTrace,
    seq: &[Vec64],
    target: f64,
    grads: &mut Gradients,
) -> Result<()> {
    check_trace(net, trace, seq)?;
    grads.fill_zero();

    let steps = seq.len();
    let h = net.hidden_dim();
    let d_pred = 2.0 * (trace.prediction - target);

    let top = &trace.caches[net.layers.len() - 1][steps - 1];
    for r in 0..h {
        grads.head_w[r] = d_pred * (top.o[r] * top.tanh_c[r]);
    }
    grads.head_b = d_pred;

    // Loss gradient arriving at each timestep's hidden output from above.
    let mut dh_above: Vec<Vec<f64>> = vec![vec![0.0; h]; steps];
    for (slot, &w) in dh_above[steps - 1].iter_mut().zip(net.head_w.iter()) {
        *slot = d_pred * w;
    }

    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let d = layer.input_dim();
        let width = d + h;
        let g = &mut grads.layers[idx];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dx_below: Vec<Vec<f64>> = vec![vec![0.0; d]; steps];
        let mut da_gates = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];

        for t in (0..steps).rev() {
            let cache = &trace.caches[idx][t];
            for r in 0..h {
                let dh = dh_above[t][r] + dh_next[r];
                let tc = cache.tanh_c[r];
                let (i, f, o, z) = (cache.i[r], cache.f[r], cache.o[r], cache.z[r]);
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[r];
                let d_f = dc * cache.c_prev[r];
                let d_i = dc * z;
                let d_z = dc * i;
                dc_next[r] = dc * f;
                da_gates[0][r] = d_i * i * (1.0 - i);
                da_gates[1][r] = d_f * f * (1.0 - f);
                da_gates[2][r] = d_o * o * (1.0 - o);
                da_gates[3][r] = d_z * (1.0 - z * z);
            }

            let weights = layer.weights.as_array();
            let dws = g.weights.as_array_mut();
            let dbs = g.biases.as_array_mut();
            for (((w_grad, b_grad), da), _) in dws.into_iter().zip(dbs).zip(&da_gates).zip(weights) {
                let wd = w_grad.data_mut();
                for r in 0..h {
                    let dar = da[r];
                    for (slot, &ak) in wd[r * width..(r + 1) * width].iter_mut().zip(cache.a.iter()) {
                        *slot += dar * ak;
                    }
                    b_grad[r] += da[r];
                }
            }

            // d a[k] = sum over gates, then rows, of W[r, k] * da[r]
            let mut da_input = vec![0.0; width];
            for (w, da) in weights.iter().zip(&da_gates) {
                let wd = w.data();
                for r in 0..h {
                    let dar = da[r];
                    for (slot, &wk) in da_input.iter_mut().zip(&wd[r * width..(r + 1) * width]) {
                        *slot += wk * dar;
                    }
                }
            }
            dx_below[t].copy_from_slice(&da_input[..d]);
            dh_next.copy_from_slice(&da_input[d..]);
        }
        dh_above = dx_below;
    }

    grads.apply_masks(net);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 20,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.epsilon, self.clip_norm];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("learning rate, epsilon and clip norm must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("beta1 and beta2 must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Bias-corrected Adam state over the canonical parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: TrainConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    pub fn new(net: &StackedNetwork, cfg: TrainConfig) -> Self {
        let shapes: Vec<usize> = Gradients::zeros_like(net).slices().iter().map(|s| s.len()).collect();
        Adam {
            cfg,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step(&mut self, net: &mut StackedNetwork, grads: &Gradients) {
        self.step += 1;
        let TrainConfig { learning_rate, beta1, beta2, epsilon, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        let params = param_slices_mut(net);
        for (((p, g), m), v) in params.into_iter().zip(grads.slices()).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        net.apply_masks();
    }
}

/// Called after each epoch with the epoch index, the current network and
/// the epoch's mean training loss.
pub trait EpochObserver {
    fn epoch_end(&mut self, epoch: usize, net: &StackedNetwork, mean_loss: f64);
}

impl<F: FnMut(usize, &StackedNetwork, f64)> EpochObserver for F {
    fn epoch_end(&mut self, epoch: usize, net: &StackedNetwork, mean_loss: f64) {
        self(epoch, net, mean_loss)
    }
}

struct NoObserver;

impl EpochObserver for NoObserver {
    fn epoch_end(&mut self, _: usize, _: &StackedNetwork, _: f64) {}
}

/// Mini-batch Adam on the mean batch squared error. Returns the trained
/// network and the mean training loss of every epoch.
pub fn train(net: StackedNetwork, dataset: &WindowedDataset, cfg: &TrainConfig) -> Result<(StackedNetwork, Vec<f64>)> {
    train_observed(net, dataset, cfg, &mut NoObserver)
}

pub fn train_observed(
    mut net: StackedNetwork,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<(StackedNetwork, Vec<f64>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    net.validate()?;

    let mut rng = rng_from(derive_seed(cfg.seed, &[TAG_SHUFFLE]));
    let mut adam = Adam::new(&net, *cfg);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut sample = Gradients::zeros_like(&net);
    let mut batch = Gradients::zeros_like(&net);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.fill_zero();
            let mut batch_loss = 0.0;
            for &k in chunk {
                let seq = &dataset.inputs[k];
                let target = dataset.targets[k];
                let (pred, trace) = forward_sequence(&net, seq)?;
                let loss = loss_mse(pred, target);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx, loss });
                }
                batch_loss += loss;
                backward_into(&net, &trace, seq, target, &mut sample)?;
                batch.add_assign(&sample);
            }
            epoch_loss += batch_loss;
            batch.scale(1.0 / chunk.len() as f64);
            batch.clip_global_norm(cfg.clip_norm);
            adam.step(&mut net, &batch);
        }
        let mean = epoch_loss / dataset.len() as f64;
        history.push(mean);
        observer.epoch_end(epoch, &net, mean);
    }
    Ok((net, history))
}

/// Relative error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn sequence_loss(net: &StackedNetwork, seq: &[Vec64], target: f64) -> Result<f64> {
    forward_sequence(net, seq).map(|(p, _)| loss_mse(p, target))
}

/// Outcome of comparing BPTT gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
}

/// Central-difference check of every unmasked parameter. Returns the
/// largest relative error against [`backward_sequence`].
pub fn grad_check(net: &StackedNetwork, seq: &[Vec64], target: f64, perturbation: f64) -> Result<f64> {
    grad_check_detailed(net, seq, target, perturbation).map(|g| g.max_relative_error)
}

pub fn grad_check_detailed(net: &StackedNetwork, seq: &[Vec64], target: f64, perturbation: f64) -> Result<GradCheck> {
    if perturbation.is_nan() || perturbation <= 0.0 {
        return Err(Error::Config(format!("perturbation must be positive, got {perturbation}")));
    }
    let (_, trace) = forward_sequence(net, seq)?;
    let analytic = backward_sequence(net, &trace, seq, target)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;

    let mut check =
        |probe: &mut StackedNetwork, get: &dyn Fn(&mut StackedNetwork) -> &mut f64, expected: f64| -> Result<()> {
            let orig = *get(probe);
            *get(probe) = orig + perturbation;
            let plus = sequence_loss(probe, seq, target)?;
            *get(probe) = orig - perturbation;
            let minus = sequence_loss(probe, seq, target)?;
            *get(probe) = orig;
            let numeric = (plus - minus) / (2.0 * perturbation);
            worst = worst.max(relative_error(numeric, expected));
            checked += 1;
            Ok(())
        };

    for (li, (layer, lg)) in net.layers.iter().zip(&analytic.layers).enumerate() {
        for gate in 0..4 {
            let mask = layer.mask.gates.as_array()[gate];
            let dw = lg.weights.as_array()[gate];
            for (k, &bit) in mask.bits.iter().enumerate() {
                if bit == 0 {
                    continue;
                }
                check(&mut probe, &|n| &mut gate_weights(&mut n.layers[li], gate).data_mut()[k], dw.data()[k])?;
            }
            let db = lg.biases.as_array()[gate];
            for r in 0..layer.hidden_dim() {
                check(&mut probe, &|n| &mut gate_biases(&mut n.layers[li], gate)[r], db[r])?;
            }
        }
    }
    for r in 0..net.hidden_dim() {
        check(&mut probe, &|n| &mut n.head_w[r], analytic.head_w[r])?;
    }
    check(&mut probe, &|n| &mut n.head_b, analytic.head_b)?;

    Ok(GradCheck { max_relative_error: worst, checked })
}

fn gate_weights(l: &mut CellParams, gate: usize) -> &mut Mat64 {
    l.weights.as_array_mut().into_iter().nth(gate).expect("gate index < 4")
}

fn gate_biases(l: &mut CellParams, gate: usize) -> &mut Vec64 {
    l.biases.as_array_mut().into_iter().nth(gate).expect("gate index < 4")
}
