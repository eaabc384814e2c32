//! A plain dense stacked LSTM used as a second implementation in tests.
//!
//! Weights are held as separate input (`wx`, H×D) and recurrent (`wh`, H×H)
//! matrices per gate. Pre-activations accumulate over the input columns and
//! then the recurrent columns, which is the row order of the concatenated
//! `[W_x | W_h]` matrix. Gate order is input, forget, output, cell.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod dd;

use rand::seq::SliceRandom;
use rand::Rng;

use rclstm::network::StackedNetwork;
use rclstm::numcore::{sigmoid, tanh_act, Vec64};
use rclstm::seeding::{derive_seed, rng_from, TAG_SHUFFLE};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub d: usize,
    pub h: usize,
    pub wx: [Vec<f64>; 4],
    pub wh: [Vec<f64>; 4],
    pub b: [Vec<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLstm {
    pub layers: Vec<DenseLayer>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub tc: Vec<f64>,
    pub h: Vec<f64>,
}

impl DenseLayer {
    fn zeros(d: usize, h: usize) -> Self {
        let m = |n: usize| [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        DenseLayer { d, h, wx: m(h * d), wh: m(h * h), b: m(h) }
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Step {
        let (d, h) = (self.d, self.h);
        let mut pre = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for g in 0..4 {
            for r in 0..h {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.wx[g][r * d + k] * x[k];
                }
                for k in 0..h {
                    acc += self.wh[g][r * h + k] * h_prev[k];
                }
                pre[g][r] = acc + self.b[g][r];
            }
        }
        let i: Vec<f64> = pre[0].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = pre[1].iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<f64> = pre[2].iter().map(|&v| sigmoid(v)).collect();
        let z: Vec<f64> = pre[3].iter().map(|&v| tanh_act(v)).collect();
        let c: Vec<f64> = (0..h).map(|r| f[r] * c_prev[r] + i[r] * z[r]).collect();
        let tc: Vec<f64> = c.iter().map(|&v| tanh_act(v)).collect();
        let hn: Vec<f64> = (0..h).map(|r| o[r] * tc[r]).collect();
        Step { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, o, z, c, tc, h: hn }
    }
}

impl DenseLstm {
    /// Copies the weights of `net` into split input/recurrent form. Masks
    /// are dropped; masked entries are zero in `net` already.
    pub fn from_network(net: &StackedNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let (d, h) = (l.input_dim(), l.hidden_dim());
                let mut out = DenseLayer::zeros(d, h);
                for (g, w) in l.weights.as_array().into_iter().enumerate() {
                    for r in 0..h {
                        let row = w.row(r);
                        out.wx[g][r * d..(r + 1) * d].copy_from_slice(&row[..d]);
                        out.wh[g][r * h..(r + 1) * h].copy_from_slice(&row[d..]);
                    }
                }
                for (g, b) in l.biases.as_array().into_iter().enumerate() {
                    out.b[g].copy_from_slice(b);
                }
                out
            })
            .collect();
        DenseLstm { layers, head_w: net.head_w.to_vec(), head_b: net.head_b }
    }

    pub fn zeros_like(&self) -> Self {
        DenseLstm {
            layers: self.layers.iter().map(|l| DenseLayer::zeros(l.d, l.h)).collect(),
            head_w: vec![0.0; self.head_w.len()],
            head_b: 0.0,
        }
    }

    /// Every scalar in the order: per layer, each gate's rows as `[x | h]`,
    /// then the four bias vectors; then head weights and head bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            for g in 0..4 {
                for r in 0..l.h {
                    out.extend_from_slice(&l.wx[g][r * l.d..(r + 1) * l.d]);
                    out.extend_from_slice(&l.wh[g][r * l.h..(r + 1) * l.h]);
                }
            }
            for g in 0..4 {
                out.extend_from_slice(&l.b[g]);
            }
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn flat_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = Vec::new();
        for l in &mut self.layers {
            let (d, h) = (l.d, l.h);
            for (wx, wh) in l.wx.iter_mut().zip(l.wh.iter_mut()) {
                let mut xs = wx.chunks_mut(d.max(1));
                let mut hs = wh.chunks_mut(h);
                for _ in 0..h {
                    if d > 0 {
                        out.extend(xs.next().unwrap().iter_mut());
                    }
                    out.extend(hs.next().unwrap().iter_mut());
                }
            }
            for b in l.b.iter_mut() {
                out.extend(b.iter_mut());
            }
        }
        out.extend(self.head_w.iter_mut());
        out.push(&mut self.head_b);
        out
    }

    /// Runs the stack from zero states; returns the prediction and every
    /// layer's steps.
    pub fn forward(&self, seq: &[Vec<f64>]) -> (f64, Vec<Vec<Step>>) {
        let mut all: Vec<Vec<Step>> = Vec::with_capacity(self.layers.len());
        let mut inputs: Vec<Vec<f64>> = seq.to_vec();
        for l in &self.layers {
            let mut h = vec![0.0; l.h];
            let mut c = vec![0.0; l.h];
            let mut steps = Vec::with_capacity(seq.len());
            for x in &inputs {
                let s = l.step(x, &h, &c);
                h = s.h.clone();
                c = s.c.clone();
                steps.push(s);
            }
            inputs = steps.iter().map(|s| s.h.clone()).collect();
            all.push(steps);
        }
        let top = &all.last().unwrap().last().unwrap().h;
        let mut acc = 0.0;
        for (w, v) in self.head_w.iter().zip(top) {
            acc += w * v;
        }
        (acc + self.head_b, all)
    }

    /// Gradient of `(prediction - target)^2`.
    pub fn gradients(&self, seq: &[Vec<f64>], target: f64) -> (f64, DenseLstm) {
        let (pred, all) = self.forward(seq);
        let mut g = self.zeros_like();
        let n = seq.len();
        let e = pred - target;
        let d_pred = 2.0 * e;

        let top = &all.last().unwrap()[n - 1];
        for r in 0..self.head_w.len() {
            g.head_w[r] = d_pred * top.h[r];
        }
        g.head_b = d_pred;

        let mut dh_above: Vec<Vec<f64>> = vec![vec![0.0; self.head_w.len()]; n];
        for r in 0..self.head_w.len() {
            dh_above[n - 1][r] = d_pred * self.head_w[r];
        }

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let (d, h) = (layer.d, layer.h);
            let gl = &mut g.layers[li];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dx_below = vec![vec![0.0; d]; n];
            for t in (0..n).rev() {
                let s = &all[li][t];
                let mut dpre = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
                for r in 0..h {
                    let dh = dh_above[t][r] + dh_next[r];
                    let d_o = dh * s.tc[r];
                    let dc = dh * s.o[r] * (1.0 - s.tc[r] * s.tc[r]) + dc_next[r];
                    let d_f = dc * s.c_prev[r];
                    let d_i = dc * s.z[r];
                    let d_z = dc * s.i[r];
                    dc_next[r] = dc * s.f[r];
                    dpre[0][r] = d_i * s.i[r] * (1.0 - s.i[r]);
                    dpre[1][r] = d_f * s.f[r] * (1.0 - s.f[r]);
                    dpre[2][r] = d_o * s.o[r] * (1.0 - s.o[r]);
                    dpre[3][r] = d_z * (1.0 - s.z[r] * s.z[r]);
                }
                for gi in 0..4 {
                    for r in 0..h {
                        for k in 0..d {
                            gl.wx[gi][r * d + k] += dpre[gi][r] * s.x[k];
                        }
                        for k in 0..h {
                            gl.wh[gi][r * h + k] += dpre[gi][r] * s.h_prev[k];
                        }
                        gl.b[gi][r] += dpre[gi][r];
                    }
                }
                let mut dx = vec![0.0; d];
                let mut dhp = vec![0.0; h];
                for gi in 0..4 {
                    for r in 0..h {
                        for k in 0..d {
                            dx[k] += layer.wx[gi][r * d + k] * dpre[gi][r];
                        }
                        for k in 0..h {
                            dhp[k] += layer.wh[gi][r * h + k] * dpre[gi][r];
                        }
                    }
                }
                dx_below[t] = dx;
                dh_next = dhp;
            }
            dh_above = dx_below;
        }
        (e * e, g)
    }
}

/// Mini-batch trainer mirroring the documented update: per-sample gradients
/// summed in batch order, scaled by the batch size, clipped to a global
/// norm, then a bias-corrected Adam step.
pub struct DenseTrainer {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl DenseTrainer {
    pub fn new(net: &DenseLstm, lr: f64, clip: f64) -> Self {
        let n = net.flat().len();
        DenseTrainer { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update on `batch`; returns the summed squared error.
    pub fn step(&mut self, net: &mut DenseLstm, batch: &[(&[Vec<f64>], f64)]) -> f64 {
        let mut sum = vec![0.0; self.m.len()];
        let mut loss = 0.0;
        for (seq, target) in batch {
            let (l, g) = net.gradients(seq, *target);
            loss += l;
            for (s, x) in sum.iter_mut().zip(g.flat()) {
                *s += x;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for s in &mut sum {
            *s *= scale;
        }
        let mut sq = 0.0;
        for s in &sum {
            sq += s * s;
        }
        let norm: f64 = f64::sqrt(sq);
        if norm > self.clip {
            let k = self.clip / norm;
            for s in &mut sum {
                *s *= k;
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in net.flat_mut().into_iter().zip(&sum).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        loss
    }

    /// Shuffled epochs with the library's shuffle stream; returns the mean
    /// loss per epoch.
    pub fn fit(
        &mut self,
        net: &mut DenseLstm,
        inputs: &[Vec<Vec<f64>>],
        targets: &[f64],
        batch: usize,
        epochs: usize,
        seed: u64,
    ) -> Vec<f64> {
        let mut rng = rng_from(derive_seed(seed, &[TAG_SHUFFLE]));
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut history = Vec::new();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let b: Vec<(&[Vec<f64>], f64)> = chunk.iter().map(|&k| (&inputs[k][..], targets[k])).collect();
                total += self.step(net, &b);
            }
            history.push(total / inputs.len() as f64);
        }
        history
    }
}

pub fn to_vec64(seq: &[Vec<f64>]) -> Vec<Vec64> {
    seq.iter().map(|x| Vec64(x.clone())).collect()
}

pub fn random_seq(rng: &mut impl Rng, len: usize, d: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
