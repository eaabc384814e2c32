//! A single random-connectivity LSTM memory block.
//!
//! The four functional layers (input gate, forget gate, output gate and the
//! tanh input activation) each read the concatenation `a = [x, h_prev]`
//! through an `H x (D + H)` weight matrix. Which entries of those matrices
//! exist is decided once by a seeded random graph: every potential
//! connection draws `p ~ U(0, 1)` and is kept iff `p >= T`, with the
//! threshold `T = 1 - connectivity`. Masked weights are held at exactly zero.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{sigmoid, tanh_act, Mat64, Vec64};
use crate::seeding::rng_from;

/// One value per functional layer, in the fixed order input, forget,
/// output, cell-input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gates<T> {
    pub input: T,
    pub forget: T,
    pub output: T,
    pub cell: T,
}

impl<T> Gates<T> {
    pub fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        Gates { input: f(0), forget: f(1), output: f(2), cell: f(3) }
    }

    pub fn as_array(&self) -> [&T; 4] {
        [&self.input, &self.forget, &self.output, &self.cell]
    }

    pub fn as_array_mut(&mut self) -> [&mut T; 4] {
        [&mut self.input, &mut self.forget, &mut self.output, &mut self.cell]
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Gates<U> {
        Gates { input: f(&self.input), forget: f(&self.forget), output: f(&self.output), cell: f(&self.cell) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    connectivity: f64,
    seed: u64,
}

impl MaskSpec {
    pub fn new(connectivity: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&connectivity) {
            return Err(Error::InvalidConnectivity(connectivity));
        }
        Ok(MaskSpec { connectivity, seed })
    }

    pub fn connectivity(&self) -> f64 {
        self.connectivity
    }

    /// Draw threshold: a connection exists where its draw is `>=` this.
    pub fn threshold(&self) -> f64 {
        1.0 - self.connectivity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Binary `rows x cols` matrix, row-major, entries 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
}

impl BinaryMatrix {
    pub fn filled(rows: usize, cols: usize, bit: u8) -> Self {
        BinaryMatrix { rows, cols, bits: vec![bit; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMask {
    pub gates: Gates<BinaryMatrix>,
}

impl ConnectivityMask {
    pub fn full(input_dim: usize, hidden_dim: usize) -> Self {
        let cols = input_dim + hidden_dim;
        ConnectivityMask { gates: Gates::from_fn(|_| BinaryMatrix::filled(hidden_dim, cols, 1)) }
    }

    pub fn empty(input_dim: usize, hidden_dim: usize) -> Self {
        let cols = input_dim + hidden_dim;
        ConnectivityMask { gates: Gates::from_fn(|_| BinaryMatrix::filled(hidden_dim, cols, 0)) }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gates.input.rows
    }

    pub fn input_dim(&self) -> usize {
        self.gates.input.cols - self.gates.input.rows
    }

    pub fn potential_connections(&self) -> usize {
        self.gates.as_array().iter().map(|m| m.bits.len()).sum()
    }

    pub fn ones(&self) -> usize {
        self.gates.as_array().iter().map(|m| m.ones()).sum()
    }

    /// Fraction of potential connections that exist.
    pub fn realized_connectivity(&self) -> f64 {
        self.ones() as f64 / self.potential_connections() as f64
    }
}

/// Samples the random-graph mask for one memory block. Draw order is gate
/// by gate, then row-major within each gate.
pub fn generate_mask(spec: &MaskSpec, input_dim: usize, hidden_dim: usize) -> ConnectivityMask {
    if spec.connectivity == 0.0 {
        return ConnectivityMask::empty(input_dim, hidden_dim);
    }
    let threshold = spec.threshold();
    let cols = input_dim + hidden_dim;
    let mut rng = rng_from(spec.seed);
    let gates = Gates::from_fn(|_| {
        let bits = (0..hidden_dim * cols)
            .map(|_| {
                let p: f64 = rng.gen();
                u8::from(p >= threshold)
            })
            .collect();
        BinaryMatrix { rows: hidden_dim, cols, bits }
    });
    ConnectivityMask { gates }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub weights: Gates<Mat64>,
    pub biases: Gates<Vec64>,
    pub mask: ConnectivityMask,
}

impl CellParams {
    pub fn input_dim(&self) -> usize {
        self.mask.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.mask.hidden_dim()
    }

    /// Unmasked weights plus all biases.
    pub fn trainable_count(&self) -> usize {
        self.mask.ones() + 4 * self.hidden_dim()
    }

    /// True when every masked weight is exactly zero.
    pub fn mask_respected(&self) -> bool {
        self.weights
            .as_array()
            .iter()
            .zip(self.mask.gates.as_array())
            .all(|(w, m)| w.data().iter().zip(&m.bits).all(|(&v, &b)| b == 1 || v == 0.0))
    }

    /// Zero every weight whose mask entry is 0, in place.
    pub fn apply_mask_in_place(&mut self) {
        let masks = self.mask.gates.as_array();
        for (w, m) in self.weights.as_array_mut().into_iter().zip(masks) {
            for (v, &b) in w.data_mut().iter_mut().zip(&m.bits) {
                if b == 0 {
                    *v = 0.0;
                }
            }
        }
    }
}

pub fn apply_mask(params: &CellParams) -> CellParams {
    let mut out = params.clone();
    out.apply_mask_in_place();
    out
}

/// Unmasked weights uniform in `±1/sqrt(hidden_dim)`, forget bias 1, other
/// biases 0.
pub fn init_params(mask: &ConnectivityMask, seed: u64, input_dim: usize, hidden_dim: usize) -> Result<CellParams> {
    if mask.input_dim() != input_dim || mask.hidden_dim() != hidden_dim {
        return Err(Error::Config(format!(
            "mask is for D={}, H={} but params requested D={input_dim}, H={hidden_dim}",
            mask.input_dim(),
            mask.hidden_dim()
        )));
    }
    let scale = 1.0 / (hidden_dim as f64).sqrt();
    let cols = input_dim + hidden_dim;
    let mut rng = rng_from(seed);
    let mut weights = Gates::from_fn(|_| {
        let data = (0..hidden_dim * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
        Mat64::from_vec(hidden_dim, cols, data).expect("sized above")
    });
    // The draw above ignores the mask so that the stream does not depend on it.
    for (w, m) in weights.as_array_mut().into_iter().zip(mask.gates.as_array()) {
        for (v, &b) in w.data_mut().iter_mut().zip(&m.bits) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
    let biases = Gates {
        input: Vec64::zeros(hidden_dim),
        forget: Vec64::filled(hidden_dim, 1.0),
        output: Vec64::zeros(hidden_dim),
        cell: Vec64::zeros(hidden_dim),
    };
    Ok(CellParams { weights, biases, mask: mask.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec64,
    pub c: Vec64,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        CellState { h: Vec64::zeros(hidden_dim), c: Vec64::zeros(hidden_dim) }
    }
}

/// Values from one forward step that backpropagation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    /// `[x, h_prev]`
    pub a: Vec64,
    pub i: Vec64,
    pub f: Vec64,
    pub o: Vec64,
    pub z: Vec64,
    pub c_prev: Vec64,
    pub c: Vec64,
    pub tanh_c: Vec64,
}

/// One masked LSTM step on `a = [x, h_prev]`:
///
/// ```text
/// i = σ(W_i a + b_i)    f = σ(W_f a + b_f)    o = σ(W_o a + b_o)
/// z = tanh(W_c a + b_c)
/// c' = f ⊙ c + i ⊙ z    h' = o ⊙ tanh(c')
/// ```
pub fn forward_step(params: &CellParams, state: &CellState, x: &[f64]) -> Result<(CellState, GateCache)> {
    let d = params.input_dim();
    let h = params.hidden_dim();
    if x.len() != d {
        return Err(Error::Shape(crate::numcore::ShapeError::Length { left: d, right: x.len() }));
    }
    if state.h.len() != h || state.c.len() != h {
        return Err(Error::Shape(crate::numcore::ShapeError::Length { left: h, right: state.h.len() }));
    }

    let mut a = Vec::with_capacity(d + h);
    a.extend_from_slice(x);
    a.extend_from_slice(&state.h);

    let w = &params.weights;
    let b = &params.biases;

    let mut i = Vec::with_capacity(h);
    let mut f = Vec::with_capacity(h);
    let mut o = Vec::with_capacity(h);
    let mut z = Vec::with_capacity(h);
    let mut c = Vec::with_capacity(h);
    let mut tanh_c = Vec::with_capacity(h);
    let mut h_new = Vec::with_capacity(h);
    for r in 0..h {
        let [pi, pf, po, pz] = dot4([w.input.row(r), w.forget.row(r), w.output.row(r), w.cell.row(r)], &a);
        let ir = sigmoid(pi + b.input[r]);
        let fr = sigmoid(pf + b.forget[r]);
        let or = sigmoid(po + b.output[r]);
        let zr = tanh_act(pz + b.cell[r]);
        let cr = fr * state.c[r] + ir * zr;
        let tc = tanh_act(cr);
        i.push(ir);
        f.push(fr);
        o.push(or);
        z.push(zr);
        c.push(cr);
        tanh_c.push(tc);
        h_new.push(or * tc);
    }

    let next = CellState { h: Vec64(h_new), c: Vec64(c.clone()) };
    let cache = GateCache {
        a: Vec64(a),
        i: Vec64(i),
        f: Vec64(f),
        o: Vec64(o),
        z: Vec64(z),
        c_prev: state.c.clone(),
        c: Vec64(c),
        tanh_c: Vec64(tanh_c),
    };
    Ok((next, cache))
}

/// Four inner products against the same vector, each accumulated left to
/// right exactly as [`dot`] does.
#[inline]
fn dot4(rows: [&[f64]; 4], v: &[f64]) -> [f64; 4] {
    let n = v.len();
    let (r0, r1, r2, r3) = (&rows[0][..n], &rows[1][..n], &rows[2][..n], &rows[3][..n]);
    let mut acc = [0.0; 4];
    for k in 0..n {
        let x = v[k];
        acc[0] += r0[k] * x;
        acc[1] += r1[k] * x;
        acc[2] += r2[k] * x;
        acc[3] += r3[k] * x;
    }
    acc
}
