//! Double-double arithmetic (roughly 29 significant digits) and a stacked
//! network forward pass evaluated in it. Used to take finite differences
//! whose rounding noise is far below the gradients being checked.

use std::ops::{Add, Div, Mul, Neg, Sub};

use rclstm::network::StackedNetwork;
use rclstm::numcore::Vec64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale_pow2(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    pub fn exp(self) -> Dd {
        let k = (self.hi / LN2.hi).round();
        // |r| <= ln2 / 2, then shrink by 2^10 and square back up.
        let r = (self - LN2 * Dd::from(k)).scale_pow2(-10);
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..=12 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale_pow2(k as i32)
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    pub fn tanh(self) -> Dd {
        let neg = self.hi < 0.0;
        let a = if neg { -self } else { self };
        let e = (Dd::from(-2.0) * a).exp();
        let t = (Dd::ONE - e) / (Dd::ONE + e);
        if neg {
            -t
        } else {
            t
        }
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let x = quick_two_sum(s, e + t);
        quick_two_sum(x.hi, x.lo + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p);
        quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

/// Squared error of `net` on `(seq, target)` with parameter `k` of the
/// canonical buffer `slice` shifted by `delta`, evaluated in double-double.
/// Buffer order: per layer the four gate matrices then the four biases,
/// then head weights and head bias.
pub fn loss_shifted(net: &StackedNetwork, seq: &[Vec64], target: f64, slice: usize, k: usize, delta: f64) -> Dd {
    let param =
        |s: usize, idx: usize, v: f64| if s == slice && idx == k { Dd::from(v) + Dd::from(delta) } else { Dd::from(v) };

    let mut inputs: Vec<Vec<Dd>> = seq.iter().map(|x| x.iter().map(|&v| Dd::from(v)).collect()).collect();
    for (li, layer) in net.layers.iter().enumerate() {
        let h = layer.hidden_dim();
        let width = layer.input_dim() + h;
        let weights = layer.weights.as_array();
        let biases = layer.biases.as_array();
        let mut hs = vec![Dd::ZERO; h];
        let mut cs = vec![Dd::ZERO; h];
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let a: Vec<Dd> = x.iter().chain(hs.iter()).copied().collect();
            let mut pre = [vec![Dd::ZERO; h], vec![Dd::ZERO; h], vec![Dd::ZERO; h], vec![Dd::ZERO; h]];
            for g in 0..4 {
                let w = weights[g].data();
                for r in 0..h {
                    let mut acc = Dd::ZERO;
                    for c in 0..width {
                        acc = acc + param(li * 8 + g, r * width + c, w[r * width + c]) * a[c];
                    }
                    pre[g][r] = acc + param(li * 8 + 4 + g, r, biases[g][r]);
                }
            }
            for r in 0..h {
                let i = pre[0][r].sigmoid();
                let f = pre[1][r].sigmoid();
                let o = pre[2][r].sigmoid();
                let z = pre[3][r].tanh();
                cs[r] = f * cs[r] + i * z;
                hs[r] = o * cs[r].tanh();
            }
            outputs.push(hs.clone());
        }
        inputs = outputs;
    }
    let head = net.layers.len() * 8;
    let top = inputs.last().expect("non-empty sequence");
    let mut pred = param(head + 1, 0, net.head_b);
    for (r, hr) in top.iter().enumerate() {
        pred = pred + param(head, r, net.head_w[r]) * *hr;
    }
    let e = pred - Dd::from(target);
    e * e
}
