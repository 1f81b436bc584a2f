//! A sparse-input network: an affine input layer over hashed features,
//! optionally followed by a tanh hidden layer and dense heads.
//!
//! Parameters are stored as `theta = scale * values` so decoupled weight
//! decay costs O(1) per step and gradient updates only touch the rows of
//! features present in the batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseVec;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    Mlp,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(Mode::Linear),
            "mlp" => Ok(Mode::Mlp),
            _ => Err(format!("unknown mode {s:?} (expected linear or mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    mode: Mode,
    dim: usize,
    /// Outputs of the input layer: `n_heads` in linear mode, the hidden width otherwise.
    width: usize,
    n_heads: usize,
    values: Vec<f64>,
    scale: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Network {
    /// Heads start at zero; the hidden layer (mlp mode) starts uniform in
    /// `[-init_scale, init_scale]`.
    pub fn new(mode: Mode, dim: usize, hidden: usize, n_heads: usize, init_scale: f64, seed: u64) -> Self {
        let width = match mode {
            Mode::Linear => n_heads,
            Mode::Mlp => hidden,
        };
        let len = match mode {
            Mode::Linear => dim * width + width,
            Mode::Mlp => dim * width + width + width * n_heads + n_heads,
        };
        let mut values = vec![0.0; len];
        if mode == Mode::Mlp && init_scale > 0.0 {
            let mut r = rng::stream(seed, rng::STREAM_INIT, 0);
            for v in &mut values[..dim * width] {
                *v = r.gen_range(-init_scale..=init_scale);
            }
        }
        Network {
            mode,
            dim,
            width,
            n_heads,
            values,
            scale: 1.0,
        }
    }

    pub(crate) fn from_parts(mode: Mode, dim: usize, hidden: usize, n_heads: usize, params: Vec<f64>) -> Option<Self> {
        let net = Network::new(mode, dim, hidden, n_heads, 0.0, 0);
        (net.values.len() == params.len()).then_some(Network { values: params, ..net })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        match self.mode {
            Mode::Linear => 0,
            Mode::Mlp => self.width,
        }
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn param(&self, i: usize) -> f64 {
        self.scale * self.values[i]
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        self.values[i] = value / self.scale;
    }

    pub fn params(&self) -> Vec<f64> {
        self.values.iter().map(|v| self.scale * v).collect()
    }

    fn in_bias(&self) -> usize {
        self.dim * self.width
    }

    fn out_weights(&self) -> usize {
        self.in_bias() + self.width
    }

    fn out_bias(&self) -> usize {
        self.out_weights() + self.width * self.n_heads
    }

    /// Weight of input feature `index` on head `head` (linear mode only).
    pub fn input_weight(&self, index: u32, head: usize) -> Option<f64> {
        (self.mode == Mode::Linear).then(|| self.param(index as usize * self.width + head))
    }

    pub fn forward(&self, x: &SparseVec) -> Forward {
        debug_assert_eq!(x.dim, self.dim);
        let w = self.width;
        let b = self.in_bias();
        let mut pre: Vec<f64> = self.values[b..b + w].to_vec();
        for &(f, xv) in &x.entries {
            let row = &self.values[f as usize * w..f as usize * w + w];
            for (p, r) in pre.iter_mut().zip(row) {
                *p += xv * r;
            }
        }
        for p in &mut pre {
            *p *= self.scale;
        }
        match self.mode {
            Mode::Linear => Forward {
                hidden: Vec::new(),
                out: pre,
            },
            Mode::Mlp => {
                let hidden: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();
                let n = self.n_heads;
                let ow = self.out_weights();
                let ob = self.out_bias();
                let mut out: Vec<f64> = self.values[ob..ob + n].to_vec();
                for (j, h) in hidden.iter().enumerate() {
                    let row = &self.values[ow + j * n..ow + j * n + n];
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += h * r;
                    }
                }
                for o in &mut out {
                    *o *= self.scale;
                }
                Forward { hidden, out }
            }
        }
    }

    pub fn outputs(&self, x: &SparseVec) -> Vec<f64> {
        self.forward(x).out
    }

    /// Accumulates `d loss / d theta` given `d loss / d out`.
    pub fn backward(&self, x: &SparseVec, fwd: &Forward, d_out: &[f64], grad: &mut Grad) {
        let w = self.width;
        let d_pre: Vec<f64> = match self.mode {
            Mode::Linear => d_out.to_vec(),
            Mode::Mlp => {
                let n = self.n_heads;
                let ow = self.out_weights();
                let ob = self.out_bias();
                for (j, h) in fwd.hidden.iter().enumerate() {
                    for (k, d) in d_out.iter().enumerate() {
                        grad.values[ow + j * n + k] += h * d;
                    }
                }
                for (k, d) in d_out.iter().enumerate() {
                    grad.values[ob + k] += d;
                }
                fwd.hidden
                    .iter()
                    .enumerate()
                    .map(|(j, h)| {
                        let row = &self.values[ow + j * n..ow + j * n + n];
                        let dh: f64 = row.iter().zip(d_out).map(|(r, d)| self.scale * r * d).sum();
                        dh * (1.0 - h * h)
                    })
                    .collect()
            }
        };
        let b = self.in_bias();
        for (k, d) in d_pre.iter().enumerate() {
            grad.values[b + k] += d;
        }
        for &(f, xv) in &x.entries {
            grad.touch(f);
            let row = &mut grad.values[f as usize * w..f as usize * w + w];
            for (g, d) in row.iter_mut().zip(&d_pre) {
                *g += xv * d;
            }
        }
    }

    pub fn zero_grad(&self) -> Grad {
        Grad {
            values: vec![0.0; self.values.len()],
            touched: Vec::new(),
            mark: vec![false; self.dim],
            width: self.width,
            dense_from: self.in_bias(),
        }
    }

    /// `theta <- (1 - lr * wd) * theta - lr * grad`, then clears the gradient.
    pub fn step(&mut self, grad: &mut Grad, lr: f64, weight_decay: f64) {
        self.scale *= 1.0 - lr * weight_decay;
        if self.scale < 1e-6 {
            let s = self.scale;
            for v in &mut self.values {
                *v *= s;
            }
            self.scale = 1.0;
        }
        let c = lr / self.scale;
        let w = self.width;
        for &f in &grad.touched {
            let lo = f as usize * w;
            for (v, g) in self.values[lo..lo + w].iter_mut().zip(&mut grad.values[lo..lo + w]) {
                *v -= c * *g;
                *g = 0.0;
            }
            grad.mark[f as usize] = false;
        }
        grad.touched.clear();
        let from = grad.dense_from;
        for (v, g) in self.values[from..].iter_mut().zip(&mut grad.values[from..]) {
            *v -= c * *g;
            *g = 0.0;
        }
    }
}

/// Gradient buffer with the set of touched input rows.
#[derive(Debug, Clone)]
pub struct Grad {
    values: Vec<f64>,
    touched: Vec<u32>,
    mark: Vec<bool>,
    width: usize,
    dense_from: usize,
}

impl Grad {
    fn touch(&mut self, f: u32) {
        if !self.mark[f as usize] {
            self.mark[f as usize] = true;
            self.touched.push(f);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_dense(self) -> Vec<f64> {
        self.values
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(dim: usize, e: &[(u32, f64)]) -> SparseVec {
        SparseVec {
            dim,
            entries: e.to_vec(),
        }
    }

    #[test]
    fn zero_heads_give_zero_outputs() {
        for mode in [Mode::Linear, Mode::Mlp] {
            let net = Network::new(mode, 16, 4, 2, 0.1, 1);
            assert_eq!(net.outputs(&sv(16, &[(3, 1.0), (7, 1.0)])), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn step_applies_decoupled_decay() {
        let mut net = Network::new(Mode::Linear, 8, 0, 1, 0.0, 0);
        net.set_param(2, 1.0);
        let x = sv(8, &[(2, 1.0)]);
        let fwd = net.forward(&x);
        let mut g = net.zero_grad();
        net.backward(&x, &fwd, &[0.5], &mut g);
        net.step(&mut g, 0.1, 0.01);
        assert!((net.param(2) - (0.999 - 0.05)).abs() < 1e-12);
        // bias got the same gradient
        assert!((net.param(8) - (-0.05)).abs() < 1e-12);
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scale_renormalizes() {
        let mut net = Network::new(Mode::Linear, 4, 0, 1, 0.0, 0);
        net.set_param(1, 2.0);
        let mut g = net.zero_grad();
        for _ in 0..200 {
            net.step(&mut g, 0.5, 0.2);
        }
        let expected = 2.0 * 0.9f64.powi(200);
        assert!((net.param(1) / expected - 1.0).abs() < 1e-10);
    }
}
