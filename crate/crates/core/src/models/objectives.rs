//! Mini-batch objectives. Each returns the mean batch loss and, when asked,
//! accumulates its gradient into a [`Grad`].

use rand::seq::SliceRandom;

use super::network::{Forward, Grad, Network};
use crate::features::SparseVec;
use crate::rng;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a bit.
pub fn bce_logit(z: f64, y: bool) -> f64 {
    softplus(z) - if y { z } else { 0.0 }
}

pub trait Objective {
    /// Number of examples the trainer shuffles and batches.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn begin_epoch(&mut self, _epoch: usize, _n_batches: usize) {}

    fn batch(&self, net: &Network, idx: &[usize], batch_no: usize, grad: Option<&mut Grad>) -> f64;
}

/// Loss and dense gradient of one batch, for verification.
pub fn loss_and_gradient(obj: &dyn Objective, net: &Network, idx: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = net.zero_grad();
    let loss = obj.batch(net, idx, 0, Some(&mut grad));
    (loss, grad.into_dense())
}

/// Logistic loss on head 0.
#[derive(Debug, Clone)]
pub struct BceObjective {
    pub inputs: Vec<SparseVec>,
    pub targets: Vec<bool>,
}

impl BceObjective {
    /// Sum of `weight * bce` over `idx`, with gradients scaled the same way.
    fn weighted(&self, net: &Network, idx: &[usize], weight: f64, mut grad: Option<&mut Grad>) -> f64 {
        let mut total = 0.0;
        let mut d_out = vec![0.0; net.n_heads()];
        for &i in idx {
            let fwd = net.forward(&self.inputs[i]);
            let z = fwd.out[0];
            total += weight * bce_logit(z, self.targets[i]);
            if let Some(g) = grad.as_deref_mut() {
                d_out[0] = weight * (sigmoid(z) - f64::from(u8::from(self.targets[i])));
                net.backward(&self.inputs[i], &fwd, &d_out, g);
            }
        }
        total
    }
}

impl Objective for BceObjective {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn batch(&self, net: &Network, idx: &[usize], _batch_no: usize, grad: Option<&mut Grad>) -> f64 {
        self.weighted(net, idx, 1.0 / idx.len() as f64, grad)
    }
}

/// BCE on the outcome head plus `lambda_rr` times the Riesz loss
/// `-2 (alpha(X,1) - alpha(X,0)) + alpha(Z)^2` on the multiplier head.
#[derive(Debug, Clone)]
pub struct TwoHeadObjective {
    pub treated: Vec<SparseVec>,
    pub untreated: Vec<SparseVec>,
    pub t: Vec<bool>,
    pub y: Vec<bool>,
    pub lambda_rr: f64,
}

impl Objective for TwoHeadObjective {
    fn len(&self) -> usize {
        self.t.len()
    }

    fn batch(&self, net: &Network, idx: &[usize], _batch_no: usize, mut grad: Option<&mut Grad>) -> f64 {
        let scale = 1.0 / idx.len() as f64;
        let lam = self.lambda_rr;
        let mut total = 0.0;
        for &i in idx {
            let f1 = net.forward(&self.treated[i]);
            let f0 = net.forward(&self.untreated[i]);
            let t = self.t[i];
            let fz = if t { &f1 } else { &f0 };
            let (g_logit, alpha_z) = (fz.out[0], fz.out[1]);
            let (a1, a0) = (f1.out[1], f0.out[1]);
            total += bce_logit(g_logit, self.y[i]) + lam * (-2.0 * (a1 - a0) + alpha_z * alpha_z);
            if let Some(g) = grad.as_deref_mut() {
                let d_g = sigmoid(g_logit) - f64::from(u8::from(self.y[i]));
                let d1 = [
                    if t { d_g * scale } else { 0.0 },
                    lam * scale * (-2.0 + if t { 2.0 * alpha_z } else { 0.0 }),
                ];
                let d0 = [
                    if t { 0.0 } else { d_g * scale },
                    lam * scale * (2.0 + if t { 0.0 } else { 2.0 * alpha_z }),
                ];
                net.backward(&self.treated[i], &f1, &d1, g);
                net.backward(&self.untreated[i], &f0, &d0, g);
            }
        }
        total * scale
    }
}

/// Originals at weight 1 plus counterfactual samples at weight `lambda`.
///
/// Originals are batched by the trainer exactly as plain BCE training would
/// batch them; each epoch the augmented samples are shuffled on their own
/// stream and dealt out in equal chunks across the original batches.
#[derive(Debug, Clone)]
pub struct AugmentedObjective {
    pub originals: BceObjective,
    pub augmented: BceObjective,
    pub lambda: f64,
    seed: u64,
    order: Vec<usize>,
    n_batches: usize,
}

impl AugmentedObjective {
    pub fn new(originals: BceObjective, augmented: BceObjective, lambda: f64, seed: u64) -> Self {
        AugmentedObjective {
            originals,
            augmented,
            lambda,
            seed,
            order: Vec::new(),
            n_batches: 1,
        }
    }

    fn chunk(&self, batch_no: usize) -> &[usize] {
        let a = self.order.len();
        let lo = batch_no * a / self.n_batches;
        let hi = (batch_no + 1) * a / self.n_batches;
        &self.order[lo..hi]
    }
}

impl Objective for AugmentedObjective {
    fn len(&self) -> usize {
        self.originals.len()
    }

    fn begin_epoch(&mut self, epoch: usize, n_batches: usize) {
        self.n_batches = n_batches.max(1);
        self.order = (0..self.augmented.len()).collect();
        self.order
            .shuffle(&mut rng::stream(self.seed, rng::STREAM_AUG, epoch as u64));
    }

    fn batch(&self, net: &Network, idx: &[usize], batch_no: usize, mut grad: Option<&mut Grad>) -> f64 {
        let mut loss = self
            .originals
            .weighted(net, idx, 1.0 / idx.len() as f64, grad.as_deref_mut());
        if self.lambda != 0.0 && !self.order.is_empty() {
            let chunk = self.chunk(batch_no);
            if !chunk.is_empty() {
                loss += self
                    .augmented
                    .weighted(net, chunk, self.lambda / chunk.len() as f64, grad);
            }
        }
        loss
    }
}

/// Counterfactual pair of inputs for one feature.
#[derive(Debug, Clone)]
pub struct EffectTarget {
    pub treated: Vec<SparseVec>,
    pub untreated: Vec<SparseVec>,
    pub tau: f64,
}

/// BCE plus `lambda / m * sum_j (mean_batch[f(X^j,1) - f(X^j,0)] - tau_j)^2`
/// with `f` on the probability scale.
#[derive(Debug, Clone)]
pub struct RegularizedObjective {
    pub bce: BceObjective,
    pub targets: Vec<EffectTarget>,
    pub lambda: f64,
}

impl RegularizedObjective {
    /// The penalty term alone for a batch.
    pub fn penalty(&self, net: &Network, idx: &[usize]) -> f64 {
        self.penalty_impl(net, idx, None)
    }

    fn penalty_impl(&self, net: &Network, idx: &[usize], mut grad: Option<&mut Grad>) -> f64 {
        if self.targets.is_empty() {
            return 0.0;
        }
        let m = self.targets.len() as f64;
        let b = idx.len() as f64;
        let mut total = 0.0;
        for target in &self.targets {
            let pairs: Vec<(Forward, Forward)> = idx
                .iter()
                .map(|&i| (net.forward(&target.treated[i]), net.forward(&target.untreated[i])))
                .collect();
            let diff: f64 = pairs
                .iter()
                .map(|(f1, f0)| sigmoid(f1.out[0]) - sigmoid(f0.out[0]))
                .sum::<f64>()
                / b;
            let gap = diff - target.tau;
            total += self.lambda / m * gap * gap;
            if let Some(g) = grad.as_deref_mut() {
                let coef = self.lambda / m * 2.0 * gap / b;
                let mut d = vec![0.0; net.n_heads()];
                for (&i, (f1, f0)) in idx.iter().zip(&pairs) {
                    let p1 = sigmoid(f1.out[0]);
                    let p0 = sigmoid(f0.out[0]);
                    d[0] = coef * p1 * (1.0 - p1);
                    net.backward(&target.treated[i], f1, &d, g);
                    d[0] = -coef * p0 * (1.0 - p0);
                    net.backward(&target.untreated[i], f0, &d, g);
                }
            }
        }
        total
    }
}

impl Objective for RegularizedObjective {
    fn len(&self) -> usize {
        self.bce.len()
    }

    fn batch(&self, net: &Network, idx: &[usize], batch_no: usize, mut grad: Option<&mut Grad>) -> f64 {
        let loss = self.bce.batch(net, idx, batch_no, grad.as_deref_mut());
        if self.lambda == 0.0 {
            return loss;
        }
        loss + self.penalty_impl(net, idx, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_bce_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((bce_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_logit(-800.0, true).is_finite());
        assert!(bce_logit(800.0, false).is_finite());
        assert!((bce_logit(3.0, true) - (-sigmoid(3.0).ln())).abs() < 1e-12);
    }
}
