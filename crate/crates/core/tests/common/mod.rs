//! Shared oracles for the integration tests.

#![allow(dead_code)]

use feag::features::SparseVec;
use feag::models::objectives::{loss_and_gradient, Objective};
use feag::models::{Mode, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod gradcheck;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sorted sparse vector with 1 to 4 entries in `[0, dim)`.
pub fn random_sparse(rng: &mut impl Rng, dim: usize) -> SparseVec {
    let mut idx: Vec<u32> = (0..rng.gen_range(1..=4))
        .map(|_| rng.gen_range(0..dim as u32))
        .collect();
    idx.sort_unstable();
    idx.dedup();
    SparseVec {
        dim,
        entries: idx.into_iter().map(|i| (i, rng.gen_range(1..=2) as f64)).collect(),
    }
}

/// Network with every parameter drawn uniformly from `[-scale, scale]`.
pub fn random_network(rng: &mut impl Rng, mode: Mode, dim: usize, n_heads: usize, scale: f64) -> Network {
    let mut net = Network::new(mode, dim, 3, n_heads, 0.1, rng.gen());
    for i in 0..net.param_count() {
        net.set_param(i, rng.gen_range(-scale..scale));
    }
    net
}

/// Central finite differences of `f` at every parameter.
pub fn numeric_gradient(net: &Network, f: impl Fn(&Network) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|i| {
            let v = net.param(i);
            probe.set_param(i, v + FD_STEP);
            let up = f(&probe);
            probe.set_param(i, v - FD_STEP);
            let down = f(&probe);
            probe.set_param(i, v);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest relative disagreement; components where both sides are below
/// `1e-7` in magnitude count as agreeing.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-7 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Relative error between an objective's analytic gradient and central
/// finite differences of its loss on batch `idx`.
pub fn objective_gradient_error(obj: &dyn Objective, net: &Network, idx: &[usize]) -> f64 {
    let (_, analytic) = loss_and_gradient(obj, net, idx);
    let numeric = numeric_gradient(net, |n| obj.batch(n, idx, 0, None));
    max_relative_error(&analytic, &numeric)
}
