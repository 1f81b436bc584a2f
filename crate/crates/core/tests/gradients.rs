//! Analytic gradients against central finite differences, both network modes.

mod common;

use common::gradcheck::{self, MODES, TOL};
use feag::models::Mode;

fn check(name: &str, f: fn(Mode) -> f64) {
    for mode in MODES {
        let err = f(mode);
        assert!(err < TOL, "{name} {mode:?}: relative error {err:e}");
    }
}

#[test]
fn bce_gradient() {
    check("bce", gradcheck::bce);
}

#[test]
fn two_head_gradient() {
    check("two-head", gradcheck::two_head);
}

#[test]
fn riesz_loss_gradient() {
    check("riesz", gradcheck::riesz);
}

#[test]
fn regularized_penalty_gradient() {
    check("penalty", gradcheck::penalty);
}

#[test]
fn augmented_gradient() {
    check("augmented", gradcheck::augmented);
}
