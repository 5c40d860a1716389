mod common;

use common::{architectures, gradient_probes};
use gradbound::models::LossKind;
use gradbound::Seed;

fn check(kind: LossKind) {
    for (name, arch) in architectures() {
        let s = gradient_probes(&arch, kind, 20, Seed(11));
        assert!(
            s.worst() <= 1e-4,
            "{name}/{}: worst relative error {:e}",
            kind.name(),
            s.worst()
        );
    }
}

#[test]
fn nll_gradients_match_finite_differences() {
    check(LossKind::Nll);
}

#[test]
fn hinge_gradients_match_finite_differences() {
    check(LossKind::MulticlassHinge);
}

#[test]
fn hinge_gradient_vanishes_on_flat_region() {
    let net = gradbound::Network::linear(2, 2)
        .unwrap()
        .with_weights(vec![5.0, 0.0, -5.0, 0.0])
        .unwrap();
    let g = net.input_gradient(&[1.0, 0.3], 0, LossKind::MulticlassHinge).unwrap();
    assert_eq!(g, vec![0.0, 0.0]);
}
