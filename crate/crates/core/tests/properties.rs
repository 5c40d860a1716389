use gradbound::bounds::{
    assemble_bound, combine_prior_draws, global_onaverage_complexity, per_w_complexity, BoundInput, BoundKind, SigmaY,
};
use gradbound::distributions::kl_diag_gaussian;
use gradbound::entropy::{entropy_decomposition_exact, functional_entropy, rademacher_lsi_gap, FiniteMixture};
use gradbound::models::{read_checkpoint, write_checkpoint, LossKind};
use gradbound::stats::{log_mean_exp, mean};
use gradbound::{DiagonalGaussian, LabeledMixture, Network, Seed};
use proptest::prelude::*;

fn input(lambda: f64, m: usize, delta: f64) -> BoundInput {
    BoundInput::new(lambda, m, delta, 0.01, SigmaY::Scalar(1.0)).unwrap()
}

proptest! {
    #[test]
    fn rhs_is_the_sum_of_its_terms(
        risk in 0.0..5.0f64,
        c in 0.0..1e3f64,
        kl in 0.0..1e3f64,
        lambda in 0.1..1e3f64,
        delta in 1e-4..0.5f64,
    ) {
        let i = input(lambda, 1000, delta);
        let r = assemble_bound(BoundKind::PriorExpectation, risk, c, kl, &i).unwrap();
        let expected = risk + (c + kl + (1.0 / delta).ln()) / lambda;
        prop_assert!((r.rhs - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        prop_assert!(r.rhs >= risk);
        let more = assemble_bound(BoundKind::PriorExpectation, risk, c + 1.0, kl, &i).unwrap();
        prop_assert!(more.rhs > r.rhs);
        let tighter = assemble_bound(BoundKind::PriorExpectation, risk, c, kl, &i.with_lambda(lambda * 2.0)).unwrap();
        prop_assert!(tighter.gap_term() < r.gap_term());
    }

    #[test]
    fn single_draw_prior_matches_global_bound(
        b in 0.0..5.0f64,
        g in 0.0..2.0f64,
        sigma in 0.1..3.0f64,
        m in 1usize..5000,
        frac in 0.01..1.0f64,
    ) {
        let lambda = frac * m as f64;
        let mut i = BoundInput::new(lambda, m, 0.01, 0.01, SigmaY::Scalar(sigma)).unwrap();
        i.b = Some(b);
        i.g = Some(g);
        let global = global_onaverage_complexity(&i).unwrap();
        let single = combine_prior_draws(&[(b, g * sigma * sigma)], lambda, m).value;
        prop_assert!((global - single).abs() <= 1e-10 * global.max(1.0));
    }

    #[test]
    fn prior_average_dominates_mean_exponent(
        stats in prop::collection::vec((0.0..3.0f64, 0.0..1.0f64), 1..20),
        lambda in 1.0..100.0f64,
    ) {
        let c = combine_prior_draws(&stats, lambda, 100);
        let exps: Vec<f64> = c.draws.iter().map(|d| d.exponent).collect();
        prop_assert!(c.value >= mean(&exps) - 1e-9);
        let max = exps.iter().copied().fold(0.0, f64::max);
        prop_assert!(c.value <= max + 1e-9);
        prop_assert!((c.value - log_mean_exp(&exps)).abs() == 0.0);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        mq in prop::collection::vec(-3.0..3.0f64, 1..6),
        vq in 0.01..4.0f64,
        vp in 0.01..4.0f64,
    ) {
        let q = DiagonalGaussian::isotropic(mq.clone(), vq).unwrap();
        let p = DiagonalGaussian::centered(mq.len(), vp).unwrap();
        prop_assert!(kl_diag_gaussian(&q, &p).unwrap() >= 0.0);
        prop_assert!(kl_diag_gaussian(&q, &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_is_nonnegative_and_homogeneous(
        vals in prop::collection::vec(0.0..10.0f64, 2..30),
        scale in 0.1..10.0f64,
    ) {
        let w = vec![1.0 / vals.len() as f64; vals.len()];
        let e = functional_entropy(&vals, &w).unwrap();
        prop_assert!(e >= -1e-12);
        let scaled: Vec<f64> = vals.iter().map(|v| v * scale).collect();
        let es = functional_entropy(&scaled, &w).unwrap();
        prop_assert!((es - scale * e).abs() <= 1e-9 * es.abs().max(1.0));
    }

    #[test]
    fn rademacher_inequality_holds(
        table in prop::collection::vec(-4.0..4.0f64, 64),
        d in 1usize..=6,
    ) {
        let f = |z: &[f64]| {
            let idx = z.iter().enumerate().fold(0usize, |a, (i, v)| a | (usize::from(*v > 0.0) << i));
            table[idx]
        };
        let r = rademacher_lsi_gap(f, d).unwrap();
        prop_assert!(r.lhs <= r.rhs);
    }

    #[test]
    fn decomposition_exact_on_atoms(
        atoms in prop::collection::vec((-2.0..2.0f64, 0.1..0.9f64), 4),
        coef in -1.0..1.0f64,
    ) {
        let mix = FiniteMixture::new(
            vec![0.25, 0.75],
            vec![
                vec![(vec![atoms[0].0], atoms[0].1), (vec![atoms[1].0], 1.0 - atoms[0].1)],
                vec![(vec![atoms[2].0], atoms[2].1), (vec![atoms[3].0], 1.0 - atoms[2].1)],
            ],
        ).unwrap();
        let d = entropy_decomposition_exact(|s| (coef * s.x[0] + 0.3 * s.y as f64).exp(), &mix).unwrap();
        prop_assert!(d.residual().abs() <= 1e-12 * d.total.abs().max(1.0));
    }

    #[test]
    fn checkpoints_round_trip(hidden in prop::collection::vec(1usize..6, 0..3), seed in any::<u64>()) {
        let net = Network::mlp(3, &hidden, 2).unwrap().init_uniform(Seed(seed));
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        prop_assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn losses_are_nonnegative(z in prop::collection::vec(-50.0..50.0f64, 2..6), y in 0usize..2) {
        for kind in [LossKind::Nll, LossKind::MulticlassHinge] {
            prop_assert!(kind.value(&z, y).unwrap() >= 0.0);
        }
    }
}

#[test]
fn point_mass_prior_reduces_to_global_bound() {
    let dist = LabeledMixture::symmetric(3, 4, 1.5, 1.0).unwrap();
    let arch = Network::mlp(4, &[5], 3).unwrap();
    let w = arch.init_uniform(Seed(2));
    let prior = DiagonalGaussian::isotropic(w.weights().to_vec(), 0.0).unwrap();
    let mut i = BoundInput::new(50.0, 100, 0.01, 0.01, SigmaY::Scalar(1.0)).unwrap();
    i.mc.n_prior = 1;
    i.mc.n_data = 500;
    let c = per_w_complexity(&arch, &prior, &dist, &i).unwrap();
    i.b = Some(c.draws[0].b);
    i.g = Some(c.draws[0].g);
    let global = global_onaverage_complexity(&i).unwrap();
    assert!((c.value - global).abs() <= 1e-12 * global);
}
