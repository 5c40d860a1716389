#![allow(dead_code)]

use gradbound::models::{LossKind, Network};
use gradbound::Seed;
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const KINK_EXCLUSION: f64 = 1e-6;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

pub fn architectures() -> Vec<(&'static str, Network)> {
    vec![
        ("linear", Network::linear(6, 3).unwrap()),
        ("mlp", Network::mlp(6, &[8], 3).unwrap()),
        ("conv", Network::cnn(1, 6, 6, &[2], 3, 5, 3).unwrap()),
    ]
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ProbeSummary {
    pub probes: usize,
    pub resampled: usize,
    pub worst_input: f64,
    pub worst_weight: f64,
}

impl ProbeSummary {
    pub fn worst(&self) -> f64 {
        self.worst_input.max(self.worst_weight)
    }
}

/// Central-difference check of input and weight gradients at `n` random points.
/// Points within `KINK_EXCLUSION` of a kink, or whose piecewise pattern changes
/// inside the difference stencil, are redrawn.
pub fn gradient_probes(arch: &Network, kind: LossKind, n: usize, seed: Seed) -> ProbeSummary {
    let mut out = ProbeSummary::default();
    let mut attempt = 0u64;
    while out.probes < n {
        attempt += 1;
        assert!(attempt < 50 * n as u64, "too many probes rejected near kinks");
        let net = arch.init_uniform(seed.derive("weights").child(attempt));
        let mut rng = seed.derive("inputs").rng(attempt);
        let x: Vec<f64> = (0..arch.input_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let y = rng.random_range(0..arch.classes());
        let (sig, margin) = net.kink_profile(&x, y, kind).unwrap();
        if margin < KINK_EXCLUSION {
            out.resampled += 1;
            continue;
        }
        let same = |n: &Network, x: &[f64]| n.kink_profile(x, y, kind).unwrap().0 == sig;

        let (_, gx) = net.loss_and_input_gradient(&x, y, kind).unwrap();
        let mut fx = Vec::with_capacity(x.len());
        let mut ok = true;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += FD_STEP;
            xm[i] -= FD_STEP;
            if !same(&net, &xp) || !same(&net, &xm) {
                ok = false;
                break;
            }
            fx.push((net.loss(&xp, y, kind).unwrap() - net.loss(&xm, y, kind).unwrap()) / (2.0 * FD_STEP));
        }
        if !ok {
            out.resampled += 1;
            continue;
        }

        let batch = [gradbound::Sample::new(x.clone(), y)];
        let (_, gw) = net.loss_and_weight_gradient(&batch, kind).unwrap();
        let mut fw = Vec::with_capacity(gw.len());
        for j in 0..gw.len() {
            let mut wp = net.weights().to_vec();
            let mut wm = wp.clone();
            wp[j] += FD_STEP;
            wm[j] -= FD_STEP;
            let np = net.with_weights(wp).unwrap();
            let nm = net.with_weights(wm).unwrap();
            if !same(&np, &x) || !same(&nm, &x) {
                ok = false;
                break;
            }
            fw.push((np.loss(&x, y, kind).unwrap() - nm.loss(&x, y, kind).unwrap()) / (2.0 * FD_STEP));
        }
        if !ok {
            out.resampled += 1;
            continue;
        }
        out.worst_input = out.worst_input.max(rel_err(&gx, &fx));
        out.worst_weight = out.worst_weight.max(rel_err(&gw, &fw));
        out.probes += 1;
    }
    out
}
