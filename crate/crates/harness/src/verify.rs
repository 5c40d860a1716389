//! The stock identity suite run by `gradbound verify`.

use gradbound::bounds::{gaussian_quadratic_mgf, gaussian_quadratic_mgf_mc, QuadraticMgfSampler};
use gradbound::entropy::{
    entropy_decomposition_check, entropy_decomposition_exact, gaussian_lsi_gap, herbst_check, rademacher_lsi_gap,
    FiniteMixture, DEFAULT_GRID_POINTS,
};
use gradbound::{DiagonalGaussian, LabeledMixture, Sample, Seed};
use rand::Rng;
use serde::Serialize;

use crate::error::Result;

pub const DEFAULT_VERIFY_SAMPLES: usize = 200_000;
pub const SIGMA_MULTIPLE: f64 = 3.0;
pub const ABSOLUTE_FLOOR: f64 = 1e-4;
/// Extra slack for the trapezoid error of the Herbst integral.
pub const QUADRATURE_FLOOR: f64 = 1e-3;
pub const EXACT_TOL: f64 = 1e-12;

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// `|lhs − rhs|`, or the largest violation for enumerated checks.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn check(name: impl Into<String>, discrepancy: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        pass: discrepancy <= tolerance,
        discrepancy,
        tolerance,
        detail,
    }
}

fn gaussian_lsi(n: usize, seed: Seed) -> Result<Vec<CheckResult>> {
    let g = DiagonalGaussian::centered(1, 1.0)?;
    let mut out = Vec::new();
    for (i, lambda) in [0.5f64, 1.0, 2.0].into_iter().enumerate() {
        let r = gaussian_lsi_gap(|z| lambda * z[0], |_| vec![lambda], &g, n, seed.child(i as u64))?;
        let exact = lambda * lambda / 2.0 * (lambda * lambda / 2.0).exp();
        out.push(check(
            format!("gaussian_lsi_linear_{lambda}"),
            r.gap().abs(),
            SIGMA_MULTIPLE * r.combined_std_error() + ABSOLUTE_FLOOR,
            format!("lhs={} rhs={}", r.lhs, r.rhs),
        ));
        out.push(check(
            format!("gaussian_lsi_linear_{lambda}_closed_form"),
            (r.lhs - exact).abs().max((r.rhs - exact).abs()),
            SIGMA_MULTIPLE * r.lhs_se.max(r.rhs_se) + ABSOLUTE_FLOOR,
            format!("exact={exact}"),
        ));
    }
    Ok(out)
}

fn herbst(n: usize, seed: Seed) -> Result<Vec<CheckResult>> {
    let normal = LabeledMixture::uniform(vec![DiagonalGaussian::centered(1, 1.0)?])?;
    let c = herbst_check(|_| 0.7, &normal, 4.0, 4, DEFAULT_GRID_POINTS, n, seed.child(0))?;
    let sq = herbst_check(
        |s| s.x[0] * s.x[0],
        &normal,
        4.0,
        4,
        DEFAULT_GRID_POINTS,
        n,
        seed.child(1),
    )?;
    let exact = 4.0 + 4.0 * (1.0 / 3f64.sqrt()).ln();
    Ok(vec![
        check(
            "herbst_constant",
            c.diff().abs(),
            SIGMA_MULTIPLE * c.combined_std_error() + QUADRATURE_FLOOR,
            format!("lhs={} rhs={}", c.lhs.value, c.rhs.value),
        ),
        check(
            "herbst_square",
            sq.diff().abs(),
            SIGMA_MULTIPLE * sq.combined_std_error() + QUADRATURE_FLOOR,
            format!("lhs={} rhs={}", sq.lhs.value, sq.rhs.value),
        ),
        check(
            "herbst_square_closed_form",
            (sq.lhs.value - exact).abs(),
            SIGMA_MULTIPLE * sq.lhs.std_error + ABSOLUTE_FLOOR,
            format!("lhs={} exact={exact}", sq.lhs.value),
        ),
    ])
}

fn decomposition(n: usize, seed: Seed) -> Result<Vec<CheckResult>> {
    let mut rng = seed.rng(0);
    let mut worst: f64 = 0.0;
    for k in [2usize, 3, 5] {
        for _ in 0..20 {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let atoms = (0..k)
                .map(|_| {
                    let w: f64 = rng.random_range(0.1..0.9);
                    vec![
                        (vec![rng.random_range(-3.0..3.0)], w),
                        (vec![rng.random_range(-3.0..3.0)], 1.0 - w),
                    ]
                })
                .collect();
            let fin = FiniteMixture::new(raw.iter().map(|r| r / z).collect(), atoms)?;
            let (a, b, c): (f64, f64, f64) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..2.0),
            );
            let d = entropy_decomposition_exact(|s: &Sample| (a * s.x[0] + b * s.y as f64).exp() + c, &fin)?;
            worst = worst.max(d.residual().abs() / d.total.abs().max(1.0));
        }
    }
    let mix = LabeledMixture::uniform(
        (0..3)
            .map(|y| DiagonalGaussian::new(vec![y as f64 - 1.0, 0.5], vec![0.5 + 0.2 * y as f64, 1.0]))
            .collect::<gradbound::Result<_>>()?,
    )?;
    let d = entropy_decomposition_check(
        |s| (0.6 * s.x[0] - 0.3 * s.x[1] + 0.2 * s.y as f64).exp(),
        &mix,
        n,
        seed.child(1),
    )?;
    Ok(vec![
        check(
            "entropy_decomposition_exact",
            worst,
            EXACT_TOL,
            "60 functions on finite mixtures, k ∈ {2, 3, 5}".into(),
        ),
        check(
            "entropy_decomposition_sampled",
            d.residual().abs(),
            SIGMA_MULTIPLE * d.combined_std_error() + ABSOLUTE_FLOOR,
            format!("total={} within={} between={}", d.total, d.within_sum, d.between),
        ),
    ])
}

fn rademacher(seed: Seed) -> Result<Vec<CheckResult>> {
    let mut rng = seed.rng(0);
    let mut worst = f64::NEG_INFINITY;
    for d in [1usize, 4, 8] {
        for _ in 0..20 {
            let table: Vec<f64> = (0..1usize << d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = |z: &[f64]| {
                let idx = z
                    .iter()
                    .enumerate()
                    .fold(0usize, |a, (i, v)| a | (usize::from(*v > 0.0) << i));
                table[idx]
            };
            let r = rademacher_lsi_gap(f, d)?;
            worst = worst.max(r.lhs - r.rhs);
        }
    }
    Ok(vec![check(
        "rademacher_lsi",
        worst.max(0.0),
        0.0,
        format!("max lhs − rhs = {worst:.3e} over 60 functions, d ∈ {{1, 4, 8}}"),
    )])
}

fn quadratic_mgf(n: usize, seed: Seed) -> Result<Vec<CheckResult>> {
    let mut rng = seed.rng(0);
    let mut out = Vec::new();
    for t in 0..5u64 {
        let var: f64 = rng.random_range(0.1..3.0);
        let r: f64 = rng.random_range(0.02..=0.8);
        let c = r / (2.0 * var);
        let dims = rng.random_range(1..=5usize);
        let exact = gaussian_quadratic_mgf(c, var, dims)?.exp();
        let est = gaussian_quadratic_mgf_mc(c, var, dims, n, QuadraticMgfSampler::WidenedProposal, seed.child(t))?;
        out.push(check(
            format!("gaussian_quadratic_mgf_{t}"),
            (est.value - exact).abs(),
            SIGMA_MULTIPLE * est.std_error + ABSOLUTE_FLOOR,
            format!("c={c} σ²={var} n={dims}: mc={} exact={exact}", est.value),
        ));
    }
    Ok(out)
}

/// Runs every identity check with `n` Monte Carlo samples each.
pub fn run_suite(seed: Seed, n: usize) -> Result<Vec<CheckResult>> {
    let mut out = gaussian_lsi(n, seed.derive("gaussian-lsi"))?;
    out.extend(herbst(n, seed.derive("herbst"))?);
    out.extend(decomposition(n, seed.derive("decomposition"))?);
    out.extend(rademacher(seed.derive("rademacher"))?);
    out.extend(quadratic_mgf(n, seed.derive("quadratic-mgf"))?);
    Ok(out)
}
