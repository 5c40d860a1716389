//! Functional entropy, moment-generating functions, the Herbst integral
//! identity, and numeric checks of the Gaussian and Rademacher log-Sobolev
//! inequalities.
//!
//! Monte Carlo estimates are plug-in estimates on one sample set. Their
//! standard errors come from per-sample influence values (the infinitesimal
//! jackknife), so any smooth function of sample means gets an error bar
//! without resampling.

use serde::{Deserialize, Serialize};

use crate::distributions::{sample_gaussian, sample_mixture, DiagonalGaussian, LabeledMixture, Sample};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::stats::{mean, relative_entropy_term, std_error, xlogx};

/// Largest dimension accepted by [`rademacher_lsi_gap`] (2^20 points).
pub const MAX_RADEMACHER_DIM: usize = 20;

/// Default number of quadrature points for [`herbst_rhs`].
pub const DEFAULT_GRID_POINTS: usize = 64;

/// A Monte Carlo entropy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// A scalar Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `M(α) = E[e^{−αℓ}]` on a grid of α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Exact entropy `E[F ln F] − E[F] ln E[F]` of a finite distribution, with `0 ln 0 = 0`.
pub fn functional_entropy(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!(
            "value[{i}] = {} is negative or not finite",
            values[i]
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(format!("weight[{i}] = {} is invalid", weights[i])));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    let m: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    if m == 0.0 {
        return Ok(0.0);
    }
    // Σ w (v/m) ln(v/m) − (v/m) + 1, scaled by m; each term is ≥ 0
    let ent = m * values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * relative_entropy_term(v / m))
        .sum::<f64>();
    Ok(ent)
}

/// Plug-in entropy of nonnegative sample values with its influence-function standard error.
fn entropy_of_values(values: &[f64]) -> EntropyEstimate {
    let n = values.len();
    let m = mean(values);
    if m == 0.0 {
        return EntropyEstimate {
            value: 0.0,
            std_error: 0.0,
            n_samples: n,
        };
    }
    let value = m * values.iter().map(|v| relative_entropy_term(v / m)).sum::<f64>() / n as f64;
    let lnm = m.ln();
    let infl: Vec<f64> = values.iter().map(|&v| xlogx(v) - (lnm + 1.0) * v).collect();
    EntropyEstimate {
        value,
        std_error: std_error(&infl),
        n_samples: n,
    }
}

fn evaluate_nonneg<F>(f: &F, samples: &[Sample], what: &str) -> Result<Vec<f64>>
where
    F: Fn(&Sample) -> f64,
{
    samples
        .iter()
        .map(|s| {
            let v = f(s);
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::eval(format!(
                    "{what} returned {v} at sample x = {:?}, y = {}",
                    s.x, s.y
                )))
            }
        })
        .collect()
}

/// Monte Carlo estimate of `Ent_D[f]` from `n` mixture draws.
pub fn functional_entropy_mc<F>(f: F, dist: &LabeledMixture, n: usize, seed: Seed) -> Result<EntropyEstimate>
where
    F: Fn(&Sample) -> f64,
{
    if n < 2 {
        return Err(Error::invalid("entropy estimation needs n ≥ 2"));
    }
    let samples = sample_mixture(dist, n, seed)?;
    let values = evaluate_nonneg(&f, &samples, "f")?;
    Ok(entropy_of_values(&values))
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::invalid("empty α grid"));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::invalid("α grid must be finite and nonnegative"));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("α grid must be strictly increasing"));
    }
    Ok(())
}

/// `M(α) = E_D[e^{−α ℓ}]` estimated on one shared sample set for every α.
pub fn mgf_curve<L>(loss: L, dist: &LabeledMixture, alphas: &[f64], n: usize, seed: Seed) -> Result<MgfCurve>
where
    L: Fn(&Sample) -> f64,
{
    check_alphas(alphas)?;
    let samples = sample_mixture(dist, n, seed)?;
    let losses = evaluate_nonneg(&loss, &samples, "loss")?;
    Ok(mgf_curve_from_losses(&losses, alphas))
}

pub(crate) fn mgf_curve_from_losses(losses: &[f64], alphas: &[f64]) -> MgfCurve {
    let (values, std_errors) = alphas
        .iter()
        .map(|&a| {
            let f: Vec<f64> = losses.iter().map(|l| (-a * l).exp()).collect();
            (mean(&f), std_error(&f))
        })
        .unzip();
    MgfCurve {
        alphas: alphas.to_vec(),
        values,
        std_errors,
    }
}

/// Quadrature nodes on `[0, upper]`: zero, a geometric run near zero, then a uniform run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub points: Vec<f64>,
}

impl QuadratureGrid {
    /// `n_points` nodes: 0, then `n_points/4` geometric nodes on
    /// `[upper·10⁻³, upper/16]`, then uniform nodes up to `upper`.
    pub fn geometric_uniform(upper: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid("quadrature grid needs at least 2 points"));
        }
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::invalid(format!(
                "quadrature upper limit {upper} must be positive"
            )));
        }
        if n_points < 8 {
            let pts = (0..n_points)
                .map(|i| upper * i as f64 / (n_points - 1) as f64)
                .collect();
            return Ok(Self { points: pts });
        }
        let n_geo = n_points / 4;
        let lo = upper * 1e-3;
        let hi = upper / 16.0;
        let ratio = (hi / lo).powf(1.0 / (n_geo - 1) as f64);
        let mut pts = vec![0.0];
        pts.extend((0..n_geo).map(|i| lo * ratio.powi(i as i32)));
        let n_uni = n_points - 1 - n_geo;
        pts.extend((1..=n_uni).map(|i| hi + (upper - hi) * i as f64 / n_uni as f64));
        *pts.last_mut().unwrap() = upper;
        Ok(Self { points: pts })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("quadrature grid needs at least 2 points"));
        }
        check_alphas(&points)?;
        Ok(Self { points })
    }

    pub fn upper(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let p = &self.points;
        let mut w = vec![0.0; p.len()];
        for i in 0..p.len() - 1 {
            let h = p[i + 1] - p[i];
            w[i] += h / 2.0;
            w[i + 1] += h / 2.0;
        }
        w
    }
}

fn check_lambda_m(lambda: f64, m: usize) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("λ = {lambda} must be positive")));
    }
    if m == 0 {
        return Err(Error::invalid("m must be ≥ 1"));
    }
    Ok(())
}

/// `log E_S[e^{λ(L_D − L_S)}] = λ·L_D + m·log M(λ/m)` from loss values.
pub fn herbst_lhs_from_losses(losses: &[f64], lambda: f64, m: usize) -> Estimate {
    let mf = m as f64;
    let a = lambda / mf;
    let l_d = mean(losses);
    let f: Vec<f64> = losses.iter().map(|l| (-a * l).exp()).collect();
    let mgf = mean(&f);
    let infl: Vec<f64> = losses
        .iter()
        .zip(&f)
        .map(|(l, fi)| lambda * l + mf * fi / mgf)
        .collect();
    Estimate {
        value: lambda * l_d + mf * mgf.ln(),
        std_error: std_error(&infl),
    }
}

/// Left side of the Herbst identity for a fixed model, from `n` mixture draws.
pub fn herbst_lhs<L>(loss: L, dist: &LabeledMixture, lambda: f64, m: usize, n: usize, seed: Seed) -> Result<Estimate>
where
    L: Fn(&Sample) -> f64,
{
    check_lambda_m(lambda, m)?;
    let samples = sample_mixture(dist, n, seed)?;
    let losses = evaluate_nonneg(&loss, &samples, "loss")?;
    Ok(herbst_lhs_from_losses(&losses, lambda, m))
}

/// Right side of the Herbst identity with its integrand values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerbstIntegral {
    pub value: f64,
    pub std_error: f64,
    pub grid: Vec<f64>,
    /// `Ent[e^{−αℓ}] / (α² E[e^{−αℓ}])` at each grid point; the α = 0 entry is `Var(ℓ)/2`.
    pub integrand: Vec<f64>,
}

/// `λ ∫₀^{λ/m} Ent[e^{−αℓ}]/(α² E[e^{−αℓ}]) dα` by trapezoid quadrature on `grid`.
pub fn herbst_rhs_from_losses(losses: &[f64], lambda: f64, grid: &QuadratureGrid) -> HerbstIntegral {
    let n = losses.len();
    let l_mean = mean(losses);
    let weights = grid.trapezoid_weights();
    let mut integrand = Vec::with_capacity(grid.points.len());
    let mut infl = vec![0.0; n];

    for (&alpha, &w) in grid.points.iter().zip(&weights) {
        if alpha == 0.0 {
            // limit α → 0 of the integrand is Var(ℓ)/2
            let var = losses.iter().map(|l| (l - l_mean).powi(2)).sum::<f64>() / n as f64;
            integrand.push(var / 2.0);
            for (acc, l) in infl.iter_mut().zip(losses) {
                *acc += w * (l - l_mean).powi(2) / 2.0;
            }
            continue;
        }
        let f: Vec<f64> = losses.iter().map(|l| (-alpha * l).exp()).collect();
        let ent = entropy_of_values(&f).value;
        let mgf = mean(&f);
        let a2 = alpha * alpha;
        integrand.push(ent / (a2 * mgf));
        // A = mean(F ln F): ∂g/∂A = 1/(α²M), ∂g/∂M = −(M + A)/(α²M²)
        let big_a = ent + xlogx(mgf);
        let da = w / (a2 * mgf);
        let dm = -w * (mgf + big_a) / (a2 * mgf * mgf);
        for ((acc, fi), l) in infl.iter_mut().zip(&f).zip(losses) {
            *acc += da * (-alpha * l) * fi + dm * fi;
        }
    }
    let value = lambda * integrand.iter().zip(&weights).map(|(g, w)| g * w).sum::<f64>();
    HerbstIntegral {
        value,
        std_error: lambda * std_error(&infl),
        grid: grid.points.clone(),
        integrand,
    }
}

/// Right side of the Herbst identity, estimated on `n` mixture draws.
pub fn herbst_rhs<L>(
    loss: L,
    dist: &LabeledMixture,
    lambda: f64,
    m: usize,
    grid: &QuadratureGrid,
    n: usize,
    seed: Seed,
) -> Result<HerbstIntegral>
where
    L: Fn(&Sample) -> f64,
{
    check_lambda_m(lambda, m)?;
    if grid.points.len() < 2 {
        return Err(Error::invalid("quadrature grid needs at least 2 points"));
    }
    let upper = lambda / m as f64;
    if grid.points[0] != 0.0 || (grid.upper() - upper).abs() > 1e-12 * upper.max(1.0) {
        return Err(Error::invalid(format!(
            "quadrature grid must span [0, λ/m] = [0, {upper}]"
        )));
    }
    let samples = sample_mixture(dist, n, seed)?;
    let losses = evaluate_nonneg(&loss, &samples, "loss")?;
    Ok(herbst_rhs_from_losses(&losses, lambda, grid))
}

/// Both sides of the Herbst identity on one common sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerbstCheck {
    pub lhs: Estimate,
    pub rhs: HerbstIntegral,
}

impl HerbstCheck {
    pub fn diff(&self) -> f64 {
        self.lhs.value - self.rhs.value
    }

    pub fn combined_std_error(&self) -> f64 {
        self.lhs.std_error.hypot(self.rhs.std_error)
    }
}

pub fn herbst_check<L>(
    loss: L,
    dist: &LabeledMixture,
    lambda: f64,
    m: usize,
    grid_points: usize,
    n: usize,
    seed: Seed,
) -> Result<HerbstCheck>
where
    L: Fn(&Sample) -> f64,
{
    check_lambda_m(lambda, m)?;
    let grid = QuadratureGrid::geometric_uniform(lambda / m as f64, grid_points)?;
    let samples = sample_mixture(dist, n, seed)?;
    let losses = evaluate_nonneg(&loss, &samples, "loss")?;
    Ok(HerbstCheck {
        lhs: herbst_lhs_from_losses(&losses, lambda, m),
        rhs: herbst_rhs_from_losses(&losses, lambda, &grid),
    })
}

/// Monte Carlo estimates of both sides of a log-Sobolev inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsiGap {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_se: f64,
    pub rhs_se: f64,
    /// Standard error of `rhs − lhs` on the common sample set.
    pub diff_se: f64,
}

impl LsiGap {
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn combined_std_error(&self) -> f64 {
        self.lhs_se.hypot(self.rhs_se)
    }
}

fn spot_check_gradient<F, G>(f: &F, grad_f: &G, z: &[f64]) -> Result<()>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let g = grad_f(z);
    if g.len() != z.len() {
        return Err(Error::invalid(format!(
            "gradient has length {} for a {}-dimensional input",
            g.len(),
            z.len()
        )));
    }
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-5 * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        let fd = (fp - fm) / (2.0 * h);
        if (fd - g[i]).abs() > 1e-4 * g[i].abs().max(1.0) {
            return Err(Error::invalid(format!(
                "gradient inconsistent with f at z = {z:?}: ∂{i} analytic {} vs finite difference {fd}",
                g[i]
            )));
        }
    }
    Ok(())
}

/// Estimates both sides of `Ent[e^f] ≤ ½ E[‖σ ⊙ ∇f‖² e^f]` under a diagonal Gaussian.
pub fn gaussian_lsi_gap<F, G>(f: F, grad_f: G, g: &DiagonalGaussian, n: usize, seed: Seed) -> Result<LsiGap>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if n < 2 {
        return Err(Error::invalid("LSI check needs n ≥ 2"));
    }
    let zs = sample_gaussian(g, n, seed)?;
    for z in zs.iter().take(3) {
        spot_check_gradient(&f, &grad_f, z)?;
    }
    let sigma = g.std();
    let mut fv = Vec::with_capacity(n);
    let mut gn = Vec::with_capacity(n);
    for z in &zs {
        let v = f(z);
        let grad = grad_f(z);
        let s: f64 = grad.iter().zip(&sigma).map(|(d, s)| (d * s) * (d * s)).sum();
        if !v.is_finite() || !s.is_finite() {
            return Err(Error::eval(format!("non-finite f or gradient at z = {z:?}")));
        }
        fv.push(v);
        gn.push(s);
    }
    // work with e^{f − c} and rescale by e^c at the end
    let c = fv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = c.exp();
    if !scale.is_finite() {
        return Err(Error::eval(format!("e^f overflows: max f = {c}")));
    }
    let ef: Vec<f64> = fv.iter().map(|v| (v - c).exp()).collect();
    let ent = entropy_of_values(&ef);
    let m = mean(&ef);
    let lnm = m.ln();
    let mut infl_l = Vec::with_capacity(n);
    let mut infl_r = Vec::with_capacity(n);
    for ((e, v), s) in ef.iter().zip(&fv).zip(&gn) {
        infl_l.push(e * (v - c) - (lnm + 1.0) * e);
        infl_r.push(0.5 * s * e);
    }
    let rhs = mean(&infl_r);
    let diff: Vec<f64> = infl_r.iter().zip(&infl_l).map(|(r, l)| r - l).collect();
    Ok(LsiGap {
        lhs: scale * ent.value,
        rhs: scale * rhs,
        lhs_se: scale * ent.std_error,
        rhs_se: scale * std_error(&infl_r),
        diff_se: scale * std_error(&diff),
    })
}

/// Exact sides of the tensorized Rademacher LSI by enumeration of `{−1,+1}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherGap {
    pub lhs: f64,
    pub rhs: f64,
}

/// `Ent[e^f]` and `½ E[Σ_i (∇_i f)² e^f]` with `∇_i f(z) = (f(z) − f(z with z_i negated))/2`.
pub fn rademacher_lsi_gap<F>(f: F, d: usize) -> Result<RademacherGap>
where
    F: Fn(&[f64]) -> f64,
{
    if d == 0 {
        return Err(Error::invalid("dimension must be ≥ 1"));
    }
    if d > MAX_RADEMACHER_DIM {
        return Err(Error::SizeLimit(format!(
            "exact enumeration limited to d ≤ {MAX_RADEMACHER_DIM}, got {d}"
        )));
    }
    let size = 1usize << d;
    let mut z = vec![0.0; d];
    let mut fv = Vec::with_capacity(size);
    for idx in 0..size {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = if idx >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let v = f(&z);
        if !v.is_finite() {
            return Err(Error::eval(format!("f({z:?}) = {v}")));
        }
        fv.push(v);
    }
    let c = fv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ef: Vec<f64> = fv.iter().map(|v| (v - c).exp()).collect();
    let w = vec![1.0 / size as f64; size];
    let lhs = functional_entropy(&ef, &w)?;
    let mut rhs = 0.0;
    for idx in 0..size {
        let sq: f64 = (0..d)
            .map(|i| {
                let g = (fv[idx] - fv[idx ^ (1 << i)]) / 2.0;
                g * g
            })
            .sum();
        rhs += sq * ef[idx];
    }
    rhs *= 0.5 / size as f64;
    let scale = c.exp();
    Ok(RademacherGap {
        lhs: scale * lhs,
        rhs: scale * rhs,
    })
}

/// Entropy of a mixture split into within-label and between-label parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `Ent_D[f]`.
    pub total: f64,
    /// `Σ_y D_y Ent_{N_y}[f]`.
    pub within_sum: f64,
    /// `Ent_{D_y}[E_{N_y} f]`.
    pub between: f64,
    /// Per-label `Ent_{N_y}[f]`.
    pub within: Vec<f64>,
    /// Per-label `E_{N_y} f`.
    pub label_means: Vec<f64>,
    pub total_se: f64,
    pub split_se: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        self.total - (self.within_sum + self.between)
    }

    pub fn combined_std_error(&self) -> f64 {
        self.total_se.hypot(self.split_se)
    }
}

/// Monte Carlo check of the mixture entropy decomposition.
///
/// `total` is estimated from ancestral mixture draws; the within and between
/// terms from an independent stratified sample of `n` draws per label. On a
/// shared sample the identity would hold by algebra alone.
pub fn entropy_decomposition_check<F>(f: F, mix: &LabeledMixture, n: usize, seed: Seed) -> Result<Decomposition>
where
    F: Fn(&Sample) -> f64,
{
    if n < 2 {
        return Err(Error::invalid("decomposition check needs n ≥ 2"));
    }
    let pooled = sample_mixture(mix, n, seed.derive("mixture"))?;
    let pooled_vals = evaluate_nonneg(&f, &pooled, "f")?;
    let total = entropy_of_values(&pooled_vals);

    let strata_seed = seed.derive("strata");
    let k = mix.classes();
    let mut per_label = Vec::with_capacity(k);
    for y in 0..k {
        let xs = sample_gaussian(mix.component(y), n, strata_seed.child(y as u64))?;
        let samples: Vec<Sample> = xs.into_iter().map(|x| Sample::new(x, y)).collect();
        per_label.push(evaluate_nonneg(&f, &samples, "f")?);
    }
    let dy = mix.label_marginals();
    let ests: Vec<EntropyEstimate> = per_label.iter().map(|v| entropy_of_values(v)).collect();
    let within: Vec<f64> = ests.iter().map(|e| e.value).collect();
    let label_means: Vec<f64> = per_label.iter().map(|v| mean(v)).collect();
    let within_sum = dy.iter().zip(&within).map(|(p, e)| p * e).sum();
    let between = functional_entropy(&label_means, dy)?;

    // within_sum + between = Σ_y D_y mean_y(F ln F) − M̄ ln M̄
    let m_bar: f64 = dy.iter().zip(&label_means).map(|(p, m)| p * m).sum();
    let lnm = if m_bar > 0.0 { m_bar.ln() } else { 0.0 };
    let split_var: f64 = per_label
        .iter()
        .zip(dy)
        .map(|(vals, p)| {
            let infl: Vec<f64> = vals.iter().map(|&v| xlogx(v) - (lnm + 1.0) * v).collect();
            let se = std_error(&infl);
            p * p * se * se
        })
        .sum();

    Ok(Decomposition {
        total: total.value,
        within_sum,
        between,
        within,
        label_means,
        total_se: total.std_error,
        split_se: split_var.sqrt(),
    })
}

/// A labeled mixture whose components are finite atomic distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMixture {
    label_marginals: Vec<f64>,
    /// Per label: (point, weight) atoms with weights summing to 1.
    components: Vec<Vec<(Vec<f64>, f64)>>,
}

impl FiniteMixture {
    pub fn new(label_marginals: Vec<f64>, components: Vec<Vec<(Vec<f64>, f64)>>) -> Result<Self> {
        if components.is_empty() || label_marginals.len() != components.len() {
            return Err(Error::invalid(
                "marginals and components must be nonempty and equal in length",
            ));
        }
        let total: f64 = label_marginals.iter().sum();
        if (total - 1.0).abs() > 1e-12 || label_marginals.iter().any(|p| *p < 0.0) {
            return Err(Error::invalid("label marginals must be a probability vector"));
        }
        for (y, atoms) in components.iter().enumerate() {
            let s: f64 = atoms.iter().map(|(_, w)| w).sum();
            if atoms.is_empty() || (s - 1.0).abs() > 1e-12 || atoms.iter().any(|(_, w)| *w < 0.0) {
                return Err(Error::invalid(format!("component {y} weights must sum to 1")));
            }
        }
        Ok(Self {
            label_marginals,
            components,
        })
    }

    /// One atom per label at the component mean; every component must have zero variance.
    pub fn from_point_masses(mix: &LabeledMixture) -> Result<Self> {
        if mix.components().iter().any(|c| c.variance().iter().any(|v| *v != 0.0)) {
            return Err(Error::invalid("point-mass mixture requires zero-variance components"));
        }
        Self::new(
            mix.label_marginals().to_vec(),
            mix.components()
                .iter()
                .map(|c| vec![(c.mean().to_vec(), 1.0)])
                .collect(),
        )
    }
}

/// Exact decomposition by enumerating every (label, atom) outcome.
pub fn entropy_decomposition_exact<F>(f: F, mix: &FiniteMixture) -> Result<Decomposition>
where
    F: Fn(&Sample) -> f64,
{
    let mut flat_vals = Vec::new();
    let mut flat_w = Vec::new();
    let mut within = Vec::new();
    let mut label_means = Vec::new();
    for (y, atoms) in mix.components.iter().enumerate() {
        let mut vals = Vec::with_capacity(atoms.len());
        let mut ws = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            let s = Sample::new(x.clone(), y);
            let v = f(&s);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::eval(format!("f returned {v} at x = {x:?}, y = {y}")));
            }
            vals.push(v);
            ws.push(*w);
            flat_vals.push(v);
            flat_w.push(w * mix.label_marginals[y]);
        }
        within.push(functional_entropy(&vals, &ws)?);
        label_means.push(vals.iter().zip(&ws).map(|(v, w)| v * w).sum());
    }
    let total = functional_entropy(&flat_vals, &flat_w)?;
    let within_sum = mix.label_marginals.iter().zip(&within).map(|(p, e)| p * e).sum();
    let between = functional_entropy(&label_means, &mix.label_marginals)?;
    Ok(Decomposition {
        total,
        within_sum,
        between,
        within,
        label_means,
        total_se: 0.0,
        split_se: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn std_normal_1d() -> LabeledMixture {
        LabeledMixture::new(vec![1.0], vec![DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap()]).unwrap()
    }

    #[test]
    fn finite_entropy_examples() {
        assert_eq!(functional_entropy(&[3.0; 4], &[0.25; 4]).unwrap(), 0.0);
        let expected = E / 2.0 - ((1.0 + E) / 2.0) * ((1.0 + E) / 2.0).ln();
        assert_relative_eq!(
            functional_entropy(&[1.0, E], &[0.5, 0.5]).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            functional_entropy(&[0.0, 2.0], &[0.5, 0.5]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert!(functional_entropy(&[-1.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(functional_entropy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mc_entropy_of_exponential_of_gaussian() {
        let d = std_normal_1d();
        let c = functional_entropy_mc(|_| 1.0, &d, 100, Seed(1)).unwrap();
        assert_eq!(c.value, 0.0);
        let e = functional_entropy_mc(|s| s.x[0].exp(), &d, 1_000_000, Seed(2)).unwrap();
        let exact = 0.5 * 0.5f64.exp();
        assert!((e.value - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
        let z = functional_entropy_mc(|s| (0.0 * s.x[0]).exp(), &d, 1000, Seed(3)).unwrap();
        assert!(z.value.abs() < 1e-12);
        assert!(functional_entropy_mc(|s| s.x[0], &d, 100, Seed(3)).is_err());
    }

    #[test]
    fn mgf_curve_closed_forms() {
        let d = std_normal_1d();
        let alphas = [0.0, 0.25, 0.5];
        let zero = mgf_curve(|_| 0.0, &d, &alphas, 100, Seed(1)).unwrap();
        assert!(zero.values.iter().all(|v| *v == 1.0));
        let c = mgf_curve(|_| 2.0, &d, &alphas, 100, Seed(1)).unwrap();
        for (a, v) in c.alphas.iter().zip(&c.values) {
            assert_relative_eq!(*v, (-a * 2.0).exp(), epsilon = 1e-14);
        }
        let sq = mgf_curve(|s| s.x[0] * s.x[0], &d, &[0.25], 1_000_000, Seed(5)).unwrap();
        assert!((sq.values[0] - 1.0 / 1.5f64.sqrt()).abs() < 3.0 * sq.std_errors[0]);
        assert!(mgf_curve(|_| 0.0, &d, &[0.5, 0.25], 10, Seed(1)).is_err());
    }

    #[test]
    fn herbst_constant_loss_is_zero() {
        let d = std_normal_1d();
        let lhs = herbst_lhs(|_| 3.0, &d, 4.0, 4, 1000, Seed(1)).unwrap();
        assert!(lhs.value.abs() < 1e-12);
        let grid = QuadratureGrid::geometric_uniform(1.0, 64).unwrap();
        let rhs = herbst_rhs(|_| 3.0, &d, 4.0, 4, &grid, 1000, Seed(1)).unwrap();
        assert!(rhs.value.abs() < 1e-12);
        let rhs0 = herbst_rhs(|_| 0.0, &d, 4.0, 4, &grid, 1000, Seed(1)).unwrap();
        assert_eq!(rhs0.value, 0.0);
        let tiny = herbst_lhs(|s| s.x[0] * s.x[0], &d, 1e-9, 4, 1000, Seed(1)).unwrap();
        assert!(tiny.value.abs() < 1e-8);
    }

    #[test]
    fn herbst_rejects_short_grid() {
        assert!(QuadratureGrid::geometric_uniform(1.0, 1).is_err());
        assert!(QuadratureGrid::from_points(vec![0.0]).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = QuadratureGrid::geometric_uniform(0.5, 64).unwrap();
        assert_eq!(g.points.len(), 64);
        assert_eq!(g.points[0], 0.0);
        assert_eq!(g.upper(), 0.5);
        assert!(g.points.windows(2).all(|w| w[1] > w[0]));
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert_relative_eq!(w, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lsi_constant_function() {
        let g = DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let r = gaussian_lsi_gap(|_| 2.0, |_| vec![0.0], &g, 1000, Seed(1)).unwrap();
        assert!(r.lhs.abs() < 1e-12);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn lsi_rejects_inconsistent_gradient() {
        let g = DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap();
        assert!(gaussian_lsi_gap(|z| z[0], |_| vec![2.0], &g, 100, Seed(1)).is_err());
    }

    #[test]
    fn lsi_strict_for_quadratic() {
        let g = DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let r = gaussian_lsi_gap(|z| z[0] * z[0] / 4.0, |z| vec![z[0] / 2.0], &g, 200_000, Seed(8)).unwrap();
        assert!(r.lhs.is_finite() && r.rhs.is_finite());
        assert!(r.gap() > 3.0 * r.diff_se, "{r:?}");
    }

    #[test]
    fn rademacher_examples() {
        let z = rademacher_lsi_gap(|_| 0.0, 3).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        let r = rademacher_lsi_gap(|z| z[0], 1).unwrap();
        let c = 1f64.cosh();
        assert_relative_eq!(r.lhs, 1f64.sinh() - c * c.ln(), epsilon = 1e-14);
        assert_relative_eq!(r.rhs, c / 2.0, epsilon = 1e-14);
        assert!(r.lhs <= r.rhs);
        assert!(matches!(rademacher_lsi_gap(|_| 0.0, 21), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn decomposition_single_label_has_no_between_term() {
        let d = std_normal_1d();
        let r = entropy_decomposition_check(|s| (0.5 * s.x[0]).exp(), &d, 200_000, Seed(2)).unwrap();
        assert_eq!(r.between, 0.0);
        assert!(r.residual().abs() < 3.0 * r.combined_std_error() + 1e-4);
    }

    #[test]
    fn decomposition_constant_function() {
        let mix = LabeledMixture::uniform(vec![
            DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap(),
            DiagonalGaussian::new(vec![2.0], vec![1.0]).unwrap(),
        ])
        .unwrap();
        let r = entropy_decomposition_check(|_| 1.5, &mix, 1000, Seed(2)).unwrap();
        assert!(r.total.abs() < 1e-14 && r.within_sum.abs() < 1e-14 && r.between.abs() < 1e-14);
    }

    #[test]
    fn decomposition_exact_three_point_masses() {
        let mix = LabeledMixture::new(
            vec![0.2, 0.3, 0.5],
            vec![
                DiagonalGaussian::new(vec![0.0], vec![0.0]).unwrap(),
                DiagonalGaussian::new(vec![1.0], vec![0.0]).unwrap(),
                DiagonalGaussian::new(vec![-2.0], vec![0.0]).unwrap(),
            ],
        )
        .unwrap();
        let fm = FiniteMixture::from_point_masses(&mix).unwrap();
        let f = |s: &Sample| (s.x[0] + s.y as f64).powi(2);
        let r = entropy_decomposition_exact(f, &fm).unwrap();
        assert!(r.within.iter().all(|w| *w == 0.0));
        // brute force over the three label outcomes
        let vals = [0.0, 4.0, 0.0];
        let m: f64 = 0.2 * vals[0] + 0.3 * vals[1] + 0.5 * vals[2];
        let brute = 0.3 * 4.0 * 4f64.ln() - m * m.ln();
        assert_relative_eq!(r.total, brute, epsilon = 1e-14);
        assert!(r.residual().abs() <= 1e-12);
    }
}
