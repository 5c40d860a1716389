//! Complexity-term calculators and assembly of the PAC-Bayes right-hand side
//!
//! ```text
//! E_q[L_D] ≤ E_q[L_S] + (C(λ,p) + KL(q‖p) + ln(1/δ)) / λ
//! ```
//!
//! Four ways of bounding `C(λ,p)` are provided:
//!
//! * [`linear_complexity`]: linear models with a Lipschitz loss,
//!   `k·d·ln√(4/3)` for `λ ≤ √(m/16)/(g σ_p σ_y)`;
//! * [`global_onaverage_complexity`]: global on-average bounds `b`, `g`,
//!   `λ² e^b g σ_y² / 2m` for `λ ≤ m`;
//! * [`per_w_complexity`]: the prior expectation
//!   `ln E_{w∼p} exp(λ² e^{E_D ℓ} E_D‖σ_y⊙∇_x ℓ‖² / 2m)`, estimated by Monte Carlo;
//! * [`baseline_bounded_complexity`]: the bounded-loss baseline `λ² B² / 2m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{kl_diag_gaussian, sample_gaussian, DataSource, DiagonalGaussian, Sample};
use crate::entropy::Estimate;
use crate::error::{Error, Result};
use crate::models::{LossKind, Network};
use crate::rng::{Seed, GENERATOR_NAME};
use crate::stats::{log_mean_exp, mean, std_error};

pub const DEFAULT_N_PRIOR: usize = 64;
pub const DEFAULT_N_DATA: usize = 4096;
pub const DEFAULT_N_POSTERIOR: usize = 32;
/// Default posterior variance as a fraction of the prior variance.
pub const DEFAULT_POSTERIOR_VARIANCE_RATIO: f64 = 1e-2;

/// Per-label data standard deviation entering the log-Sobolev bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaY {
    Scalar(f64),
    /// `[label][dimension]`.
    PerLabel(Vec<Vec<f64>>),
}

impl SigmaY {
    /// Largest per-label per-dimension variance.
    pub fn max_variance(&self) -> f64 {
        match self {
            SigmaY::Scalar(s) => s * s,
            SigmaY::PerLabel(v) => v.iter().flatten().map(|s| s * s).fold(0.0, f64::max),
        }
    }

    /// `‖σ_y ⊙ v‖²`.
    pub fn weighted_norm_sq(&self, y: usize, v: &[f64]) -> f64 {
        match self {
            SigmaY::Scalar(s) => s * s * v.iter().map(|g| g * g).sum::<f64>(),
            SigmaY::PerLabel(per) => per[y].iter().zip(v).map(|(s, g)| (s * g) * (s * g)).sum(),
        }
    }

    fn validate(&self, k: usize, d: usize) -> Result<()> {
        match self {
            SigmaY::Scalar(s) if !(s.is_finite() && *s > 0.0) => {
                Err(Error::invalid(format!("σ_y = {s} must be positive")))
            }
            SigmaY::Scalar(_) => Ok(()),
            SigmaY::PerLabel(per) => {
                if per.len() != k || per.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid(format!("σ_y must be {k} labels × {d} dimensions")));
                }
                if per.iter().flatten().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::invalid("σ_y entries must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Where σ_y came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaYSource {
    /// Component standard deviations of a known synthetic mixture.
    Mixture,
    /// Estimated per label from data.
    Estimated,
    /// Supplied as a configuration scalar.
    Config,
}

/// Monte Carlo estimator sizes and the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_prior: usize,
    pub n_data: usize,
    pub n_posterior: usize,
    pub seed: Seed,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_prior: DEFAULT_N_PRIOR,
            n_data: DEFAULT_N_DATA,
            n_posterior: DEFAULT_N_POSTERIOR,
            seed: Seed(0),
        }
    }
}

/// Every scalar knob of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub lambda: f64,
    pub m: usize,
    pub delta: f64,
    pub prior_variance: f64,
    pub sigma_y: SigmaY,
    pub sigma_y_source: SigmaYSource,
    /// On-average loss bound `E_D ℓ ≤ b`.
    pub b: Option<f64>,
    /// On-average squared gradient-norm bound `E_D‖∇_x ℓ‖² ≤ g`.
    pub g: Option<f64>,
    pub mc: McSettings,
}

impl BoundInput {
    pub fn new(lambda: f64, m: usize, delta: f64, prior_variance: f64, sigma_y: SigmaY) -> Result<Self> {
        let input = Self {
            lambda,
            m,
            delta,
            prior_variance,
            sigma_y,
            sigma_y_source: SigmaYSource::Config,
            b: None,
            g: None,
            mc: McSettings::default(),
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!("λ = {} must be positive", self.lambda)));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be ≥ 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("δ = {} must lie in (0, 1)", self.delta)));
        }
        if !(self.prior_variance.is_finite() && self.prior_variance > 0.0) {
            return Err(Error::invalid(format!(
                "σ_p² = {} must be positive",
                self.prior_variance
            )));
        }
        if let SigmaY::Scalar(s) = self.sigma_y {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("σ_y = {s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    fn require_lambda_at_most_m(&self) -> Result<()> {
        if self.lambda > self.m as f64 {
            return Err(Error::Constraint(format!(
                "λ = {} exceeds m = {}; the on-average bounds require 0 < λ ≤ m",
                self.lambda, self.m
            )));
        }
        Ok(())
    }
}

/// Which complexity bound produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    LinearLipschitz,
    GlobalOnAverage,
    PriorExpectation,
    BoundedBaseline,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::LinearLipschitz => "linear_lipschitz",
            BoundKind::GlobalOnAverage => "global_on_average",
            BoundKind::PriorExpectation => "prior_expectation",
            BoundKind::BoundedBaseline => "bounded_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear_lipschitz" | "linear" => Ok(BoundKind::LinearLipschitz),
            "global_on_average" | "on_average" => Ok(BoundKind::GlobalOnAverage),
            "prior_expectation" | "per_w" => Ok(BoundKind::PriorExpectation),
            "bounded_baseline" | "baseline" => Ok(BoundKind::BoundedBaseline),
            other => Err(Error::invalid(format!("unknown bound kind {other:?}"))),
        }
    }
}

/// Reproducibility metadata carried by a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: Seed,
    pub generator: String,
    pub n_prior: usize,
    pub n_data: usize,
    pub n_posterior: usize,
    pub sigma_y_source: SigmaYSource,
    pub sigma_y_max_variance: f64,
    pub m: usize,
    pub delta: f64,
    pub prior_variance: f64,
    pub notes: Vec<String>,
}

/// The assembled right-hand side with all of its terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub complexity: f64,
    pub kl: f64,
    pub empirical_risk: f64,
    pub log_inv_delta: f64,
    pub rhs: f64,
    pub lambda: f64,
    /// Set when the bound is infinite or otherwise degenerate.
    pub flag: Option<String>,
    pub metadata: ReportMetadata,
}

impl BoundReport {
    /// `(C + KL + ln(1/δ)) / λ`.
    pub fn gap_term(&self) -> f64 {
        (self.complexity + self.kl + self.log_inv_delta) / self.lambda
    }
}

/// Largest λ admitted by the linear-model bound: `√(m/16) / (g σ_p σ_y)`.
pub fn linear_lambda_max(g: f64, sigma_p: f64, sigma_y: f64, m: usize) -> Result<f64> {
    for (name, v) in [("g", g), ("σ_p", sigma_p), ("σ_y", sigma_y)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} = {v} must be positive")));
        }
    }
    if m == 0 {
        return Err(Error::invalid("m must be ≥ 1"));
    }
    Ok((m as f64 / 16.0).sqrt() / (g * sigma_p * sigma_y))
}

/// `k·d·ln√(4/3)`.
pub fn linear_complexity(k: usize, d: usize) -> Result<f64> {
    if k == 0 || d == 0 {
        return Err(Error::invalid(format!("k = {k} and d = {d} must both be ≥ 1")));
    }
    Ok((k * d) as f64 * 0.5 * (4.0f64 / 3.0).ln())
}

/// `ln E_{w∼N(0, σ²I_n)} e^{c‖w‖²} = −(n/2) ln(1 − 2cσ²)`.
pub fn gaussian_quadratic_mgf(c: f64, prior_variance: f64, n_dims: usize) -> Result<f64> {
    if !(prior_variance.is_finite() && prior_variance > 0.0) || !c.is_finite() {
        return Err(Error::invalid("c must be finite and σ_p² positive"));
    }
    let r = 2.0 * c * prior_variance;
    if r >= 1.0 {
        return Err(Error::Divergence(format!("E e^{{c‖w‖²}} diverges: 2cσ_p² = {r} ≥ 1")));
    }
    Ok(-(n_dims as f64) / 2.0 * (-r).ln_1p())
}

/// Sampling scheme for [`gaussian_quadratic_mgf_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticMgfSampler {
    /// Plain prior draws. The estimator has infinite variance once 2cσ² ≥ 1/2.
    Prior,
    /// Importance sampling from `N(0, 6σ²I)`; weights stay bounded for 2cσ² ≤ 5/6.
    WidenedProposal,
}

/// Proposal variance multiplier used by [`QuadraticMgfSampler::WidenedProposal`].
pub const WIDENED_PROPOSAL_SCALE: f64 = 6.0;

/// Monte Carlo estimate of `E_{w∼N(0, σ²I_n)} e^{c‖w‖²}` (not its logarithm).
pub fn gaussian_quadratic_mgf_mc(
    c: f64,
    prior_variance: f64,
    n_dims: usize,
    n_draws: usize,
    sampler: QuadraticMgfSampler,
    seed: Seed,
) -> Result<Estimate> {
    if n_dims == 0 || n_draws < 2 {
        return Err(Error::invalid("need n_dims ≥ 1 and at least 2 draws"));
    }
    let scale = match sampler {
        QuadraticMgfSampler::Prior => 1.0,
        QuadraticMgfSampler::WidenedProposal => WIDENED_PROPOSAL_SCALE,
    };
    let proposal = DiagonalGaussian::centered(n_dims, prior_variance * scale)?;
    let draws = sample_gaussian(&proposal, n_draws, seed)?;
    // log p(w)/r(w) = (n/2) ln s − ‖w‖²/(2σ²)·(1 − 1/s)
    let half_n_ln_s = n_dims as f64 / 2.0 * scale.ln();
    let shrink = (1.0 - 1.0 / scale) / (2.0 * prior_variance);
    let vals: Vec<f64> = draws
        .iter()
        .map(|w| {
            let sq: f64 = w.iter().map(|v| v * v).sum();
            (c * sq + half_n_ln_s - shrink * sq).exp()
        })
        .collect();
    Ok(Estimate {
        value: mean(&vals),
        std_error: std_error(&vals),
    })
}

/// `λ² e^b g σ_y² / 2m` with σ_y² the largest per-label per-dimension variance.
pub fn global_onaverage_complexity(input: &BoundInput) -> Result<f64> {
    input.validate()?;
    input.require_lambda_at_most_m()?;
    let b = input
        .b
        .ok_or_else(|| Error::invalid("on-average loss bound b is required"))?;
    let g = input
        .g
        .ok_or_else(|| Error::invalid("on-average squared gradient bound g is required"))?;
    if !(b.is_finite() && g.is_finite() && g >= 0.0) {
        return Err(Error::invalid(format!("b = {b} and g = {g} must be finite, g ≥ 0")));
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    let l = input.lambda;
    Ok(l * l * b.exp() * g * input.sigma_y.max_variance() / (2.0 * input.m as f64))
}

/// `λ² B² / 2m`.
pub fn baseline_bounded_complexity(bound: f64, lambda: f64, m: usize) -> Result<f64> {
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::invalid(format!("B = {bound} must be finite and ≥ 0")));
    }
    if !(lambda.is_finite() && lambda > 0.0) || m == 0 {
        return Err(Error::invalid("λ must be positive and m ≥ 1"));
    }
    Ok(lambda * lambda * bound * bound / (2.0 * m as f64))
}

/// Loss and gradient statistics of one prior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorDraw {
    /// `Ê_D ℓ(w_j, ·)`.
    pub b: f64,
    /// `Ê_D ‖σ_y ⊙ ∇_x ℓ(w_j, ·)‖²`.
    pub g: f64,
    /// `λ² e^{b} g / 2m`.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub value: f64,
    pub draws: Vec<PriorDraw>,
    pub diagnostic: Option<String>,
}

/// `(Ê_D ℓ, Ê_D ‖σ_y ⊙ ∇_x ℓ‖²)` for one network over `data`.
pub fn loss_grad_stats(net: &Network, data: &[Sample], kind: LossKind, sigma_y: &SigmaY) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("empty data set"));
    }
    let mut losses = Vec::with_capacity(data.len());
    let mut grads = Vec::with_capacity(data.len());
    for s in data {
        let (l, gx) = net.loss_and_input_gradient(&s.x, s.y, kind)?;
        losses.push(l);
        grads.push(sigma_y.weighted_norm_sq(s.y, &gx));
    }
    Ok((mean(&losses), mean(&grads)))
}

/// `λ² e^b g / 2m` evaluated in log space; +∞ on overflow.
pub fn prior_draw_exponent(b: f64, g: f64, lambda: f64, m: usize) -> f64 {
    if g == 0.0 {
        return 0.0;
    }
    (2.0 * lambda.ln() + b + g.ln() - (2.0 * m as f64).ln()).exp()
}

/// Combines per-draw `(b_j, g_j)` into `ln mean_j exp(λ² e^{b_j} g_j / 2m)`.
pub fn combine_prior_draws(stats: &[(f64, f64)], lambda: f64, m: usize) -> ComplexityEstimate {
    let draws: Vec<PriorDraw> = stats
        .iter()
        .map(|&(b, g)| PriorDraw {
            b,
            g,
            exponent: prior_draw_exponent(b, g, lambda, m),
        })
        .collect();
    let exps: Vec<f64> = draws.iter().map(|d| d.exponent).collect();
    let value = log_mean_exp(&exps);
    let diagnostic = (!value.is_finite()).then(|| {
        let bad: Vec<String> = draws
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.exponent.is_finite())
            .map(|(j, d)| format!("draw {j}: b = {}, g = {}", d.b, d.g))
            .collect();
        format!("exponent overflow: {}", bad.join("; "))
    });
    ComplexityEstimate {
        value,
        draws,
        diagnostic,
    }
}

/// Per-draw `(b_j, g_j)` for `n_prior` draws from `prior`, all evaluated on one shared data set.
pub fn prior_draw_stats<'a>(
    arch: &Network,
    prior: &DiagonalGaussian,
    data: impl Into<DataSource<'a>>,
    kind: LossKind,
    sigma_y: &SigmaY,
    mc: &McSettings,
) -> Result<Vec<(f64, f64)>> {
    if mc.n_prior == 0 {
        return Err(Error::invalid("n_prior must be ≥ 1"));
    }
    let source = data.into();
    sigma_y.validate(source.classes(), source.dim())?;
    let data = source.draw(mc.n_data, mc.seed.derive("data"))?;
    let prior_seed = mc.seed.derive("prior");
    (0..mc.n_prior)
        .into_par_iter()
        .map(|j| {
            let net = arch.sample_from(prior, &mut prior_seed.rng(j as u64))?;
            loss_grad_stats(&net, &data, kind, sigma_y)
        })
        .collect()
}

/// Monte Carlo estimate of the prior-expectation complexity bound with NLL loss.
pub fn per_w_complexity<'a>(
    arch: &Network,
    prior: &DiagonalGaussian,
    data: impl Into<DataSource<'a>>,
    input: &BoundInput,
) -> Result<ComplexityEstimate> {
    per_w_complexity_with_loss(arch, prior, data, input, LossKind::Nll)
}

pub fn per_w_complexity_with_loss<'a>(
    arch: &Network,
    prior: &DiagonalGaussian,
    data: impl Into<DataSource<'a>>,
    input: &BoundInput,
    kind: LossKind,
) -> Result<ComplexityEstimate> {
    input.validate()?;
    input.require_lambda_at_most_m()?;
    let dist = data.into();
    if arch.input_dim() != dist.dim() || arch.classes() != dist.classes() {
        return Err(Error::invalid(format!(
            "network maps {} → {} but the data has d = {}, k = {}",
            arch.input_dim(),
            arch.classes(),
            dist.dim(),
            dist.classes()
        )));
    }
    let stats = prior_draw_stats(arch, prior, dist, kind, &input.sigma_y, &input.mc)?;
    Ok(combine_prior_draws(&stats, input.lambda, input.m))
}

/// Assembles `empirical_risk + (complexity + kl + ln(1/δ)) / λ`.
pub fn assemble_bound(
    kind: BoundKind,
    empirical_risk: f64,
    complexity: f64,
    kl: f64,
    input: &BoundInput,
) -> Result<BoundReport> {
    input.validate()?;
    if !empirical_risk.is_finite() {
        return Err(Error::invalid(format!("empirical risk {empirical_risk} is not finite")));
    }
    if kl.is_nan() || kl < 0.0 {
        return Err(Error::invalid(format!("KL = {kl} must be ≥ 0")));
    }
    if complexity.is_nan() {
        return Err(Error::invalid("complexity is NaN"));
    }
    let log_inv_delta = -input.delta.ln();
    let rhs = empirical_risk + (complexity + kl + log_inv_delta) / input.lambda;
    let flag = (!rhs.is_finite()).then(|| "complexity or KL is infinite; bound is vacuous".to_string());
    Ok(BoundReport {
        kind,
        complexity,
        kl,
        empirical_risk,
        log_inv_delta,
        rhs,
        lambda: input.lambda,
        flag,
        metadata: ReportMetadata {
            seed: input.mc.seed,
            generator: GENERATOR_NAME.to_string(),
            n_prior: input.mc.n_prior,
            n_data: input.mc.n_data,
            n_posterior: input.mc.n_posterior,
            sigma_y_source: input.sigma_y_source,
            sigma_y_max_variance: input.sigma_y.max_variance(),
            m: input.m,
            delta: input.delta,
            prior_variance: input.prior_variance,
            notes: Vec::new(),
        },
    })
}

/// Full right-hand side for a `k`-class linear model on `d` inputs whose loss is
/// `g`-Lipschitz in the logits. λ above the admissible maximum is an error.
pub fn linear_bound(
    k: usize,
    d: usize,
    g: f64,
    empirical_risk: f64,
    kl: f64,
    input: &BoundInput,
) -> Result<BoundReport> {
    input.validate()?;
    let sigma_y = input.sigma_y.max_variance().sqrt();
    let cap = linear_lambda_max(g, input.prior_variance.sqrt(), sigma_y, input.m)?;
    if input.lambda > cap {
        return Err(Error::Constraint(format!(
            "λ = {} exceeds the linear-model maximum √(m/16)/(g σ_p σ_y) = {cap}",
            input.lambda
        )));
    }
    let c = linear_complexity(k, d)?;
    let mut r = assemble_bound(BoundKind::LinearLipschitz, empirical_risk, c, kl, input)?;
    r.metadata.notes.push(format!("λ_max = {cap}, g = {g}"));
    Ok(r)
}

/// Diagonal Gaussian posterior centered at `weights`.
pub fn posterior_around(weights: &[f64], variance: f64) -> Result<DiagonalGaussian> {
    DiagonalGaussian::isotropic(weights.to_vec(), variance)
}

/// `(E_q L_S, E_q L̂_D)` averaged over `mc.n_posterior` posterior draws, with
/// `L̂_D` taken over `reference` (fresh mixture draws or a held-out sample).
pub fn expected_risks<'a>(
    arch: &Network,
    posterior: &DiagonalGaussian,
    train: &[Sample],
    reference: impl Into<DataSource<'a>>,
    kind: LossKind,
    mc: &McSettings,
) -> Result<(f64, f64)> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if mc.n_posterior == 0 {
        return Err(Error::invalid("n_posterior must be ≥ 1"));
    }
    let reference = reference.into().draw(mc.n_data, mc.seed.derive("risk-data"))?;
    let post_seed = mc.seed.derive("posterior");
    let risks: Vec<(f64, f64)> = (0..mc.n_posterior)
        .into_par_iter()
        .map(|j| {
            let net = arch.sample_from(posterior, &mut post_seed.rng(j as u64))?;
            Ok((net.mean_loss(train, kind)?, net.mean_loss(&reference, kind)?))
        })
        .collect::<Result<_>>()?;
    let n = risks.len() as f64;
    Ok((
        risks.iter().map(|r| r.0).sum::<f64>() / n,
        risks.iter().map(|r| r.1).sum::<f64>() / n,
    ))
}

/// How the bounded baseline's `B` is taken from the training losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineScale {
    MaxTrainLoss,
    MeanTrainLoss,
}

/// The prior-expectation bound and the bounded baseline for one trained model.
/// Both reports share the empirical risk and KL fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ours: BoundReport,
    pub baseline: BoundReport,
    pub baseline_b: f64,
    pub test_risk: f64,
    pub complexity_draws: Vec<PriorDraw>,
}

/// Evaluates both bounds around a trained network with the posterior `N(trained, σ_q²I)`.
pub fn compare_bounds<'a>(
    trained: &Network,
    posterior_variance: f64,
    data: impl Into<DataSource<'a>>,
    train: &[Sample],
    input: &BoundInput,
    scale: BaselineScale,
) -> Result<Comparison> {
    input.validate()?;
    let kind = LossKind::Nll;
    let prior = DiagonalGaussian::centered(trained.param_count(), input.prior_variance)?;
    let posterior = posterior_around(trained.weights(), posterior_variance)?;
    let kl = kl_diag_gaussian(&posterior, &prior)?;
    let data = data.into();
    let (risk, test_risk) = expected_risks(trained, &posterior, train, data, kind, &input.mc)?;
    let ours_c = per_w_complexity_with_loss(trained, &prior, data, input, kind)?;
    let losses: Vec<f64> = train
        .iter()
        .map(|s| trained.loss(&s.x, s.y, kind))
        .collect::<Result<_>>()?;
    let b = match scale {
        BaselineScale::MaxTrainLoss => losses.iter().copied().fold(0.0, f64::max),
        BaselineScale::MeanTrainLoss => mean(&losses),
    };
    let base_c = baseline_bounded_complexity(b, input.lambda, input.m)?;
    let mut ours = assemble_bound(BoundKind::PriorExpectation, risk, ours_c.value, kl, input)?;
    if let Some(d) = &ours_c.diagnostic {
        ours.flag = Some(d.clone());
    }
    let mut baseline = assemble_bound(BoundKind::BoundedBaseline, risk, base_c, kl, input)?;
    baseline.metadata.notes.push(format!("B = {b} ({scale:?})"));
    Ok(Comparison {
        ours,
        baseline,
        baseline_b: b,
        test_risk,
        complexity_draws: ours_c.draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn input(lambda: f64, m: usize) -> BoundInput {
        BoundInput::new(lambda, m, 0.01, 0.01, SigmaY::Scalar(1.0)).unwrap()
    }

    #[test]
    fn lambda_max_examples() {
        assert_relative_eq!(linear_lambda_max(2.0, 0.1, 1.0, 1600).unwrap(), 50.0, epsilon = 1e-12);
        assert_relative_eq!(linear_lambda_max(1.0, 1.0, 1.0, 16).unwrap(), 1.0, epsilon = 1e-15);
        let small = linear_lambda_max(1e6, 1.0, 1.0, 16).unwrap();
        assert!(small < 1e-5 && small < linear_lambda_max(1e3, 1.0, 1.0, 16).unwrap());
        assert!(linear_lambda_max(0.0, 1.0, 1.0, 16).is_err());
    }

    #[test]
    fn linear_complexity_examples() {
        assert_relative_eq!(linear_complexity(1, 1).unwrap(), 0.14384, epsilon = 1e-5);
        assert!((linear_complexity(10, 784).unwrap() - 1127.7).abs() < 0.1);
        assert!(linear_complexity(0, 3).is_err());
    }

    #[test]
    fn quadratic_mgf_closed_form() {
        assert_eq!(gaussian_quadratic_mgf(0.0, 1.0, 5).unwrap(), 0.0);
        assert_relative_eq!(
            gaussian_quadratic_mgf(0.5, 0.5, 1).unwrap(),
            2f64.sqrt().ln(),
            epsilon = 1e-15
        );
        assert!(matches!(gaussian_quadratic_mgf(1.0, 0.5, 1), Err(Error::Divergence(_))));
    }

    #[test]
    fn quadratic_mgf_mc_plain_prior() {
        let exact = gaussian_quadratic_mgf(0.1, 1.0, 4).unwrap().exp();
        let est = gaussian_quadratic_mgf_mc(0.1, 1.0, 4, 1_000_000, QuadraticMgfSampler::Prior, Seed(3)).unwrap();
        assert!((est.value - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn onaverage_examples() {
        let mut i = input(1000.0, 1000);
        i.b = Some(1.0);
        i.g = Some(0.0);
        assert_eq!(global_onaverage_complexity(&i).unwrap(), 0.0);
        i.g = Some(0.01);
        let c = global_onaverage_complexity(&i).unwrap();
        assert_relative_eq!(c, 1000.0 * std::f64::consts::E * 0.01 / 2.0, epsilon = 1e-12);
        assert!((c - 13.59).abs() < 0.01 && (c / 1000.0 - 0.0136).abs() < 1e-4);
        i.b = Some(0.0);
        i.g = Some(1.0);
        assert_relative_eq!(global_onaverage_complexity(&i).unwrap(), 500.0, epsilon = 1e-12);
        let over = i.with_lambda(1001.0);
        assert!(matches!(global_onaverage_complexity(&over), Err(Error::Constraint(_))));
        i.b = None;
        assert!(matches!(global_onaverage_complexity(&i), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn onaverage_uses_largest_variance() {
        let mut i = input(10.0, 100);
        i.sigma_y = SigmaY::PerLabel(vec![vec![0.5, 2.0], vec![1.0, 1.0]]);
        i.b = Some(0.0);
        i.g = Some(1.0);
        assert_relative_eq!(
            global_onaverage_complexity(&i).unwrap(),
            100.0 * 4.0 / 200.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_bounded_complexity(0.0, 5.0, 10).unwrap(), 0.0);
        assert_relative_eq!(
            baseline_bounded_complexity(1.0, 100.0, 100).unwrap(),
            50.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            baseline_bounded_complexity(2.0, 10.0, 100).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(baseline_bounded_complexity(-1.0, 1.0, 1).is_err());
    }

    #[test]
    fn assemble_examples() {
        let mut i = input(1.0, 10);
        i.delta = (-1.0f64).exp();
        let r = assemble_bound(BoundKind::GlobalOnAverage, 0.0, 0.0, 0.0, &i).unwrap();
        assert_relative_eq!(r.rhs, 1.0, epsilon = 1e-15);

        let i = input(1000.0, 1000);
        let r = assemble_bound(BoundKind::PriorExpectation, 0.02, 10.0, 5.0, &i).unwrap();
        assert_relative_eq!(r.rhs, 0.02 + (15.0 + 100f64.ln()) / 1000.0, epsilon = 1e-15);
        assert!((r.rhs - 0.0396).abs() < 1e-4);

        let r = assemble_bound(BoundKind::PriorExpectation, 0.02, f64::INFINITY, 5.0, &i).unwrap();
        assert_eq!(r.rhs, f64::INFINITY);
        assert!(r.flag.is_some());
        assert!(assemble_bound(BoundKind::PriorExpectation, f64::NAN, 0.0, 0.0, &i).is_err());
    }

    #[test]
    fn linear_bound_enforces_cap() {
        let i = BoundInput::new(51.0, 1600, 0.01, 0.01, SigmaY::Scalar(1.0)).unwrap();
        assert!(matches!(
            linear_bound(2, 3, 2.0, 0.1, 1.0, &i),
            Err(Error::Constraint(_))
        ));
        let r = linear_bound(2, 3, 2.0, 0.1, 1.0, &i.with_lambda(50.0)).unwrap();
        assert_relative_eq!(r.complexity, linear_complexity(2, 3).unwrap());
        assert_eq!(r.kind, BoundKind::LinearLipschitz);
    }

    #[test]
    fn combine_reports_overflow() {
        let c = combine_prior_draws(&[(800.0, 1.0), (0.0, 1.0)], 10.0, 10);
        assert_eq!(c.value, f64::INFINITY);
        assert!(c.diagnostic.unwrap().contains("draw 0"));
        let z = combine_prior_draws(&[(2.3, 0.0); 4], 10.0, 10);
        assert_eq!(z.value, 0.0);
    }
}
