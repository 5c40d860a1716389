//! SGD with momentum, label-balance reporting and prior/depth/λ sweeps.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{combine_prior_draws, loss_grad_stats, prior_draw_stats, BoundInput, PriorDraw, SigmaY};
use crate::distributions::{DataSource, DiagonalGaussian, Sample};
use crate::error::{Error, Result};
use crate::models::{LossKind, Network};
use crate::rng::Seed;
use crate::stats::{mean, std_error};

/// Any batch loss above this aborts training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
/// Hidden width used by depth sweeps unless configured otherwise.
pub const DEFAULT_SWEEP_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: Seed,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 128,
            epochs: 50,
            seed: Seed(0),
            loss: LossKind::Nll,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be ≥ 1"));
        }
        Ok(())
    }
}

/// Classic momentum: `v ← μv − η∇`, `w ← w + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64, n: usize) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: vec![0.0; n],
        }
    }

    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) {
        for ((wi, vi), gi) in w.iter_mut().zip(&mut self.velocity).zip(grad) {
            *vi = self.momentum * *vi - self.learning_rate * gi;
            *wi += *vi;
        }
    }
}

/// Per-label mean loss and its spread across labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBalance {
    /// `NaN` for labels without samples.
    pub per_label_mean: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean of the per-label means over labels that have samples.
    pub mean: f64,
    /// Population standard deviation of the per-label means.
    pub across_label_std: f64,
}

impl LabelBalance {
    pub fn from_label_means(per_label_mean: Vec<f64>, counts: Vec<usize>) -> Self {
        let present: Vec<f64> = per_label_mean
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .map(|(m, _)| *m)
            .collect();
        let mu = mean(&present);
        let var = if present.is_empty() {
            f64::NAN
        } else {
            present.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / present.len() as f64
        };
        Self {
            per_label_mean,
            counts,
            mean: mu,
            across_label_std: var.sqrt(),
        }
    }

    /// `across_label_std / mean`.
    pub fn relative_spread(&self) -> f64 {
        self.across_label_std / self.mean
    }
}

/// Mean loss per label of one network over `data`.
pub fn label_balance(net: &Network, data: &[Sample], kind: LossKind) -> Result<LabelBalance> {
    let k = net.classes();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for s in data {
        if s.y >= k {
            return Err(Error::invalid(format!("label {} out of range for {k} classes", s.y)));
        }
        sums[s.y] += net.loss(&s.x, s.y, kind)?;
        counts[s.y] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(LabelBalance::from_label_means(means, counts))
}

/// Per-label loss `E_{w∼p} E_{x∼N_y} ℓ(w, x, y)` using `n_per_label` draws per label
/// (or the empirical per-label samples) shared across `n_prior` prior draws.
pub fn prior_label_balance<'a>(
    arch: &Network,
    prior: &DiagonalGaussian,
    data: impl Into<DataSource<'a>>,
    kind: LossKind,
    n_prior: usize,
    n_per_label: usize,
    seed: Seed,
) -> Result<LabelBalance> {
    if n_prior == 0 || n_per_label == 0 {
        return Err(Error::invalid("n_prior and n_per_label must be ≥ 1"));
    }
    let source = data.into();
    let k = source.classes();
    let groups = source.by_label(n_per_label, seed.derive("strata"))?;
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let data: Vec<Sample> = groups.into_iter().flatten().collect();
    let prior_seed = seed.derive("prior");
    let per_draw: Vec<LabelBalance> = (0..n_prior)
        .into_par_iter()
        .map(|j| {
            let net = arch.sample_from(prior, &mut prior_seed.rng(j as u64))?;
            label_balance(&net, &data, kind)
        })
        .collect::<Result<_>>()?;
    let means = (0..k)
        .map(|y| per_draw.iter().map(|b| b.per_label_mean[y]).sum::<f64>() / n_prior as f64)
        .collect();
    Ok(LabelBalance::from_label_means(means, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epoch_losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub wall_time_secs: f64,
    pub label_balance: LabelBalance,
}

/// Minibatch SGD with momentum. Each epoch reshuffles with a stream derived from the
/// run seed and keeps the final partial batch.
pub fn sgd_train(net: &Network, data: &[Sample], cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let start = Instant::now();
    let mut model = net.clone();
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum, model.param_count());
    let shuffle = cfg.seed.derive("shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle.rng(epoch as u64));
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| data[i].clone()));
            let (loss, grad) = model.loss_and_weight_gradient(&batch, cfg.loss)?;
            if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!("epoch {epoch}, batch {b}: loss = {loss}")));
            }
            total += loss * idx.len() as f64;
            opt.step(model.weights_mut(), &grad);
        }
        epoch_losses.push(total / data.len() as f64);
    }
    let label_balance = label_balance(&model, data, cfg.loss)?;
    Ok(TrainTrace {
        epoch_losses,
        weights: model.weights().to_vec(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        label_balance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSweepRow {
    pub prior_variance: f64,
    pub mean_loss: f64,
    pub mean_loss_se: f64,
    pub mean_grad_sq: f64,
    pub mean_grad_sq_se: f64,
}

/// `(σ_p², Ê_D ℓ, Ê_D‖∇_x ℓ‖²)` averaged over `n_prior` draws from `N(0, σ_p² I)`.
pub fn prior_sweep_stats<'a>(
    arch: &Network,
    variances: &[f64],
    data: impl Into<DataSource<'a>>,
    kind: LossKind,
    mc: &crate::bounds::McSettings,
) -> Result<Vec<PriorSweepRow>> {
    if variances.is_empty() {
        return Err(Error::invalid("prior-variance grid is empty"));
    }
    if mc.n_prior == 0 {
        return Err(Error::invalid("n_prior must be ≥ 1"));
    }
    let data = data.into().draw(mc.n_data, mc.seed.derive("data"))?;
    let unit = SigmaY::Scalar(1.0);
    variances
        .par_iter()
        .map(|&v| {
            let prior = DiagonalGaussian::centered(arch.param_count(), v)?;
            let prior_seed = mc.seed.derive("prior");
            let stats: Vec<(f64, f64)> = (0..mc.n_prior)
                .map(|j| {
                    let net = arch.sample_from(&prior, &mut prior_seed.rng(j as u64))?;
                    loss_grad_stats(&net, &data, kind, &unit)
                })
                .collect::<Result<_>>()?;
            let l: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let g: Vec<f64> = stats.iter().map(|s| s.1).collect();
            Ok(PriorSweepRow {
                prior_variance: v,
                mean_loss: mean(&l),
                mean_loss_se: if l.len() > 1 { std_error(&l) } else { 0.0 },
                mean_grad_sq: mean(&g),
                mean_grad_sq_se: if g.len() > 1 { std_error(&g) } else { 0.0 },
            })
        })
        .collect()
}

/// Hidden-layer widths for the networks of a depth sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthWidths {
    /// Every hidden layer has this width.
    Fixed(usize),
    /// Width chosen so each depth has roughly this many parameters.
    EqualParams(usize),
}

impl Default for DepthWidths {
    fn default() -> Self {
        DepthWidths::Fixed(DEFAULT_SWEEP_WIDTH)
    }
}

/// The `depth`-layer ReLU MLP used by sweeps.
pub fn sweep_mlp(d: usize, k: usize, depth: usize, widths: DepthWidths) -> Result<Network> {
    if depth == 0 {
        return Err(Error::invalid("depth must be ≥ 1"));
    }
    let h = match widths {
        DepthWidths::Fixed(h) => h,
        DepthWidths::EqualParams(budget) => crate::models::equal_param_width(d, k, depth, budget),
    };
    if depth > 1 && h == 0 {
        return Err(Error::invalid("hidden width must be ≥ 1"));
    }
    Network::mlp(d, &vec![h; depth - 1], k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub params: usize,
    pub complexity: f64,
    pub mean_b: f64,
    pub mean_g: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSweep {
    pub rows: Vec<DepthRow>,
    /// Set when complexity increases with depth anywhere in the table.
    pub trend_violation: Option<String>,
}

/// Prior-expectation complexity per depth, every depth evaluated with the same seed.
pub fn depth_sweep_complexity<'a>(
    depths: &[usize],
    data: impl Into<DataSource<'a>>,
    input: &BoundInput,
    widths: DepthWidths,
    kind: LossKind,
) -> Result<DepthSweep> {
    if depths.is_empty() {
        return Err(Error::invalid("depth grid is empty"));
    }
    let dist = data.into();
    let rows: Vec<DepthRow> = depths
        .par_iter()
        .map(|&depth| {
            let arch = sweep_mlp(dist.dim(), dist.classes(), depth, widths)?;
            let prior = DiagonalGaussian::centered(arch.param_count(), input.prior_variance)?;
            let c = crate::bounds::per_w_complexity_with_loss(&arch, &prior, dist, input, kind)?;
            Ok(DepthRow {
                depth,
                params: arch.param_count(),
                complexity: c.value,
                mean_b: mean(&c.draws.iter().map(|d| d.b).collect::<Vec<_>>()),
                mean_g: mean(&c.draws.iter().map(|d| d.g).collect::<Vec<_>>()),
                diagnostic: c.diagnostic,
            })
        })
        .collect::<Result<_>>()?;
    let trend_violation = rows.windows(2).find(|w| w[1].complexity > w[0].complexity).map(|w| {
        format!(
            "complexity increases from depth {} ({}) to depth {} ({})",
            w[0].depth, w[0].complexity, w[1].depth, w[1].complexity
        )
    });
    Ok(DepthSweep { rows, trend_violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub complexity: f64,
    /// `C(λ)/λ`.
    pub complexity_over_lambda: f64,
    /// `(C(λ) + KL + ln(1/δ))/λ`.
    pub bound_term: f64,
}

/// Complexity over a λ grid. Prior draws and data are shared by all grid points, so only
/// the exponent scaling differs between rows.
pub fn lambda_sweep<'a>(
    arch: &Network,
    prior: &DiagonalGaussian,
    data: impl Into<DataSource<'a>>,
    input: &BoundInput,
    lambdas: &[f64],
    kl: f64,
    kind: LossKind,
) -> Result<(Vec<LambdaRow>, Vec<PriorDraw>)> {
    if lambdas.is_empty() {
        return Err(Error::invalid("λ grid is empty"));
    }
    for &l in lambdas {
        input.with_lambda(l).validate()?;
        if l > input.m as f64 {
            return Err(Error::Constraint(format!("λ = {l} exceeds m = {}", input.m)));
        }
    }
    let stats = prior_draw_stats(arch, prior, data, kind, &input.sigma_y, &input.mc)?;
    let log_inv_delta = -input.delta.ln();
    let mut draws = Vec::new();
    let rows = lambdas
        .iter()
        .map(|&l| {
            let c = combine_prior_draws(&stats, l, input.m);
            if draws.is_empty() {
                draws = c.draws;
            }
            LambdaRow {
                lambda: l,
                complexity: c.value,
                complexity_over_lambda: c.value / l,
                bound_term: (c.value + kl + log_inv_delta) / l,
            }
        })
        .collect();
    Ok((rows, draws))
}
