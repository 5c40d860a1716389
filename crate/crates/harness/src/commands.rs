//! Subcommand implementations. Each returns the records it produced after persisting them.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use gradbound::bounds::{
    assemble_bound, baseline_bounded_complexity, compare_bounds, expected_risks, global_onaverage_complexity,
    linear_bound, per_w_complexity_with_loss, posterior_around, prior_draw_stats, BaselineScale, BoundInput, BoundKind,
    BoundReport, McSettings, SigmaY,
};
use gradbound::distributions::kl_diag_gaussian;
use gradbound::models::{lipschitz_bound_hat_loss, read_checkpoint, write_checkpoint};
use gradbound::stats::{mean, std_error};
use gradbound::train::{
    label_balance, prior_label_balance, sgd_train, sweep_mlp, DepthWidths, LabelBalance, DEFAULT_SWEEP_WIDTH,
};
use gradbound::{DiagonalGaussian, Network, Sample};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{mixture_to_config, ArchConfig, RunConfig, SweepKind};
use crate::data::{write_csv, Dataset};
use crate::error::{HarnessError, Result};
use crate::figures::{depth_table, lambda_table, prior_variance_tables, reproduce_figures, Table};
use crate::persist::{persist, RecordKind, ResultRecord};
use crate::verify::{run_suite, CheckResult};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Per-label sample count used by the prior label-balance statistic.
pub const LABEL_BALANCE_SAMPLES: usize = 512;

pub fn build_arch(cfg: &RunConfig, d: usize, k: usize) -> Result<Network> {
    Ok(match &cfg.arch {
        ArchConfig::Linear => Network::linear(d, k)?,
        ArchConfig::Mlp { depth, widths } => sweep_mlp(d, k, *depth, *widths)?,
        ArchConfig::Cnn {
            channels,
            height,
            width,
            conv_channels,
            kernel,
            dense_hidden,
        } => {
            if channels * height * width != d {
                return Err(HarnessError::config(format!(
                    "CNN input {channels}×{height}×{width} does not match {d} features"
                )));
            }
            Network::cnn(*channels, *height, *width, conv_channels, *kernel, *dense_hidden, k)?
        }
    })
}

/// Hidden widths for depth sweeps: the configured MLP rule, else the default width.
pub fn sweep_widths(cfg: &RunConfig) -> DepthWidths {
    match cfg.arch {
        ArchConfig::Mlp { widths, .. } => widths,
        _ => DepthWidths::Fixed(DEFAULT_SWEEP_WIDTH),
    }
}

/// The bound inputs implied by the config, with `m` defaulting to the training-set size.
pub fn bound_input(cfg: &RunConfig, data: &Dataset) -> Result<BoundInput> {
    let m = cfg.bound.m.unwrap_or(data.train.len());
    let mut input = BoundInput::new(
        cfg.bound.lambda.resolve(m),
        m,
        cfg.bound.delta,
        cfg.bound.prior_variance,
        data.sigma_y.clone(),
    )?;
    input.sigma_y_source = data.sigma_y_source;
    input.b = cfg.bound.b;
    input.g = cfg.bound.g;
    input.mc = McSettings {
        n_prior: cfg.bound.n_prior,
        n_data: cfg.bound.n_data,
        n_posterior: cfg.bound.n_posterior,
        seed: cfg.seed.derive("bound"),
    };
    Ok(input)
}

fn weights_digest(net: &Network) -> String {
    let mut h = Sha256::new();
    for w in net.weights() {
        h.update(w.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub params: usize,
    pub depth: usize,
    pub weights_sha256: String,
    /// `None` when the model was trained inside this run.
    pub checkpoint: Option<PathBuf>,
}

impl ModelInfo {
    fn of(net: &Network, checkpoint: Option<PathBuf>) -> Self {
        Self {
            params: net.param_count(),
            depth: net.depth(),
            weights_sha256: weights_digest(net),
            checkpoint,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainPayload {
    pub epoch_losses: Vec<f64>,
    pub final_train_loss: f64,
    pub label_balance: LabelBalance,
    pub model: ModelInfo,
}

/// A trained network, from `model.checkpoint` or from SGD in this run.
pub struct Trained {
    pub net: Network,
    pub payload: Option<TrainPayload>,
    pub wall_time_secs: f64,
}

pub fn trained_model(cfg: &RunConfig, data: &Dataset) -> Result<Trained> {
    let start = Instant::now();
    if let Some(path) = &cfg.checkpoint {
        let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let net = read_checkpoint(BufReader::new(f))?;
        if net.input_dim() != data.dim() || net.classes() != data.classes {
            return Err(HarnessError::config(format!(
                "checkpoint {} maps {} inputs to {} classes; data has {} features and {} classes",
                path.display(),
                net.input_dim(),
                net.classes(),
                data.dim(),
                data.classes
            )));
        }
        return Ok(Trained {
            net,
            payload: None,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
    }
    let arch = build_arch(cfg, data.dim(), data.classes)?;
    let init = arch.init_uniform(cfg.seed.derive("init"));
    let trace = sgd_train(&init, &data.train, &cfg.train)?;
    let net = arch.with_weights(trace.weights)?;
    let payload = TrainPayload {
        final_train_loss: net.mean_loss(&data.train, cfg.loss)?,
        epoch_losses: trace.epoch_losses,
        label_balance: trace.label_balance,
        model: ModelInfo::of(&net, None),
    };
    Ok(Trained {
        net,
        payload: Some(payload),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Builds, persists and returns records for one command.
struct Recorder<'a> {
    cfg: &'a RunConfig,
    hash: String,
    records: Vec<ResultRecord>,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            hash: cfg.hash(),
            records: Vec::new(),
        }
    }

    fn push<T: Serialize>(&mut self, kind: RecordKind, payload: &T, wall: Option<f64>) -> Result<()> {
        let mut r = ResultRecord::new(kind, payload, &self.hash)?;
        r.wall_time_secs = wall;
        self.records.push(r);
        Ok(())
    }

    fn finish(self) -> Result<Vec<ResultRecord>> {
        persist(&self.records, &self.cfg.out)?;
        Ok(self.records)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenDataPayload {
    pub train_csv: PathBuf,
    pub test_csv: Option<PathBuf>,
    pub mixture_config: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Writes the training (and test) samples as CSV, plus the mixture in config form.
pub fn gen_data(cfg: &RunConfig) -> Result<GenDataPayload> {
    let data = Dataset::load(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    let train_csv = cfg.out.join("train.csv");
    write_csv(&data.train, &train_csv)?;
    let test_csv = match &data.test {
        Some(t) => {
            let p = cfg.out.join("test.csv");
            write_csv(t, &p)?;
            Some(p)
        }
        None => None,
    };
    let mixture_config = match &data.mixture {
        Some(m) => {
            let p = cfg.out.join("mixture.cfg");
            std::fs::write(&p, mixture_to_config(m)).map_err(|e| HarnessError::io(&p, e))?;
            Some(p)
        }
        None => None,
    };
    Ok(GenDataPayload {
        train_csv,
        test_csv,
        mixture_config,
        n_train: data.train.len(),
        n_test: data.test.as_ref().map_or(0, Vec::len),
    })
}

pub fn train(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    if cfg.checkpoint.is_some() {
        return Err(HarnessError::config("train does not take model.checkpoint"));
    }
    let data = Dataset::load(cfg)?;
    let t = trained_model(cfg, &data)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
    let path = cfg.out.join(CHECKPOINT_FILE);
    let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_checkpoint(&t.net, std::io::BufWriter::new(f))?;
    let mut payload = t.payload.expect("trained in this run");
    payload.model.checkpoint = Some(path);
    let mut rec = Recorder::new(cfg);
    rec.push(RecordKind::TrainTrace, &payload, Some(t.wall_time_secs))?;
    rec.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatePayload {
    pub table: &'static str,
    pub n_prior: usize,
    pub n_data: usize,
    pub prior_variance: f64,
    pub mean_loss: f64,
    pub mean_loss_se: f64,
    pub max_loss: f64,
    /// Squared input-gradient norms, unweighted.
    pub mean_grad_sq: f64,
    pub mean_grad_sq_se: f64,
    pub max_grad_sq: f64,
    /// Squared input-gradient norms weighted by σ_y.
    pub mean_weighted_grad_sq: f64,
    pub label_balance: LabelBalance,
    pub trained: Option<TrainedStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainedStats {
    pub train_loss: f64,
    pub train_grad_sq: f64,
    pub label_balance: LabelBalance,
    pub model: ModelInfo,
}

fn se(xs: &[f64]) -> f64 {
    if xs.len() > 1 {
        std_error(xs)
    } else {
        0.0
    }
}

/// Loss and gradient statistics over prior draws, and of the checkpointed model if given.
pub fn estimate(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let start = Instant::now();
    let data = Dataset::load(cfg)?;
    let input = bound_input(cfg, &data)?;
    let arch = build_arch(cfg, data.dim(), data.classes)?;
    let prior = DiagonalGaussian::centered(arch.param_count(), cfg.bound.prior_variance)?;
    let raw = prior_draw_stats(
        &arch,
        &prior,
        data.population(),
        cfg.loss,
        &SigmaY::Scalar(1.0),
        &input.mc,
    )?;
    let weighted = prior_draw_stats(&arch, &prior, data.population(), cfg.loss, &input.sigma_y, &input.mc)?;
    let b: Vec<f64> = raw.iter().map(|s| s.0).collect();
    let g: Vec<f64> = raw.iter().map(|s| s.1).collect();
    let gw: Vec<f64> = weighted.iter().map(|s| s.1).collect();
    let balance = prior_label_balance(
        &arch,
        &prior,
        data.population(),
        cfg.loss,
        cfg.bound.n_prior,
        LABEL_BALANCE_SAMPLES,
        input.mc.seed.derive("label-balance"),
    )?;
    let trained = match &cfg.checkpoint {
        Some(path) => {
            let t = trained_model(cfg, &data)?;
            let (l, g) = gradbound::bounds::loss_grad_stats(&t.net, &data.train, cfg.loss, &SigmaY::Scalar(1.0))?;
            Some(TrainedStats {
                train_loss: l,
                train_grad_sq: g,
                label_balance: label_balance(&t.net, &data.train, cfg.loss)?,
                model: ModelInfo::of(&t.net, Some(path.clone())),
            })
        }
        None => None,
    };
    let payload = EstimatePayload {
        table: "estimate",
        n_prior: cfg.bound.n_prior,
        n_data: cfg.bound.n_data,
        prior_variance: cfg.bound.prior_variance,
        mean_loss: mean(&b),
        mean_loss_se: se(&b),
        max_loss: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_grad_sq: mean(&g),
        mean_grad_sq_se: se(&g),
        max_grad_sq: g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_weighted_grad_sq: mean(&gw),
        label_balance: balance,
        trained,
    };
    let mut rec = Recorder::new(cfg);
    rec.push(RecordKind::SweepRow, &payload, Some(start.elapsed().as_secs_f64()))?;
    rec.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundPayload {
    pub command: &'static str,
    pub role: &'static str,
    pub report: BoundReport,
    /// Posterior-averaged risk on held-out data, when there is any.
    pub test_risk: Option<f64>,
    pub baseline_b: Option<f64>,
    pub model: ModelInfo,
}

fn train_losses(net: &Network, train: &[Sample], cfg: &RunConfig) -> Result<Vec<f64>> {
    Ok(train
        .iter()
        .map(|s| net.loss(&s.x, s.y, cfg.loss))
        .collect::<gradbound::Result<_>>()?)
}

fn baseline_b(losses: &[f64], scale: BaselineScale) -> f64 {
    match scale {
        BaselineScale::MaxTrainLoss => losses.iter().copied().fold(0.0, f64::max),
        BaselineScale::MeanTrainLoss => mean(losses),
    }
}

fn held_out_risk(cfg: &RunConfig, data: &Dataset, net: &Network, input: &BoundInput) -> Result<Option<f64>> {
    let Some(reference) = data.held_out() else {
        return Ok(None);
    };
    let posterior = posterior_around(net.weights(), cfg.bound.posterior_variance)?;
    Ok(Some(
        expected_risks(net, &posterior, &data.train, reference, cfg.loss, &input.mc)?.1,
    ))
}

/// One bound of the configured kind around the trained (or checkpointed) model.
pub fn bound(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let start = Instant::now();
    let data = Dataset::load(cfg)?;
    let mut input = bound_input(cfg, &data)?;
    let kind = cfg.bound.kind;
    if kind == BoundKind::LinearLipschitz && (cfg.checkpoint.is_none() && cfg.arch != ArchConfig::Linear) {
        return Err(HarnessError::config(
            "bound.kind = linear_lipschitz needs model.arch = linear",
        ));
    }
    let t = trained_model(cfg, &data)?;
    let net = &t.net;
    let prior = DiagonalGaussian::centered(net.param_count(), input.prior_variance)?;
    let posterior = posterior_around(net.weights(), cfg.bound.posterior_variance)?;
    let kl = kl_diag_gaussian(&posterior, &prior)?;
    let reference = data.held_out().unwrap_or(data.population());
    let (risk, held_out) = expected_risks(net, &posterior, &data.train, reference, cfg.loss, &input.mc)?;
    let test_risk = data.held_out().map(|_| held_out);

    let mut b_used = None;
    let report = match kind {
        BoundKind::PriorExpectation => {
            let c = per_w_complexity_with_loss(net, &prior, data.population(), &input, cfg.loss)?;
            let mut r = assemble_bound(kind, risk, c.value, kl, &input)?;
            if let Some(d) = c.diagnostic {
                r.flag = Some(d);
            }
            r
        }
        BoundKind::GlobalOnAverage => {
            let mut notes = Vec::new();
            if input.b.is_none() || input.g.is_none() {
                let stats = prior_draw_stats(
                    net,
                    &prior,
                    data.population(),
                    cfg.loss,
                    &SigmaY::Scalar(1.0),
                    &input.mc,
                )?;
                if input.b.is_none() {
                    input.b = Some(stats.iter().map(|s| s.0).fold(0.0, f64::max));
                    notes.push(format!("b = max over {} prior draws", stats.len()));
                }
                if input.g.is_none() {
                    input.g = Some(stats.iter().map(|s| s.1).fold(0.0, f64::max));
                    notes.push(format!("g = max over {} prior draws", stats.len()));
                }
            }
            let c = global_onaverage_complexity(&input)?;
            let mut r = assemble_bound(kind, risk, c, kl, &input)?;
            notes.push(format!(
                "b = {}, g = {}",
                input.b.unwrap_or(f64::NAN),
                input.g.unwrap_or(f64::NAN)
            ));
            r.metadata.notes.extend(notes);
            r
        }
        BoundKind::LinearLipschitz => {
            if net.as_linear().is_none() {
                return Err(HarnessError::config(
                    "bound.kind = linear_lipschitz needs a linear model",
                ));
            }
            let g = lipschitz_bound_hat_loss(cfg.loss, data.classes)?;
            linear_bound(data.classes, data.dim(), g, risk, kl, &input)?
        }
        BoundKind::BoundedBaseline => {
            let b = baseline_b(&train_losses(net, &data.train, cfg)?, cfg.bound.baseline_scale);
            b_used = Some(b);
            let c = baseline_bounded_complexity(b, input.lambda, input.m)?;
            let mut r = assemble_bound(kind, risk, c, kl, &input)?;
            r.metadata
                .notes
                .push(format!("B = {b} ({:?})", cfg.bound.baseline_scale));
            r
        }
    };
    let payload = BoundPayload {
        command: "bound",
        role: kind.name(),
        report,
        test_risk,
        baseline_b: b_used,
        model: ModelInfo::of(net, cfg.checkpoint.clone()),
    };
    let mut rec = Recorder::new(cfg);
    if let Some(p) = &t.payload {
        rec.push(RecordKind::TrainTrace, p, Some(t.wall_time_secs))?;
    }
    rec.push(RecordKind::Bound, &payload, Some(start.elapsed().as_secs_f64()))?;
    rec.finish()
}

/// The prior-expectation bound and the bounded baseline on the same model, sharing
/// empirical risk and KL.
pub fn compare(cfg: &RunConfig) -> Result<Vec<ResultRecord>> {
    let start = Instant::now();
    let data = Dataset::load(cfg)?;
    let input = bound_input(cfg, &data)?;
    let t = trained_model(cfg, &data)?;
    let c = compare_bounds(
        &t.net,
        cfg.bound.posterior_variance,
        data.population(),
        &data.train,
        &input,
        cfg.bound.baseline_scale,
    )?;
    let test_risk = if data.mixture.is_some() {
        Some(c.test_risk)
    } else {
        held_out_risk(cfg, &data, &t.net, &input)?
    };
    let model = ModelInfo::of(&t.net, cfg.checkpoint.clone());
    let wall = start.elapsed().as_secs_f64();
    let mut rec = Recorder::new(cfg);
    if let Some(p) = &t.payload {
        rec.push(RecordKind::TrainTrace, p, Some(t.wall_time_secs))?;
    }
    for (role, report, b) in [("ours", c.ours, None), ("baseline", c.baseline, Some(c.baseline_b))] {
        let payload = BoundPayload {
            command: "compare",
            role,
            report,
            test_risk,
            baseline_b: b,
            model: model.clone(),
        };
        rec.push(RecordKind::Bound, &payload, Some(wall))?;
    }
    rec.finish()
}

/// Runs the configured sweep, writes one CSV per table and records every row.
pub fn sweep(cfg: &RunConfig) -> Result<(Vec<ResultRecord>, Vec<PathBuf>)> {
    let start = Instant::now();
    let data = Dataset::load(cfg)?;
    let tables: Vec<Table> = match cfg.sweep.kind {
        SweepKind::Figures => reproduce_figures(cfg, &data)?,
        SweepKind::Depth => vec![depth_table(cfg, &data, "depth_complexity")?],
        SweepKind::PriorVariance => {
            let arch = build_arch(cfg, data.dim(), data.classes)?;
            let (l, g) = prior_variance_tables(
                cfg,
                &data,
                &[(arch.depth(), arch)],
                ("prior_variance_loss", "prior_variance_grad_norm"),
            )?;
            vec![l, g]
        }
        SweepKind::Lambda => {
            let t = trained_model(cfg, &data)?;
            let prior = DiagonalGaussian::centered(t.net.param_count(), cfg.bound.prior_variance)?;
            let posterior = posterior_around(t.net.weights(), cfg.bound.posterior_variance)?;
            let kl = kl_diag_gaussian(&posterior, &prior)?;
            vec![lambda_table(
                cfg,
                &data,
                &[(t.net.depth(), t.net.clone())],
                Some(kl),
                "lambda_complexity",
            )?]
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let mut paths = Vec::new();
    let mut rec = Recorder::new(cfg);
    for table in &tables {
        paths.push(table.write(&cfg.out)?);
        for row in table.row_payloads() {
            rec.push(RecordKind::SweepRow, &row, Some(wall))?;
        }
    }
    Ok((rec.finish()?, paths))
}

/// Runs and records the identity suite. Failed checks are reported in the records,
/// not as an error.
pub fn verify(cfg: &RunConfig, samples: usize) -> Result<Vec<CheckResult>> {
    let start = Instant::now();
    let checks = run_suite(cfg.seed.derive("verify"), samples)?;
    let wall = start.elapsed().as_secs_f64();
    let mut rec = Recorder::new(cfg);
    for c in &checks {
        rec.push(RecordKind::Verify, c, Some(wall))?;
    }
    rec.finish()?;
    Ok(checks)
}
