//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! seed = 7
//! data.source = synthetic
//! model.depth = 3
//! bound.lambda = m
//! ```
//!
//! Every key has a default; unknown or repeated keys are errors. The config hash is
//! the SHA-256 of the canonical form: every key, sorted, as `key=value` lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gradbound::bounds::{BaselineScale, BoundKind, DEFAULT_POSTERIOR_VARIANCE_RATIO};
use gradbound::models::LossKind;
use gradbound::train::{DepthWidths, TrainConfig};
use gradbound::{DiagonalGaussian, LabeledMixture, Seed};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Every recognized key and its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "results"),
    ("data.source", "synthetic"),
    ("data.mixture", "symmetric"),
    ("data.marginals", ""),
    ("data.means", ""),
    ("data.variances", ""),
    ("data.classes", "10"),
    ("data.dim", "20"),
    ("data.separation", "2.0"),
    ("data.variance", "1.0"),
    ("data.n_train", "1000"),
    ("data.n_test", "2000"),
    ("data.images", ""),
    ("data.labels", ""),
    ("data.test_images", ""),
    ("data.test_labels", ""),
    ("data.csv", ""),
    ("data.test_csv", ""),
    ("data.sigma_y", "mixture"),
    ("model.arch", "mlp"),
    ("model.depth", "3"),
    ("model.hidden", "64"),
    ("model.width_rule", "fixed"),
    ("model.param_budget", "0"),
    ("model.loss", "nll"),
    ("model.checkpoint", ""),
    ("model.image_channels", "1"),
    ("model.image_height", "0"),
    ("model.image_width", "0"),
    ("model.conv_channels", "8"),
    ("model.kernel", "3"),
    ("model.dense_hidden", "64"),
    ("train.learning_rate", "0.01"),
    ("train.momentum", "0.9"),
    ("train.batch_size", "128"),
    ("train.epochs", "50"),
    ("bound.kind", "prior_expectation"),
    ("bound.lambda", "m"),
    ("bound.m", ""),
    ("bound.delta", "0.01"),
    ("bound.prior_variance", "0.01"),
    ("bound.posterior_variance", ""),
    ("bound.b", ""),
    ("bound.g", ""),
    ("bound.n_prior", "64"),
    ("bound.n_data", "4096"),
    ("bound.n_posterior", "32"),
    ("bound.baseline_scale", "max"),
    ("sweep.kind", "figures"),
    ("sweep.lambdas", "sqrt_m,m/4,m/2,m"),
    ("sweep.depths", "1,2,3"),
    ("sweep.prior_variances", "0,0.0001,0.001,0.01,0.1"),
];

/// Key/value pairs as written, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RawConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return Err(HarnessError::config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
            cfg.set(k, v.trim())
                .map_err(|e| HarnessError::config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(HarnessError::config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .unwrap_or_else(|| panic!("no such config key {key}"))
        })
    }

    /// Whether `key` was given explicitly.
    pub fn is_set(&self, key: &str) -> bool {
        self.values.get(key).is_some_and(|v| !v.is_empty())
    }

    /// Every key with its effective value, sorted.
    pub fn canonical(&self) -> String {
        let mut all: BTreeMap<&str, &str> = KEYS.iter().copied().collect();
        for (k, v) in &self.values {
            all.insert(k, v);
        }
        all.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| HarnessError::config(format!("{key} = {v:?} is not a valid value")))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse_as(key).map(Some)
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| HarnessError::config(format!("{key}: {s:?} is not a valid entry")))
            })
            .collect()
    }
}

/// A λ value given relative to the training-set size `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    /// `m · factor`.
    TimesM(f64),
    SqrtM,
}

impl LambdaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || HarnessError::config(format!("λ expression {s:?}; use a number, m, m/<x>, m*<x> or sqrt_m"));
        if s == "m" {
            return Ok(LambdaSpec::TimesM(1.0));
        }
        if s == "sqrt_m" || s == "sqrt(m)" {
            return Ok(LambdaSpec::SqrtM);
        }
        if let Some(d) = s.strip_prefix("m/") {
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            return Ok(LambdaSpec::TimesM(1.0 / d));
        }
        if let Some(f) = s.strip_prefix("m*") {
            return Ok(LambdaSpec::TimesM(f.trim().parse().map_err(|_| bad())?));
        }
        s.parse().map(LambdaSpec::Value).map_err(|_| bad())
    }

    pub fn resolve(self, m: usize) -> f64 {
        match self {
            LambdaSpec::Value(v) => v,
            LambdaSpec::TimesM(f) => f * m as f64,
            LambdaSpec::SqrtM => (m as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSourceConfig {
    Synthetic {
        mixture: LabeledMixture,
        n_train: usize,
        n_test: usize,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
        classes: usize,
    },
    Csv {
        path: PathBuf,
        test: Option<PathBuf>,
        classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaYConfig {
    Mixture,
    Estimated,
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchConfig {
    Linear,
    Mlp {
        depth: usize,
        widths: DepthWidths,
    },
    Cnn {
        channels: usize,
        height: usize,
        width: usize,
        conv_channels: Vec<usize>,
        kernel: usize,
        dense_hidden: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Lambda,
    Depth,
    PriorVariance,
    Figures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    pub kind: BoundKind,
    pub lambda: LambdaSpec,
    pub m: Option<usize>,
    pub delta: f64,
    pub prior_variance: f64,
    pub posterior_variance: f64,
    pub b: Option<f64>,
    pub g: Option<f64>,
    pub n_prior: usize,
    pub n_data: usize,
    pub n_posterior: usize,
    pub baseline_scale: BaselineScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub lambdas: Vec<LambdaSpec>,
    pub depths: Vec<usize>,
    pub prior_variances: Vec<f64>,
}

/// Typed, validated configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub seed: Seed,
    pub out: PathBuf,
    pub data: DataSourceConfig,
    pub sigma_y: SigmaYConfig,
    pub arch: ArchConfig,
    pub loss: LossKind,
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
    pub bound: BoundConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let seed = Seed(raw.parse_as("seed")?);
        let classes: usize = raw.parse_as("data.classes")?;
        let idx_keys = ["data.images", "data.labels", "data.test_images", "data.test_labels"];
        let csv_keys = ["data.csv", "data.test_csv"];
        let forbid = |keys: &[&str], source: &str| -> Result<()> {
            if let Some(k) = keys.iter().find(|k| raw.is_set(k)) {
                return Err(HarnessError::config(format!(
                    "{k} is set but data.source = {source}; exactly one data source is allowed"
                )));
            }
            Ok(())
        };
        let data = match raw.get("data.source") {
            "synthetic" => {
                forbid(&idx_keys, "synthetic")?;
                forbid(&csv_keys, "synthetic")?;
                DataSourceConfig::Synthetic {
                    mixture: mixture_from_config(&raw)?,
                    n_train: raw.parse_as("data.n_train")?,
                    n_test: raw.parse_as("data.n_test")?,
                }
            }
            "idx" => {
                forbid(&csv_keys, "idx")?;
                let images = raw
                    .path("data.images")
                    .ok_or_else(|| HarnessError::config("data.source = idx needs data.images"))?;
                let labels = raw
                    .path("data.labels")
                    .ok_or_else(|| HarnessError::config("data.source = idx needs data.labels"))?;
                let test = match (raw.path("data.test_images"), raw.path("data.test_labels")) {
                    (Some(i), Some(l)) => Some((i, l)),
                    (None, None) => None,
                    _ => {
                        return Err(HarnessError::config(
                            "data.test_images and data.test_labels must be given together",
                        ))
                    }
                };
                DataSourceConfig::Idx {
                    images,
                    labels,
                    test,
                    classes,
                }
            }
            "csv" => {
                forbid(&idx_keys, "csv")?;
                DataSourceConfig::Csv {
                    path: raw
                        .path("data.csv")
                        .ok_or_else(|| HarnessError::config("data.source = csv needs data.csv"))?,
                    test: raw.path("data.test_csv"),
                    classes,
                }
            }
            other => {
                return Err(HarnessError::config(format!(
                    "data.source = {other:?}; expected synthetic, idx or csv"
                )))
            }
        };
        let sigma_y = match raw.get("data.sigma_y") {
            "mixture" => SigmaYConfig::Mixture,
            "estimated" => SigmaYConfig::Estimated,
            _ => {
                let v: f64 = raw.parse_as("data.sigma_y")?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(HarnessError::config("data.sigma_y must be positive"));
                }
                SigmaYConfig::Scalar(v)
            }
        };
        if sigma_y == SigmaYConfig::Mixture && !matches!(data, DataSourceConfig::Synthetic { .. }) {
            return Err(HarnessError::config(
                "data.sigma_y = mixture needs synthetic data; use estimated or a number",
            ));
        }

        let arch = match raw.get("model.arch") {
            "linear" => ArchConfig::Linear,
            "mlp" => {
                let depth: usize = raw.parse_as("model.depth")?;
                let widths = match raw.get("model.width_rule") {
                    "fixed" => DepthWidths::Fixed(raw.parse_as("model.hidden")?),
                    "equal_params" => DepthWidths::EqualParams(raw.parse_as("model.param_budget")?),
                    other => {
                        return Err(HarnessError::config(format!(
                            "model.width_rule = {other:?}; expected fixed or equal_params"
                        )))
                    }
                };
                ArchConfig::Mlp { depth, widths }
            }
            "cnn" => ArchConfig::Cnn {
                channels: raw.parse_as("model.image_channels")?,
                height: raw.parse_as("model.image_height")?,
                width: raw.parse_as("model.image_width")?,
                conv_channels: raw.list("model.conv_channels")?,
                kernel: raw.parse_as("model.kernel")?,
                dense_hidden: raw.parse_as("model.dense_hidden")?,
            },
            other => {
                return Err(HarnessError::config(format!(
                    "model.arch = {other:?}; expected linear, mlp or cnn"
                )))
            }
        };
        let loss = LossKind::parse(raw.get("model.loss")).map_err(|e| HarnessError::config(e.to_string()))?;

        let train = TrainConfig {
            learning_rate: raw.parse_as("train.learning_rate")?,
            momentum: raw.parse_as("train.momentum")?,
            batch_size: raw.parse_as("train.batch_size")?,
            epochs: raw.parse_as("train.epochs")?,
            seed: seed.derive("sgd"),
            loss,
        };
        train.validate().map_err(|e| HarnessError::config(e.to_string()))?;

        let prior_variance: f64 = raw.parse_as("bound.prior_variance")?;
        let bound = BoundConfig {
            kind: BoundKind::parse(raw.get("bound.kind")).map_err(|e| HarnessError::config(e.to_string()))?,
            lambda: LambdaSpec::parse(raw.get("bound.lambda"))?,
            m: if raw.get("bound.m").is_empty() {
                None
            } else {
                Some(raw.parse_as("bound.m")?)
            },
            delta: raw.parse_as("bound.delta")?,
            prior_variance,
            posterior_variance: raw
                .opt_f64("bound.posterior_variance")?
                .unwrap_or(prior_variance * DEFAULT_POSTERIOR_VARIANCE_RATIO),
            b: raw.opt_f64("bound.b")?,
            g: raw.opt_f64("bound.g")?,
            n_prior: raw.parse_as("bound.n_prior")?,
            n_data: raw.parse_as("bound.n_data")?,
            n_posterior: raw.parse_as("bound.n_posterior")?,
            baseline_scale: match raw.get("bound.baseline_scale") {
                "max" => BaselineScale::MaxTrainLoss,
                "mean" => BaselineScale::MeanTrainLoss,
                other => {
                    return Err(HarnessError::config(format!(
                        "bound.baseline_scale = {other:?}; expected max or mean"
                    )))
                }
            },
        };
        if !(bound.delta > 0.0 && bound.delta < 1.0) {
            return Err(HarnessError::config("bound.delta must lie in (0, 1)"));
        }
        if !(prior_variance.is_finite() && prior_variance > 0.0) {
            return Err(HarnessError::config("bound.prior_variance must be positive"));
        }
        if !(bound.posterior_variance.is_finite() && bound.posterior_variance > 0.0) {
            return Err(HarnessError::config("bound.posterior_variance must be positive"));
        }
        if bound.n_prior == 0 || bound.n_data == 0 || bound.n_posterior == 0 {
            return Err(HarnessError::config("estimator sizes must be ≥ 1"));
        }

        let sweep = SweepConfig {
            kind: match raw.get("sweep.kind") {
                "lambda" => SweepKind::Lambda,
                "depth" => SweepKind::Depth,
                "prior_variance" => SweepKind::PriorVariance,
                "figures" => SweepKind::Figures,
                other => {
                    return Err(HarnessError::config(format!(
                        "sweep.kind = {other:?}; expected lambda, depth, prior_variance or figures"
                    )))
                }
            },
            lambdas: raw
                .get("sweep.lambdas")
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(LambdaSpec::parse)
                .collect::<Result<_>>()?,
            depths: raw.list("sweep.depths")?,
            prior_variances: raw.list("sweep.prior_variances")?,
        };
        if sweep.lambdas.is_empty() || sweep.depths.is_empty() || sweep.prior_variances.is_empty() {
            return Err(HarnessError::config("sweep grids must be nonempty"));
        }
        if sweep.depths.contains(&0) {
            return Err(HarnessError::config("sweep.depths entries must be ≥ 1"));
        }

        for key in idx_keys.iter().chain(&csv_keys).chain(&["model.checkpoint"]) {
            if let Some(p) = raw.path(key) {
                if !p.is_file() {
                    return Err(HarnessError::config(format!("{key} = {}: no such file", p.display())));
                }
            }
        }

        Ok(RunConfig {
            seed,
            out: PathBuf::from(raw.get("out")),
            data,
            sigma_y,
            arch,
            loss,
            checkpoint: raw.path("model.checkpoint"),
            train,
            bound,
            sweep,
            raw,
        })
    }

    pub fn hash(&self) -> String {
        self.raw.hash()
    }

    pub fn classes(&self) -> usize {
        match &self.data {
            DataSourceConfig::Synthetic { mixture, .. } => mixture.classes(),
            DataSourceConfig::Idx { classes, .. } | DataSourceConfig::Csv { classes, .. } => *classes,
        }
    }
}

fn float_rows(raw: &RawConfig, key: &str) -> Result<Vec<Vec<f64>>> {
    raw.get(key)
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| HarnessError::config(format!("{key}: {v:?} is not a number")))
                })
                .collect()
        })
        .collect()
}

/// Builds the synthetic mixture from `data.mixture` and its companion keys.
///
/// `symmetric` uses `data.classes`, `data.dim`, `data.separation` and `data.variance`.
/// `explicit` reads `data.marginals = p0,p1,...`, `data.means = m00,m01;m10,m11;...`
/// and `data.variances` in the same row layout.
pub fn mixture_from_config(raw: &RawConfig) -> Result<LabeledMixture> {
    let core = |e: gradbound::Error| HarnessError::config(e.to_string());
    match raw.get("data.mixture") {
        "symmetric" => {
            for key in ["data.marginals", "data.means", "data.variances"] {
                if raw.is_set(key) {
                    return Err(HarnessError::config(format!("{key} needs data.mixture = explicit")));
                }
            }
            LabeledMixture::symmetric(
                raw.parse_as("data.classes")?,
                raw.parse_as("data.dim")?,
                raw.parse_as("data.separation")?,
                raw.parse_as("data.variance")?,
            )
            .map_err(core)
        }
        "explicit" => {
            let marginals: Vec<f64> = raw.list("data.marginals")?;
            let means = float_rows(raw, "data.means")?;
            let variances = float_rows(raw, "data.variances")?;
            if means.len() != marginals.len() || variances.len() != marginals.len() {
                return Err(HarnessError::config(format!(
                    "{} marginals but {} mean rows and {} variance rows",
                    marginals.len(),
                    means.len(),
                    variances.len()
                )));
            }
            let components = means
                .into_iter()
                .zip(variances)
                .map(|(m, v)| DiagonalGaussian::new(m, v))
                .collect::<gradbound::Result<Vec<_>>>()
                .map_err(core)?;
            LabeledMixture::new(marginals, components).map_err(core)
        }
        other => Err(HarnessError::config(format!(
            "data.mixture = {other:?}; expected symmetric or explicit"
        ))),
    }
}

/// The `data.*` lines describing `mixture` in explicit form.
pub fn mixture_to_config(mixture: &LabeledMixture) -> String {
    let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
    let rows = |f: &dyn Fn(&DiagonalGaussian) -> &[f64]| {
        mixture
            .components()
            .iter()
            .map(|c| join(f(c)))
            .collect::<Vec<_>>()
            .join(";")
    };
    format!(
        "data.source = synthetic\ndata.mixture = explicit\ndata.classes = {}\ndata.dim = {}\n\
         data.marginals = {}\ndata.means = {}\ndata.variances = {}\n",
        mixture.classes(),
        mixture.dim(),
        join(mixture.label_marginals()),
        rows(&|c| c.mean()),
        rows(&|c| c.variance()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = RunConfig::from_raw(RawConfig::default()).unwrap();
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.bound.lambda, LambdaSpec::TimesM(1.0));
        assert!((cfg.bound.posterior_variance - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn lambda_expressions() {
        assert_eq!(LambdaSpec::parse("m/4").unwrap().resolve(100), 25.0);
        assert_eq!(LambdaSpec::parse("sqrt_m").unwrap().resolve(100), 10.0);
        assert_eq!(LambdaSpec::parse("7.5").unwrap().resolve(100), 7.5);
        assert_eq!(LambdaSpec::parse("m*2").unwrap().resolve(100), 200.0);
        assert!(LambdaSpec::parse("2m").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let raw = RawConfig::parse("# header\n\nseed = 3  # trailing\nmodel.depth=2\n").unwrap();
        assert_eq!(raw.get("seed"), "3");
        assert_eq!(raw.get("model.depth"), "2");
        assert!(RawConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(RawConfig::parse("no equals sign\n").is_err());
    }

    #[test]
    fn mixture_round_trips_through_config() {
        let mix = LabeledMixture::new(
            vec![0.3, 0.7],
            vec![
                DiagonalGaussian::new(vec![0.1, -2.5], vec![1.0, 0.25]).unwrap(),
                DiagonalGaussian::new(vec![1.0 / 3.0, 4.0], vec![2.0, 1e-3]).unwrap(),
            ],
        )
        .unwrap();
        let raw = RawConfig::parse(&mixture_to_config(&mix)).unwrap();
        assert_eq!(mixture_from_config(&raw).unwrap(), mix);
    }
}
