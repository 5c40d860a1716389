//! Sweep tables, written as CSV for an external plotter.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gradbound::bounds::{posterior_around, BoundInput};
use gradbound::distributions::kl_diag_gaussian;
use gradbound::train::{depth_sweep_complexity, lambda_sweep, prior_sweep_stats, sgd_train, sweep_mlp, DepthWidths};
use gradbound::{DiagonalGaussian, Network};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::commands::{bound_input, sweep_widths};
use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{HarnessError, Result};

/// A named numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: Vec<&'static str>) -> Self {
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    /// One JSON object per row, keyed by column name, plus the table name.
    pub fn row_payloads(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                m.insert("table".into(), Value::from(self.name.clone()));
                for (h, v) in self.header.iter().zip(row) {
                    m.insert((*h).into(), serde_json::to_value(v).unwrap_or(Value::Null));
                }
                Value::Object(m)
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Mean loss and mean squared input-gradient norm under `N(0, σ_p² I)` priors, one
/// block of rows per architecture.
pub fn prior_variance_tables(
    cfg: &RunConfig,
    data: &Dataset,
    archs: &[(usize, Network)],
    names: (&str, &str),
) -> Result<(Table, Table)> {
    let input = bound_input(cfg, data)?;
    let mut loss = Table::new(names.0, vec!["depth", "prior_variance", "mean_loss", "std_error"]);
    let mut grad = Table::new(
        names.1,
        vec!["depth", "prior_variance", "mean_grad_norm_sq", "std_error"],
    );
    let per_arch = archs
        .par_iter()
        .map(|(depth, arch)| {
            prior_sweep_stats(arch, &cfg.sweep.prior_variances, data.population(), cfg.loss, &input.mc)
                .map(|rows| (*depth, rows))
        })
        .collect::<gradbound::Result<Vec<_>>>()?;
    for (depth, rows) in per_arch {
        for r in rows {
            loss.rows
                .push(vec![depth as f64, r.prior_variance, r.mean_loss, r.mean_loss_se]);
            grad.rows
                .push(vec![depth as f64, r.prior_variance, r.mean_grad_sq, r.mean_grad_sq_se]);
        }
    }
    Ok((loss, grad))
}

/// KL from the prior to `N(w_trained, σ_q² I)` for a freshly trained copy of `arch`.
fn trained_kl(cfg: &RunConfig, data: &Dataset, arch: &Network, init_index: u64) -> Result<f64> {
    let init = arch.init_uniform(cfg.seed.derive("init").child(init_index));
    let trace = sgd_train(&init, &data.train, &cfg.train)?;
    let prior = DiagonalGaussian::centered(arch.param_count(), cfg.bound.prior_variance)?;
    let posterior = posterior_around(&trace.weights, cfg.bound.posterior_variance)?;
    Ok(kl_diag_gaussian(&posterior, &prior)?)
}

/// Complexity, `C/λ` and `(C + KL + ln 1/δ)/λ` over the λ grid for each architecture.
/// `kl` supplies a fixed KL per architecture; otherwise each one is trained.
pub fn lambda_table(
    cfg: &RunConfig,
    data: &Dataset,
    archs: &[(usize, Network)],
    kl: Option<f64>,
    name: &str,
) -> Result<Table> {
    let input = bound_input(cfg, data)?;
    let lambdas = lambda_grid(cfg, &input);
    let mut table = Table::new(
        name,
        vec!["depth", "lambda", "complexity", "complexity_over_lambda", "bound_term"],
    );
    let per_arch = archs
        .par_iter()
        .map(|(depth, arch)| {
            let kl = match kl {
                Some(k) => k,
                None => trained_kl(cfg, data, arch, *depth as u64)?,
            };
            let prior = DiagonalGaussian::centered(arch.param_count(), cfg.bound.prior_variance)?;
            let (rows, _) = lambda_sweep(arch, &prior, data.population(), &input, &lambdas, kl, cfg.loss)?;
            Ok((*depth, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    for (depth, rows) in per_arch {
        for r in rows {
            table.rows.push(vec![
                depth as f64,
                r.lambda,
                r.complexity,
                r.complexity_over_lambda,
                r.bound_term,
            ]);
        }
    }
    Ok(table)
}

pub fn lambda_grid(cfg: &RunConfig, input: &BoundInput) -> Vec<f64> {
    cfg.sweep.lambdas.iter().map(|l| l.resolve(input.m)).collect()
}

/// Complexity at the configured λ for each depth of the sweep grid.
pub fn depth_table(cfg: &RunConfig, data: &Dataset, name: &str) -> Result<Table> {
    let input = bound_input(cfg, data)?;
    let sweep = depth_sweep_complexity(
        &cfg.sweep.depths,
        data.population(),
        &input,
        sweep_widths(cfg),
        cfg.loss,
    )?;
    let mut table = Table::new(
        name,
        vec!["depth", "params", "lambda", "complexity", "mean_b", "mean_g"],
    );
    for r in sweep.rows {
        table.rows.push(vec![
            r.depth as f64,
            r.params as f64,
            input.lambda,
            r.complexity,
            r.mean_b,
            r.mean_g,
        ]);
    }
    Ok(table)
}

pub fn depth_archs(cfg: &RunConfig, data: &Dataset, widths: DepthWidths) -> Result<Vec<(usize, Network)>> {
    cfg.sweep
        .depths
        .iter()
        .map(|&depth| Ok((depth, sweep_mlp(data.dim(), data.classes, depth, widths)?)))
        .collect()
}

/// Every figure table over the configured depth, prior-variance and λ grids.
pub fn reproduce_figures(cfg: &RunConfig, data: &Dataset) -> Result<Vec<Table>> {
    let archs = depth_archs(cfg, data, sweep_widths(cfg))?;
    let (loss, grad) = prior_variance_tables(cfg, data, &archs, ("prior_variance_loss", "prior_variance_grad_norm"))?;
    let lambda = lambda_table(cfg, data, &archs, None, "lambda_complexity")?;
    let depth = depth_table(cfg, data, "depth_complexity")?;
    Ok(vec![loss, grad, lambda, depth])
}
