use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification loss applied to the logits `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `log Σ e^{z_ŷ} − z_y`.
    Nll,
    /// `max_ŷ {z_ŷ − z_y + 1[ŷ ≠ y]}`.
    MulticlassHinge,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::MulticlassHinge => "multiclass_hinge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(LossKind::Nll),
            "hinge" | "multiclass_hinge" => Ok(LossKind::MulticlassHinge),
            other => Err(Error::invalid(format!("unknown loss kind {other:?}"))),
        }
    }

    /// Loss value and its gradient with respect to the logits.
    pub fn value_and_grad(self, z: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_logits(z, y)?;
        Ok(match self {
            LossKind::Nll => {
                let (lse_shift, p) = softmax_parts(z);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let value = (max - z[y]) + lse_shift;
                let mut g = p;
                g[y] -= 1.0;
                (value, g)
            }
            LossKind::MulticlassHinge => {
                let (arg, value) = hinge_argmax(z, y);
                let mut g = vec![0.0; z.len()];
                if arg != y {
                    g[arg] += 1.0;
                    g[y] -= 1.0;
                }
                (value, g)
            }
        })
    }

    pub fn value(self, z: &[f64], y: usize) -> Result<f64> {
        check_logits(z, y)?;
        Ok(match self {
            LossKind::Nll => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (max - z[y]) + softmax_parts(z).0
            }
            LossKind::MulticlassHinge => hinge_argmax(z, y).1,
        })
    }

    /// Distance of `z` from the nearest point where the loss is not differentiable.
    /// Infinite for the smooth NLL.
    pub fn kink_distance(self, z: &[f64], y: usize) -> f64 {
        match self {
            LossKind::Nll => f64::INFINITY,
            LossKind::MulticlassHinge => {
                let (arg, best) = hinge_argmax(z, y);
                (0..z.len())
                    .filter(|&j| j != arg)
                    .map(|j| best - hinge_term(z, y, j))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Upper bound on `‖∇_z ℓ̂(z, y)‖₂` over all logits and labels.
///
/// NLL: `‖softmax(z) − e_y‖² = (1 − p_y)² + Σ_{j≠y} p_j² ≤ 2(1 − p_y)² ≤ 2`.
/// Hinge: the subgradient has at most one +1 and one −1 entry.
pub fn lipschitz_bound_hat_loss(kind: LossKind, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("Lipschitz bound needs k ≥ 2 classes"));
    }
    match kind {
        LossKind::Nll | LossKind::MulticlassHinge => Ok(std::f64::consts::SQRT_2),
    }
}

fn check_logits(z: &[f64], y: usize) -> Result<()> {
    if y >= z.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::eval(format!("logit {i} is {}", z[i])));
    }
    Ok(())
}

/// `(ln Σ e^{z − max}, softmax(z))`, with the log computed via `ln_1p`.
fn softmax_parts(z: &[f64]) -> (f64, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let arg = z.iter().position(|v| *v == max).unwrap();
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let rest: f64 = e.iter().enumerate().filter(|(i, _)| *i != arg).map(|(_, v)| v).sum();
    let total = 1.0 + rest;
    let lse = if rest < 0.5 { rest.ln_1p() } else { total.ln() };
    (lse, e.into_iter().map(|v| v / total).collect())
}

fn hinge_term(z: &[f64], y: usize, j: usize) -> f64 {
    z[j] - z[y] + if j == y { 0.0 } else { 1.0 }
}

/// Maximizing index (smallest on ties) and the maximum.
fn hinge_argmax(z: &[f64], y: usize) -> (usize, f64) {
    let mut arg = 0;
    let mut best = hinge_term(z, y, 0);
    for j in 1..z.len() {
        let v = hinge_term(z, y, j);
        if v > best {
            best = v;
            arg = j;
        }
    }
    (arg, best)
}
