//! Diagonal Gaussians, labeled Gaussian mixtures and their KL divergence.

use std::borrow::Cow;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{chunked, Seed};

/// Floor applied to data-estimated per-label standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Tolerance on `Σ label_marginals = 1`.
pub const MARGINAL_TOL: f64 = 1e-12;

/// A Gaussian with independent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::invalid("gaussian must have dimension ≥ 1"));
        }
        if mean.len() != variance.len() {
            return Err(Error::invalid(format!(
                "mean has length {} but variance has length {}",
                mean.len(),
                variance.len()
            )));
        }
        if let Some(i) = variance.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "variance[{i}] = {} is not a finite nonnegative number",
                variance[i]
            )));
        }
        if let Some(i) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::invalid(format!("mean[{i}] is not finite")));
        }
        Ok(Self { mean, variance })
    }

    /// `N(mean, variance·I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![variance; d])
    }

    /// `N(0, variance·I_d)`.
    pub fn centered(d: usize, variance: f64) -> Result<Self> {
        Self::isotropic(vec![0.0; d], variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// One draw using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.variance)
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }
}

/// A class-conditional Gaussian mixture `D = Σ_y D_y · N_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMixture {
    label_marginals: Vec<f64>,
    components: Vec<DiagonalGaussian>,
}

impl LabeledMixture {
    pub fn new(label_marginals: Vec<f64>, components: Vec<DiagonalGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture has no components"));
        }
        if label_marginals.len() != components.len() {
            return Err(Error::invalid(format!(
                "{} label marginals for {} components",
                label_marginals.len(),
                components.len()
            )));
        }
        if let Some(i) = label_marginals.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(format!(
                "label marginal {i} = {} is negative or not finite",
                label_marginals[i]
            )));
        }
        let total: f64 = label_marginals.iter().sum();
        if (total - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::invalid(format!(
                "label marginals sum to {total}, expected 1 within {MARGINAL_TOL:e}"
            )));
        }
        let d = components[0].dim();
        if let Some(i) = components.iter().position(|c| c.dim() != d) {
            return Err(Error::invalid(format!(
                "component {i} has dimension {} but component 0 has {d}",
                components[i].dim()
            )));
        }
        Ok(Self {
            label_marginals,
            components,
        })
    }

    /// Equal-weight mixture.
    pub fn uniform(components: Vec<DiagonalGaussian>) -> Result<Self> {
        let k = components.len().max(1);
        // 1/k summed k times can drift from 1 by a few ulps; that stays inside MARGINAL_TOL.
        Self::new(vec![1.0 / k as f64; components.len()], components)
    }

    /// Label-symmetric mixture: label `y` has mean `separation·e_{y mod d}` (negated
    /// when `y ≥ d`) and isotropic `variance`, all labels equally likely.
    pub fn symmetric(k: usize, d: usize, separation: f64, variance: f64) -> Result<Self> {
        if k < 2 || d == 0 {
            return Err(Error::invalid(format!("need k ≥ 2 and d ≥ 1, got k = {k}, d = {d}")));
        }
        if k > 2 * d {
            return Err(Error::invalid(format!(
                "at most 2d = {} labels fit in {d} dimensions",
                2 * d
            )));
        }
        if !(variance.is_finite() && variance > 0.0) || !separation.is_finite() {
            return Err(Error::invalid("variance must be positive and separation finite"));
        }
        let components = (0..k)
            .map(|y| {
                let mut mean = vec![0.0; d];
                mean[y % d] = if y < d { separation } else { -separation };
                DiagonalGaussian::isotropic(mean, variance)
            })
            .collect::<Result<_>>()?;
        Self::uniform(components)
    }

    pub fn classes(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn label_marginals(&self) -> &[f64] {
        &self.label_marginals
    }

    pub fn components(&self) -> &[DiagonalGaussian] {
        &self.components
    }

    pub fn component(&self, y: usize) -> &DiagonalGaussian {
        &self.components[y]
    }

    /// Per-label per-dimension standard deviations.
    pub fn label_stds(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(DiagonalGaussian::std).collect()
    }
}

/// Where expectations over the data distribution are taken: fresh draws from a
/// known mixture, or a fixed empirical sample.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Mixture(&'a LabeledMixture),
    Empirical { samples: &'a [Sample], classes: usize },
}

impl<'a> DataSource<'a> {
    pub fn empirical(samples: &'a [Sample], classes: usize) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::invalid("empty data set"))?;
        let d = first.x.len();
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {d}",
                    s.x.len()
                )));
            }
            if s.y >= classes {
                return Err(Error::invalid(format!("sample {i} has label {} ≥ {classes}", s.y)));
            }
        }
        Ok(DataSource::Empirical { samples, classes })
    }

    pub fn dim(&self) -> usize {
        match self {
            DataSource::Mixture(m) => m.dim(),
            DataSource::Empirical { samples, .. } => samples[0].x.len(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DataSource::Mixture(m) => m.classes(),
            DataSource::Empirical { classes, .. } => *classes,
        }
    }

    /// `n` mixture draws, or the whole empirical sample.
    pub fn draw(&self, n: usize, seed: Seed) -> Result<Cow<'a, [Sample]>> {
        match *self {
            DataSource::Mixture(m) => Ok(Cow::Owned(sample_mixture(m, n, seed)?)),
            DataSource::Empirical { samples, .. } => Ok(Cow::Borrowed(samples)),
        }
    }

    /// `n` draws from every label's component, or the empirical sample grouped by label.
    pub fn by_label(&self, n: usize, seed: Seed) -> Result<Vec<Vec<Sample>>> {
        match *self {
            DataSource::Mixture(m) => (0..m.classes())
                .map(|y| {
                    let xs = sample_gaussian(m.component(y), n, seed.child(y as u64))?;
                    Ok(xs.into_iter().map(|x| Sample::new(x, y)).collect())
                })
                .collect(),
            DataSource::Empirical { samples, classes } => {
                let mut groups = vec![Vec::new(); classes];
                for s in samples {
                    groups[s.y].push(s.clone());
                }
                Ok(groups)
            }
        }
    }
}

impl<'a> From<&'a LabeledMixture> for DataSource<'a> {
    fn from(m: &'a LabeledMixture) -> Self {
        DataSource::Mixture(m)
    }
}

/// One labeled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Self { x, y }
    }
}

/// `n` i.i.d. draws from `g`, deterministic in `(g, n, seed)`.
pub fn sample_gaussian(g: &DiagonalGaussian, n: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be ≥ 1"));
    }
    Ok(chunked(seed, n, |rng| g.draw(rng)))
}

/// `n` i.i.d. labeled draws: label from the marginals, then `x` from its component.
pub fn sample_mixture(m: &LabeledMixture, n: usize, seed: Seed) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be ≥ 1"));
    }
    let labels = WeightedIndex::new(&m.label_marginals).map_err(|e| Error::invalid(format!("label marginals: {e}")))?;
    Ok(chunked(seed, n, |rng| {
        let y = labels.sample(rng);
        Sample::new(m.components[y].draw(rng), y)
    }))
}

/// `KL(q ‖ p)` between diagonal Gaussians.
pub fn kl_diag_gaussian(q: &DiagonalGaussian, p: &DiagonalGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::invalid(format!(
            "KL between dimensions {} and {}",
            q.dim(),
            p.dim()
        )));
    }
    if let Some(i) = p.variance.iter().position(|v| *v <= 0.0) {
        return Err(Error::invalid(format!("prior variance[{i}] is zero; KL is infinite")));
    }
    if let Some(i) = q.variance.iter().position(|v| *v <= 0.0) {
        return Err(Error::invalid(format!(
            "posterior variance[{i}] is zero; KL is infinite for a point-mass posterior"
        )));
    }
    let kl = q
        .mean
        .iter()
        .zip(&q.variance)
        .zip(p.mean.iter().zip(&p.variance))
        .map(|((mq, vq), (mp, vp))| {
            let ratio = vq / vp;
            let diff = mq - mp;
            0.5 * (ratio - 1.0 - ratio.ln() + diff * diff / vp)
        })
        .sum::<f64>();
    // each term is ≥ 0 analytically; clear rounding residue
    Ok(kl.max(0.0))
}

/// Per-label mean, standard deviation and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

/// Per-label per-dimension mean and (n−1)-divisor standard deviation, floored at [`STD_FLOOR`].
pub fn empirical_label_stats(data: &[Sample], k: usize) -> Result<Vec<LabelStats>> {
    if k == 0 {
        return Err(Error::invalid("class count must be ≥ 1"));
    }
    let d = data.first().map(|s| s.x.len()).ok_or(Error::InsufficientData {
        label: 0,
        count: 0,
        needed: 2,
    })?;
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for s in data {
        if s.y >= k {
            return Err(Error::invalid(format!("label {} out of range for k = {k}", s.y)));
        }
        if s.x.len() != d {
            return Err(Error::invalid("samples have inconsistent dimension"));
        }
        counts[s.y] += 1;
        for (acc, v) in sums[s.y].iter_mut().zip(&s.x) {
            *acc += v;
        }
    }
    if let Some(label) = counts.iter().position(|&c| c < 2) {
        return Err(Error::InsufficientData {
            label,
            count: counts[label],
            needed: 2,
        });
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
        .collect();
    let mut sq = vec![vec![0.0; d]; k];
    for s in data {
        for ((acc, v), mu) in sq[s.y].iter_mut().zip(&s.x).zip(&means[s.y]) {
            *acc += (v - mu) * (v - mu);
        }
    }
    Ok((0..k)
        .map(|y| LabelStats {
            mean: means[y].clone(),
            std: sq[y]
                .iter()
                .map(|v| (v / (counts[y] - 1) as f64).sqrt().max(STD_FLOOR))
                .collect(),
            count: counts[y],
        })
        .collect())
}
