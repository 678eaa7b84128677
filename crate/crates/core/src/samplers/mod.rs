//! Counterfactual conditionals `Q(X_S | X_{-S})` and the synthetic
//! data-generating distributions of the benchmark.

mod dataset;
mod synthetic;

pub use dataset::{labels_path, read_dataset, read_labels, write_dataset, Dataset, Labels};
pub use synthetic::{DistributionKind, SyntheticDistribution};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::{Error, Result};

/// A conditional distribution used to redraw a feature subset while the rest
/// of the input is held fixed.
///
/// Implementations are immutable; concurrent callers pass their own streams.
pub trait ConditionalSampler: Send + Sync {
    fn name(&self) -> String;

    /// Draws `n` replacement vectors for `subset`, each of length
    /// `subset.len()` and ordered like `subset`.
    fn sample(
        &self,
        x: &[f64],
        subset: &[usize],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>>;
}

/// Checks that `subset` is non-empty and inside `[0, dim)`.
pub fn check_subset(dim: usize, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset(0));
    }
    match subset.iter().find(|&&i| i >= dim) {
        Some(&index) => Err(Error::IndexOutOfRange { index, dim }),
        None => Ok(()),
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(Error::NonFiniteOutput(v)),
        None => Ok(()),
    }
}

/// Builds the composite input `(replacement on subset, x elsewhere)`.
pub fn composite(x: &[f64], subset: &[usize], replacement: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (&i, &v) in subset.iter().zip(replacement) {
        out[i] = v;
    }
    out
}

/// `Q(X_i | X_{-i}) = N(0, 1)`, independently for every feature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IndependentGaussianQ;

impl ConditionalSampler for IndependentGaussianQ {
    fn name(&self) -> String {
        "independent-gaussian".into()
    }

    fn sample(
        &self,
        x: &[f64],
        subset: &[usize],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>> {
        check_subset(x.len(), subset)?;
        check_input(x)?;
        Ok((0..n)
            .map(|_| subset.iter().map(|_| rng.sample(StandardNormal)).collect())
            .collect())
    }
}

/// `Q(X_i | X_{-i}) = N(m_i, 1)` with `m_i = sum_{j<i} beta_j x_j`.
///
/// For multi-feature subsets every member is redrawn given the *observed*
/// values at positions `j < i`, including positions inside the subset, so the
/// subset is replaced simultaneously given `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoregressiveGaussianQ {
    pub betas: Vec<f64>,
}

impl AutoregressiveGaussianQ {
    pub fn new(betas: Vec<f64>) -> Self {
        Self { betas }
    }

    /// Draws `beta_j ~ N(0, 1/16)` for `j in [0, d)`.
    pub fn draw_betas(d: usize, rng: &mut StreamRng) -> Vec<f64> {
        (0..d)
            .map(|_| 0.25 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn conditional_mean(&self, x: &[f64], i: usize) -> f64 {
        self.betas[..i]
            .iter()
            .zip(&x[..i])
            .map(|(b, v)| b * v)
            .sum()
    }
}

impl ConditionalSampler for AutoregressiveGaussianQ {
    fn name(&self) -> String {
        "autoregressive-gaussian".into()
    }

    fn sample(
        &self,
        x: &[f64],
        subset: &[usize],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.betas.len() {
            return Err(Error::DimensionMismatch {
                expected: self.betas.len(),
                actual: x.len(),
            });
        }
        check_subset(x.len(), subset)?;
        check_input(x)?;
        let means: Vec<f64> = subset
            .iter()
            .map(|&i| self.conditional_mean(x, i))
            .collect();
        Ok((0..n)
            .map(|_| {
                means
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect())
    }
}
