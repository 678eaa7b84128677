use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AutoregressiveGaussianQ, ConditionalSampler, Dataset, IndependentGaussianQ, Labels};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Mean of the "interesting" mixture component `N(4, 1)`.
pub const INTERESTING_MEAN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionKind {
    /// Null component `N(0, 1)`.
    Independent,
    /// Null component `N(sum_{j<i} beta_j x_j, 1)`, generated sequentially.
    Correlated { betas: Vec<f64> },
}

/// Per-feature mixture: with probability `h` the feature is drawn from the
/// interesting component `N(4, 1)`, otherwise from the null component, which is
/// exactly the counterfactual conditional of [`SyntheticDistribution::counterfactual`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    pub kind: DistributionKind,
    pub h: f64,
    pub d: usize,
}

impl SyntheticDistribution {
    pub fn independent(d: usize, h: f64) -> Self {
        Self {
            kind: DistributionKind::Independent,
            h,
            d,
        }
    }

    /// Correlated distribution with freshly drawn `beta_j ~ N(0, 1/16)`.
    pub fn correlated(d: usize, h: f64, rng: &mut StreamRng) -> Self {
        Self::correlated_with(AutoregressiveGaussianQ::draw_betas(d, rng), h)
    }

    pub fn correlated_with(betas: Vec<f64>, h: f64) -> Self {
        Self {
            d: betas.len(),
            kind: DistributionKind::Correlated { betas },
            h,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            DistributionKind::Independent => "independent",
            DistributionKind::Correlated { .. } => "correlated",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension("d must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.h) {
            return Err(Error::Config(format!("h must lie in [0, 1], got {}", self.h)));
        }
        if let DistributionKind::Correlated { betas } = &self.kind {
            if betas.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: betas.len(),
                });
            }
        }
        Ok(())
    }

    /// The counterfactual conditional matching this distribution's null
    /// component.
    pub fn counterfactual(&self) -> Box<dyn ConditionalSampler> {
        match &self.kind {
            DistributionKind::Independent => Box::new(IndependentGaussianQ),
            DistributionKind::Correlated { betas } => {
                Box::new(AutoregressiveGaussianQ::new(betas.clone()))
            }
        }
    }

    /// Draws one input and its per-feature interesting flags.
    pub fn sample_row(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<bool>) {
        let mut x = Vec::with_capacity(self.d);
        let mut flags = Vec::with_capacity(self.d);
        let mut mean = 0.0;
        for i in 0..self.d {
            let interesting = rng.random_bool(self.h);
            let noise: f64 = rng.sample(StandardNormal);
            let v = if interesting {
                INTERESTING_MEAN + noise
            } else {
                mean + noise
            };
            if let DistributionKind::Correlated { betas } = &self.kind {
                mean += betas[i] * v;
            }
            x.push(v);
            flags.push(interesting);
        }
        (x, flags)
    }

    /// Generates `n` inputs with their interesting flags.
    pub fn gen_dataset(&self, n: usize, rng: &mut StreamRng) -> Result<(Dataset, Labels)> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidDimension("sample count must be at least 1".into()));
        }
        let (rows, flags): (Vec<_>, Vec<_>) = (0..n).map(|_| self.sample_row(rng)).unzip();
        Ok((Dataset::new(rows)?, Labels::new(flags)?))
    }
}
