use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::{check_batch, BlackBoxModel};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// `f(x) = sum_{i<p} w_i * 1[|x_i| >= t and |x_{i+p}| >= t]` on `x` in `R^{2p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedThresholdModel {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl PairedThresholdModel {
    pub const DEFAULT_THRESHOLD: f64 = 3.0;
    pub const DEFAULT_HALF_DIM: usize = 50;

    pub fn new(weights: Vec<f64>, threshold: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension("paired model needs p >= 1".into()));
        }
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::Config(format!("threshold must be finite and >= 0, got {threshold}")));
        }
        Ok(Self { weights, threshold })
    }

    /// Draws `w_i = 0.5 + v_i`, `v_i ~ Gamma(1, 1)`.
    pub fn draw(p: usize, threshold: f64, rng: &mut StreamRng) -> Result<Self> {
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        let weights = (0..p).map(|_| 0.5 + rng.sample(gamma)).collect();
        Self::new(weights, threshold)
    }

    pub fn half_dim(&self) -> usize {
        self.weights.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let p = self.half_dim();
        let t = self.threshold;
        self.weights
            .iter()
            .enumerate()
            .filter(|&(i, _)| x[i].abs() >= t && x[i + p].abs() >= t)
            .map(|(_, w)| w)
            .sum()
    }
}

impl BlackBoxModel for PairedThresholdModel {
    fn name(&self) -> String {
        "paired-threshold".into()
    }

    fn dim(&self) -> usize {
        2 * self.half_dim()
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        check_batch(self.dim(), rows)?;
        Ok(rows.chunks_exact(self.dim()).map(|x| self.eval(x)).collect())
    }
}
