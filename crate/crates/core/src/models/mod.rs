//! Black-box models: the prediction interface, the benchmark models and a
//! client for models served by another process.

mod external;
mod mlp;
mod paired;

pub use external::{ExternalModel, DEFAULT_TIMEOUT};
pub use mlp::{train_mlp, TrainConfig, TrainReport, TwoLayerNet};
pub use paired::PairedThresholdModel;

use crate::{Error, Result};

/// A scalar-output model evaluated on batches of inputs.
///
/// Batches are row-major: `rows.len()` is a multiple of [`dim`](Self::dim) and
/// the output has one value per row, in row order. Predictions must be
/// deterministic.
pub trait BlackBoxModel: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>>;

    /// Input gradient `df/dx`, for models that expose one.
    fn input_gradient(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::NotDifferentiable(self.name()))
    }

    fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.predict(x)?[0])
    }
}

/// Validates a row-major batch against the model dimension.
pub fn check_batch(dim: usize, rows: &[f64]) -> Result<usize> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: if dim == 0 { rows.len() } else { rows.len() % dim },
        });
    }
    Ok(rows.len() / dim)
}

/// Flattens rows into a row-major batch.
pub fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

/// Wraps a closure as a model.
pub struct FnModel<F> {
    name: String,
    dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, dim: usize, f: F) -> Self {
        Self {
            name: name.into(),
            dim,
            f,
        }
    }
}

impl<F> BlackBoxModel for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        check_batch(self.dim, rows)?;
        Ok(rows.chunks_exact(self.dim).map(|x| (self.f)(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fn_model_batches() {
        let m = FnModel::new("first", 3, |x: &[f64]| x[0]);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), vec![1.0, 4.0]);
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            m.input_gradient(&[0.0; 3]),
            Err(Error::NotDifferentiable(_))
        ));
        assert!(m.predict_one(&[1.0; 6]).is_err());
    }
}
