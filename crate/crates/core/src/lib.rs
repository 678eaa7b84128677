//! Counterfactual feature testing for black-box models.
//!
//! A feature subset is declared important for a prediction when the model
//! output is surprising relative to outputs on counterfactual inputs, where the
//! subset is redrawn from an uninformative conditional `Q(X_S | X_{-S})` and the
//! rest of the input is held fixed. Two procedures are provided:
//!
//! - [`runners::run_irt`]: a randomization test with `K` counterfactual draws per
//!   subset, followed by a Benjamini-Hochberg (or Benjamini-Yekutieli) correction.
//! - [`runners::run_osft`]: a one-draw test on signed difference statistics,
//!   selected with the knockoff filter threshold.
//!
//! The [`bench`] module contains the synthetic benchmark harness (paired
//! thresholding model and a two-layer network) used to measure empirical FDR
//! and TPR of both procedures.

pub mod bench;
pub mod error;
pub mod io;
pub mod models;
pub mod rng;
pub mod runners;
pub mod samplers;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
