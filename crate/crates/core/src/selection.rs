//! Multiple-testing selection: Benjamini-Hochberg, Benjamini-Yekutieli and the
//! knockoff filter threshold.
//!
//! Throughout, `N` is the number of hypotheses (not the number of
//! counterfactual draws).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome of one selection pass.
///
/// `threshold` is `tau` for p-value procedures (select `p <= tau`) and `z*` for
/// the knockoff filter (select `z >= z*`). It is `None` exactly when nothing is
/// selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub threshold: Option<f64>,
    pub selected: Vec<usize>,
    pub alpha: f64,
}

impl SelectionResult {
    fn empty(alpha: f64) -> Self {
        Self {
            threshold: None,
            selected: Vec::new(),
            alpha,
        }
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.selected {
            mask[i] = true;
        }
        mask
    }
}

/// P-value correction used by the randomization test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    /// Benjamini-Hochberg: valid under independence or positive dependence.
    #[default]
    Bh,
    /// Benjamini-Yekutieli: valid under arbitrary dependence.
    By,
}

impl Correction {
    pub fn select(self, pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
        match self {
            Correction::Bh => bh_select(pvalues, alpha),
            Correction::By => by_select(pvalues, alpha),
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correction::Bh => "bh",
            Correction::By => "by",
        })
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::NoHypotheses);
    }
    for (index, &value) in pvalues.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InvalidPValue { index, value });
        }
    }
    Ok(())
}

/// Step-up with level `level`: largest rank `i` with `p_(i) <= i * level / N`.
fn step_up(pvalues: &[f64], level: f64, alpha: f64) -> SelectionResult {
    let n = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tau = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|(i, &p)| p <= (i + 1) as f64 * level / n as f64)
        .map(|(_, &p)| p);
    match tau {
        None => SelectionResult::empty(alpha),
        Some(tau) => SelectionResult {
            threshold: Some(tau),
            selected: (0..n).filter(|&i| pvalues[i] <= tau).collect(),
            alpha,
        },
    }
}

pub fn bh_select(pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    check_pvalues(pvalues)?;
    Ok(step_up(pvalues, alpha, alpha))
}

/// Harmonic number `H_n = sum_{j=1}^n 1/j`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

pub fn by_select(pvalues: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    check_pvalues(pvalues)?;
    Ok(step_up(pvalues, alpha / harmonic(pvalues.len()), alpha))
}

/// Knockoff filter on difference statistics.
///
/// Candidate thresholds are the distinct non-zero magnitudes `|z_i|`; `z*` is
/// the smallest candidate `c` with `(1 + #{z_i <= -c}) / #{z_i >= c} <= alpha`.
/// A candidate with an empty denominator never qualifies, and exact zeros are
/// never selected.
pub fn knockoff_select(zs: &[f64], alpha: f64) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    if zs.is_empty() {
        return Err(Error::NoHypotheses);
    }
    for (index, &value) in zs.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteStatistic { index, value });
        }
    }

    let mut sorted = zs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = zs.iter().filter(|z| **z != 0.0).map(|z| z.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let n = sorted.len();
    let z_star = candidates.into_iter().find(|&c| {
        let positives = n - sorted.partition_point(|&z| z < c);
        let negatives = sorted.partition_point(|&z| z <= -c);
        positives > 0 && (1 + negatives) as f64 / positives as f64 <= alpha
    });

    Ok(match z_star {
        None => SelectionResult::empty(alpha),
        Some(c) => SelectionResult {
            threshold: Some(c),
            selected: (0..n).filter(|&i| zs[i] >= c).collect(),
            alpha,
        },
    })
}
