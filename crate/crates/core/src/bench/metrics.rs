use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::{BlackBoxModel, PairedThresholdModel};
use crate::samplers::{Dataset, Labels};
use crate::{Error, Result};

/// Per-(input, feature) flag: the null hypothesis is false.
pub type GroundTruth = Vec<Vec<bool>>;

/// For the paired model, feature `i` matters iff it was drawn from the
/// interesting component and its partner `i +- p` clears the threshold.
pub fn label_ground_truth_paired(labels: &Labels, data: &Dataset, threshold: f64) -> Result<GroundTruth> {
    if labels.rows().len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: labels.rows().len(),
        });
    }
    let d = data.dim();
    if !d.is_multiple_of(2) {
        return Err(Error::InvalidDimension(format!("paired model needs an even dimension, got {d}")));
    }
    let p = d / 2;
    data.rows()
        .iter()
        .zip(labels.rows())
        .map(|(x, flags)| {
            if flags.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: flags.len(),
                });
            }
            Ok((0..d)
                .map(|i| {
                    let partner = if i < p { i + p } else { i - p };
                    flags[i] && x[partner].abs() >= threshold
                })
                .collect())
        })
        .collect()
}

pub fn label_ground_truth_paired_model(
    labels: &Labels,
    data: &Dataset,
    model: &PairedThresholdModel,
) -> Result<GroundTruth> {
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: data.dim(),
        });
    }
    label_ground_truth_paired(labels, data, model.threshold)
}

/// For `sum |x_i|`, a feature matters iff it was drawn from the interesting
/// component.
pub fn label_ground_truth_mlp(labels: &Labels) -> GroundTruth {
    labels.rows().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrTpr {
    /// False discovery proportion; 0 when nothing is selected.
    pub fdr: f64,
    /// True positive proportion; 0 when nothing is important.
    pub tpr: f64,
    /// Nothing was important, so `tpr` carries no information.
    pub truth_empty: bool,
}

/// Plug-in FDR and TPR of one selection against the truth.
pub fn fdr_tpr(selected: &[bool], truth: &[bool]) -> Result<FdrTpr> {
    if selected.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: selected.len(),
        });
    }
    let mut n_sel = 0usize;
    let mut n_true = 0usize;
    let mut hits = 0usize;
    for (&s, &t) in selected.iter().zip(truth) {
        n_sel += usize::from(s);
        n_true += usize::from(t);
        hits += usize::from(s && t);
    }
    let fdr = if n_sel == 0 {
        0.0
    } else {
        (n_sel - hits) as f64 / n_sel as f64
    };
    let tpr = if n_true == 0 {
        0.0
    } else {
        hits as f64 / n_true as f64
    };
    Ok(FdrTpr {
        fdr,
        tpr,
        truth_empty: n_true == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// `x_i * df/dx_i`.
    Taylor,
    /// `|df/dx_i|`.
    Saliency,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Taylor => "taylor",
            BaselineKind::Saliency => "saliency",
        }
    }
}

pub fn baseline_scores(kind: BaselineKind, model: &dyn BlackBoxModel, x: &[f64]) -> Result<Vec<f64>> {
    let grad = model.input_gradient(x)?;
    Ok(match kind {
        BaselineKind::Taylor => grad.iter().zip(x).map(|(g, v)| g * v).collect(),
        BaselineKind::Saliency => grad.iter().map(|g| g.abs()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranking {
    /// Rank by score.
    Signed,
    /// Rank by absolute score.
    Absolute,
}

/// Best TPR reachable at each FDR level by selecting the top `k` scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub points: Vec<(f64, f64)>,
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_levels() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Every `(FDR_k, TPR_k)` for `k = 1..total`, pooling all inputs. Ties are
/// broken by position (input, then feature).
pub fn topk_path(scores: &[Vec<f64>], truth: &[Vec<bool>], ranking: Ranking) -> Result<Vec<(f64, f64)>> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: scores.len(),
        });
    }
    let mut flat = Vec::new();
    for (s, t) in scores.iter().zip(truth) {
        if s.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                actual: s.len(),
            });
        }
        for (&v, &important) in s.iter().zip(t) {
            if !v.is_finite() {
                return Err(Error::NonFiniteOutput(v));
            }
            let key = match ranking {
                Ranking::Signed => v,
                Ranking::Absolute => v.abs(),
            };
            flat.push((key, important));
        }
    }
    // Stable sort keeps positional order among ties.
    flat.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_true = flat.iter().filter(|(_, t)| *t).count();
    let mut hits = 0usize;
    Ok(flat
        .iter()
        .enumerate()
        .map(|(k, &(_, t))| {
            hits += usize::from(t);
            let selected = k + 1;
            let fdr = (selected - hits) as f64 / selected as f64;
            let tpr = if n_true == 0 { 0.0 } else { hits as f64 / n_true as f64 };
            (fdr, tpr)
        })
        .collect())
}

pub fn sweep_curve(
    scores: &[Vec<f64>],
    truth: &[Vec<bool>],
    ranking: Ranking,
    levels: &[f64],
) -> Result<PowerCurve> {
    let path = topk_path(scores, truth, ranking)?;
    let points = levels
        .iter()
        .map(|&level| {
            let best = path
                .iter()
                .filter(|(fdr, _)| *fdr <= level + 1e-12)
                .map(|&(_, tpr)| tpr)
                .fold(0.0, f64::max);
            (level, best)
        })
        .collect();
    Ok(PowerCurve { points })
}

/// Pointwise mean of curves sharing the same levels.
pub fn mean_curve(curves: &[PowerCurve]) -> PowerCurve {
    let Some(first) = curves.first() else {
        return PowerCurve { points: Vec::new() };
    };
    let n = curves.len() as f64;
    let points = first
        .points
        .iter()
        .enumerate()
        .map(|(j, &(level, _))| (level, curves.iter().map(|c| c.points[j].1).sum::<f64>() / n))
        .collect();
    PowerCurve { points }
}

pub fn write_curve(path: &Path, curve: &PowerCurve) -> Result<()> {
    crate::io::atomic_write(path, |w| {
        writeln!(w, "fdr_level,tpr")?;
        for (level, tpr) in &curve.points {
            writeln!(w, "{level},{tpr}")?;
        }
        Ok(())
    })
}

pub fn read_curve(path: &Path) -> Result<PowerCurve> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |j: usize| {
            record
                .get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedCsv {
                    path: path.to_path_buf(),
                    row: i + 1,
                    message: format!("expected two numbers, got {:?}", record.iter().collect::<Vec<_>>()),
                })
        };
        points.push((parse(0)?, parse(1)?));
    }
    Ok(PowerCurve { points })
}

/// Reads externally computed scores, `input_idx,feature_idx,score`, into a
/// dense `inputs x features` grid. Every cell must appear exactly once.
pub fn read_scores(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let malformed = |row: usize, message: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| malformed(row, e.to_string()))?;
        if record.len() != 3 {
            return Err(malformed(row, format!("expected 3 fields, got {}", record.len())));
        }
        let m: usize = record[0].trim().parse().map_err(|_| malformed(row, format!("bad input_idx {:?}", &record[0])))?;
        let j: usize = record[1].trim().parse().map_err(|_| malformed(row, format!("bad feature_idx {:?}", &record[1])))?;
        let s: f64 = record[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| malformed(row, format!("bad score {:?}", &record[2])))?;
        cells.push((row, m, j, s));
    }
    let inputs = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let features = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
    let mut grid = vec![vec![None; features]; inputs];
    for (row, m, j, s) in cells {
        if grid[m][j].replace(s).is_some() {
            return Err(malformed(row, format!("duplicate cell ({m}, {j})")));
        }
    }
    grid.into_iter()
        .enumerate()
        .map(|(m, r)| {
            r.into_iter()
                .enumerate()
                .map(|(j, s)| s.ok_or_else(|| malformed(0, format!("missing cell ({m}, {j})"))))
                .collect()
        })
        .collect()
}

pub fn write_scores(path: &Path, scores: &[Vec<f64>]) -> Result<()> {
    crate::io::atomic_write(path, |w| {
        writeln!(w, "input_idx,feature_idx,score")?;
        for (m, row) in scores.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                writeln!(w, "{m},{j},{s}")?;
            }
        }
        Ok(())
    })
}
