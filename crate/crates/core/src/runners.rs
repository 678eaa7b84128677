//! The randomization test (IRT) and the one-shot feature test (OSFT) run over
//! many inputs and feature subsets.
//!
//! `M` is the number of inputs and `N` the number of subsets per input. Every
//! `(input, subset)` pair draws from its own stream, `key.child(&[m, i])`, so
//! results do not depend on evaluation order.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{atomic_write, write_json};
use crate::models::BlackBoxModel;
use crate::rng::StreamKey;
use crate::samplers::{composite, ConditionalSampler};
use crate::selection::{knockoff_select, Correction, SelectionResult};
use crate::stats::{difference_stat, irt_pvalue, Statistic};
use crate::{Error, Result};

/// Disjoint, non-empty feature subsets over `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetSpec {
    subsets: Vec<Vec<usize>>,
    d: usize,
}

impl SubsetSpec {
    pub fn new(subsets: Vec<Vec<usize>>, d: usize) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::NoHypotheses);
        }
        let mut owner: Vec<Option<usize>> = vec![None; d];
        for (s, subset) in subsets.iter().enumerate() {
            if subset.is_empty() {
                return Err(Error::EmptySubset(s));
            }
            for &i in subset {
                if i >= d {
                    return Err(Error::IndexOutOfRange { index: i, dim: d });
                }
                if let Some(first) = owner[i] {
                    return Err(Error::OverlappingSubsets {
                        first,
                        second: s,
                        feature: i,
                    });
                }
                owner[i] = Some(s);
            }
        }
        Ok(Self { subsets, d })
    }

    /// `{0}, {1}, ..., {d-1}`.
    pub fn singletons(d: usize) -> Self {
        Self {
            subsets: (0..d).map(|i| vec![i]).collect(),
            d,
        }
    }

    /// Reads a JSON array of index arrays.
    pub fn read(path: &Path, d: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read subsets file {}: {e}", path.display())))?;
        let subsets: Vec<Vec<usize>> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad subsets file {}: {e}", path.display())))?;
        Self::new(subsets, d)
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Which statistics share one correction or knockoff pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionScope {
    /// All `M * N` statistics at once.
    #[default]
    Pooled,
    /// Each input's `N` statistics separately.
    PerInput,
}

impl SelectionScope {
    pub fn label(self) -> &'static str {
        match self {
            SelectionScope::Pooled => "pooled",
            SelectionScope::PerInput => "per-input",
        }
    }

    /// Selection groups as `(input range start, input range end)`.
    fn groups(self, m: usize) -> Vec<std::ops::Range<usize>> {
        match self {
            SelectionScope::Pooled => vec![0..m],
            SelectionScope::PerInput => (0..m).map(|i| i..i + 1).collect(),
        }
    }
}

impl fmt::Display for SelectionScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrtConfig {
    /// Counterfactual draws per test, `K`.
    pub draws: usize,
    pub alpha: f64,
    pub statistic: Statistic,
    pub correction: Correction,
    pub scope: SelectionScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsftConfig {
    pub alpha: f64,
    pub statistic: Statistic,
    pub scope: SelectionScope,
}

/// Statistic of the input and of each counterfactual, for one input and all
/// of its subsets.
struct Evaluated {
    /// `t` per subset.
    stats: Vec<f64>,
    /// `draws` null statistics per subset.
    nulls: Vec<Vec<f64>>,
}

fn evaluate_input(
    model: &dyn BlackBoxModel,
    sampler: &dyn ConditionalSampler,
    x: &[f64],
    m: usize,
    subsets: &SubsetSpec,
    draws: usize,
    statistic: Statistic,
    key: &StreamKey,
) -> Result<Evaluated> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    let per_subset = statistic.center_draws() + draws;
    let mut batch = Vec::with_capacity((1 + subsets.len() * per_subset) * d);
    batch.extend_from_slice(x);
    for (i, subset) in subsets.subsets().iter().enumerate() {
        let mut rng = key.child(&[m as u64, i as u64]).rng();
        let replacements = sampler.sample(x, subset, per_subset, &mut rng)?;
        if replacements.len() != per_subset {
            return Err(Error::Protocol(format!(
                "sampler returned {} draws, expected {per_subset}",
                replacements.len()
            )));
        }
        for r in &replacements {
            batch.extend(composite(x, subset, r));
        }
    }

    let y = model.predict(&batch)?;
    if y.len() != batch.len() / d {
        return Err(Error::Protocol(format!(
            "model returned {} outputs for {} rows",
            y.len(),
            batch.len() / d
        )));
    }
    if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteOutput(bad));
    }

    let y_x = y[0];
    let mut stats = Vec::with_capacity(subsets.len());
    let mut nulls = Vec::with_capacity(subsets.len());
    for chunk in y[1..].chunks_exact(per_subset) {
        let (center, rest) = chunk.split_at(statistic.center_draws());
        let center = center.first().copied();
        stats.push(statistic.apply(y_x, center)?);
        nulls.push(
            rest.iter()
                .map(|&v| statistic.apply(v, center))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(Evaluated { stats, nulls })
}

fn check_inputs(model: &dyn BlackBoxModel, inputs: &[Vec<f64>], subsets: &SubsetSpec) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::NoHypotheses);
    }
    if subsets.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: subsets.dim(),
        });
    }
    match inputs.iter().find(|x| x.len() != model.dim()) {
        Some(x) => Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.len(),
        }),
        None => Ok(()),
    }
}

/// Runs the selection once per group of inputs and maps the selected flat
/// indices back to a `M x N` mask.
fn select_groups(
    values: &[Vec<f64>],
    scope: SelectionScope,
    mut select: impl FnMut(&[f64]) -> Result<SelectionResult>,
) -> Result<(Vec<SelectionResult>, Vec<Vec<bool>>)> {
    let n = values.first().map_or(0, Vec::len);
    let mut mask = vec![vec![false; n]; values.len()];
    let mut selections = Vec::new();
    for range in scope.groups(values.len()) {
        let flat: Vec<f64> = values[range.clone()].iter().flatten().copied().collect();
        let selection = select(&flat)?;
        for &k in &selection.selected {
            mask[range.start + k / n][k % n] = true;
        }
        selections.push(selection);
    }
    Ok((selections, mask))
}

fn discoveries(mask: &[Vec<bool>]) -> Vec<(usize, usize)> {
    mask.iter()
        .enumerate()
        .flat_map(|(m, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(move |(i, _)| (m, i))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrtResult {
    pub config: IrtConfig,
    /// `t` per `(input, subset)`.
    pub stats: Vec<Vec<f64>>,
    pub pvalues: Vec<Vec<f64>>,
    /// One entry per selection group; `threshold` is `tau`.
    pub selections: Vec<SelectionResult>,
    pub selected: Vec<Vec<bool>>,
    pub discoveries: Vec<(usize, usize)>,
}

impl IrtResult {
    /// `tau` of the group containing input `m`.
    pub fn tau(&self, m: usize) -> Option<f64> {
        match self.config.scope {
            SelectionScope::Pooled => self.selections[0].threshold,
            SelectionScope::PerInput => self.selections[m].threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsftResult {
    pub config: OsftConfig,
    /// `t` per `(input, subset)`.
    pub stats: Vec<Vec<f64>>,
    /// `t~` per `(input, subset)`.
    pub null_stats: Vec<Vec<f64>>,
    /// `z = t - t~`.
    pub z: Vec<Vec<f64>>,
    /// One entry per selection group; `threshold` is `z*`.
    pub selections: Vec<SelectionResult>,
    pub selected: Vec<Vec<bool>>,
    pub discoveries: Vec<(usize, usize)>,
}

impl OsftResult {
    pub fn z_star(&self, m: usize) -> Option<f64> {
        match self.config.scope {
            SelectionScope::Pooled => self.selections[0].threshold,
            SelectionScope::PerInput => self.selections[m].threshold,
        }
    }
}

pub fn run_irt(
    model: &dyn BlackBoxModel,
    sampler: &dyn ConditionalSampler,
    inputs: &[Vec<f64>],
    subsets: &SubsetSpec,
    config: &IrtConfig,
    key: &StreamKey,
) -> Result<IrtResult> {
    crate::selection::check_alpha(config.alpha)?;
    if config.draws == 0 {
        return Err(Error::EmptyNullSample);
    }
    check_inputs(model, inputs, subsets)?;

    let mut stats = Vec::with_capacity(inputs.len());
    let mut pvalues = Vec::with_capacity(inputs.len());
    for (m, x) in inputs.iter().enumerate() {
        let ev = evaluate_input(model, sampler, x, m, subsets, config.draws, config.statistic, key)?;
        pvalues.push(
            ev.stats
                .iter()
                .zip(&ev.nulls)
                .map(|(&t, nulls)| irt_pvalue(t, nulls).map(|p| p.value()))
                .collect::<Result<Vec<_>>>()?,
        );
        stats.push(ev.stats);
    }

    let (selections, selected) = select_groups(&pvalues, config.scope, |p| {
        config.correction.select(p, config.alpha)
    })?;
    Ok(IrtResult {
        config: *config,
        stats,
        pvalues,
        selections,
        discoveries: discoveries(&selected),
        selected,
    })
}

pub fn run_osft(
    model: &dyn BlackBoxModel,
    sampler: &dyn ConditionalSampler,
    inputs: &[Vec<f64>],
    subsets: &SubsetSpec,
    config: &OsftConfig,
    key: &StreamKey,
) -> Result<OsftResult> {
    crate::selection::check_alpha(config.alpha)?;
    check_inputs(model, inputs, subsets)?;

    let mut stats = Vec::with_capacity(inputs.len());
    let mut null_stats = Vec::with_capacity(inputs.len());
    let mut z = Vec::with_capacity(inputs.len());
    for (m, x) in inputs.iter().enumerate() {
        let ev = evaluate_input(model, sampler, x, m, subsets, 1, config.statistic, key)?;
        let tilde: Vec<f64> = ev.nulls.iter().map(|n| n[0]).collect();
        z.push(
            ev.stats
                .iter()
                .zip(&tilde)
                .map(|(&t, &tt)| difference_stat(t, tt).map(|z| z.value()))
                .collect::<Result<Vec<_>>>()?,
        );
        stats.push(ev.stats);
        null_stats.push(tilde);
    }

    let (selections, selected) =
        select_groups(&z, config.scope, |zs| knockoff_select(zs, config.alpha))?;
    Ok(OsftResult {
        config: *config,
        stats,
        null_stats,
        z,
        selections,
        discoveries: discoveries(&selected),
        selected,
    })
}

/// Provenance written next to a result CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub alpha: f64,
    pub method: String,
    pub statistic: Statistic,
    pub correction: Option<Correction>,
    pub scope: SelectionScope,
    pub draws: Option<usize>,
    pub model: String,
    pub sampler: String,
    pub num_inputs: usize,
    pub num_subsets: usize,
    /// FDR level guaranteed when `M > 1` inputs are pooled: `N * alpha`.
    pub corollary_bound: f64,
    /// `tau` or `z*` per selection group; `null` when nothing was selected.
    pub thresholds: Vec<Option<f64>>,
    pub discoveries: usize,
}

struct Row {
    stat: f64,
    null_or_p: f64,
    z_or_tau: Option<f64>,
    selected: bool,
}

fn write_rows(path: &Path, rows: &[Vec<Row>]) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "input_idx,subset_idx,stat,null_stat_or_pvalue,z_or_tau,selected")?;
        for (m, row) in rows.iter().enumerate() {
            for (i, r) in row.iter().enumerate() {
                let z_or_tau = r.z_or_tau.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{m},{i},{},{},{z_or_tau},{}",
                    r.stat,
                    r.null_or_p,
                    u8::from(r.selected)
                )?;
            }
        }
        Ok(())
    })
}

/// Path of the JSON sidecar for a result CSV: `out.csv` -> `out.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

impl IrtResult {
    pub fn metadata(&self, seed: u64, model: &str, sampler: &str) -> RunMetadata {
        let n = self.stats.first().map_or(0, Vec::len);
        RunMetadata {
            seed,
            alpha: self.config.alpha,
            method: "irt".into(),
            statistic: self.config.statistic,
            correction: Some(self.config.correction),
            scope: self.config.scope,
            draws: Some(self.config.draws),
            model: model.into(),
            sampler: sampler.into(),
            num_inputs: self.stats.len(),
            num_subsets: n,
            corollary_bound: n as f64 * self.config.alpha,
            thresholds: self.selections.iter().map(|s| s.threshold).collect(),
            discoveries: self.discoveries.len(),
        }
    }

    /// Writes the result CSV and its JSON sidecar. `z_or_tau` holds the
    /// group's `tau` (empty when nothing was selected).
    pub fn write(&self, path: &Path, meta: &RunMetadata) -> Result<()> {
        let rows: Vec<Vec<Row>> = (0..self.stats.len())
            .map(|m| {
                (0..self.stats[m].len())
                    .map(|i| Row {
                        stat: self.stats[m][i],
                        null_or_p: self.pvalues[m][i],
                        z_or_tau: self.tau(m),
                        selected: self.selected[m][i],
                    })
                    .collect()
            })
            .collect();
        write_rows(path, &rows)?;
        write_json(&sidecar_path(path), meta)
    }
}

impl OsftResult {
    pub fn metadata(&self, seed: u64, model: &str, sampler: &str) -> RunMetadata {
        let n = self.stats.first().map_or(0, Vec::len);
        RunMetadata {
            seed,
            alpha: self.config.alpha,
            method: "osft".into(),
            statistic: self.config.statistic,
            correction: None,
            scope: self.config.scope,
            draws: None,
            model: model.into(),
            sampler: sampler.into(),
            num_inputs: self.stats.len(),
            num_subsets: n,
            corollary_bound: n as f64 * self.config.alpha,
            thresholds: self.selections.iter().map(|s| s.threshold).collect(),
            discoveries: self.discoveries.len(),
        }
    }

    /// Writes the result CSV and its JSON sidecar. `null_stat_or_pvalue` holds
    /// `t~` and `z_or_tau` holds `z`.
    pub fn write(&self, path: &Path, meta: &RunMetadata) -> Result<()> {
        let rows: Vec<Vec<Row>> = (0..self.stats.len())
            .map(|m| {
                (0..self.stats[m].len())
                    .map(|i| Row {
                        stat: self.stats[m][i],
                        null_or_p: self.null_stats[m][i],
                        z_or_tau: Some(self.z[m][i]),
                        selected: self.selected[m][i],
                    })
                    .collect()
            })
            .collect();
        write_rows(path, &rows)?;
        write_json(&sidecar_path(path), meta)
    }
}
