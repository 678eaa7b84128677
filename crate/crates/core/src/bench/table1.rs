use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    baseline_scores, default_levels, fdr_tpr, label_ground_truth_mlp, label_ground_truth_paired, mean_curve,
    sweep_curve, write_curve, BaselineKind, GroundTruth, PowerCurve, Ranking,
};
use crate::io::{atomic_write, write_json};
use crate::models::{train_mlp, BlackBoxModel, PairedThresholdModel, TrainConfig, TrainReport, TwoLayerNet};
use crate::rng::{tag, StreamKey};
use crate::runners::{run_irt, run_osft, IrtConfig, OsftConfig, SelectionScope, SubsetSpec};
use crate::samplers::{AutoregressiveGaussianQ, SyntheticDistribution};
use crate::selection::Correction;
use crate::stats::Statistic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionChoice {
    Independent,
    Correlated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    /// The paired threshold model.
    Discontinuous,
    /// The two-layer network fit to `sum |x_i|`.
    NeuralNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Irt,
    Osft,
}

macro_rules! labelled {
    ($ty:ty { $($variant:ident => $label:literal),* $(,)? }) => {
        impl $ty {
            pub fn label(self) -> &'static str {
                match self {
                    $(Self::$variant => $label,)*
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

labelled!(DistributionChoice { Independent => "independent", Correlated => "correlated" });
labelled!(ModelChoice { Discontinuous => "discontinuous", NeuralNet => "neural-net" });
labelled!(Method { Irt => "irt", Osft => "osft" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Config {
    pub seed: u64,
    pub alpha: f64,
    pub runs: usize,
    /// Test inputs per run.
    pub samples: usize,
    /// Counterfactual draws per IRT test.
    pub draws: usize,
    /// Probability that a feature comes from the interesting component.
    pub h: f64,
    pub correction: Correction,
    pub irt_scope: SelectionScope,
    pub osft_scope: SelectionScope,
    /// The paired model acts on `2 * half_dim` features.
    pub half_dim: usize,
    pub threshold: f64,
    pub mlp_dim: usize,
    pub train: TrainConfig,
    pub distributions: Vec<DistributionChoice>,
    pub models: Vec<ModelChoice>,
    /// Worker threads across runs; 1 runs serially. Not recorded in outputs,
    /// which do not depend on it.
    #[serde(skip_serializing)]
    pub jobs: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            seed: 1,
            alpha: 0.2,
            runs: 10,
            samples: 100,
            draws: 100,
            h: 0.3,
            correction: Correction::Bh,
            irt_scope: SelectionScope::PerInput,
            osft_scope: SelectionScope::Pooled,
            half_dim: PairedThresholdModel::DEFAULT_HALF_DIM,
            threshold: PairedThresholdModel::DEFAULT_THRESHOLD,
            mlp_dim: 25,
            train: TrainConfig::default(),
            distributions: vec![DistributionChoice::Independent, DistributionChoice::Correlated],
            models: vec![ModelChoice::Discontinuous, ModelChoice::NeuralNet],
            jobs: 1,
        }
    }
}

impl Table1Config {
    pub fn validate(&self) -> Result<()> {
        crate::selection::check_alpha(self.alpha)?;
        if self.runs == 0 || self.samples == 0 {
            return Err(Error::Config("runs and samples must be at least 1".into()));
        }
        if self.draws == 0 {
            return Err(Error::EmptyNullSample);
        }
        if !(0.0..=1.0).contains(&self.h) {
            return Err(Error::Config(format!("h must lie in [0, 1], got {}", self.h)));
        }
        if self.half_dim == 0 || self.mlp_dim == 0 {
            return Err(Error::InvalidDimension("model dimensions must be at least 1".into()));
        }
        if self.distributions.is_empty() || self.models.is_empty() {
            return Err(Error::Config("select at least one distribution and one model".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// The frozen model and data distribution of one (distribution, model) cell.
#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub distribution: DistributionChoice,
    pub model: ModelChoice,
    pub data: SyntheticDistribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<PairedThresholdModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net: Option<TwoLayerNet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainReport>,
}

impl Instance {
    pub fn build(
        distribution: DistributionChoice,
        model: ModelChoice,
        config: &Table1Config,
        key: &StreamKey,
    ) -> Result<Self> {
        let key = key.child(&[tag::INSTANCE, distribution as u64, model as u64]);
        let d = match model {
            ModelChoice::Discontinuous => 2 * config.half_dim,
            ModelChoice::NeuralNet => config.mlp_dim,
        };
        let data = match distribution {
            DistributionChoice::Independent => SyntheticDistribution::independent(d, config.h),
            DistributionChoice::Correlated => {
                let betas = AutoregressiveGaussianQ::draw_betas(d, &mut key.child(&[0]).rng());
                SyntheticDistribution::correlated_with(betas, config.h)
            }
        };
        data.validate()?;
        let mut instance = Self {
            distribution,
            model,
            data,
            paired: None,
            net: None,
            training: None,
        };
        match model {
            ModelChoice::Discontinuous => {
                let mut rng = key.child(&[1]).rng();
                instance.paired = Some(PairedThresholdModel::draw(config.half_dim, config.threshold, &mut rng)?);
            }
            ModelChoice::NeuralNet => {
                let mut rng = key.child(&[tag::TRAIN]).rng();
                let (net, report) = train_mlp(&instance.data, &config.train, &mut rng)?;
                instance.net = Some(net);
                instance.training = Some(report);
            }
        }
        Ok(instance)
    }

    pub fn model(&self) -> &dyn BlackBoxModel {
        match (&self.paired, &self.net) {
            (Some(m), _) => m,
            (_, Some(n)) => n,
            _ => unreachable!("instance always holds a model"),
        }
    }

    fn truth(&self, labels: &crate::samplers::Labels, data: &crate::samplers::Dataset) -> Result<GroundTruth> {
        match &self.paired {
            Some(m) => label_ground_truth_paired(labels, data, m.threshold),
            None => Ok(label_ground_truth_mlp(labels)),
        }
    }
}

/// FDR and TPR of one run of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRunRecord {
    pub distribution: DistributionChoice,
    pub model: ModelChoice,
    pub method: Method,
    pub statistic: Statistic,
    pub run: usize,
    pub alpha: f64,
    pub fdr: f64,
    /// 0 when `tpr_defined` is false.
    pub tpr: f64,
    /// Some input in scope had an important feature.
    pub tpr_defined: bool,
    pub tested: usize,
    pub selected: usize,
    pub important: usize,
}

/// Averages the plug-in ratios over selection groups. For pooled selection
/// that is a single group; per-input groups with nothing important are left
/// out of the TPR mean.
pub fn scoped_fdr_tpr(selected: &[Vec<bool>], truth: &GroundTruth, scope: SelectionScope) -> Result<(f64, Option<f64>)> {
    if selected.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: selected.len(),
        });
    }
    match scope {
        SelectionScope::Pooled => {
            let s: Vec<bool> = selected.iter().flatten().copied().collect();
            let t: Vec<bool> = truth.iter().flatten().copied().collect();
            let r = fdr_tpr(&s, &t)?;
            Ok((r.fdr, (!r.truth_empty).then_some(r.tpr)))
        }
        SelectionScope::PerInput => {
            let mut fdr = 0.0;
            let mut tpr = 0.0;
            let mut defined = 0usize;
            for (s, t) in selected.iter().zip(truth) {
                let r = fdr_tpr(s, t)?;
                fdr += r.fdr;
                if !r.truth_empty {
                    tpr += r.tpr;
                    defined += 1;
                }
            }
            let fdr = if selected.is_empty() { 0.0 } else { fdr / selected.len() as f64 };
            Ok((fdr, (defined > 0).then(|| tpr / defined as f64)))
        }
    }
}

/// Curves of one run: one per scoring method.
type RunCurves = Vec<(String, PowerCurve)>;

struct UnitOutput {
    records: Vec<BenchRunRecord>,
    curves: RunCurves,
}

const STATISTICS: [Statistic; 2] = [Statistic::OneSided, Statistic::TwoSidedCentered];
const METHODS: [Method; 2] = [Method::Irt, Method::Osft];

fn run_unit(instance: &Instance, run: usize, config: &Table1Config, key: &StreamKey) -> Result<UnitOutput> {
    let cell = [instance.distribution as u64, instance.model as u64, run as u64];
    let mut rng = key.child(&[tag::DATA, cell[0], cell[1], cell[2]]).rng();
    let (data, labels) = instance.data.gen_dataset(config.samples, &mut rng)?;
    let truth = instance.truth(&labels, &data)?;
    let model = instance.model();
    let sampler = instance.data.counterfactual();
    let subsets = SubsetSpec::singletons(model.dim());
    let inputs = data.rows();

    let mut records = Vec::new();
    let mut curves = Vec::new();
    for method in METHODS {
        for statistic in STATISTICS {
            let test_key = key.child(&[tag::TEST, cell[0], cell[1], cell[2], method as u64, statistic as u64]);
            let (selected, scope) = match method {
                Method::Irt => {
                    let irt = IrtConfig {
                        draws: config.draws,
                        alpha: config.alpha,
                        statistic,
                        correction: config.correction,
                        scope: config.irt_scope,
                    };
                    let r = run_irt(model, sampler.as_ref(), inputs, &subsets, &irt, &test_key)?;
                    if instance.net.is_some() && statistic == Statistic::OneSided {
                        let scores: Vec<Vec<f64>> =
                            r.pvalues.iter().map(|row| row.iter().map(|p| 1.0 - p).collect()).collect();
                        curves.push(("irt".to_string(), sweep_curve(&scores, &truth, Ranking::Signed, &default_levels())?));
                    }
                    (r.selected, config.irt_scope)
                }
                Method::Osft => {
                    let osft = OsftConfig {
                        alpha: config.alpha,
                        statistic,
                        scope: config.osft_scope,
                    };
                    let r = run_osft(model, sampler.as_ref(), inputs, &subsets, &osft, &test_key)?;
                    if instance.net.is_some() && statistic == Statistic::OneSided {
                        curves.push(("osft".to_string(), sweep_curve(&r.z, &truth, Ranking::Signed, &default_levels())?));
                    }
                    (r.selected, config.osft_scope)
                }
            };
            let (fdr, tpr) = scoped_fdr_tpr(&selected, &truth, scope)?;
            records.push(BenchRunRecord {
                distribution: instance.distribution,
                model: instance.model,
                method,
                statistic,
                run,
                alpha: config.alpha,
                fdr,
                tpr: tpr.unwrap_or(0.0),
                tpr_defined: tpr.is_some(),
                tested: selected.iter().map(Vec::len).sum(),
                selected: selected.iter().flatten().filter(|&&s| s).count(),
                important: truth.iter().flatten().filter(|&&t| t).count(),
            });
        }
    }

    if instance.net.is_some() {
        for (kind, ranking) in [(BaselineKind::Taylor, Ranking::Absolute), (BaselineKind::Saliency, Ranking::Signed)] {
            let scores = inputs
                .iter()
                .map(|x| baseline_scores(kind, model, x))
                .collect::<Result<Vec<_>>>()?;
            curves.push((kind.label().to_string(), sweep_curve(&scores, &truth, ranking, &default_levels())?));
        }
    }
    Ok(UnitOutput { records, curves })
}

/// One aggregated benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub distribution: DistributionChoice,
    pub model: ModelChoice,
    pub method: Method,
    pub statistic: Statistic,
    pub alpha: f64,
    pub fdr_mean: f64,
    /// Mean over runs with a defined TPR.
    pub tpr_mean: f64,
    pub runs: usize,
    pub tpr_runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutput {
    pub config: Table1Config,
    pub instances: Vec<Instance>,
    pub rows: Vec<Table1Row>,
    pub records: Vec<BenchRunRecord>,
    /// Mean power curve per (distribution, model) and scoring method.
    pub curves: Vec<(DistributionChoice, ModelChoice, String, PowerCurve)>,
}

impl BenchOutput {
    pub fn row(&self, d: DistributionChoice, m: ModelChoice, method: Method, s: Statistic) -> Option<&Table1Row> {
        self.rows
            .iter()
            .find(|r| r.distribution == d && r.model == m && r.method == method && r.statistic == s)
    }
}

pub fn aggregate(records: &[BenchRunRecord]) -> Vec<Table1Row> {
    let mut rows: Vec<Table1Row> = Vec::new();
    for r in records {
        let found = rows.iter_mut().find(|row| {
            row.distribution == r.distribution && row.model == r.model && row.method == r.method && row.statistic == r.statistic
        });
        let row = match found {
            Some(row) => row,
            None => {
                rows.push(Table1Row {
                    distribution: r.distribution,
                    model: r.model,
                    method: r.method,
                    statistic: r.statistic,
                    alpha: r.alpha,
                    fdr_mean: 0.0,
                    tpr_mean: 0.0,
                    runs: 0,
                    tpr_runs: 0,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        row.fdr_mean += r.fdr;
        row.runs += 1;
        if r.tpr_defined {
            row.tpr_mean += r.tpr;
            row.tpr_runs += 1;
        }
    }
    for row in &mut rows {
        row.fdr_mean /= row.runs as f64;
        if row.tpr_runs > 0 {
            row.tpr_mean /= row.tpr_runs as f64;
        }
    }
    rows
}

pub fn run_table1(config: &Table1Config) -> Result<BenchOutput> {
    config.validate()?;
    let key = StreamKey::root(config.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;

    let cells: Vec<(DistributionChoice, ModelChoice)> = config
        .distributions
        .iter()
        .flat_map(|&d| config.models.iter().map(move |&m| (d, m)))
        .collect();
    let instances: Vec<Instance> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, m)| Instance::build(d, m, config, &key))
            .collect::<Result<_>>()
    })?;

    let units: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..config.runs).map(move |r| (i, r)))
        .collect();
    let outputs: Vec<UnitOutput> = pool.install(|| {
        units
            .par_iter()
            .map(|&(i, r)| run_unit(&instances[i], r, config, &key))
            .collect::<Result<_>>()
    })?;

    // Units are already in (instance, run) order; sort records into the
    // table layout (distribution, model, method, statistic, run).
    let mut records: Vec<BenchRunRecord> = outputs.iter().flat_map(|o| o.records.clone()).collect();
    records.sort_by_key(|r| (r.distribution as u8, r.model as u8, r.method as u8, r.statistic as u8, r.run));
    let rows = aggregate(&records);

    let mut curves = Vec::new();
    for (i, instance) in instances.iter().enumerate() {
        let per_run: Vec<&RunCurves> = units
            .iter()
            .zip(&outputs)
            .filter(|((u, _), _)| *u == i)
            .map(|(_, o)| &o.curves)
            .collect();
        let Some(first) = per_run.first() else { continue };
        for (j, (name, _)) in first.iter().enumerate() {
            let runs: Vec<PowerCurve> = per_run.iter().map(|c| c[j].1.clone()).collect();
            curves.push((instance.distribution, instance.model, name.clone(), mean_curve(&runs)));
        }
    }

    Ok(BenchOutput {
        config: config.clone(),
        instances,
        rows,
        records,
        curves,
    })
}

fn sided(statistic: Statistic) -> &'static str {
    match statistic {
        Statistic::OneSided => "one-sided",
        Statistic::TwoSidedCentered => "two-sided",
    }
}

pub fn write_table1_csv(path: &Path, rows: &[Table1Row]) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "distribution,model,method,sided,alpha,fdr_mean,tpr_mean,runs")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.distribution,
                r.model,
                r.method,
                sided(r.statistic),
                r.alpha,
                r.fdr_mean,
                r.tpr_mean,
                r.runs
            )?;
        }
        Ok(())
    })
}

pub fn write_runs_csv(path: &Path, records: &[BenchRunRecord]) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "distribution,model,method,sided,run,alpha,fdr,tpr,tpr_defined,tested,selected,important")?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.distribution,
                r.model,
                r.method,
                sided(r.statistic),
                r.run,
                r.alpha,
                r.fdr,
                r.tpr,
                u8::from(r.tpr_defined),
                r.tested,
                r.selected,
                r.important
            )?;
        }
        Ok(())
    })
}

/// Writes `table1.csv`, `runs.csv`, `bench.json` and
/// `curves/<distribution>-<model>/curve_<method>.csv` under `dir`.
pub fn write_bench_outputs(dir: &Path, output: &BenchOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_table1_csv(&dir.join("table1.csv"), &output.rows)?;
    write_runs_csv(&dir.join("runs.csv"), &output.records)?;
    write_json(&dir.join("bench.json"), &BenchSidecar {
        config: &output.config,
        instances: &output.instances,
    })?;
    for (d, m, name, curve) in &output.curves {
        let path = dir.join("curves").join(format!("{d}-{m}")).join(format!("curve_{name}.csv"));
        write_curve(&path, curve)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchSidecar<'a> {
    config: &'a Table1Config,
    instances: &'a [Instance],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoped_metrics() {
        let selected = vec![vec![true, false], vec![true, true]];
        let truth = vec![vec![true, false], vec![false, false]];
        let (fdr, tpr) = scoped_fdr_tpr(&selected, &truth, SelectionScope::Pooled).unwrap();
        assert_eq!((fdr, tpr), (2.0 / 3.0, Some(1.0)));
        let (fdr, tpr) = scoped_fdr_tpr(&selected, &truth, SelectionScope::PerInput).unwrap();
        assert_eq!((fdr, tpr), (0.5, Some(1.0)));
        let none = vec![vec![false; 2]; 2];
        assert_eq!(scoped_fdr_tpr(&none, &none, SelectionScope::PerInput).unwrap(), (0.0, None));
    }

    #[test]
    fn aggregate_skips_undefined_tpr() {
        let record = |run, fdr, tpr: Option<f64>| BenchRunRecord {
            distribution: DistributionChoice::Independent,
            model: ModelChoice::Discontinuous,
            method: Method::Osft,
            statistic: Statistic::OneSided,
            run,
            alpha: 0.2,
            fdr,
            tpr: tpr.unwrap_or(0.0),
            tpr_defined: tpr.is_some(),
            tested: 4,
            selected: 1,
            important: 1,
        };
        let rows = aggregate(&[record(0, 0.1, Some(0.5)), record(1, 0.3, None), record(2, 0.2, Some(1.0))]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].fdr_mean - 0.2).abs() < 1e-15);
        assert_eq!(rows[0].tpr_mean, 0.75);
        assert_eq!((rows[0].runs, rows[0].tpr_runs), (3, 2));
    }

    #[test]
    fn invalid_config() {
        let config = Table1Config {
            alpha: 1.5,
            ..Table1Config::default()
        };
        assert!(matches!(config.validate(), Err(Error::InvalidAlpha(_))));
        let config = Table1Config {
            jobs: 0,
            ..Table1Config::default()
        };
        assert!(config.validate().is_err());
    }
}
