use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};

use cft_core::bench::{
    read_curve, read_scores, run_table1, sweep_curve, write_bench_outputs, write_curve, PowerCurve, Table1Config,
};
use cft_core::models::{BlackBoxModel, ExternalModel, PairedThresholdModel, TrainConfig, TwoLayerNet};
use cft_core::rng::StreamKey;
use cft_core::runners::{run_irt, run_osft, IrtConfig, OsftConfig, SubsetSpec};
use cft_core::samplers::{read_dataset, read_labels, AutoregressiveGaussianQ, ConditionalSampler, IndependentGaussianQ};
use cft_core::selection::Correction;

use crate::args::{BenchArgs, CurveArgs, InterpretArgs, MethodArg, ModelArg, ReportArgs, SamplerArg};
use crate::svg::render_svg;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let config = Table1Config {
        seed: a.seed,
        alpha: a.alpha,
        runs: a.runs,
        samples: a.samples,
        draws: a.k,
        h: a.h,
        correction: a.correction.into(),
        irt_scope: a.irt_scope.into(),
        osft_scope: a.osft_scope.into(),
        distributions: a.distributions.into_iter().map(Into::into).collect(),
        models: a.models.into_iter().map(Into::into).collect(),
        train: TrainConfig {
            train_samples: a.train_samples,
            max_epochs: a.epochs,
            ..TrainConfig::default()
        },
        jobs: a.jobs,
        ..Table1Config::default()
    };
    config.validate()?;
    let output = run_table1(&config)?;
    write_bench_outputs(&a.out, &output).with_context(|| format!("writing results to {}", a.out.display()))?;

    println!("{:<12} {:<14} {:<5} {:<10} {:>6} {:>6}", "distribution", "model", "method", "sided", "FDR", "TPR");
    for r in &output.rows {
        println!(
            "{:<12} {:<14} {:<5} {:<10} {:>6.3} {:>6.3}",
            r.distribution.label(),
            r.model.label(),
            r.method.label(),
            r.statistic.label(),
            r.fdr_mean,
            r.tpr_mean
        );
    }
    println!("wrote {}", a.out.join("table1.csv").display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad {what} {}: {e}", path.display())))
}

enum LoadedModel {
    InProcess(Box<dyn BlackBoxModel>),
    External(ExternalModel),
}

impl LoadedModel {
    fn model(&self) -> &dyn BlackBoxModel {
        match self {
            LoadedModel::InProcess(m) => m.as_ref(),
            LoadedModel::External(m) => m,
        }
    }
}

fn load_model(a: &InterpretArgs) -> Result<LoadedModel> {
    match (&a.model, &a.model_cmd) {
        (Some(kind), None) => {
            let params = a.model_params.as_deref().ok_or_else(|| usage("--model needs --model-params"))?;
            let model: Box<dyn BlackBoxModel> = match kind {
                ModelArg::PairedThreshold => {
                    let m: PairedThresholdModel = read_json(params, "model parameters")?;
                    Box::new(PairedThresholdModel::new(m.weights, m.threshold)?)
                }
                ModelArg::Mlp => {
                    let net: TwoLayerNet = read_json(params, "model parameters")?;
                    net.validate()?;
                    Box::new(net)
                }
            };
            Ok(LoadedModel::InProcess(model))
        }
        (None, Some(cmd)) => Ok(LoadedModel::External(
            ExternalModel::spawn(cmd, Duration::from_secs(a.timeout))
                .with_context(|| format!("starting model command {cmd:?}"))?,
        )),
        _ => Err(usage("give exactly one of --model or --model-cmd")),
    }
}

pub fn interpret(a: InterpretArgs) -> Result<()> {
    if a.method == MethodArg::Osft && a.k.is_some() {
        return Err(usage("--K applies to --method irt only"));
    }
    if a.method == MethodArg::Osft && a.correction.is_some() {
        return Err(usage("--correction applies to --method irt only"));
    }
    if a.sampler == SamplerArg::Autoregressive && a.betas.is_none() {
        return Err(usage("--sampler autoregressive needs --betas"));
    }
    if a.sampler == SamplerArg::External && a.model_cmd.is_none() {
        return Err(usage("--sampler external needs --model-cmd"));
    }

    if !a.data.exists() {
        return Err(usage(format!("data file {} does not exist", a.data.display())));
    }
    let data = read_dataset(&a.data)?;
    let betas: Option<Vec<f64>> = a.betas.as_deref().map(|p| read_json(p, "betas")).transpose()?;
    // Validate every input file before starting the model.
    let subsets = match &a.subsets {
        Some(path) => SubsetSpec::read(path, data.dim())?,
        None => SubsetSpec::singletons(data.dim()),
    };

    let loaded = load_model(&a)?;
    let result = run_interpret(&a, &loaded, data.rows(), &subsets, betas);
    if let (Err(e), LoadedModel::External(m)) = (&result, &loaded) {
        let protocol = matches!(
            e.downcast_ref::<cft_core::Error>(),
            Some(cft_core::Error::Protocol(_) | cft_core::Error::Model(_) | cft_core::Error::Timeout(_))
        );
        if protocol {
            // Let the reader threads drain what the adapter printed.
            std::thread::sleep(Duration::from_millis(100));
            let stderr = m.stderr_output();
            if !stderr.trim().is_empty() {
                eprintln!("model stderr:\n{}", stderr.trim_end());
            }
        }
    }
    result
}

fn run_interpret(
    a: &InterpretArgs,
    loaded: &LoadedModel,
    inputs: &[Vec<f64>],
    subsets: &SubsetSpec,
    betas: Option<Vec<f64>>,
) -> Result<()> {
    let model = loaded.model();
    let autoregressive;
    let sampler: &dyn ConditionalSampler = match (a.sampler, loaded) {
        (SamplerArg::Gaussian, _) => &IndependentGaussianQ,
        (SamplerArg::Autoregressive, _) => {
            autoregressive = AutoregressiveGaussianQ::new(betas.unwrap_or_default());
            &autoregressive
        }
        (SamplerArg::External, LoadedModel::External(m)) => m,
        (SamplerArg::External, LoadedModel::InProcess(_)) => unreachable!("checked above"),
    };
    let key = StreamKey::root(a.seed);
    let path = &a.out;
    let discoveries = match a.method {
        MethodArg::Irt => {
            let config = IrtConfig {
                draws: a.k.unwrap_or(100),
                alpha: a.alpha,
                statistic: a.statistic.into(),
                correction: a.correction.map_or(Correction::Bh, Into::into),
                scope: a.scope.into(),
            };
            let r = run_irt(model, sampler, inputs, subsets, &config, &key)?;
            r.write(path, &r.metadata(a.seed, &model.name(), &sampler.name()))?;
            r.discoveries.len()
        }
        MethodArg::Osft => {
            let config = OsftConfig {
                alpha: a.alpha,
                statistic: a.statistic.into(),
                scope: a.scope.into(),
            };
            let r = run_osft(model, sampler, inputs, subsets, &config, &key)?;
            r.write(path, &r.metadata(a.seed, &model.name(), &sampler.name()))?;
            r.discoveries.len()
        }
    };
    println!(
        "{discoveries} discoveries among {} tests at alpha {}; wrote {}",
        inputs.len() * subsets.len(),
        a.alpha,
        path.display()
    );
    Ok(())
}

pub fn curve(a: CurveArgs) -> Result<()> {
    if !(a.step > 0.0 && a.step <= 1.0) {
        return Err(usage(format!("--step must lie in (0, 1], got {}", a.step)));
    }
    let scores = read_scores(&a.scores)?;
    let truth = read_labels(&a.truth)?;
    let truth = truth.rows();
    if scores.len() != truth.len() || scores.iter().zip(truth).any(|(s, t)| s.len() != t.len()) {
        return Err(usage(format!(
            "scores {} and truth {} cover different inputs or features",
            a.scores.display(),
            a.truth.display()
        )));
    }
    let steps = (1.0 / a.step).round() as usize;
    let levels: Vec<f64> = (0..=steps).map(|i| (i as f64 * a.step).min(1.0)).collect();
    let curve = sweep_curve(&scores, truth, a.ranking.into(), &levels)?;
    write_curve(&a.out, &curve)?;
    let best = curve.points.iter().map(|p| p.1).fold(0.0, f64::max);
    println!("{} levels, best TPR {best}; wrote {}", curve.points.len(), a.out.display());
    Ok(())
}

fn parse_curve_arg(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((name, path)) = arg.split_once('=') {
        return Ok((name.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(arg);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = stem.strip_prefix("curve_").unwrap_or(&stem).to_string();
    Ok((name, path))
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut series: Vec<(String, PowerCurve)> = Vec::new();
    for arg in &a.curves {
        let (name, path) = parse_curve_arg(arg)?;
        if !path.exists() {
            return Err(usage(format!("curve file {} does not exist", path.display())));
        }
        series.push((name, read_curve(&path)?));
    }
    let svg = render_svg(&a.title, &series);
    cft_core::io::atomic_write_bytes(&a.out, svg.as_bytes())?;
    println!("{} series; wrote {}", series.len(), a.out.display());
    Ok(())
}
