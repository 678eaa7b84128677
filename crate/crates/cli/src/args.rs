use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use cft_core::bench::{DistributionChoice, ModelChoice, Ranking};
use cft_core::runners::SelectionScope;
use cft_core::selection::Correction;
use cft_core::stats::Statistic;

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "cft", version, about = "Counterfactual feature tests with false discovery rate control")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthetic benchmark and write table1.csv.
    Bench(BenchArgs),
    /// Test feature subsets of a model on user data.
    Interpret(InterpretArgs),
    /// Compute a power-vs-FDR curve from feature scores.
    Curve(CurveArgs),
    /// Render power curves as an SVG chart.
    Report(ReportArgs),
}

fn alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("alpha must lie in (0, 1), got {v}"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Irt,
    Osft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    OneSided,
    TwoSided,
}

impl From<StatisticArg> for Statistic {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::OneSided => Statistic::OneSided,
            StatisticArg::TwoSided => Statistic::TwoSidedCentered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Bh,
    By,
}

impl From<CorrectionArg> for Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Bh => Correction::Bh,
            CorrectionArg::By => Correction::By,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Pooled,
    PerInput,
}

impl From<ScopeArg> for SelectionScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Pooled => SelectionScope::Pooled,
            ScopeArg::PerInput => SelectionScope::PerInput,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistributionArg {
    Independent,
    Correlated,
}

impl From<DistributionArg> for DistributionChoice {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Independent => DistributionChoice::Independent,
            DistributionArg::Correlated => DistributionChoice::Correlated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchModelArg {
    Discontinuous,
    NeuralNet,
}

impl From<BenchModelArg> for ModelChoice {
    fn from(m: BenchModelArg) -> Self {
        match m {
            BenchModelArg::Discontinuous => ModelChoice::Discontinuous,
            BenchModelArg::NeuralNet => ModelChoice::NeuralNet,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2, value_parser = alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub runs: usize,
    /// Test inputs per run.
    #[arg(long, default_value_t = 100, value_parser = positive)]
    pub samples: usize,
    /// Counterfactual draws per IRT test.
    #[arg(long = "K", alias = "draws", default_value_t = 100, value_parser = positive)]
    pub k: usize,
    /// Probability of the interesting component.
    #[arg(long, default_value_t = 0.3)]
    pub h: f64,
    #[arg(long, value_enum, default_value_t = CorrectionArg::Bh)]
    pub correction: CorrectionArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::PerInput)]
    pub irt_scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::Pooled)]
    pub osft_scope: ScopeArg,
    #[arg(long = "distribution", value_enum, value_delimiter = ',', default_values_t = [DistributionArg::Independent, DistributionArg::Correlated])]
    pub distributions: Vec<DistributionArg>,
    #[arg(long = "model", value_enum, value_delimiter = ',', default_values_t = [BenchModelArg::Discontinuous, BenchModelArg::NeuralNet])]
    pub models: Vec<BenchModelArg>,
    /// Training set size for the network.
    #[arg(long, default_value_t = 100_000, value_parser = positive)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 40, value_parser = positive)]
    pub epochs: usize,
    /// Worker threads across runs.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    PairedThreshold,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Gaussian,
    Autoregressive,
    External,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Input CSV with a header row and one input per row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON array of disjoint feature-index arrays; defaults to singletons.
    #[arg(long)]
    pub subsets: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "model_cmd", requires = "model_params")]
    pub model: Option<ModelArg>,
    /// JSON parameters of the in-process model.
    #[arg(long)]
    pub model_params: Option<PathBuf>,
    /// Shell command serving a model over the wire protocol.
    #[arg(long)]
    pub model_cmd: Option<String>,
    /// Seconds to wait for each reply of the external model.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, value_enum, default_value_t = SamplerArg::Gaussian)]
    pub sampler: SamplerArg,
    /// JSON array of autoregressive weights.
    #[arg(long)]
    pub betas: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StatisticArg::OneSided)]
    pub statistic: StatisticArg,
    #[arg(long, value_enum)]
    pub correction: Option<CorrectionArg>,
    #[arg(long = "K", alias = "draws", value_parser = positive)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.2, value_parser = alpha)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ScopeArg::Pooled)]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankingArg {
    Signed,
    Absolute,
}

impl From<RankingArg> for Ranking {
    fn from(r: RankingArg) -> Self {
        match r {
            RankingArg::Signed => Ranking::Signed,
            RankingArg::Absolute => Ranking::Absolute,
        }
    }
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Scores CSV: input_idx,feature_idx,score.
    #[arg(long)]
    pub scores: PathBuf,
    /// Truth CSV: header row, then one 0/1 row per input.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = RankingArg::Signed)]
    pub ranking: RankingArg,
    /// Spacing of the FDR levels in [0, 1].
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Curve CSVs, as `name=path` or `curve_<name>.csv`.
    #[arg(required = true)]
    pub curves: Vec<String>,
    #[arg(long, default_value = "Power vs. FDR")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Replaces `--config <file>` with the flags it holds, inserted right after
/// the subcommand so that flags given on the command line win.
///
/// The file is a JSON object keyed by flag name (`"alpha": 0.1`,
/// `"irt-scope": "pooled"`). Arrays become comma-separated values, `true`
/// becomes a bare flag and `false` or `null` is skipped.
pub fn expand_config(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let path = iter
                .next()
                .ok_or_else(|| UsageError("--config needs a file argument".into()))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else { return Ok(out) };

    let text = std::fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("bad config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(UsageError(format!("config {} must hold a JSON object", path.display())).into());
    };
    let mut tokens = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(UsageError(format!("config key {key:?}: unsupported value {other}"))),
        };
        match &value {
            Value::Bool(true) => tokens.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                tokens.push(flag);
                tokens.push(joined);
            }
            v => {
                tokens.push(flag);
                tokens.push(scalar(v)?);
            }
        }
    }
    let at = out.len().min(2);
    let tail = out.split_off(at);
    out.extend(tokens.into_iter().map(OsString::from));
    out.extend(tail);
    Ok(out)
}
