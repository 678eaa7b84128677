//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 unless `ACCEPTANCE_STRICT=1` is set, in which case any FAIL makes
//! the target fail.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;

use rand::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use cft_core::bench::{fdr_tpr, sweep_curve, Ranking};
use cft_core::models::{FnModel, TwoLayerNet};
use cft_core::rng::StreamKey;
use cft_core::runners::{run_irt, run_osft, IrtConfig, OsftConfig, SelectionScope, SubsetSpec};
use cft_core::samplers::{IndependentGaussianQ, SyntheticDistribution};
use cft_core::selection::{bh_select, knockoff_select, Correction};
use cft_core::stats::Statistic;

const FDR_TOL: f64 = 0.07;
const TPR_TOL: f64 = 0.10;

/// Reference FDR/TPR at alpha 0.2:
/// (distribution, model, method, sided, fdr, tpr).
const REFERENCE: &[(&str, &str, &str, &str, f64, f64)] = &[
    ("independent", "discontinuous", "irt", "one-sided", 0.002, 0.393),
    ("independent", "discontinuous", "irt", "two-sided", 0.002, 0.392),
    ("independent", "discontinuous", "osft", "one-sided", 0.006, 0.836),
    ("independent", "discontinuous", "osft", "two-sided", 0.006, 0.833),
    ("independent", "neural-net", "irt", "one-sided", 0.139, 0.979),
    ("independent", "neural-net", "irt", "two-sided", 0.137, 0.913),
    ("independent", "neural-net", "osft", "one-sided", 0.212, 0.962),
    ("independent", "neural-net", "osft", "two-sided", 0.189, 0.910),
    ("correlated", "discontinuous", "irt", "one-sided", 0.000, 0.000),
    ("correlated", "discontinuous", "irt", "two-sided", 0.000, 0.000),
    ("correlated", "discontinuous", "osft", "one-sided", 0.073, 0.025),
    ("correlated", "discontinuous", "osft", "two-sided", 0.044, 0.004),
    ("correlated", "neural-net", "irt", "one-sided", 0.129, 0.716),
    ("correlated", "neural-net", "irt", "two-sided", 0.130, 0.641),
    ("correlated", "neural-net", "osft", "one-sided", 0.142, 0.611),
    ("correlated", "neural-net", "osft", "two-sided", 0.143, 0.605),
];

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, pass: bool, name: &str, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

struct Cell {
    key: (String, String, String, String),
    fdr: f64,
    tpr: f64,
}

fn read_table(path: &Path) -> Vec<Cell> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            Cell {
                key: (r[0].into(), r[1].into(), r[2].into(), r[3].into()),
                fdr: r[5].parse().unwrap(),
                tpr: r[6].parse().unwrap(),
            }
        })
        .collect()
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn run_bench(out: &Path) -> bool {
    let status = Command::new(env!("CARGO_BIN_EXE_cft"))
        .args(["bench", "--seed", "1", "--out", out.to_str().unwrap()])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    status.success()
}

fn bench_criteria(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    if !(run_bench(&a) && run_bench(&b)) {
        for name in ["table reproduction", "FDR control", "determinism", "gradient gate"] {
            report.line(false, name, "cft bench --seed 1 failed".into());
        }
        return;
    }

    let cells = read_table(&a.join("table1.csv"));
    let mut off = Vec::new();
    let mut found = 0;
    for &(d, m, method, sided, fdr, tpr) in REFERENCE {
        let key = (d.to_string(), m.to_string(), method.to_string(), sided.to_string());
        let Some(cell) = cells.iter().find(|c| c.key == key) else {
            off.push(format!("{d}/{m}/{method}/{sided} missing"));
            continue;
        };
        found += 1;
        let (df, dt) = (cell.fdr - fdr, cell.tpr - tpr);
        println!(
            "    {d:<11} {m:<13} {method:<4} {sided:<9} fdr {:.3} ({fdr:.3}) tpr {:.3} ({tpr:.3})",
            cell.fdr, cell.tpr
        );
        if df.abs() > FDR_TOL || dt.abs() > TPR_TOL {
            off.push(format!("{d}/{m}/{method}/{sided} dFDR {df:+.3} dTPR {dt:+.3}"));
        }
    }
    report.line(
        off.is_empty() && found == REFERENCE.len(),
        "table reproduction",
        if off.is_empty() {
            format!("{found} cells within FDR +-{FDR_TOL} and TPR +-{TPR_TOL}")
        } else {
            format!("outside band: {}", off.join("; "))
        },
    );

    let over: Vec<String> = cells
        .iter()
        .filter(|c| {
            let (d, m, method, sided) = &c.key;
            let cap = if (d.as_str(), m.as_str(), method.as_str(), sided.as_str())
                == ("independent", "neural-net", "osft", "one-sided")
            {
                0.28
            } else {
                0.25
            };
            c.fdr > cap
        })
        .map(|c| format!("{}/{}/{}/{} {:.3}", c.key.0, c.key.1, c.key.2, c.key.3, c.fdr))
        .collect();
    let worst = cells.iter().map(|c| c.fdr).fold(0.0, f64::max);
    report.line(
        over.is_empty() && !cells.is_empty(),
        "FDR control",
        if over.is_empty() { format!("max cell FDR {worst:.3}") } else { format!("over cap: {}", over.join("; ")) },
    );

    let fa = files_under(&a);
    let fb = files_under(&b);
    let names_match = fa.iter().map(|p| p.strip_prefix(&a).unwrap()).eq(fb.iter().map(|p| p.strip_prefix(&b).unwrap()));
    let differing: Vec<String> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| x.strip_prefix(&a).unwrap().display().to_string())
        .collect();
    report.line(
        names_match && differing.is_empty(),
        "determinism",
        if names_match && differing.is_empty() {
            format!("{} CSV files byte-identical across two runs", fa.len())
        } else {
            format!("differing: {differing:?}")
        },
    );

    gradient_gate(report, &a.join("bench.json"));
}

fn central_difference(net: &TwoLayerNet, x: &[f64], k: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[k] += h;
    down[k] -= h;
    (net.forward(&up) - net.forward(&down)) / (2.0 * h)
}

/// Analytic gradients of the trained networks against central differences.
fn gradient_gate(report: &mut Report, bench_json: &Path) {
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bench_json).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (n, inst) in sidecar["instances"].as_array().unwrap().iter().enumerate() {
        let Some(net) = inst.get("net") else { continue };
        let net: TwoLayerNet = serde_json::from_value(net.clone()).unwrap();
        let dist: SyntheticDistribution = serde_json::from_value(inst["data"].clone()).unwrap();
        let mut rng = StreamKey::root(11).child(&[n as u64]).rng();
        for _ in 0..100 {
            let (x, _) = dist.sample_row(&mut rng);
            let g = net.gradient(&x).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let fd = central_difference(&net, &x, k, 1e-4);
                worst = worst.max((gk - fd).abs() / gk.abs().max(fd.abs()).max(1e-8));
                checked += 1;
            }
        }
    }
    report.line(
        checked > 0 && worst < 1e-5,
        "gradient gate",
        format!("{checked} coordinates over 100 points per trained net, max relative error {worst:.2e} (< 1e-5)"),
    );
}

fn sum_abs_model(d: usize) -> FnModel<impl Fn(&[f64]) -> f64 + Send + Sync> {
    FnModel::new("sum-abs", d, |x: &[f64]| x.iter().map(|v| v.abs()).sum())
}

fn null_inputs(m: usize, d: usize, key: &StreamKey) -> Vec<Vec<f64>> {
    let dist = SyntheticDistribution::independent(d, 0.0);
    let mut rng = key.rng();
    (0..m).map(|_| dist.sample_row(&mut rng).0).collect()
}

/// Global null: every selection is false, so FDP is 1 whenever anything is
/// selected.
fn knockoff_null(report: &mut Report) {
    let (d, m, reps) = (25, 80, 500);
    let model = sum_abs_model(d);
    let subsets = SubsetSpec::singletons(d);
    let mut lines = Vec::new();
    let mut pass = true;
    for alpha in [0.05, 0.2] {
        for statistic in [Statistic::OneSided, Statistic::TwoSidedCentered] {
            let config = OsftConfig {
                alpha,
                statistic,
                scope: SelectionScope::Pooled,
            };
            let mut fdp = Vec::with_capacity(reps);
            for rep in 0..reps {
                let key = StreamKey::root(21).child(&[rep as u64]);
                let inputs = null_inputs(m, d, &key.child(&[0]));
                let r = run_osft(&model, &IndependentGaussianQ, &inputs, &subsets, &config, &key.child(&[1])).unwrap();
                fdp.push(if r.discoveries.is_empty() { 0.0 } else { 1.0 });
            }
            let fdr = fdp.iter().sum::<f64>() / reps as f64;
            let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
            pass &= fdr <= alpha + 3.0 * se;
            lines.push(format!("alpha {alpha} {} FDR {fdr:.3} (bound {:.3})", statistic.label(), alpha + 3.0 * se));
        }
    }
    report.line(
        pass,
        "knockoff null calibration",
        format!("{reps} reps of {} pooled statistics: {}", m * d, lines.join(", ")),
    );
}

fn irt_validity(report: &mut Report) {
    let (d, m) = (5, 10_000);
    let model = sum_abs_model(d);
    let subsets = SubsetSpec::new(vec![vec![0]], d).unwrap();
    let inputs = null_inputs(m, d, &StreamKey::root(31));
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for statistic in [Statistic::OneSided, Statistic::TwoSidedCentered] {
        let config = IrtConfig {
            draws: 19,
            alpha: 0.2,
            statistic,
            correction: Correction::Bh,
            scope: SelectionScope::Pooled,
        };
        let r = run_irt(&model, &IndependentGaussianQ, &inputs, &subsets, &config, &StreamKey::root(32)).unwrap();
        let ps: Vec<f64> = r.pvalues.iter().map(|row| row[0]).collect();
        for step in 1..=19 {
            let u = step as f64 * 0.05;
            let frac = ps.iter().filter(|&&p| p <= u).count() as f64 / m as f64;
            worst = worst.max(frac - u);
            pass &= frac <= u + 0.02;
        }
    }
    report.line(
        pass,
        "IRT p-value validity",
        format!("K=19, {m} null replicates, max P(p<=u) - u = {worst:+.4} over u in 0.05..0.95 (<= 0.02)"),
    );
}

fn sign_symmetry(report: &mut Report) {
    let (d, m) = (10, 300);
    let model = sum_abs_model(d);
    let config = OsftConfig {
        alpha: 0.2,
        statistic: Statistic::TwoSidedCentered,
        scope: SelectionScope::Pooled,
    };
    let inputs = null_inputs(m, d, &StreamKey::root(41));
    let r = run_osft(&model, &IndependentGaussianQ, &inputs, &SubsetSpec::singletons(d), &config, &StreamKey::root(42))
        .unwrap();
    let zs: Vec<f64> = r.z.iter().flatten().copied().filter(|z| *z != 0.0).collect();
    let n = zs.len() as u64;
    let pos = zs.iter().filter(|z| **z > 0.0).count() as u64;
    let binom = Binomial::new(0.5, n).unwrap();
    let lower = binom.cdf(pos);
    let upper = if pos == 0 { 1.0 } else { 1.0 - binom.cdf(pos - 1) };
    let p = (2.0 * lower.min(upper)).min(1.0);
    report.line(p >= 1e-3, "null sign symmetry", format!("{pos} positive of {n} non-zero z, binomial p = {p:.3} (>= 1e-3)"));
}

/// Largest `t = k alpha / n` with at least `k` p-values at or below it.
fn bh_oracle(ps: &[f64], alpha: f64) -> Vec<usize> {
    let n = ps.len();
    let tau = (1..=n)
        .rev()
        .map(|k| k as f64 * alpha / n as f64)
        .enumerate()
        .find(|&(j, t)| ps.iter().filter(|&&p| p <= t).count() >= n - j)
        .map(|(_, t)| t);
    match tau {
        Some(t) => (0..n).filter(|&i| ps[i] <= t).collect(),
        None => Vec::new(),
    }
}

fn knockoff_oracle(zs: &[f64], alpha: f64) -> Vec<usize> {
    let mut best: Option<f64> = None;
    for &c in zs {
        let c = c.abs();
        if c == 0.0 {
            continue;
        }
        let pos = zs.iter().filter(|&&z| z >= c).count();
        let neg = zs.iter().filter(|&&z| z <= -c).count();
        if pos > 0 && (1 + neg) as f64 / pos as f64 <= alpha && best.is_none_or(|b| c < b) {
            best = Some(c);
        }
    }
    match best {
        Some(c) => (0..zs.len()).filter(|&i| zs[i] >= c).collect(),
        None => Vec::new(),
    }
}

fn oracle_equivalences(report: &mut Report) {
    let mut rng = StreamKey::root(51).rng();
    let mut mismatches = Vec::new();
    for v in 0..1000 {
        let n = rng.random_range(1..40);
        let nulls = rng.random_range(0..=n);
        // Mix uniform nulls, small signals and exact ties on a coarse grid.
        let ps: Vec<f64> = (0..n)
            .map(|i| {
                if i < nulls {
                    (rng.random_range(1..=20) as f64) / 20.0
                } else {
                    rng.random::<f64>() * 0.02
                }
            })
            .collect();
        let alpha = [0.05, 0.1, 0.2][v % 3];
        if bh_select(&ps, alpha).unwrap().selected != bh_oracle(&ps, alpha) {
            mismatches.push(format!("bh vector {v}"));
        }
        let zs: Vec<f64> = (0..n)
            .map(|i| {
                let z = (rng.random_range(-10..=10) as f64) * 0.5;
                if i >= nulls { z.abs() + 1.0 } else { z }
            })
            .collect();
        if knockoff_select(&zs, alpha).unwrap().selected != knockoff_oracle(&zs, alpha) {
            mismatches.push(format!("knockoff vector {v}"));
        }
    }

    let selected: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.3)).collect();
    let truth: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.2)).collect();
    let sel: HashSet<usize> = (0..1000).filter(|&i| selected[i]).collect();
    let imp: HashSet<usize> = (0..1000).filter(|&i| truth[i]).collect();
    let tp = sel.intersection(&imp).count() as f64;
    let got = fdr_tpr(&selected, &truth).unwrap();
    if got.fdr != (sel.len() as f64 - tp) / sel.len() as f64 || got.tpr != tp / imp.len() as f64 {
        mismatches.push("fdr_tpr on 1000 pairs".into());
    }

    // Scores 3, 2, 1 with only the first feature important: every level keeps
    // the first feature, levels from 1/3 admit the second, from 2/3 the third.
    let levels: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let curve = sweep_curve(&[vec![3.0, 2.0, 1.0]], &[vec![true, false, false]], Ranking::Signed, &levels).unwrap();
    if curve.points.len() != levels.len() || curve.points.iter().any(|p| p.1 != 1.0) {
        mismatches.push("three-feature sweep".into());
    }

    report.line(
        mismatches.is_empty(),
        "oracle equivalences",
        if mismatches.is_empty() {
            "BH and knockoff match brute force on 1000 vectors each; fdr_tpr matches set oracle; three-feature sweep exact"
                .into()
        } else {
            format!("mismatch: {}", mismatches.join(", "))
        },
    );
}

fn main() {
    let mut report = Report { failures: 0 };
    bench_criteria(&mut report);
    knockoff_null(&mut report);
    irt_validity(&mut report);
    sign_symmetry(&mut report);
    oracle_equivalences(&mut report);
    println!("{} criteria failed", report.failures);
    if report.failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
