//! A two-layer network `f(x) = w2 . softplus(W1 x + b1) + b2` with analytic
//! input gradients, trained with mini-batch Adam on squared error.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_batch, BlackBoxModel};
use crate::rng::StreamRng;
use crate::samplers::SyntheticDistribution;
use crate::{Error, Result};

/// Smooth ReLU, `ln(1 + e^a)`, computed without overflow.
fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Derivative of softplus, the logistic function.
fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub d: usize,
    pub hidden: usize,
    /// Row-major `hidden x d`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl TwoLayerNet {
    /// All weights zero and output bias `b2`.
    pub fn constant(d: usize, hidden: usize, b2: f64) -> Self {
        Self {
            d,
            hidden,
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2,
        }
    }

    /// He-style random initialization.
    pub fn random(d: usize, hidden: usize, rng: &mut StreamRng) -> Self {
        let scale1 = (2.0 / d as f64).sqrt();
        let scale2 = (1.0 / hidden as f64).sqrt();
        let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
        let w1 = (0..hidden * d).map(|_| normal(scale1)).collect();
        let b1 = (0..hidden).map(|_| normal(0.1)).collect();
        let w2 = (0..hidden).map(|_| normal(scale2)).collect();
        Self {
            d,
            hidden,
            w1,
            b1,
            w2,
            b2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.hidden * self.d
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden
        {
            return Err(Error::InvalidDimension("network parameter shapes are inconsistent".into()));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("network has non-finite parameters".into()));
        }
        Ok(())
    }

    fn pre_activation(&self, x: &[f64], out: &mut [f64]) {
        for (j, a) in out.iter_mut().enumerate() {
            let row = &self.w1[j * self.d..(j + 1) * self.d];
            *a = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = vec![0.0; self.hidden];
        self.pre_activation(x, &mut a);
        self.b2 + a.iter().zip(&self.w2).map(|(&a, w)| w * softplus(a)).sum::<f64>()
    }

    /// `df/dx_k = sum_j w2_j * softplus'(a_j) * W1_jk`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        let mut a = vec![0.0; self.hidden];
        self.pre_activation(x, &mut a);
        let mut grad = vec![0.0; self.d];
        for j in 0..self.hidden {
            let upstream = self.w2[j] * logistic(a[j]);
            if upstream == 0.0 {
                continue;
            }
            let row = &self.w1[j * self.d..(j + 1) * self.d];
            for (g, w) in grad.iter_mut().zip(row) {
                *g += upstream * w;
            }
        }
        Ok(grad)
    }
}

impl BlackBoxModel for TwoLayerNet {
    fn name(&self) -> String {
        "neural-net".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        check_batch(self.d, rows)?;
        let mut a = vec![0.0; self.hidden];
        Ok(rows
            .chunks_exact(self.d)
            .map(|x| {
                self.pre_activation(x, &mut a);
                self.b2 + a.iter().zip(&self.w2).map(|(&a, w)| w * softplus(a)).sum::<f64>()
            })
            .collect())
    }

    fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient(x)
    }
}

/// Training setup for the benchmark network, fit to `y = sum_i |x_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative step-size decay applied after every epoch.
    pub lr_decay: f64,
    /// Held-out relative MSE (MSE / Var(y)) the network must reach.
    pub target_relative_mse: f64,
    /// Training stops early once the held-out relative MSE drops below this.
    pub early_stop_relative_mse: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            train_samples: 100_000,
            test_samples: 10_000,
            max_epochs: 40,
            batch_size: 64,
            learning_rate: 1e-2,
            lr_decay: 0.95,
            target_relative_mse: 0.01,
            early_stop_relative_mse: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub relative_mse: f64,
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        // Constant columns keep unit scale.
        let scale = scale
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }
}

fn relative_mse(net: &TwoLayerNet, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let mse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (net.forward(x) - y).powi(2))
        .sum::<f64>()
        / n;
    if var > 0.0 {
        mse / var
    } else {
        // Constant labels: fall back to the plain MSE.
        mse
    }
}

pub fn sum_abs(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            **p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a network on `(x, label(x))` pairs drawn from `dist`.
pub fn train_mlp(
    dist: &SyntheticDistribution,
    config: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<(TwoLayerNet, TrainReport)> {
    let (train, _) = dist.gen_dataset(config.train_samples, rng)?;
    let (test, _) = dist.gen_dataset(config.test_samples, rng)?;
    let train = train.into_rows();
    let test = test.into_rows();
    let train_y: Vec<f64> = train.iter().map(|x| sum_abs(x)).collect();
    let test_y: Vec<f64> = test.iter().map(|x| sum_abs(x)).collect();
    fit(&train, &train_y, &test, &test_y, config, rng)
}

/// Fits a network to arbitrary labelled data; `train_mlp` is the benchmark
/// entry point.
pub fn fit(
    train: &[Vec<f64>],
    train_y: &[f64],
    test: &[Vec<f64>],
    test_y: &[f64],
    config: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<(TwoLayerNet, TrainReport)> {
    if train.is_empty() || test.is_empty() || config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::Config("training needs data, a batch size and hidden units".into()));
    }
    let d = train[0].len();
    let hidden = config.hidden;

    let xs = Standardizer::fit(train);
    let y_mean = train_y.iter().sum::<f64>() / train_y.len() as f64;
    let y_var = train_y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / train_y.len() as f64;
    let y_scale = if y_var > 1e-24 { y_var.sqrt() } else { 1.0 };

    let standardized: Vec<f64> = train
        .iter()
        .flat_map(|r| {
            r.iter()
                .zip(&xs.mean)
                .zip(&xs.scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect::<Vec<_>>()
        })
        .collect();
    let targets: Vec<f64> = train_y.iter().map(|y| (y - y_mean) / y_scale).collect();

    let mut net = TwoLayerNet::random(d, hidden, rng);
    let n_params = hidden * d + hidden + hidden + 1;
    let mut adam = Adam::new(n_params);
    let mut grads = vec![0.0; n_params];
    let mut a = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = config.learning_rate;

    let unstandardize = |net: &TwoLayerNet| -> TwoLayerNet {
        let mut out = net.clone();
        for j in 0..hidden {
            let mut shift = 0.0;
            for k in 0..d {
                let w = net.w1[j * d + k] / xs.scale[k];
                out.w1[j * d + k] = w;
                shift += w * xs.mean[k];
            }
            out.b1[j] = net.b1[j] - shift;
            out.w2[j] = net.w2[j] * y_scale;
        }
        out.b2 = net.b2 * y_scale + y_mean;
        out
    };

    let mut report = TrainReport {
        epochs: 0,
        relative_mse: f64::INFINITY,
    };
    for epoch in 0..config.max_epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &standardized[i * d..(i + 1) * d];
                net.pre_activation(x, &mut a);
                let mut y = net.b2;
                for j in 0..hidden {
                    h[j] = softplus(a[j]);
                    y += net.w2[j] * h[j];
                }
                let dy = 2.0 * (y - targets[i]) * inv;
                let (gw1, rest) = grads.split_at_mut(hidden * d);
                let (gb1, rest) = rest.split_at_mut(hidden);
                let (gw2, gb2) = rest.split_at_mut(hidden);
                gb2[0] += dy;
                for j in 0..hidden {
                    gw2[j] += dy * h[j];
                    let da = dy * net.w2[j] * logistic(a[j]);
                    gb1[j] += da;
                    for (g, v) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += da * v;
                    }
                }
            }
            let mut params: Vec<&mut f64> = net
                .w1
                .iter_mut()
                .chain(net.b1.iter_mut())
                .chain(net.w2.iter_mut())
                .chain(std::iter::once(&mut net.b2))
                .collect();
            adam.step(&mut params, &grads, lr);
        }
        lr *= config.lr_decay;

        let candidate = unstandardize(&net);
        report = TrainReport {
            epochs: epoch + 1,
            relative_mse: relative_mse(&candidate, test, test_y),
        };
        if !report.relative_mse.is_finite() {
            break;
        }
        if report.relative_mse < config.early_stop_relative_mse {
            break;
        }
    }

    let trained = unstandardize(&net);
    trained.validate()?;
    if report.relative_mse < config.target_relative_mse {
        Ok((trained, report))
    } else {
        Err(Error::TrainingDidNotConverge {
            relative_mse: report.relative_mse,
            target: config.target_relative_mse,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn central_difference(net: &TwoLayerNet, x: &[f64], k: usize, h: f64) -> f64 {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[k] += h;
        minus[k] -= h;
        (net.forward(&plus) - net.forward(&minus)) / (2.0 * h)
    }

    #[test]
    fn constant_net() {
        let net = TwoLayerNet::constant(5, 8, 2.5);
        let batch = [0.3, -1.0, 7.0, 2.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(net.predict(&batch).unwrap(), vec![2.5, 2.5]);
        assert_eq!(net.gradient(&[0.3; 5]).unwrap(), vec![0.0; 5]);
        assert!(matches!(
            net.predict(&[1.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_unit_chain_rule() {
        // f(x) = 2 * softplus(3 x0 - x1 + 0.5) + 1
        let net = TwoLayerNet {
            d: 2,
            hidden: 1,
            w1: vec![3.0, -1.0],
            b1: vec![0.5],
            w2: vec![2.0],
            b2: 1.0,
        };
        let x = [0.2, 0.4];
        let a: f64 = 3.0 * 0.2 - 0.4 + 0.5;
        let s = 1.0 / (1.0 + (-a).exp());
        assert!((net.forward(&x) - (2.0 * (1.0 + a.exp()).ln() + 1.0)).abs() < 1e-12);
        let g = net.gradient(&x).unwrap();
        assert!((g[0] - 2.0 * s * 3.0).abs() < 1e-12);
        assert!((g[1] - 2.0 * s * -1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StreamKey::root(7).rng();
        let net = TwoLayerNet::random(25, 64, &mut rng);
        let dist = SyntheticDistribution::independent(25, 0.3);
        for _ in 0..100 {
            let (x, _) = dist.sample_row(&mut rng);
            let g = net.gradient(&x).unwrap();
            for k in 0..25 {
                let fd = central_difference(&net, &x, k, 1e-4);
                let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "coordinate {k}: analytic {} vs fd {fd}", g[k]);
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
    }

    #[test]
    fn zero_inputs_learn_zero() {
        let train = vec![vec![0.0; 3]; 256];
        let ys = vec![0.0; 256];
        let config = TrainConfig {
            hidden: 4,
            max_epochs: 200,
            learning_rate: 1e-2,
            lr_decay: 0.98,
            early_stop_relative_mse: 1e-8,
            ..TrainConfig::default()
        };
        let (net, _) = fit(&train, &ys, &train, &ys, &config, &mut StreamKey::root(1).rng()).unwrap();
        assert!(net.forward(&[0.0; 3]).abs() < 1e-2);
    }

    #[test]
    fn unreachable_target_errors() {
        let config = TrainConfig {
            hidden: 2,
            train_samples: 500,
            test_samples: 200,
            max_epochs: 1,
            target_relative_mse: 1e-9,
            early_stop_relative_mse: 1e-12,
            ..TrainConfig::default()
        };
        let dist = SyntheticDistribution::independent(5, 0.3);
        match train_mlp(&dist, &config, &mut StreamKey::root(2).rng()) {
            Err(Error::TrainingDidNotConverge { relative_mse, .. }) => assert!(relative_mse > 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
