use serde::{Deserialize, Serialize};

use super::tree::sigmoid;
use super::LearnError;
use crate::prepare::FeatureMatrix;
use crate::resample::neighbors::Standardizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty on the (standardized) weights; the bias is not penalized.
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-3,
            tolerance: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// `P(Recovered) = sigmoid(weights · x + bias)` on raw feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict_recovered(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

/// Result of gradient descent, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Regularized logistic objective over standardized rows `z` (row-major, `d`
/// columns). `theta = [w..., b]`.
pub struct Objective<'a> {
    pub z: &'a [f64],
    pub d: usize,
    pub targets: &'a [f64],
    pub weights: &'a [f64],
    pub l2: f64,
}

impl Objective<'_> {
    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for (i, (&y, &w)) in self.targets.iter().zip(self.weights).enumerate() {
            let row = &self.z[i * d..(i + 1) * d];
            let f = theta[d] + row.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>();
            let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
            s += w * (softplus - y * f);
        }
        s / self.total_weight() + 0.5 * self.l2 * theta[..d].iter().map(|t| t * t).sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; d + 1];
        for (i, (&y, &w)) in self.targets.iter().zip(self.weights).enumerate() {
            let row = &self.z[i * d..(i + 1) * d];
            let f = theta[d] + row.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>();
            let r = w * (sigmoid(f) - y);
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += r * x;
            }
            g[d] += r;
        }
        let tw = self.total_weight();
        for (j, gj) in g.iter_mut().enumerate() {
            *gj /= tw;
            if j < d {
                *gj += self.l2 * theta[j];
            }
        }
        g
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch gradient descent with Barzilai-Borwein step sizes and an Armijo
/// backtracking safeguard.
pub fn minimize(obj: &Objective<'_>, params: &LogisticParams) -> (Vec<f64>, FitTrace) {
    let mut theta = vec![0.0; obj.d + 1];
    let mut loss = obj.loss(&theta);
    let mut g = obj.gradient(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < params.max_iter && norm(&g) >= params.tolerance {
        iterations += 1;
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let mut t = step;
        let mut next;
        let mut next_loss;
        loop {
            next = theta.iter().zip(&g).map(|(a, b)| a - t * b).collect::<Vec<_>>();
            next_loss = obj.loss(&next);
            if next_loss <= loss - 1e-4 * t * gg || t < 1e-16 {
                break;
            }
            t *= 0.5;
        }
        let next_g = obj.gradient(&next);
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-8, 1e8) } else { 1.0 };
        if next_loss >= loss && t < 1e-16 {
            theta = next;
            g = next_g;
            break;
        }
        theta = next;
        loss = next_loss;
        g = next_g;
    }
    let gradient_norm = norm(&g);
    (
        theta,
        FitTrace {
            iterations,
            gradient_norm,
            converged: gradient_norm < params.tolerance,
        },
    )
}

/// Logistic regression on z-scored features (scaler fit on `train`); the
/// returned weights are mapped back to the raw feature scale.
pub fn fit_logistic(train: &FeatureMatrix, params: &LogisticParams) -> Result<(LinearModel, FitTrace), LearnError> {
    if train.n_rows() == 0 {
        return Err(LearnError::Input("empty training set".into()));
    }
    let labels = train.labels()?;
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let weights: Vec<f64> = (0..train.n_rows()).map(|i| train.weight(i)).collect();
    let scaler = Standardizer::fit(train);
    let z = scaler.transform(train);
    let d = train.n_cols();
    let obj = Objective {
        z: &z,
        d,
        targets: &targets,
        weights: &weights,
        l2: params.l2,
    };
    let (theta, trace) = minimize(&obj, params);
    if !trace.converged {
        log::warn!(
            "logistic regression stopped after {} iterations with gradient norm {:.3e}",
            trace.iterations,
            trace.gradient_norm
        );
    }
    let w: Vec<f64> = (0..d).map(|j| theta[j] / scaler.scale[j]).collect();
    let bias = theta[d] - (0..d).map(|j| w[j] * scaler.mean[j]).sum::<f64>();
    Ok((LinearModel { weights: w, bias }, trace))
}
