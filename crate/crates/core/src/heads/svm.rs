use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{canonical_order, check_finite, check_trainable, dot, Classifier, Standardizer};
use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Regularization strength `λ` of `λ/2·|w|² + mean hinge`.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 20,
            seed: 42,
        }
    }
}

/// Linear SVM acting on raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: SvmConfig,
    /// Training objective of the averaged iterate after each epoch.
    pub objective_trace: Vec<f64>,
}

impl LinearSvmModel {
    pub fn decision_score(&self, row: &[f32]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("svm model", &self.weights, self.bias)
    }
}

impl Classifier for LinearSvmModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: &[f32]) -> u8 {
        (self.decision_score(row) > 0.0) as u8
    }
}

/// `max(0, 1 − margin)`.
pub fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

/// `λ/2·|w|² + mean hinge` over augmented rows (last column is the constant 1).
fn objective(z: &[f64], y: &[f64], w: &[f64], lambda: f64) -> f64 {
    let d = w.len();
    let loss: f64 = z
        .chunks_exact(d)
        .zip(y)
        .map(|(row, y)| hinge(y * row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()))
        .sum();
    0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>() + loss / y.len() as f64
}

/// Pegasos: step `1/(λt)` over a seeded permutation of the rows each epoch,
/// projection onto the ball of radius `1/√λ`, and the running average of
/// the iterates as the returned solution. The bias is an extra constant
/// feature. Works on standardized features; the returned weights act on
/// raw rows.
pub fn fit_svm(x: &FeatureMatrix, cfg: &SvmConfig) -> Result<LinearSvmModel> {
    check_trainable(x)?;
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda {} must be positive",
            cfg.lambda
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("svm needs at least one epoch".into()));
    }
    let order = canonical_order(x);
    let standardizer = Standardizer::fit(x, &order);
    let std_rows = standardizer.transform(x, &order);
    let (n, d) = (x.n(), x.d() + 1);
    let mut z = Vec::with_capacity(n * d);
    for row in std_rows.chunks_exact(x.d()) {
        z.extend_from_slice(row);
        z.push(1.0);
    }
    let y: Vec<f64> = order
        .iter()
        .map(|&i| if x.labels()[i] == 1 { 1.0 } else { -1.0 })
        .collect();

    let radius = 1.0 / cfg.lambda.sqrt();
    let mut w = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let mut t = 0usize;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut visit: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        visit.sort_unstable();
        visit.shuffle(&mut rng);
        for &i in &visit {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let row = &z[i * d..(i + 1) * d];
            let margin = y[i] * row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                let step = eta * y[i];
                w.iter_mut().zip(row).for_each(|(v, a)| *v += step * a);
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            let inv = 1.0 / t as f64;
            avg.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) * inv);
        }
        let obj = objective(&z, &y, &avg, cfg.lambda);
        if !obj.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "svm objective diverged at epoch {epoch}"
            )));
        }
        trace.push(obj);
    }
    let bias_std = avg[d - 1];
    let (weights, bias) = standardizer.fold(&avg[..d - 1], bias_std);
    let model = LinearSvmModel {
        weights,
        bias,
        config: cfg.clone(),
        objective_trace: trace,
    };
    model.validate()?;
    Ok(model)
}
