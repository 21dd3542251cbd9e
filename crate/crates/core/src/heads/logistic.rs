use serde::{Deserialize, Serialize};

use super::common::{canonical_order, check_finite, check_trainable, dot, Classifier, Standardizer};
use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.1,
            iterations: 500,
            l2: 1e-4,
            seed: 42,
        }
    }
}

impl LogisticConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }
}

/// Binary logistic regression on raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LogisticConfig,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^s) - y·s`, stable for large `|s|`.
fn cross_entropy(s: f64, y: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s
}

impl LogisticModel {
    pub fn decision_score(&self, row: &[f32]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, row: &[f32]) -> f64 {
        sigmoid(self.decision_score(row))
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("logistic model", &self.weights, self.bias)
    }
}

impl Classifier for LogisticModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: &[f32]) -> u8 {
        (self.decision_score(row) > 0.0) as u8
    }
}

/// Mean cross-entropy plus `l2/2·|w|²` on raw rows, with its gradient
/// `(loss, ∂w, ∂b)`. The bias is not regularized.
pub fn logistic_objective(x: &FeatureMatrix, w: &[f64], b: f64, l2: f64) -> Result<(f64, Vec<f64>, f64)> {
    if w.len() != x.d() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: x.d(),
        });
    }
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let z: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = x.labels().iter().map(|&l| l as f64).collect();
    Ok(objective(&z, &y, x.d(), w, b, l2))
}

fn objective(z: &[f64], y: &[f64], d: usize, w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = y.len();
    let mut s = vec![b; n];
    f64::gemm(n, d, 1, z, false, w, false, &mut s, 1.0);
    let mut loss = 0.0;
    let mut r = vec![0.0; n];
    for i in 0..n {
        loss += cross_entropy(s[i], y[i]);
        r[i] = (sigmoid(s[i]) - y[i]) / n as f64;
    }
    let mut grad_w = w.iter().map(|w| l2 * w).collect::<Vec<_>>();
    f64::gemm(d, n, 1, z, true, &r, false, &mut grad_w, 1.0);
    let grad_b = r.iter().sum();
    let reg = 0.5 * l2 * w.iter().map(|w| w * w).sum::<f64>();
    (loss / n as f64 + reg, grad_w, grad_b)
}

/// Full-batch gradient descent for a fixed number of iterations, starting
/// from zero, on standardized features. The returned weights act on raw rows.
pub fn fit_logistic(x: &FeatureMatrix, cfg: &LogisticConfig) -> Result<LogisticModel> {
    check_trainable(x)?;
    cfg.validate()?;
    let order = canonical_order(x);
    let standardizer = Standardizer::fit(x, &order);
    let z = standardizer.transform(x, &order);
    let y: Vec<f64> = order.iter().map(|&i| x.labels()[i] as f64).collect();
    let d = x.d();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for it in 0..cfg.iterations {
        let (loss, gw, gb) = objective(&z, &y, d, &w, b, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "logistic loss diverged at iteration {it}"
            )));
        }
        w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= cfg.learning_rate * g);
        b -= cfg.learning_rate * gb;
    }
    let (weights, bias) = standardizer.fold(&w, b);
    let model = LogisticModel {
        weights,
        bias,
        config: cfg.clone(),
    };
    model.validate()?;
    Ok(model)
}
