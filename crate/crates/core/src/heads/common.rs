use std::cmp::Ordering;

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

/// A fitted binary classifier over feature rows.
pub trait Classifier {
    /// Number of features the model expects.
    fn dim(&self) -> usize;

    /// Class of a single row; the caller guarantees `row.len() == dim()`.
    fn predict_row(&self, row: &[f32]) -> u8;

    fn check_dim(&self, x: &FeatureMatrix) -> Result<()> {
        if x.d() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.d(),
            });
        }
        Ok(())
    }

    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        self.check_dim(x)?;
        Ok((0..x.n()).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Fraction of rows whose prediction matches the label.
    fn accuracy(&self, x: &FeatureMatrix) -> Result<f64> {
        let predicted = self.predict(x)?;
        if predicted.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let correct = predicted.iter().zip(x.labels()).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / predicted.len() as f64)
    }
}

/// Rejects inputs no fitter can learn from.
pub(crate) fn check_trainable(x: &FeatureMatrix) -> Result<()> {
    if x.n() == 0 || x.d() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !x.has_both_classes() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Row indices sorted lexicographically by (features, label).
///
/// Fitters consume rows in this order so that their output does not depend
/// on the order rows were supplied in.
pub(crate) fn canonical_order(x: &FeatureMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.n()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(x.labels()[a].cmp(&x.labels()[b]))
    });
    order
}

/// Per-column affine map to zero mean and unit variance.
/// Constant columns keep scale 1.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics accumulated over rows in `order`.
    pub fn fit(x: &FeatureMatrix, order: &[usize]) -> Self {
        let (n, d) = (x.n() as f64, x.d());
        let mut mean = vec![0.0; d];
        for &i in order {
            for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in order {
            for ((s, &v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    /// Standardized copy of the rows listed in `order`, row-major.
    pub fn transform(&self, x: &FeatureMatrix, order: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(order.len() * x.d());
        for &i in order {
            out.extend(
                x.row(i)
                    .iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(&v, (m, s))| (v as f64 - m) / s),
            );
        }
        out
    }

    /// Maps weights learned on standardized inputs back to raw inputs.
    pub fn fold(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = w.iter().zip(&self.scale).map(|(w, s)| w / s).collect();
        let shift: f64 = raw.iter().zip(&self.mean).map(|(w, m)| w * m).sum();
        (raw, b - shift)
    }
}

pub(crate) fn dot(w: &[f64], row: &[f32]) -> f64 {
    w.iter().zip(row).map(|(w, &x)| w * x as f64).sum()
}

pub(crate) fn check_finite(what: &str, w: &[f64], b: f64) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has non-finite weights")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_ignores_input_order() {
        let rows = vec![vec![2.0, 1.0], vec![1.0, 5.0], vec![1.0, 2.0]];
        let x = FeatureMatrix::from_rows(&rows, vec![0, 1, 0], "t").unwrap();
        let order = canonical_order(&x);
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn fold_preserves_scores() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 30.0], vec![2.0, 26.0]];
        let x = FeatureMatrix::from_rows(&rows, vec![0, 1, 0], "t").unwrap();
        let s = Standardizer::fit(&x, &[0, 1, 2]);
        let z = s.transform(&x, &[0, 1, 2]);
        let (w, b) = ([0.3, -1.2], 0.4);
        let (raw, rb) = s.fold(&w, b);
        for i in 0..3 {
            let std_score = w[0] * z[2 * i] + w[1] * z[2 * i + 1] + b;
            assert!((dot(&raw, x.row(i)) + rb - std_score).abs() < 1e-12);
        }
    }
}
