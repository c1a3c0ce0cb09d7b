use serde::{Deserialize, Serialize};

use super::{sigmoid, Standardizer};

/// Logistic regression on standardized inputs, fit by full-batch gradient
/// descent on mean log-loss plus an L2 penalty on the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub scaler: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    /// Raw-space model with the given coefficients.
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { scaler: Standardizer::identity(weights.len()), weights, bias }
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], epochs: usize, learning_rate: f64, l2: f64) -> Self {
        let scaler = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let (n, d) = (z.len() as f64, scaler.mean.len());
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut gw = vec![0.0; d];
        for _ in 0..epochs {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (row, &t) in z.iter().zip(y) {
                let err = sigmoid(dot(&w, row) + b) - t;
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
                gb += err;
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= learning_rate * (gj / n + l2 * *wj);
            }
            b -= learning_rate * gb / n;
        }
        Self { scaler, weights: w, bias: b }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, &self.scaler.apply(x)) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
