use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, presort, GrowParams, Newton, Tree};
use super::{log_loss, sigmoid};

/// L2 penalty on leaf values in the Newton step.
pub const GB_LEAF_L2: f64 = 1.0;
/// Step halvings tried before a round that would raise training loss is
/// dropped.
const MAX_HALVINGS: usize = 30;

/// Additive logistic model: f(x) = base + sum of scaled tree outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Learning rate actually applied to each tree.
    pub shrinkage: Vec<f64>,
    pub importance: Vec<f64>,
    /// Mean training log-loss before the first round and after each kept
    /// round.
    pub loss_history: Vec<f64>,
}

impl GradientBoosting {
    pub fn fit(x: &[Vec<f64>], y: &[f64], rounds: usize, learning_rate: f64, max_depth: usize) -> Self {
        let n = y.len();
        let d = x.first().map_or(0, Vec::len);
        let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (p / (1.0 - p)).ln();
        let mut f = vec![base_score; n];
        let mut loss = log_loss(&f, y);
        let mut history = vec![loss];
        let mut trees = Vec::new();
        let mut shrinkage = Vec::new();
        let mut importance = vec![0.0; d];
        let params = GrowParams { max_depth, features_per_split: d };
        let sorted = presort(x, &(0..n).collect::<Vec<_>>());

        for _ in 0..rounds {
            let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
            let g: Vec<f64> = prob.iter().zip(y).map(|(p, y)| p - y).collect();
            let h: Vec<f64> = prob.iter().map(|p| (p * (1.0 - p)).max(1e-12)).collect();
            let crit = Newton { g: &g, h: &h, l2: GB_LEAF_L2 };
            let (tree, gains) = grow_tree(x, sorted.clone(), &crit, &params, None);
            let step: Vec<f64> = x.iter().map(|row| tree.predict(row)).collect();

            let mut lr = learning_rate;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = f.iter().zip(&step).map(|(fi, s)| fi + lr * s).collect();
                let trial_loss = log_loss(&trial, y);
                if trial_loss <= loss {
                    accepted = Some((trial, trial_loss));
                    break;
                }
                lr /= 2.0;
            }
            let Some((next, next_loss)) = accepted else { break };
            f = next;
            loss = next_loss;
            history.push(loss);
            for (acc, v) in importance.iter_mut().zip(gains) {
                *acc += v;
            }
            trees.push(tree);
            shrinkage.push(lr);
        }
        let total: f64 = importance.iter().sum();
        if total > 0.0 {
            importance.iter_mut().for_each(|v| *v /= total);
        }
        Self { base_score, trees, shrinkage, importance, loss_history: history }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().zip(&self.shrinkage).map(|(t, lr)| lr * t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}
