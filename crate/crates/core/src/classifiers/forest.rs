use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, presort, Gini, GrowParams, Tree};

/// Per-tree randomness drawn up front, so trees can grow in parallel and
/// still match a sequential build bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestPlan {
    pub bootstraps: Vec<Vec<usize>>,
    pub split_seeds: Vec<u64>,
}

impl ForestPlan {
    pub fn draw(n_rows: usize, n_trees: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bootstraps = Vec::with_capacity(n_trees);
        let mut split_seeds = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            bootstraps.push((0..n_rows).map(|_| rng.random_range(0..n_rows)).collect());
            split_seeds.push(rng.random());
        }
        Self { bootstraps, split_seeds }
    }
}

/// Per-feature sorted lists of a bootstrap sample, expanded from the
/// full-data sort: row i appears as many times as it was drawn.
fn bootstrap_sorted(global: &[Vec<usize>], boot: &[usize]) -> Vec<Vec<usize>> {
    let mut counts = vec![0usize; global.first().map_or(0, Vec::len)];
    for &i in boot {
        counts[i] += 1;
    }
    global
        .iter()
        .map(|order| {
            let mut out = Vec::with_capacity(boot.len());
            for &i in order {
                out.extend(std::iter::repeat_n(i, counts[i]));
            }
            out
        })
        .collect()
}

/// Bagged Gini trees; the probability is the mean leaf positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Mean impurity decrease per feature, normalized to sum to 1 (all zero
    /// if no tree split).
    pub importance: Vec<f64>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], n_trees: usize, max_depth: usize, mtry: usize, seed: u64) -> Self {
        Self::fit_with_plan(x, y, &ForestPlan::draw(x.len(), n_trees, seed), max_depth, mtry)
    }

    pub fn fit_with_plan(x: &[Vec<f64>], y: &[f64], plan: &ForestPlan, max_depth: usize, mtry: usize) -> Self {
        let params = GrowParams { max_depth, features_per_split: mtry };
        let crit = Gini { y };
        let global = presort(x, &(0..x.len()).collect::<Vec<_>>());
        let grown: Vec<(Tree, Vec<f64>)> = plan
            .bootstraps
            .par_iter()
            .zip(&plan.split_seeds)
            .map(|(boot, &s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                grow_tree(x, bootstrap_sorted(&global, boot), &crit, &params, Some(&mut rng))
            })
            .collect();
        let d = x.first().map_or(0, Vec::len);
        let mut importance = vec![0.0; d];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            for (acc, v) in importance.iter_mut().zip(imp) {
                *acc += v;
            }
            trees.push(tree);
        }
        let total: f64 = importance.iter().sum();
        if total > 0.0 {
            importance.iter_mut().for_each(|v| *v /= total);
        }
        Self { trees, importance }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}
