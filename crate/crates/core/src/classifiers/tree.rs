//! Axis-aligned binary trees shared by the forest and the booster.
//!
//! Split search scans features in ascending index order and thresholds in
//! ascending order, replacing the incumbent only on strictly larger gain, so
//! ties resolve to the lowest feature index and then the lowest threshold.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Flat node array; index 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural sanity for deserialized trees: children in range and
    /// strictly after their parent, features below `n_features`.
    pub(crate) fn check(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => return Err(format!("node {i}: non-finite leaf")),
                Node::Split { feature, threshold, left, right } => {
                    if feature >= n_features {
                        return Err(format!("node {i}: feature {feature} out of range"));
                    }
                    if threshold.is_nan() {
                        return Err(format!("node {i}: NaN threshold"));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Node statistics and split quality. `score(left) + score(right) -
/// score(parent)` is the gain of a split.
pub(crate) trait Criterion {
    type Stats: Copy + Default;
    fn add(&self, stats: &mut Self::Stats, sample: usize);
    fn minus(a: Self::Stats, b: Self::Stats) -> Self::Stats;
    fn score(&self, stats: &Self::Stats) -> f64;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
}

/// Weighted Gini on 0/1 targets. Score is -n * gini, so gains are the
/// (count-weighted) impurity decrease.
pub(crate) struct Gini<'a> {
    pub y: &'a [f64],
}

#[derive(Clone, Copy, Default)]
pub(crate) struct Counts {
    n: f64,
    pos: f64,
}

impl Criterion for Gini<'_> {
    type Stats = Counts;
    fn add(&self, s: &mut Counts, i: usize) {
        s.n += 1.0;
        s.pos += self.y[i];
    }
    fn minus(a: Counts, b: Counts) -> Counts {
        Counts { n: a.n - b.n, pos: a.pos - b.pos }
    }
    fn score(&self, s: &Counts) -> f64 {
        if s.n == 0.0 {
            return 0.0;
        }
        let neg = s.n - s.pos;
        (s.pos * s.pos + neg * neg) / s.n - s.n
    }
    fn leaf_value(&self, s: &Counts) -> f64 {
        if s.n == 0.0 {
            0.5
        } else {
            s.pos / s.n
        }
    }
}

/// Second-order logistic criterion: gradients g, hessians h, L2 penalty.
pub(crate) struct Newton<'a> {
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub l2: f64,
}

#[derive(Clone, Copy, Default)]
pub(crate) struct GradSums {
    g: f64,
    h: f64,
}

impl Criterion for Newton<'_> {
    type Stats = GradSums;
    fn add(&self, s: &mut GradSums, i: usize) {
        s.g += self.g[i];
        s.h += self.h[i];
    }
    fn minus(a: GradSums, b: GradSums) -> GradSums {
        GradSums { g: a.g - b.g, h: a.h - b.h }
    }
    fn score(&self, s: &GradSums) -> f64 {
        s.g * s.g / (s.h + self.l2)
    }
    fn leaf_value(&self, s: &GradSums) -> f64 {
        -s.g / (s.h + self.l2)
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    /// Candidate features per split; `>= d` means all.
    pub features_per_split: usize,
}

/// Sample lists (duplicates allowed), one per feature, each ordered by
/// (value, sample index). Splitting partitions them stably, so no node
/// re-sorts.
pub(crate) fn presort(x: &[Vec<f64>], samples: &[usize]) -> Vec<Vec<usize>> {
    let d = x.first().map_or(0, Vec::len);
    (0..d)
        .map(|f| {
            let mut order = samples.to_vec();
            order.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            order
        })
        .collect()
}

struct Builder<'a, C: Criterion> {
    x: &'a [Vec<f64>],
    crit: &'a C,
    params: &'a GrowParams,
    n_features: usize,
    /// Per-feature sorted lists; a node owns the same index range in each.
    sorted: Vec<Vec<usize>>,
    scratch: Vec<usize>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<C: Criterion> Builder<'_, C> {
    fn stats(&self, lo: usize, hi: usize) -> C::Stats {
        let mut s = C::Stats::default();
        for &i in &self.sorted[0][lo..hi] {
            self.crit.add(&mut s, i);
        }
        s
    }

    fn candidate_features(&self, rng: &mut Option<&mut ChaCha8Rng>) -> Vec<usize> {
        let d = self.n_features;
        let m = self.params.features_per_split;
        match rng {
            Some(rng) if m < d => {
                let mut f = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&self, lo: usize, hi: usize, parent: C::Stats, features: &[usize]) -> Option<BestSplit> {
        let parent_score = self.crit.score(&parent);
        let mut best: Option<BestSplit> = None;
        for &f in features {
            let order = &self.sorted[f][lo..hi];
            let mut left = C::Stats::default();
            for k in 0..order.len() - 1 {
                self.crit.add(&mut left, order[k]);
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let right = C::minus(parent, left);
                let gain = self.crit.score(&left) + self.crit.score(&right) - parent_score;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit { gain, feature: f, threshold });
                }
            }
        }
        best
    }

    /// Stable partition of every feature list over [lo, hi); returns the
    /// boundary.
    fn partition(&mut self, lo: usize, hi: usize, feature: usize, threshold: f64) -> usize {
        let x = self.x;
        let mut mid = lo;
        for list in &mut self.sorted {
            self.scratch.clear();
            let mut w = lo;
            for r in lo..hi {
                let i = list[r];
                if x[i][feature] <= threshold {
                    list[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            list[w..hi].copy_from_slice(&self.scratch);
            mid = w;
        }
        mid
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut Option<&mut ChaCha8Rng>) -> usize {
        let stats = self.stats(lo, hi);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.crit.leaf_value(&stats) });
        if depth >= self.params.max_depth || hi - lo < 2 {
            return id;
        }
        let features = self.candidate_features(rng);
        let Some(split) = self.best_split(lo, hi, stats, &features) else {
            return id;
        };
        let mid = self.partition(lo, hi, split.feature, split.threshold);
        self.importance[split.feature] += split.gain;
        let left = self.grow(lo, mid, depth + 1, rng);
        let right = self.grow(mid, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree from per-feature sorted sample lists (see [`presort`]).
/// Returns the tree and the per-feature total gain.
pub(crate) fn grow_tree<C: Criterion>(
    x: &[Vec<f64>],
    sorted: Vec<Vec<usize>>,
    crit: &C,
    params: &GrowParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Tree, Vec<f64>) {
    let n_features = x.first().map_or(0, Vec::len);
    let n = sorted.first().map_or(0, Vec::len);
    let mut b = Builder {
        x,
        crit,
        params,
        n_features,
        sorted,
        scratch: Vec::with_capacity(n),
        nodes: Vec::new(),
        importance: vec![0.0; n_features],
    };
    if n == 0 {
        return (Tree::leaf(crit.leaf_value(&C::Stats::default())), b.importance);
    }
    b.grow(0, n, 0, &mut rng);
    (Tree { nodes: b.nodes }, b.importance)
}
