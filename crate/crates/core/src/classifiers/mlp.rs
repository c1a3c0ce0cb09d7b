use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Standardizer, TrainConfig};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Central-difference step for the gradient check.
pub const FD_STEP: f64 = 1e-5;

/// tanh through a single exp; saturates cleanly at +-1.
fn tanh(a: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * a).exp() + 1.0)
}

/// d -> hidden (tanh) -> 1 (sigmoid), trained on mean log-loss with
/// full-batch Adam over standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Standardizer,
    /// Row-major, hidden x inputs.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Mlp {
    pub fn zeros(n_inputs: usize, n_hidden: usize) -> Self {
        Self {
            scaler: Standardizer::identity(n_inputs),
            w1: vec![0.0; n_hidden * n_inputs],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(n_inputs: usize, n_hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(n_inputs, n_hidden);
        let l1 = (6.0 / (n_inputs + n_hidden) as f64).sqrt();
        let l2 = (6.0 / (n_hidden + 1) as f64).sqrt();
        net.w1.iter_mut().for_each(|w| *w = rng.random_range(-l1..l1));
        net.w2.iter_mut().for_each(|w| *w = rng.random_range(-l2..l2));
        net
    }

    pub fn n_inputs(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.b1.len()
    }

    fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn flat(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    fn set_flat(&mut self, p: &[f64]) {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        self.w1.copy_from_slice(&p[..a]);
        self.b1.copy_from_slice(&p[a..a + b]);
        self.w2.copy_from_slice(&p[a + b..a + b + c]);
        self.b2 = p[a + b + c];
    }

    fn hidden_into(&self, z: &[f64], out: &mut [f64]) {
        let d = z.len();
        for (j, (h, b)) in out.iter_mut().zip(&self.b1).enumerate() {
            let row = &self.w1[j * d..(j + 1) * d];
            *h = tanh(row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b);
        }
    }

    fn logit_std(&self, z: &[f64], h: &mut [f64]) -> f64 {
        self.hidden_into(z, h);
        h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.n_hidden()];
        sigmoid(self.logit_std(&self.scaler.apply(x), &mut h))
    }

    /// Mean log-loss over already-standardized rows.
    pub fn loss(&self, z: &[Vec<f64>], y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let mut h = vec![0.0; self.n_hidden()];
        z.iter()
            .zip(y)
            .map(|(row, &t)| {
                let s = self.logit_std(row, &mut h);
                softplus(s) - t * s
            })
            .sum::<f64>()
            / n
    }

    /// Analytic gradient of [`Mlp::loss`] in flat parameter order
    /// (w1, b1, w2, b2).
    pub fn gradient(&self, z: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let mut g = vec![0.0; self.n_params()];
        let mut h = vec![0.0; self.n_hidden()];
        self.gradient_flat(&flat, y, &mut g, &mut h);
        g
    }

    /// Gradient over row-major standardized data into `g`; `h` is scratch of
    /// hidden width.
    fn gradient_flat(&self, z: &[f64], y: &[f64], g: &mut [f64], h: &mut [f64]) {
        let (d, hn) = (self.n_inputs(), self.n_hidden());
        let n = y.len() as f64;
        g.iter_mut().for_each(|v| *v = 0.0);
        let (gw1, rest) = g.split_at_mut(hn * d);
        let (gb1, rest) = rest.split_at_mut(hn);
        let (gw2, gb2) = rest.split_at_mut(hn);
        for (row, &t) in z.chunks_exact(d).zip(y) {
            let mut s = self.b2;
            for ((hj, w), (b, w2)) in h.iter_mut().zip(self.w1.chunks_exact(d)).zip(self.b1.iter().zip(&self.w2)) {
                *hj = tanh(w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b);
                s += *hj * w2;
            }
            let dz = (sigmoid(s) - t) / n;
            gb2[0] += dz;
            for ((((hj, w2), gw2j), gb1j), gw) in h
                .iter()
                .zip(&self.w2)
                .zip(gw2.iter_mut())
                .zip(gb1.iter_mut())
                .zip(gw1.chunks_exact_mut(d))
            {
                *gw2j += dz * hj;
                let dh = dz * w2 * (1.0 - hj * hj);
                *gb1j += dh;
                for (gk, xv) in gw.iter_mut().zip(row) {
                    *gk += dh * xv;
                }
            }
        }
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], hidden: usize, epochs: usize, learning_rate: f64, seed: u64) -> Self {
        let scaler = Standardizer::fit(x);
        let z: Vec<f64> = x.iter().flat_map(|r| scaler.apply(r)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::random(scaler.mean.len(), hidden, &mut rng);
        net.scaler = scaler;
        let mut p = net.flat();
        let mut g = vec![0.0; p.len()];
        let mut h = vec![0.0; hidden];
        let mut m = vec![0.0; p.len()];
        let mut v = vec![0.0; p.len()];
        for t in 1..=epochs {
            net.gradient_flat(&z, y, &mut g, &mut h);
            let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
            let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
            net.set_flat(&p);
        }
        net
    }
}

/// Largest |analytic - numeric| / max(|analytic| + |numeric|, 1e-6) over all
/// parameters, with central differences of step [`FD_STEP`].
pub fn gradient_deviation(net: &Mlp, z: &[Vec<f64>], y: &[f64]) -> f64 {
    let analytic = net.gradient(z, y);
    let base = net.flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_flat(&p);
        let up = probe.loss(z, y);
        p[i] = base[i] - FD_STEP;
        probe.set_flat(&p);
        let down = probe.loss(z, y);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let dev = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(dev);
    }
    worst
}

/// Gradient check on a random 5-input net with `cfg.mlp_hidden` units and 10
/// random samples, seeded by `cfg.seed`.
pub fn mlp_gradient_check(cfg: &TrainConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::random(5, cfg.mlp_hidden, &mut rng);
    net.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    net.b2 = rng.random_range(-0.5..0.5);
    let z: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = (0..10).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    gradient_deviation(&net, &z, &y)
}
