use crate::error::{Error, Result};
use crate::model::SaliencyMap;

use super::config::TrainConfig;
use super::dataset::{SynthSample, ZEBRA};

pub const MAX_HALVINGS: u32 = 10;

/// Logistic model on raw pixels: `logit(x) = w . x + bias`, class 1 when the
/// logit is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, pixels: &[f64]) -> f64 {
        dot(&self.weights, pixels) + self.bias
    }

    pub fn predict(&self, pixels: &[f64]) -> u8 {
        u8::from(self.logit(pixels) > 0.0)
    }

    pub fn accuracy(&self, samples: &[SynthSample]) -> f64 {
        if samples.is_empty() {
            return f64::NAN;
        }
        let correct = samples.iter().filter(|s| self.predict(&s.pixels) == s.label).count();
        correct as f64 / samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: LinearModel,
    /// Training loss before the first step and after every epoch.
    pub losses: Vec<f64>,
    pub step: f64,
    pub halvings: u32,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(1 + exp(-m)) without overflow.
fn softplus_neg(m: f64) -> f64 {
    (-m).max(0.0) + (-m.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    n: usize,
    d: usize,
    /// Centred design matrix, row-major.
    x: Vec<f64>,
    mean: Vec<f64>,
    /// Labels as +1 / -1.
    y: Vec<f64>,
    l2: f64,
}

impl Problem {
    fn logits(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x.chunks_exact(self.d).map(|row| dot(row, w) + b).collect()
    }

    fn loss(&self, z: &[f64], w: &[f64]) -> f64 {
        let data: f64 = z.iter().zip(&self.y).map(|(z, y)| softplus_neg(y * z)).sum::<f64>() / self.n as f64;
        data + 0.5 * self.l2 * dot(w, w)
    }

    /// Largest eigenvalue of X^T X / n by power iteration.
    fn gram_top_eigenvalue(&self) -> f64 {
        let mut v = vec![1.0 / (self.d as f64).sqrt(); self.d];
        let mut lambda = 0.0;
        for _ in 0..100 {
            let xv = self.logits(&v, 0.0);
            let mut next = vec![0.0; self.d];
            for (row, s) in self.x.chunks_exact(self.d).zip(&xv) {
                for (acc, xi) in next.iter_mut().zip(row) {
                    *acc += s * xi;
                }
            }
            let norm = dot(&next, &next).sqrt() / self.n as f64;
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            let inv = 1.0 / dot(&next, &next).sqrt();
            v = next.into_iter().map(|x| x * inv).collect();
        }
        lambda
    }

    fn run(&self, epochs: usize, step: f64, tolerance: f64) -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let mut w = vec![0.0; self.d];
        let mut b = 0.0;
        let mut z = self.logits(&w, b);
        let mut losses = vec![self.loss(&z, &w)];
        for _ in 0..epochs {
            // dL/dz_i = -y_i * sigmoid(-y_i z_i) / n
            let r: Vec<f64> = z.iter().zip(&self.y).map(|(z, y)| -y * sigmoid(-y * z) / self.n as f64).collect();
            let mut grad: Vec<f64> = w.iter().map(|wi| self.l2 * wi).collect();
            for (row, ri) in self.x.chunks_exact(self.d).zip(&r) {
                for (g, xi) in grad.iter_mut().zip(row) {
                    *g += ri * xi;
                }
            }
            let gb: f64 = r.iter().sum();
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= step * g;
            }
            b -= step * gb;
            z = self.logits(&w, b);
            let loss = self.loss(&z, &w);
            let prev = *losses.last().expect("initial loss recorded");
            if !loss.is_finite() || loss > prev + tolerance * prev.abs().max(1.0) {
                return None;
            }
            losses.push(loss);
        }
        Some((w, b, losses))
    }
}

/// Full-batch gradient descent on the L2-regularised logistic loss from zero
/// initialisation. Features are centred internally and the returned bias
/// absorbs the centring, so the model acts on raw pixels. The step starts
/// at 1/L for the loss's gradient Lipschitz bound L; if the loss ever rises
/// the run restarts with half the step, up to `MAX_HALVINGS` times.
pub fn train_classifier(train: &[SynthSample], cfg: &TrainConfig) -> Result<TrainedModel> {
    let Some(first) = train.first() else {
        return Err(Error::BadConfig("training set is empty".into()));
    };
    let d = first.pixels.len();
    if train.iter().any(|s| s.pixels.len() != d) {
        return Err(Error::BadConfig("training images differ in size".into()));
    }
    let n = train.len();
    let mut mean = vec![0.0; d];
    for s in train {
        for (m, p) in mean.iter_mut().zip(&s.pixels) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = train.iter().flat_map(|s| s.pixels.iter().zip(&mean).map(|(p, m)| p - m)).collect();
    let y = train.iter().map(|s| if s.label == ZEBRA { 1.0 } else { -1.0 }).collect();
    let problem = Problem { n, d, x, mean, y, l2: cfg.l2 };

    // the bias coordinate is orthogonal to the centred features and has curvature 1/4
    let lipschitz = 0.25 * problem.gram_top_eigenvalue().max(1.0) + cfg.l2;
    let base_step = 1.0 / lipschitz;
    for halvings in 0..=MAX_HALVINGS {
        let step = base_step / f64::from(1u32 << halvings);
        if let Some((weights, b, losses)) = problem.run(cfg.epochs, step, cfg.loss_tolerance) {
            let bias = b - dot(&weights, &problem.mean);
            return Ok(TrainedModel { model: LinearModel { weights, bias }, losses, step, halvings });
        }
    }
    Err(Error::Divergence { halvings: MAX_HALVINGS })
}

/// Gradient of the class-1 logit times the input: `w_p * x_p`.
pub fn saliency_gradient_x_input(model: &LinearModel, sample: &SynthSample, method_tag: &str) -> Result<SaliencyMap> {
    let values = model.weights.iter().zip(&sample.pixels).map(|(w, x)| w * x).collect();
    SaliencyMap::new(sample.grid, values, method_tag)
}
