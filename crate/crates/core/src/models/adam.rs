//! Adam optimizer and the shared mini-batch loop with validation-based early
//! stopping used by the neural families.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

pub(crate) struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Adam {
        Adam {
            lr,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
            }
        }
    }
}

/// Anything trained by [`train`]: parameters exposed as flat tensors.
pub(crate) trait Trainable: Clone {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_sizes(&mut self) -> Vec<usize> {
        self.tensors_mut().iter().map(|t| t.len()).collect()
    }
}

pub(crate) struct LoopConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Splits `0..n` into a random validation part and a training part, runs
/// Adam over shuffled mini-batches and keeps the parameters with the lowest
/// validation loss (training loss when the validation part is empty).
pub(crate) fn train<N: Trainable>(
    net: &mut N,
    n: usize,
    cfg: &LoopConfig,
    rng: &mut ChaCha8Rng,
    mut batch_grad: impl FnMut(&N, &[usize], &mut ChaCha8Rng) -> (f64, Vec<Vec<f64>>),
    eval_loss: impl Fn(&N, &[usize]) -> f64,
) -> Result<TrainSummary> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = if n >= 20 { (cfg.validation_fraction * n as f64).round() as usize } else { 0 };
    let (val, train_idx) = order.split_at(n_val);
    let (val, mut train_idx) = (val.to_vec(), train_idx.to_vec());
    if train_idx.is_empty() {
        return Err(Error::InsufficientHistory("no training samples".into()));
    }

    let mut adam = Adam::new(cfg.lr, &net.tensor_sizes());
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        train_idx.shuffle(rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size.max(1)) {
            let (loss, grads) = batch_grad(net, batch, rng);
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            adam.step(net.tensors_mut(), &grads);
        }
        let loss = if val.is_empty() { total / train_idx.len() as f64 } else { eval_loss(net, &val) };
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation loss at epoch {epoch}")));
        }
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best = net.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    *net = best;
    Ok(TrainSummary { epochs, best_epoch, best_loss })
}

pub(crate) fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Inverted-dropout keep mask: entries are 0 or 1/(1-p).
pub(crate) fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    if p <= 0.0 {
        return vec![1.0; len];
    }
    let scale = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect()
}

/// Uniform fan-in scaled initialization, U(-sqrt(3/fan_in), sqrt(3/fan_in)).
pub(crate) fn lecun_uniform(len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    let limit = (3.0 / fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}
