//! One-hidden-layer ReLU network trained on mean absolute error with
//! inverted dropout on the hidden units.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{dropout_mask, sign, lecun_uniform, train, LoopConfig, Trainable, TrainSummary};
use super::{Design, TrainConfig};
use crate::error::{Error, Result};

pub const HIDDEN: usize = 48;
pub const MIN_ROWS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ffnn {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: f64,
}

impl Trainable for Ffnn {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            std::slice::from_mut(&mut self.b2),
        ]
    }
}

/// Columns of `x` selected by `idx`, one sample per column.
fn gather(x: &Design, idx: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(x.cols, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.column_mut(c).copy_from_slice(x.row(i));
    }
    m
}

impl Ffnn {
    pub fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Ffnn {
        Ffnn {
            w1: DMatrix::from_vec(hidden, inputs, lecun_uniform(hidden * inputs, inputs, rng)),
            b1: DVector::zeros(hidden),
            w2: DMatrix::from_vec(1, hidden, lecun_uniform(hidden, hidden, rng)),
            b2: 0.0,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Ffnn {
        Ffnn { w1: DMatrix::zeros(hidden, inputs), b1: DVector::zeros(hidden), w2: DMatrix::zeros(1, hidden), b2: 0.0 }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut z = &self.w1 * x;
        for mut col in z.column_iter_mut() {
            col += &self.b1;
        }
        let a = z.map(|v| v.max(0.0));
        (z, a)
    }

    fn output(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.w2 * a).add_scalar(self.b2)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let x = DMatrix::from_column_slice(row.len(), 1, row);
        let (_, a) = self.forward(&x);
        self.output(&a)[(0, 0)]
    }

    pub fn predict(&self, x: &Design) -> Vec<f64> {
        let idx: Vec<usize> = (0..x.rows).collect();
        idx.chunks(1024)
            .flat_map(|chunk| {
                let (_, a) = self.forward(&gather(x, chunk));
                self.output(&a).iter().copied().collect::<Vec<_>>()
            })
            .collect()
    }

    fn mae(&self, x: &Design, y: &[f64], idx: &[usize]) -> f64 {
        let (_, a) = self.forward(&gather(x, idx));
        let out = self.output(&a);
        idx.iter().zip(out.iter()).map(|(&i, p)| (p - y[i]).abs()).sum::<f64>() / idx.len() as f64
    }

    /// Mean absolute error over `idx` and its gradient, in the order
    /// `w1, b1, w2, b2`; `mask` (hidden × batch) applies dropout.
    fn loss_grad(&self, x: &Design, y: &[f64], idx: &[usize], mask: Option<&DMatrix<f64>>) -> (f64, Vec<Vec<f64>>) {
        let xb = gather(x, idx);
        let (z, mut a) = self.forward(&xb);
        if let Some(m) = mask {
            a.component_mul_assign(m);
        }
        let out = self.output(&a);
        let b = idx.len() as f64;
        let mut loss = 0.0;
        let dout = DMatrix::from_iterator(
            1,
            idx.len(),
            idx.iter().zip(out.iter()).map(|(&i, p)| {
                let r = p - y[i];
                loss += r.abs();
                sign(r) / b
            }),
        );
        let dw2 = &dout * a.transpose();
        let db2: f64 = dout.iter().sum();
        let mut dz = self.w2.transpose() * &dout;
        dz.zip_apply(&z, |d, zv| {
            if zv <= 0.0 {
                *d = 0.0
            }
        });
        if let Some(m) = mask {
            dz.component_mul_assign(m);
        }
        let dw1 = &dz * xb.transpose();
        let db1 = dz.column_sum();
        (loss / b, vec![dw1.as_slice().to_vec(), db1.as_slice().to_vec(), dw2.as_slice().to_vec(), vec![db2]])
    }

    /// Loss and flattened gradient with dropout off (for gradient checks).
    pub fn loss_and_gradient(&self, x: &Design, y: &[f64]) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..x.rows).collect();
        let (loss, grads) = self.loss_grad(x, y, &idx, None);
        (loss, grads.concat())
    }

    pub fn loss(&self, x: &Design, y: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..x.rows).collect();
        self.mae(x, y, &idx)
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = self.w1.as_slice().to_vec();
        out.extend_from_slice(self.b1.as_slice());
        out.extend_from_slice(self.w2.as_slice());
        out.push(self.b2);
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut rest = params;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
    }
}

pub fn fit_ffnn(x: &Design, y: &[f64], config: &TrainConfig, seed: u64) -> Result<(Ffnn, TrainSummary)> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", x.rows, y.len())));
    }
    if x.rows < MIN_ROWS {
        return Err(Error::InsufficientHistory(format!("{} rows, network needs {MIN_ROWS}", x.rows)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Ffnn::new(x.cols, HIDDEN, &mut rng);
    let cfg = LoopConfig {
        lr: config.learning_rate,
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        validation_fraction: config.validation_fraction,
    };
    let p = config.dropout;
    let summary = train(
        &mut net,
        x.rows,
        &cfg,
        &mut rng,
        |net, batch, rng| {
            let mask = DMatrix::from_vec(HIDDEN, batch.len(), dropout_mask(HIDDEN * batch.len(), p, rng));
            net.loss_grad(x, y, batch, Some(&mask))
        },
        |net, val| net.mae(x, y, val),
    )?;
    Ok((net, summary))
}
