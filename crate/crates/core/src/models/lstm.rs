//! LSTM regressors over three-week windows. A linear head reads every step
//! and is trained on the mean absolute error over the three outputs; dropout
//! acts on layer outputs only.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{dropout_mask, lecun_uniform, sign, train, LoopConfig, TrainSummary, Trainable};
use super::TrainConfig;
use crate::error::{Error, Result};

pub const HIDDEN: usize = 32;
pub const STEPS: usize = 3;

/// Windows of `STEPS` consecutive feature rows, each step paired with the
/// next week's return.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceSet {
    pub inputs: usize,
    /// `len × STEPS × inputs`, step-major within a sample.
    pub features: Vec<f64>,
    /// `len × STEPS`; may be empty for prediction-only sets.
    pub targets: Vec<f64>,
}

impl SequenceSet {
    pub fn new(inputs: usize) -> SequenceSet {
        SequenceSet { inputs, features: Vec::new(), targets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.features.len() / (STEPS * self.inputs.max(1))
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, steps: [&[f64]; STEPS], targets: Option<[f64; STEPS]>) {
        for s in steps {
            assert_eq!(s.len(), self.inputs, "step width mismatch");
            self.features.extend_from_slice(s);
        }
        if let Some(t) = targets {
            self.targets.extend_from_slice(&t);
        }
    }

    fn has_targets(&self) -> bool {
        self.targets.len() == self.len() * STEPS
    }

    /// Per-step input matrices (inputs × batch) for the samples in `idx`.
    fn gather(&self, idx: &[usize]) -> Vec<DMatrix<f64>> {
        (0..STEPS)
            .map(|t| {
                let mut m = DMatrix::zeros(self.inputs, idx.len());
                for (c, &i) in idx.iter().enumerate() {
                    let start = (i * STEPS + t) * self.inputs;
                    m.column_mut(c).copy_from_slice(&self.features[start..start + self.inputs]);
                }
                m
            })
            .collect()
    }

    fn target(&self, i: usize, t: usize) -> f64 {
        self.targets[i * STEPS + t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    /// Gate rows ordered input, forget, candidate, output.
    pub wx: DMatrix<f64>,
    pub wh: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub layers: Vec<LstmLayer>,
    pub head_w: DMatrix<f64>,
    pub head_b: f64,
}

struct StepCache {
    x: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    c_prev: DMatrix<f64>,
    i: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    tc: DMatrix<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl LstmLayer {
    fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmLayer {
        let fan_in = inputs + hidden;
        let mut b = DVector::zeros(4 * hidden);
        b.rows_mut(hidden, hidden).fill(1.0);
        LstmLayer {
            wx: DMatrix::from_vec(4 * hidden, inputs, lecun_uniform(4 * hidden * inputs, fan_in, rng)),
            wh: DMatrix::from_vec(4 * hidden, hidden, lecun_uniform(4 * hidden * hidden, fan_in, rng)),
            b,
        }
    }

    fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    fn forward(&self, xs: &[DMatrix<f64>]) -> (Vec<DMatrix<f64>>, Vec<StepCache>) {
        let h = self.hidden();
        let batch = xs[0].ncols();
        let mut h_prev = DMatrix::zeros(h, batch);
        let mut c_prev = DMatrix::zeros(h, batch);
        let mut outputs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let mut gates = &self.wx * x;
            gates.gemm(1.0, &self.wh, &h_prev, 1.0);
            for mut col in gates.column_iter_mut() {
                col += &self.b;
            }
            let i = gates.rows(0, h).map(sigmoid);
            let f = gates.rows(h, h).map(sigmoid);
            let g = gates.rows(2 * h, h).map(f64::tanh);
            let o = gates.rows(3 * h, h).map(sigmoid);
            let c = f.component_mul(&c_prev) + i.component_mul(&g);
            let tc = c.map(f64::tanh);
            let hn = o.component_mul(&tc);
            outputs.push(hn.clone());
            caches.push(StepCache { x: x.clone(), h_prev, c_prev, i, f, g, o, tc });
            h_prev = hn;
            c_prev = c;
        }
        (outputs, caches)
    }

    /// Backpropagation through time; returns (dwx, dwh, db) and input grads.
    fn backward(&self, caches: &[StepCache], dh_out: &[DMatrix<f64>]) -> ([DMatrix<f64>; 3], Vec<DMatrix<f64>>) {
        let h = self.hidden();
        let batch = dh_out[0].ncols();
        let mut dwx = DMatrix::zeros(self.wx.nrows(), self.wx.ncols());
        let mut dwh = DMatrix::zeros(self.wh.nrows(), self.wh.ncols());
        let mut db = DMatrix::zeros(4 * h, 1);
        let mut dh_next = DMatrix::zeros(h, batch);
        let mut dc_next = DMatrix::zeros(h, batch);
        let mut dxs = vec![DMatrix::zeros(0, 0); caches.len()];
        for t in (0..caches.len()).rev() {
            let s = &caches[t];
            let dh = &dh_out[t] + &dh_next;
            let d_o = dh.component_mul(&s.tc);
            let dc = dh.component_mul(&s.o).component_mul(&s.tc.map(|v| 1.0 - v * v)) + &dc_next;
            let di = dc.component_mul(&s.g);
            let dg = dc.component_mul(&s.i);
            let df = dc.component_mul(&s.c_prev);
            dc_next = dc.component_mul(&s.f);
            let mut da = DMatrix::zeros(4 * h, batch);
            da.rows_mut(0, h).copy_from(&di.zip_map(&s.i, |d, v| d * v * (1.0 - v)));
            da.rows_mut(h, h).copy_from(&df.zip_map(&s.f, |d, v| d * v * (1.0 - v)));
            da.rows_mut(2 * h, h).copy_from(&dg.zip_map(&s.g, |d, v| d * (1.0 - v * v)));
            da.rows_mut(3 * h, h).copy_from(&d_o.zip_map(&s.o, |d, v| d * v * (1.0 - v)));
            dwx.gemm(1.0, &da, &s.x.transpose(), 1.0);
            dwh.gemm(1.0, &da, &s.h_prev.transpose(), 1.0);
            db += da.column_sum();
            dxs[t] = self.wx.transpose() * &da;
            dh_next = self.wh.transpose() * &da;
        }
        ([dwx, dwh, db], dxs)
    }
}

impl Trainable for LstmNet {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.wx.as_mut_slice());
            out.push(l.wh.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out.push(self.head_w.as_mut_slice());
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }
}

/// Dropout masks per layer per step (hidden × batch).
type Masks = Vec<Vec<DMatrix<f64>>>;

impl LstmNet {
    pub fn new(inputs: usize, hidden: usize, depth: usize, rng: &mut ChaCha8Rng) -> LstmNet {
        let layers = (0..depth).map(|d| LstmLayer::new(if d == 0 { inputs } else { hidden }, hidden, rng)).collect();
        LstmNet { layers, head_w: DMatrix::from_vec(1, hidden, lecun_uniform(hidden, hidden, rng)), head_b: 0.0 }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].wx.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().len()
    }

    /// Top-layer outputs per step, with dropout masks applied if given.
    fn encode(&self, xs: Vec<DMatrix<f64>>, masks: Option<&Masks>) -> (Vec<Vec<StepCache>>, Vec<DMatrix<f64>>) {
        let mut input = xs;
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (mut out, cache) = layer.forward(&input);
            if let Some(m) = masks {
                for (o, mk) in out.iter_mut().zip(&m[l]) {
                    o.component_mul_assign(mk);
                }
            }
            caches.push(cache);
            input = out;
        }
        (caches, input)
    }

    fn head(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.head_w * h).add_scalar(self.head_b)
    }

    fn loss_grad(&self, set: &SequenceSet, idx: &[usize], masks: Option<&Masks>) -> (f64, Vec<Vec<f64>>) {
        let (caches, top) = self.encode(set.gather(idx), masks);
        let scale = 1.0 / (STEPS * idx.len()) as f64;
        let mut loss = 0.0;
        let mut dhead_w = DMatrix::zeros(1, self.head_w.ncols());
        let mut dhead_b = 0.0;
        let mut dh: Vec<DMatrix<f64>> = Vec::with_capacity(STEPS);
        for (t, h) in top.iter().enumerate() {
            let out = self.head(h);
            let dy = DMatrix::from_iterator(
                1,
                idx.len(),
                idx.iter().zip(out.iter()).map(|(&i, p)| {
                    let r = p - set.target(i, t);
                    loss += r.abs();
                    sign(r) * scale
                }),
            );
            dhead_w.gemm(1.0, &dy, &h.transpose(), 1.0);
            dhead_b += dy.iter().sum::<f64>();
            dh.push(self.head_w.transpose() * dy);
        }
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            if let Some(m) = masks {
                for (d, mk) in dh.iter_mut().zip(&m[l]) {
                    d.component_mul_assign(mk);
                }
            }
            let (g, dx) = self.layers[l].backward(&caches[l], &dh);
            layer_grads.push(g);
            dh = dx;
        }
        layer_grads.reverse();
        let mut grads: Vec<Vec<f64>> =
            layer_grads.into_iter().flat_map(|g| g.into_iter().map(|m| m.as_slice().to_vec())).collect();
        grads.push(dhead_w.as_slice().to_vec());
        grads.push(vec![dhead_b]);
        (loss * scale, grads)
    }

    fn mae(&self, set: &SequenceSet, idx: &[usize]) -> f64 {
        self.loss_grad(set, idx, None).0
    }

    /// Mean absolute error over every sample and step, dropout off.
    pub fn loss(&self, set: &SequenceSet) -> f64 {
        let idx: Vec<usize> = (0..set.len()).collect();
        self.mae(set, &idx)
    }

    /// Loss and flattened gradient with dropout off (for gradient checks);
    /// order: per layer `wx, wh, b`, then head weights and bias.
    pub fn loss_and_gradient(&self, set: &SequenceSet) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..set.len()).collect();
        let (loss, grads) = self.loss_grad(set, &idx, None);
        (loss, grads.concat())
    }

    /// Head outputs at every step for each sample, `STEPS` per sample.
    pub fn predict_steps(&self, set: &SequenceSet) -> Vec<[f64; STEPS]> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut out = Vec::with_capacity(set.len());
        for chunk in idx.chunks(1024) {
            let (_, top) = self.encode(set.gather(chunk), None);
            let heads: Vec<DMatrix<f64>> = top.iter().map(|h| self.head(h)).collect();
            for c in 0..chunk.len() {
                out.push(std::array::from_fn(|t| heads[t][(0, c)]));
            }
        }
        out
    }

    /// The last-step output: the return of the week after the window.
    pub fn predict(&self, set: &SequenceSet) -> Vec<f64> {
        self.predict_steps(set).into_iter().map(|s| s[STEPS - 1]).collect()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.clone().tensors_mut().into_iter().flat_map(|t| t.to_vec()).collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut rest = params;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
    }

    fn masks(&self, batch: usize, p: f64, rng: &mut ChaCha8Rng) -> Masks {
        self.layers
            .iter()
            .map(|l| {
                let h = l.hidden();
                (0..STEPS).map(|_| DMatrix::from_vec(h, batch, dropout_mask(h * batch, p, rng))).collect()
            })
            .collect()
    }
}

fn check_set(set: &SequenceSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InsufficientHistory("no complete three-week windows".into()));
    }
    if !set.has_targets() {
        return Err(Error::InvalidInput("sequence set has no targets".into()));
    }
    if set.features.iter().chain(&set.targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in sequence data".into()));
    }
    Ok(())
}

fn loop_config(config: &TrainConfig, lr: f64, max_epochs: usize) -> LoopConfig {
    LoopConfig {
        lr,
        batch_size: config.batch_size,
        max_epochs,
        patience: config.patience,
        validation_fraction: config.validation_fraction,
    }
}

/// Trains a `depth`-layer network on all windows in `set`.
pub fn fit_lstm(set: &SequenceSet, depth: usize, config: &TrainConfig, seed: u64) -> Result<(LstmNet, TrainSummary)> {
    check_set(set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = LstmNet::new(set.inputs, HIDDEN, depth, &mut rng);
    let p = config.dropout;
    let summary = train(
        &mut net,
        set.len(),
        &loop_config(config, config.learning_rate, config.max_epochs),
        &mut rng,
        |net, batch, rng| {
            let masks = net.masks(batch.len(), p, rng);
            net.loss_grad(set, batch, Some(&masks))
        },
        |net, val| net.mae(set, val),
    )?;
    Ok((net, summary))
}

#[derive(Clone)]
struct Head {
    w: DMatrix<f64>,
    b: f64,
}

impl Trainable for Head {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), std::slice::from_mut(&mut self.b)]
    }
}

/// Retrains only the head on `set` with every recurrent parameter frozen.
/// The frozen top-layer states are computed once and reused each pass.
pub fn finetune_head(net: &LstmNet, set: &SequenceSet, config: &TrainConfig, seed: u64) -> Result<(LstmNet, TrainSummary)> {
    check_set(set)?;
    let all: Vec<usize> = (0..set.len()).collect();
    let (_, states) = net.encode(set.gather(&all), None);
    let hidden = net.head_w.ncols();
    let gather = |t: usize, idx: &[usize]| {
        let mut m = DMatrix::zeros(hidden, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            m.set_column(c, &states[t].column(i));
        }
        m
    };
    let p = config.dropout;
    let head_loss = |head: &Head, idx: &[usize], rng: Option<&mut ChaCha8Rng>| {
        let scale = 1.0 / (STEPS * idx.len()) as f64;
        let mut rng = rng;
        let mut loss = 0.0;
        let mut dw = DMatrix::zeros(1, hidden);
        let mut db = 0.0;
        for t in 0..STEPS {
            let mut h = gather(t, idx);
            if let Some(r) = rng.as_deref_mut() {
                h.component_mul_assign(&DMatrix::from_vec(hidden, idx.len(), dropout_mask(hidden * idx.len(), p, r)));
            }
            let out = (&head.w * &h).add_scalar(head.b);
            let dy = DMatrix::from_iterator(
                1,
                idx.len(),
                idx.iter().zip(out.iter()).map(|(&i, p)| {
                    let r = p - set.target(i, t);
                    loss += r.abs();
                    sign(r) * scale
                }),
            );
            dw.gemm(1.0, &dy, &h.transpose(), 1.0);
            db += dy.iter().sum::<f64>();
        }
        (loss * scale, vec![dw.as_slice().to_vec(), vec![db]])
    };
    let mut head = Head { w: net.head_w.clone(), b: net.head_b };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let summary = train(
        &mut head,
        set.len(),
        &loop_config(config, config.finetune_learning_rate, config.finetune_epochs),
        &mut rng,
        |head, batch, rng| head_loss(head, batch, Some(rng)),
        |head, val| head_loss(head, val, None).0,
    )?;
    let mut tuned = net.clone();
    tuned.head_w = head.w;
    tuned.head_b = head.b;
    Ok((tuned, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_set(seed: u64, n: usize, inputs: usize) -> SequenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = SequenceSet::new(inputs);
        for _ in 0..n {
            let steps: Vec<Vec<f64>> =
                (0..STEPS).map(|_| (0..inputs).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
            let targets = std::array::from_fn(|t| 0.5 * steps[t][0] + 0.1 * { let z: f64 = StandardNormal.sample(&mut rng); z });
            set.push([&steps[0], &steps[1], &steps[2]], Some(targets));
        }
        set
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(LstmNet::new(12, HIDDEN, 1, &mut rng).parameter_count(), 5793);
        assert_eq!(LstmNet::new(12, HIDDEN, 2, &mut rng).parameter_count(), 14113);
    }

    #[test]
    fn zero_input_zero_head_outputs_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = LstmNet::new(4, HIDDEN, 2, &mut rng);
        net.head_w.fill(0.0);
        net.head_b = -0.02;
        let mut set = SequenceSet::new(4);
        let z = [0.0; 4];
        set.push([&z, &z, &z], None);
        assert_eq!(net.predict_steps(&set), vec![[-0.02; 3]]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let set = random_set(2, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = LstmNet::new(5, 8, 2, &mut rng);
        let (_, grad) = net.loss_and_gradient(&set);
        let params = net.parameters();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 0..params.len() {
            // Fourth-order central difference.
            let mut at = |offset: f64| {
                let mut p = params.clone();
                p[k] += offset;
                net.set_parameters(&p);
                net.loss(&set)
            };
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            worst = worst.max((fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(1e-8));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn finetune_freezes_recurrent_weights() {
        let set = random_set(4, 300, 3);
        let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
        let (net, _) = fit_lstm(&set, 1, &cfg, 5).unwrap();
        let (tuned, _) = finetune_head(&net, &random_set(6, 80, 3), &cfg, 7).unwrap();
        assert_eq!(tuned.layers, net.layers);
        assert_ne!(tuned.head_w, net.head_w);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let set = random_set(8, 1500, 3);
        let cfg = TrainConfig { max_epochs: 30, dropout: 0.0, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let before = LstmNet::new(3, HIDDEN, 1, &mut rng).loss(&set);
        let (a, _) = fit_lstm(&set, 1, &cfg, 9).unwrap();
        let (b, _) = fit_lstm(&set, 1, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.loss(&set) < 0.5 * before, "{} vs {before}", a.loss(&set));
    }
}
