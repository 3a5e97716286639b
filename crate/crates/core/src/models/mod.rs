//! Probabilistic classifiers trained epoch by epoch with mini-batch SGD.
//!
//! Two architectures share one flat parameter vector layout:
//!
//! - softmax regression: `W [d x K] | b [K]`
//! - one-hidden-layer ReLU MLP: `W1 [d x H] | b1 [H] | W2 [H x K] | b2 [K]`
//!
//! All matrices are row-major.

mod checkpoint;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};

use crate::dataset::Matrix;
use crate::engine::EpochSnapshot;
use crate::error::{RafniError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    SoftmaxRegression,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Ignored for softmax regression.
    pub hidden_units: usize,
    pub input_dim: usize,
    pub n_classes: usize,
}

impl ClassifierSpec {
    pub fn softmax(input_dim: usize, n_classes: usize) -> Self {
        Self { kind: ClassifierKind::SoftmaxRegression, hidden_units: 0, input_dim, n_classes }
    }

    pub fn mlp(input_dim: usize, hidden_units: usize, n_classes: usize) -> Self {
        Self { kind: ClassifierKind::Mlp, hidden_units, input_dim, n_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(RafniError::Config("model.input_dim must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(RafniError::InvalidArity(self.n_classes));
        }
        if self.kind == ClassifierKind::Mlp && self.hidden_units == 0 {
            return Err(RafniError::Config("model.hidden_units must be at least 1 for the MLP".into()));
        }
        Ok(())
    }

    /// Shapes of the parameter blocks, in storage order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let (d, k, h) = (self.input_dim, self.n_classes, self.hidden_units);
        match self.kind {
            ClassifierKind::SoftmaxRegression => vec![vec![d, k], vec![k]],
            ClassifierKind::Mlp => vec![vec![d, h], vec![h], vec![h, k], vec![k]],
        }
    }

    pub fn n_params(&self) -> usize {
        self.shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub learning_rate: f64,
    /// Keras-style decay: `lr_t = lr / (1 + decay * t)`, `t` = updates so far.
    pub decay: f64,
    /// Nesterov momentum coefficient.
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { learning_rate: 1e-3, decay: 1e-6, momentum: 0.9, batch_size: 16 }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(RafniError::Config(format!(
                "optim.learning_rate = {} is outside the allowed range [0, inf)",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(RafniError::Config(format!(
                "optim.momentum = {} is outside the allowed range [0, 1)",
                self.momentum
            )));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(RafniError::Config(format!("optim.decay = {} must be >= 0", self.decay)));
        }
        if self.batch_size == 0 {
            return Err(RafniError::Config("optim.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ClassifierSpec,
    params: Vec<f64>,
    velocity: Vec<f64>,
    updates: u64,
}

/// Scratch buffers for one forward/backward pass over a single row.
struct Scratch {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Classifier {
    /// MLP hidden weights are Glorot-uniform; hidden biases and every
    /// output-layer parameter start at zero, so a fresh model predicts the
    /// uniform distribution.
    pub fn init(spec: ClassifierSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_params();
        let mut params = vec![0.0; n];
        if spec.kind == ClassifierKind::Mlp {
            let (d, h) = (spec.input_dim, spec.hidden_units);
            let limit = (6.0 / (d + h) as f64).sqrt();
            let mut rng = rng_from_seed(seed);
            for w in &mut params[..d * h] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(Self { spec, velocity: vec![0.0; n], params, updates: 0 })
    }

    pub fn from_parts(spec: ClassifierSpec, params: Vec<f64>, updates: u64) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.n_params() {
            return Err(RafniError::Shape(format!(
                "{} parameters supplied, spec needs {}",
                params.len(),
                spec.n_params()
            )));
        }
        let n = params.len();
        Ok(Self { spec, params, velocity: vec![0.0; n], updates })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn scratch(&self) -> Scratch {
        let h = self.spec.hidden_units;
        Scratch {
            hidden_pre: vec![0.0; h],
            hidden: vec![0.0; h],
            logits: vec![0.0; self.spec.n_classes],
            dhidden: vec![0.0; h],
        }
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(RafniError::Shape(format!(
                "features have {} columns, model expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Fill `s.logits` (and hidden activations for the MLP) for one input row.
    fn forward_row(&self, x: &[f64], s: &mut Scratch) {
        let (d, k) = (self.spec.input_dim, self.spec.n_classes);
        let p = &self.params;
        match self.spec.kind {
            ClassifierKind::SoftmaxRegression => {
                let (w, b) = p.split_at(d * k);
                s.logits.copy_from_slice(b);
                for (j, &xj) in x.iter().enumerate() {
                    let wrow = &w[j * k..(j + 1) * k];
                    for (z, &wjc) in s.logits.iter_mut().zip(wrow) {
                        *z += xj * wjc;
                    }
                }
            }
            ClassifierKind::Mlp => {
                let h = self.spec.hidden_units;
                let (w1, rest) = p.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * k);
                s.hidden_pre.copy_from_slice(b1);
                for (j, &xj) in x.iter().enumerate() {
                    for (a, &w) in s.hidden_pre.iter_mut().zip(&w1[j * h..(j + 1) * h]) {
                        *a += xj * w;
                    }
                }
                for (o, &a) in s.hidden.iter_mut().zip(&s.hidden_pre) {
                    *o = a.max(0.0);
                }
                s.logits.copy_from_slice(b2);
                for (u, &hu) in s.hidden.iter().enumerate() {
                    if hu == 0.0 {
                        continue;
                    }
                    for (z, &w) in s.logits.iter_mut().zip(&w2[u * k..(u + 1) * k]) {
                        *z += hu * w;
                    }
                }
            }
        }
    }

    /// Accumulate `scale * dL/dθ` for one row into `grad`, where `dlogits`
    /// already holds `p - onehot(y)`. Requires a prior `forward_row`.
    fn backward_row(&self, x: &[f64], dlogits: &[f64], scale: f64, s: &mut Scratch, grad: &mut [f64]) {
        let (d, k) = (self.spec.input_dim, self.spec.n_classes);
        match self.spec.kind {
            ClassifierKind::SoftmaxRegression => {
                let (gw, gb) = grad.split_at_mut(d * k);
                for (j, &xj) in x.iter().enumerate() {
                    for (g, &dz) in gw[j * k..(j + 1) * k].iter_mut().zip(dlogits) {
                        *g += scale * xj * dz;
                    }
                }
                for (g, &dz) in gb.iter_mut().zip(dlogits) {
                    *g += scale * dz;
                }
            }
            ClassifierKind::Mlp => {
                let h = self.spec.hidden_units;
                let w2 = &self.params[d * h + h..d * h + h + h * k];
                let (gw1, rest) = grad.split_at_mut(d * h);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(h * k);
                for (u, &hu) in s.hidden.iter().enumerate() {
                    let w2row = &w2[u * k..(u + 1) * k];
                    let mut dh = 0.0;
                    for c in 0..k {
                        gw2[u * k + c] += scale * hu * dlogits[c];
                        dh += w2row[c] * dlogits[c];
                    }
                    s.dhidden[u] = if s.hidden_pre[u] > 0.0 { dh } else { 0.0 };
                }
                for (g, &dz) in gb2.iter_mut().zip(dlogits) {
                    *g += scale * dz;
                }
                for (j, &xj) in x.iter().enumerate() {
                    for (g, &dh) in gw1[j * h..(j + 1) * h].iter_mut().zip(&s.dhidden) {
                        *g += scale * xj * dh;
                    }
                }
                for (g, &dh) in gb1.iter_mut().zip(&s.dhidden) {
                    *g += scale * dh;
                }
            }
        }
    }

    /// Softmax probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        let k = self.spec.n_classes;
        let mut s = self.scratch();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            self.forward_row(x.row(i), &mut s);
            softmax_into(&s.logits, out.row_mut(i));
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows()).map(|i| crate::engine::argmax(p.row(i))).collect())
    }

    /// Per-row cross-entropy (natural log) and probabilities.
    pub fn evaluate(&self, x: &Matrix, labels: &[usize]) -> Result<(Vec<f64>, Matrix)> {
        self.check_labels(x, labels)?;
        let k = self.spec.n_classes;
        let mut s = self.scratch();
        let mut probs = Matrix::zeros(x.rows(), k);
        let mut losses = Vec::with_capacity(x.rows());
        for (i, &label) in labels.iter().enumerate() {
            self.forward_row(x.row(i), &mut s);
            losses.push(cross_entropy(&s.logits, label));
            softmax_into(&s.logits, probs.row_mut(i));
        }
        Ok((losses, probs))
    }

    /// Mean cross-entropy over `rows` and its gradient, written into `grad`.
    pub fn loss_and_grad(&self, x: &Matrix, labels: &[usize], rows: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let k = self.spec.n_classes;
        let mut s = self.scratch();
        let mut dlogits = vec![0.0; k];
        let scale = 1.0 / rows.len() as f64;
        let mut total = 0.0;
        for &i in rows {
            let xi = x.row(i);
            self.forward_row(xi, &mut s);
            total += cross_entropy(&s.logits, labels[i]);
            softmax_into(&s.logits, &mut dlogits);
            dlogits[labels[i]] -= 1.0;
            self.backward_row(xi, &dlogits, scale, &mut s, grad);
        }
        total * scale
    }

    fn check_labels(&self, x: &Matrix, labels: &[usize]) -> Result<()> {
        self.check_dim(x)?;
        if labels.len() != x.rows() {
            return Err(RafniError::Shape(format!("{} labels for {} rows", labels.len(), x.rows())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.n_classes) {
            return Err(RafniError::UnknownClass { class: bad, n_classes: self.spec.n_classes });
        }
        Ok(())
    }

    /// One shuffled pass of mini-batch Nesterov SGD over `x`, followed by a
    /// forward pass that produces the epoch snapshot. `ids` label the rows
    /// of `x` in the snapshot.
    pub fn train_epoch(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        ids: &[usize],
        opt: &OptimizerSpec,
        shuffle_seed: u64,
        epoch: usize,
    ) -> Result<EpochSnapshot> {
        opt.validate()?;
        self.check_labels(x, labels)?;
        if ids.len() != x.rows() {
            return Err(RafniError::Shape(format!("{} ids for {} rows", ids.len(), x.rows())));
        }
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut rng_from_seed(shuffle_seed));
        let mut grad = vec![0.0; self.params.len()];
        for (batch, rows) in order.chunks(opt.batch_size).enumerate() {
            let loss = self.loss_and_grad(x, labels, rows, &mut grad);
            if !loss.is_finite() {
                return Err(RafniError::Divergence { epoch, batch });
            }
            let lr = opt.learning_rate / (1.0 + opt.decay * self.updates as f64);
            let m = opt.momentum;
            for ((p, v), &g) in self.params.iter_mut().zip(self.velocity.iter_mut()).zip(&grad) {
                *v = m * *v - lr * g;
                *p += m * *v - lr * g;
            }
            self.updates += 1;
        }
        let (losses, probs) = self.evaluate(x, labels)?;
        if let Some(batch) = losses.iter().position(|l| !l.is_finite()) {
            return Err(RafniError::Divergence { epoch, batch: batch / opt.batch_size });
        }
        EpochSnapshot::new(epoch, ids.to_vec(), losses, probs)
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}
