//! Multinomial logistic (softmax) regression with bias: the desk-scale local
//! trainer. Parameters are laid out as n_classes contiguous rows of
//! n_features weights followed by one bias, so dim = n_classes*(n_features+1).
//! All arithmetic is f64 and bit-reproducible for a fixed seed.

use alloc::vec;
use alloc::vec::Vec;

// Needed only when no crate in the build graph links std; any std build
// (tests, downstream binaries) sees std's inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::params::ParamVector;
use crate::task::ClientDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    /// Samples consumed per SGD step. When the orchestrator drives a facility
    /// this is the effective batch (nodes * GPUs * per-GPU micro batch).
    pub micro_batch: usize,
    pub momentum: f64,
    pub l2: f64,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("trainer.learning_rate must be positive"));
        }
        if self.micro_batch < 1 {
            return Err(Error::config("trainer.micro_batch must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("trainer.momentum must lie in [0, 1)"));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::config("trainer.l2 must be >= 0"));
        }
        Ok(())
    }
}

pub fn model_dim(n_features: usize, n_classes: usize) -> usize {
    n_classes * (n_features + 1)
}

/// Recovers the class count from a parameter vector for the given feature
/// count, rejecting shapes that are not a whole number of class rows.
fn infer_classes(params: &ParamVector, n_features: usize) -> Result<usize, Error> {
    let stride = n_features + 1;
    let dim = params.dim();
    if dim % stride != 0 || dim / stride < 2 {
        return Err(Error::DimensionMismatch { expected: stride * 2, actual: dim });
    }
    Ok(dim / stride)
}

fn logits_into(params: &[f64], n_features: usize, n_classes: usize, x: &[f64], out: &mut [f64]) {
    let stride = n_features + 1;
    for (c, o) in out.iter_mut().enumerate().take(n_classes) {
        let row = &params[c * stride..(c + 1) * stride];
        let mut z = row[n_features]; // bias
        for f in 0..n_features {
            z += row[f] * x[f];
        }
        *o = z;
    }
}

/// Converts logits to probabilities in place, subtracting the max logit
/// before exponentiation for stability.
fn softmax_in_place(logits: &mut [f64]) {
    let mut max = logits[0];
    for &z in logits.iter() {
        if z > max {
            max = z;
        }
    }
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy gradient over the indexed rows, written into
/// `grad` (which is zeroed first). Pure cross-entropy: no regularization.
fn gradient_indexed(
    params: &ParamVector,
    dataset: &ClientDataset,
    indices: &[usize],
    grad: &mut [f64],
    probs: &mut [f64],
) -> Result<(), Error> {
    let n_features = dataset.n_features;
    let n_classes = infer_classes(params, n_features)?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    let stride = n_features + 1;
    let p = params.values();
    let scale = 1.0 / indices.len() as f64;
    for &i in indices {
        let x = dataset.feature_row(i);
        let y = dataset.label(i);
        if y >= n_classes {
            return Err(Error::DimensionMismatch { expected: n_classes, actual: y + 1 });
        }
        logits_into(p, n_features, n_classes, x, probs);
        softmax_in_place(probs);
        for c in 0..n_classes {
            let err = (probs[c] - if c == y { 1.0 } else { 0.0 }) * scale;
            let row = &mut grad[c * stride..(c + 1) * stride];
            for f in 0..n_features {
                row[f] += err * x[f];
            }
            row[n_features] += err;
        }
    }
    Ok(())
}

/// Analytic gradient of the mean cross-entropy over the whole dataset taken
/// as one batch.
pub fn gradient(params: &ParamVector, batch: &ClientDataset) -> Result<ParamVector, Error> {
    let n_classes = infer_classes(params, batch.n_features)?;
    if batch.sample_count() == 0 {
        return Err(Error::EmptyDataset);
    }
    let indices: Vec<usize> = (0..batch.sample_count()).collect();
    let mut grad = vec![0.0; params.dim()];
    let mut probs = vec![0.0; n_classes];
    gradient_indexed(params, batch, &indices, &mut grad, &mut probs)?;
    ParamVector::new(grad)
}

/// Runs exactly `steps` mini-batch SGD steps with momentum and (weight-only)
/// L2, drawing batches from a seeded shuffled index stream that reshuffles on
/// wraparound. The input vector is not modified.
pub fn local_train(
    params: &ParamVector,
    dataset: &ClientDataset,
    steps: u32,
    cfg: &TrainerConfig,
    rng_seed: u64,
) -> Result<ParamVector, Error> {
    cfg.validate()?;
    let n_features = dataset.n_features;
    let n_classes = infer_classes(params, n_features)?;
    let n = dataset.sample_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= n_classes) {
        return Err(Error::DimensionMismatch { expected: n_classes, actual: bad + 1 });
    }
    let mut out = params.clone();
    if steps == 0 {
        return Ok(out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut batch = Vec::with_capacity(cfg.micro_batch);
    let mut grad = vec![0.0; params.dim()];
    let mut probs = vec![0.0; n_classes];
    let mut velocity = vec![0.0; params.dim()];
    let stride = n_features + 1;

    for _ in 0..steps {
        batch.clear();
        while batch.len() < cfg.micro_batch {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        gradient_indexed(&out, dataset, &batch, &mut grad, &mut probs)?;
        if cfg.l2 > 0.0 {
            // Regularize weights only, never biases.
            let values = out.values();
            for c in 0..n_classes {
                for f in 0..n_features {
                    grad[c * stride + f] += cfg.l2 * values[c * stride + f];
                }
            }
        }
        let values = out.values_mut();
        for j in 0..grad.len() {
            velocity[j] = cfg.momentum * velocity[j] + grad[j];
            values[j] -= cfg.learning_rate * velocity[j];
        }
    }
    if !out.values().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("local_train"));
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy over the concatenation of the datasets.
/// Per-dataset subtotals are folded in a canonical order so the result is
/// exactly invariant under permutation of the dataset list.
pub fn evaluate(params: &ParamVector, datasets: &[ClientDataset]) -> Result<(f64, f64), Error> {
    let total: usize = datasets.iter().map(|d| d.sample_count()).sum();
    if total == 0 {
        return Err(Error::EmptyUnion);
    }
    let n_features = datasets
        .iter()
        .find(|d| d.sample_count() > 0)
        .map(|d| d.n_features)
        .expect("nonempty union");
    let n_classes = infer_classes(params, n_features)?;
    let mut probs = vec![0.0; n_classes];
    let mut partials: Vec<(usize, f64, usize)> = Vec::with_capacity(datasets.len());
    for d in datasets {
        if d.sample_count() == 0 {
            continue;
        }
        if d.n_features != n_features {
            return Err(Error::DimensionMismatch { expected: n_features, actual: d.n_features });
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for i in 0..d.sample_count() {
            let y = d.label(i);
            if y >= n_classes {
                return Err(Error::DimensionMismatch { expected: n_classes, actual: y + 1 });
            }
            logits_into(params.values(), n_features, n_classes, d.feature_row(i), &mut probs);
            softmax_in_place(&mut probs);
            loss_sum -= probs[y].ln();
            if argmax(&probs) == y {
                correct += 1;
            }
        }
        partials.push((d.client_id, loss_sum, correct));
    }
    partials.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut loss_total = 0.0;
    let mut correct_total = 0usize;
    for (_, l, c) in partials {
        loss_total += l;
        correct_total += c;
    }
    Ok((loss_total / total as f64, correct_total as f64 / total as f64))
}
