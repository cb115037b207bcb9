//! Softmax linear head trained on frozen features.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::StreamRng;
use crate::train::adam::Adam;

/// `−1/B Σ_i ln softmax(W f_i)_{c_i}` over the rows in `batch`, with its
/// gradient (row-major `N × d`) written into `grad`.
pub fn head_loss_and_grad(
    weights: &[f64],
    num_classes: usize,
    features: &[Vec<f64>],
    labels: &[usize],
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    let d = weights.len() / num_classes;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut logits = vec![0.0; num_classes];
    let mut loss = 0.0;
    for &i in batch {
        let x = &features[i];
        for (c, l) in logits.iter_mut().enumerate() {
            *l = dot(&weights[c * d..(c + 1) * d], x);
        }
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - top).exp()).sum();
        loss += top + sum.ln() - logits[labels[i]];
        for (c, l) in logits.iter().enumerate() {
            let p = (l - top).exp() / sum - if c == labels[i] { 1.0 } else { 0.0 };
            for (g, xv) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                *g += scale * p * xv;
            }
        }
    }
    loss * scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadResult {
    /// Row-major `N × d`.
    pub weights: Vec<f64>,
    /// Sum of minibatch losses recorded during each epoch.
    pub epoch_losses: Vec<f64>,
    pub selected_epoch: usize,
}

/// Index of the smallest value, first one on ties.
pub fn select_epoch(losses: &[f64]) -> Option<usize> {
    (0..losses.len()).min_by(|&a, &b| losses[a].total_cmp(&losses[b]))
}

/// Trains `W` from zero with Adam and keeps the end-of-epoch snapshot with
/// the smallest aggregate training loss.
#[allow(clippy::too_many_arguments)]
pub fn train_head(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    clip_norm: Option<f64>,
    rng: &mut StreamRng,
) -> Result<HeadResult> {
    if features.is_empty() || epochs == 0 || batch_size == 0 {
        return Err(Error::DegenerateInput("head training needs data, epochs and a batch size".into()));
    }
    let d = features[0].len();
    let mut weights = vec![0.0; num_classes * d];
    let mut grad = vec![0.0; weights.len()];
    let mut opt = Adam::new(weights.len(), learning_rate, clip_norm);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            total += head_loss_and_grad(&weights, num_classes, features, labels, batch, &mut grad);
            opt.step(&mut weights, &mut grad)?;
        }
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, weights.clone()));
        }
        epoch_losses.push(total);
    }
    let selected_epoch = select_epoch(&epoch_losses).expect("at least one epoch");
    Ok(HeadResult {
        weights: best.expect("at least one epoch").1,
        epoch_losses,
        selected_epoch,
    })
}

/// Fraction of rows whose argmax score (lowest index on ties) is the label.
pub fn accuracy(weights: &[Vec<f64>], features: &[Vec<f64>], labels: &[usize]) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let hits = features
        .iter()
        .zip(labels)
        .filter(|(x, &c)| crate::model::predict(weights, x) == c)
        .count();
    hits as f64 / features.len() as f64
}
