//! Symmetric in-batch NCE loss with temperature and its exact gradient.
//!
//! For pair `i` with embeddings `z_i = f(x_i)`, `z_i⁺ = f(x_i⁺)` and sampled
//! negatives `S_i ⊂ {x_j, x_j⁺ : j ≠ i}` the loss is
//!
//! ```text
//! 1/(2B) Σ_i [ −z_i·z_i⁺/T + ln Σ_{n∈S_i} e^{z_i·z_n/T}
//!            − z_i·z_i⁺/T + ln Σ_{n∈S_i} e^{z_i⁺·z_n/T} ]
//! ```
//!
//! The positive is not part of the denominator. Both anchor terms of a pair
//! share the same `S_i`.

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{token_weights, Embedding};
use crate::sampler::Slot;

/// Batch loss value; the gradient is accumulated into a caller buffer.
///
/// `sentences` is indexed by [`Slot::flat`] (anchor of pair `i` at `2i`, its
/// positive at `2i + 1`). `grad` must have the embedding's length and is
/// overwritten.
pub fn batch_nce_loss_and_grad(
    emb: &Embedding,
    sentences: &[&[u32]],
    negatives: &[Vec<Slot>],
    temperature: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let b = negatives.len();
    if sentences.len() != 2 * b {
        return Err(Error::InvalidArgument(format!(
            "{} sentences for {b} pairs",
            sentences.len()
        )));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidValue("temperature must be positive".into()));
    }
    if grad.len() != emb.as_slice().len() {
        return Err(Error::InvalidArgument("gradient buffer has the wrong length".into()));
    }
    if let Some(i) = negatives.iter().position(Vec::is_empty) {
        return Err(Error::DegenerateInput(format!("pair {i} has no negatives")));
    }
    let d = emb.dim();
    let m = 2 * b;
    let mut z = vec![0.0; m * d];
    for (s, tokens) in sentences.iter().enumerate() {
        emb.embed_tokens_into(tokens, &mut z[s * d..(s + 1) * d])?;
    }
    let row = |s: usize| &z[s * d..(s + 1) * d];
    let mut gram = vec![0.0; m * m];
    for s in 0..m {
        for t in s..m {
            let g = dot(row(s), row(t)) / temperature;
            gram[s * m + t] = g;
            gram[t * m + s] = g;
        }
    }

    let scale = 1.0 / m as f64;
    // Coefficients c[s][t]: dL/dz_s = Σ_t c[s][t] z_t.
    let mut coef = vec![0.0; m * m];
    let mut loss = 0.0;
    let mut weights = Vec::new();
    for (i, negs) in negatives.iter().enumerate() {
        for (a, p) in [(2 * i, 2 * i + 1), (2 * i + 1, 2 * i)] {
            let scores = negs.iter().map(|n| gram[a * m + n.flat()]);
            let top = scores.clone().fold(f64::NEG_INFINITY, f64::max);
            weights.clear();
            weights.extend(scores.map(|x| (x - top).exp()));
            let sum: f64 = weights.iter().sum();
            loss += -gram[a * m + p] + top + sum.ln();
            let w = scale / temperature;
            coef[a * m + p] -= w;
            coef[p * m + a] -= w;
            for (n, &e) in negs.iter().zip(&weights) {
                let soft = w * e / sum;
                coef[a * m + n.flat()] += soft;
                coef[n.flat() * m + a] += soft;
            }
        }
    }

    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut dz = vec![0.0; d];
    for (s, tokens) in sentences.iter().enumerate() {
        dz.iter_mut().for_each(|x| *x = 0.0);
        for t in 0..m {
            let c = coef[s * m + t];
            if c != 0.0 {
                for (x, y) in dz.iter_mut().zip(row(t)) {
                    *x += c * y;
                }
            }
        }
        for (tok, w) in token_weights(tokens) {
            let g = &mut grad[tok as usize * d..(tok as usize + 1) * d];
            for (x, y) in g.iter_mut().zip(&dz) {
                *x += w * y;
            }
        }
    }
    Ok(loss * scale)
}
