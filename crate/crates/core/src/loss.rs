//! Asymmetric misclassification cost and its convex hinge-style upper bound.

use crate::error::Result;
use crate::model::{argmax, dot, LinearModel, Matrix, PriorityVector};

/// `+1` when `y == j`, `-1` otherwise.
#[inline]
pub fn signed_delta(y: usize, j: usize) -> f64 {
    if y == j {
        1.0
    } else {
        -1.0
    }
}

/// Cost `θ_y` when some other class strictly beats `y` under the scaled
/// rule, zero otherwise. A tie involving `y` counts as correct.
pub fn true_loss(model: &LinearModel, x: &[f64], y: usize) -> Result<f64> {
    let scores = model.scores(x)?;
    let best = scores[argmax(&scores)];
    Ok(if best - scores[y] > 0.0 {
        model.theta().get(y)
    } else {
        0.0
    })
}

/// Per-class terms `max(0, θ_y − δ̄_{y,j}·(w_j·x + b_j))`.
pub fn surrogate_terms(model: &LinearModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let xa = model.prepare(x)?;
    Ok(surrogate_terms_augmented(model.weights(), model.theta(), &xa, y))
}

/// Sum of [`surrogate_terms`].
pub fn surrogate_loss(model: &LinearModel, x: &[f64], y: usize) -> Result<f64> {
    Ok(surrogate_terms(model, x, y)?.iter().sum())
}

pub(crate) fn surrogate_terms_augmented(
    weights: &Matrix,
    theta: &PriorityVector,
    xa: &[f64],
    y: usize,
) -> Vec<f64> {
    let ty = theta.get(y);
    weights
        .iter_rows()
        .enumerate()
        .map(|(j, w)| (ty - signed_delta(y, j) * dot(w, xa)).max(0.0))
        .collect()
}

pub(crate) fn surrogate_augmented(weights: &Matrix, theta: &PriorityVector, xa: &[f64], y: usize) -> f64 {
    let ty = theta.get(y);
    weights
        .iter_rows()
        .enumerate()
        .map(|(j, w)| (ty - signed_delta(y, j) * dot(w, xa)).max(0.0))
        .sum()
}
