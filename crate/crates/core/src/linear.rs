//! Primal stochastic subgradient training of the apportioned-margin model.

use crate::error::{check_dim, input, Result};
use crate::loss::{signed_delta, surrogate_augmented};
use crate::model::{dot, LabeledDataset, LinearModel, Matrix, PriorityVector, TrainConfig};
use crate::sgd::{pegasos_step, IndexSampler};

/// Objective values sampled during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// `(iteration, objective)` pairs, iterations strictly increasing.
    pub objective_samples: Vec<(u64, f64)>,
    pub final_iteration: u64,
}

/// `(λ/2)·‖W‖²_F + mean surrogate loss` over `data`.
pub fn objective(model: &LinearModel, data: &LabeledDataset, lambda: f64) -> Result<f64> {
    check_dim(model.d(), data.d())?;
    check_dim(model.k(), data.k())?;
    let mut total = 0.0;
    for i in 0..data.n() {
        let xa = model.prepare(data.x(i))?;
        total += surrogate_augmented(model.weights(), model.theta(), &xa, data.y(i));
    }
    Ok(0.5 * lambda * model.weights().frobenius_sq() + total / data.n() as f64)
}

pub(crate) fn objective_augmented(
    weights: &Matrix,
    theta: &PriorityVector,
    xa: &Matrix,
    labels: &[usize],
    lambda: f64,
) -> f64 {
    let loss: f64 = xa
        .iter_rows()
        .zip(labels)
        .map(|(x, &y)| surrogate_augmented(weights, theta, x, y))
        .sum();
    0.5 * lambda * weights.frobenius_sq() + loss / labels.len() as f64
}

/// Writes the active-row coefficients `𝟙[θ_y − δ̄_{y,j} w_j·x̃ > 0]·δ̄_{y,j}`
/// into `coef` and returns how many rows are active.
pub fn apportioned_coefficients(
    weights: &Matrix,
    theta: &PriorityVector,
    xa: &[f64],
    y: usize,
    coef: &mut [f64],
) -> usize {
    let ty = theta.get(y);
    let mut active = 0;
    for (j, w) in weights.iter_rows().enumerate() {
        let delta = signed_delta(y, j);
        coef[j] = if ty - delta * dot(w, xa) > 0.0 {
            active += 1;
            delta
        } else {
            0.0
        };
    }
    active
}

/// One full update on example `(xa, y)` at iteration `t`.
pub fn apportioned_step(
    weights: &mut Matrix,
    theta: &PriorityVector,
    xa: &[f64],
    y: usize,
    lambda: f64,
    t: u64,
) {
    let mut coef = vec![0.0; weights.rows()];
    apportioned_coefficients(weights, theta, xa, y, &mut coef);
    pegasos_step(weights, xa, &coef, lambda, t);
}

pub(crate) fn validate_training_input(
    data: &LabeledDataset,
    theta: &PriorityVector,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if theta.len() != data.k() {
        return input(format!(
            "priority vector has {} entries but the data has {} classes",
            theta.len(),
            data.k()
        ));
    }
    Ok(())
}

/// Trains from `W = 0` for `cfg.iterations` seeded Pegasos steps.
pub fn train_linear(
    data: &LabeledDataset,
    theta: &PriorityVector,
    cfg: &TrainConfig,
) -> Result<(LinearModel, TrainTrace)> {
    validate_training_input(data, theta, cfg)?;
    let xa = data.augmented();
    let k = data.k();
    let mut weights = Matrix::zeros(k, xa.cols());
    let mut coef = vec![0.0; k];
    let mut sampler = IndexSampler::new(data.n(), cfg.seed);
    let mut trace = TrainTrace::default();

    for t in 1..=cfg.iterations {
        let i = sampler.next_index();
        let x = xa.row(i);
        apportioned_coefficients(&weights, theta, x, data.y(i), &mut coef);
        pegasos_step(&mut weights, x, &coef, cfg.lambda, t);
        if let Some(every) = cfg.record_objective_every {
            if t % every == 0 || t == cfg.iterations {
                let obj = objective_augmented(&weights, theta, &xa, data.labels(), cfg.lambda);
                trace.objective_samples.push((t, obj));
            }
        }
    }
    trace.final_iteration = cfg.iterations;
    Ok((LinearModel::new(weights, theta.clone())?, trace))
}
