//! Kernelized training via signed update counts.
//!
//! After `t` iterations the implicit primal row is
//! `w_j = 1/(λ t) · Σ_i ᾱ_{ij} φ(x̃_i)`, where `ᾱ_{ij}` counts (with sign
//! `δ̄_{y_i,j}`) how often example `i` triggered an update of row `j`. The
//! update test at iteration `t` therefore reads the current row through the
//! scale `1/(λ (t−1))`, which keeps the linear kernel step-for-step
//! identical to [`crate::linear::train_linear`].

use std::borrow::Cow;

use crate::error::{check_dim, input, Error, Result};
use crate::linear::validate_training_input;
use crate::loss::signed_delta;
use crate::model::{
    argmax, dot, KernelKind, KernelModel, KernelSpec, LabeledDataset, LinearModel, Matrix,
    PriorityVector, TrainConfig,
};
use crate::sgd::IndexSampler;

/// Default number of points whose full Gram matrix is cached.
pub const DEFAULT_GRAM_CAP: usize = 20_000;

/// `K(a, b)` for the given kernel.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(kernel_unchecked(spec, a, b))
}

#[inline]
pub(crate) fn kernel_unchecked(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    match spec.kind {
        KernelKind::Linear => dot(a, b),
        KernelKind::Rbf => {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-spec.gamma * sq).exp()
        }
        KernelKind::Polynomial => (spec.gamma * dot(a, b) + spec.coef0).powi(spec.degree as i32),
    }
}

/// How kernel rows are obtained during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelOptions {
    /// Largest `n` for which the full Gram matrix is precomputed.
    pub gram_cap: usize,
    /// Above the cap, compute rows on demand instead of failing.
    pub on_demand_above_cap: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            gram_cap: DEFAULT_GRAM_CAP,
            on_demand_above_cap: true,
        }
    }
}

/// Symmetric kernel matrix over a fixed set of points.
#[derive(Debug, Clone)]
pub struct GramCache {
    values: Matrix,
    kernel: KernelSpec,
}

impl GramCache {
    pub fn new(kernel: KernelSpec, points: &Matrix) -> Result<Self> {
        kernel.validate()?;
        let n = points.rows();
        let mut values = Matrix::zeros(n, n);
        for i in 0..n {
            for l in 0..=i {
                let v = kernel_unchecked(&kernel, points.row(i), points.row(l));
                values.set(i, l, v);
                values.set(l, i, v);
            }
        }
        Ok(GramCache { values, kernel })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

enum RowSource<'a> {
    Cached(GramCache),
    OnDemand { kernel: KernelSpec, points: &'a Matrix },
}

impl RowSource<'_> {
    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            RowSource::Cached(g) => Cow::Borrowed(g.row(i)),
            RowSource::OnDemand { kernel, points } => Cow::Owned(
                points
                    .iter_rows()
                    .map(|p| kernel_unchecked(kernel, points.row(i), p))
                    .collect(),
            ),
        }
    }
}

/// Trains with the default Gram policy.
pub fn train_kernel(
    data: &LabeledDataset,
    theta: &PriorityVector,
    cfg: &TrainConfig,
    spec: &KernelSpec,
) -> Result<KernelModel> {
    train_kernel_with(data, theta, cfg, spec, &KernelOptions::default())
}

pub fn train_kernel_with(
    data: &LabeledDataset,
    theta: &PriorityVector,
    cfg: &TrainConfig,
    spec: &KernelSpec,
    opts: &KernelOptions,
) -> Result<KernelModel> {
    validate_training_input(data, theta, cfg)?;
    spec.validate()?;
    let points = data.augmented();
    let n = points.rows();
    let k = data.k();
    let rows = if n <= opts.gram_cap {
        RowSource::Cached(GramCache::new(*spec, &points)?)
    } else if opts.on_demand_above_cap {
        log::info!("{} points exceed the Gram cap of {}; computing kernel rows on demand", n, opts.gram_cap);
        RowSource::OnDemand { kernel: *spec, points: &points }
    } else {
        return Err(Error::Resource(format!(
            "{} training points exceed the Gram matrix cap of {}",
            n, opts.gram_cap
        )));
    };

    let mut alpha = Matrix::zeros(n, k);
    // scores[m*k + j] = Σ_l ᾱ_{lj} K(x_l, x_m)
    let mut scores = vec![0.0; n * k];
    let mut sampler = IndexSampler::new(n, cfg.seed);
    let mut fired = vec![false; k];

    for t in 1..=cfg.iterations {
        let i = sampler.next_index();
        let y = data.y(i);
        let ty = theta.get(y);
        let inv_scale = if t == 1 { 0.0 } else { 1.0 / (cfg.lambda * (t - 1) as f64) };
        let mut any = false;
        for j in 0..k {
            let delta = signed_delta(y, j);
            fired[j] = ty > delta * scores[i * k + j] * inv_scale;
            any |= fired[j];
        }
        if !any {
            continue;
        }
        let krow = rows.row(i);
        for j in 0..k {
            if !fired[j] {
                continue;
            }
            let delta = signed_delta(y, j);
            alpha.set(i, j, alpha.get(i, j) + delta);
            for (m, kv) in krow.iter().enumerate() {
                scores[m * k + j] += delta * kv;
            }
        }
    }

    KernelModel::new(alpha, points, cfg.lambda, cfg.iterations, theta.clone(), *spec)
}

/// Dual decision values `(1/θ_j)·Σ_i ᾱ_{ij} K(x̃_i, x̃)`; the positive factor
/// `1/(λT)` is dropped since it does not change the argmax.
pub fn kernel_scores(model: &KernelModel, x: &[f64]) -> Result<Vec<f64>> {
    let xa = model.prepare(x)?;
    let k = model.k();
    let mut s = vec![0.0; k];
    for i in 0..model.n() {
        let a = model.alpha_bar.row(i);
        if a.iter().all(|v| *v == 0.0) {
            continue;
        }
        let kv = kernel_unchecked(&model.kernel, model.support_points.row(i), &xa);
        for (sj, aj) in s.iter_mut().zip(a) {
            *sj += aj * kv;
        }
    }
    for (j, sj) in s.iter_mut().enumerate() {
        *sj /= model.theta.get(j);
    }
    Ok(s)
}

pub fn predict_kernel(model: &KernelModel, x: &[f64]) -> Result<usize> {
    Ok(argmax(&kernel_scores(model, x)?))
}

/// Training indices with a nonzero coefficient for class `j`.
pub fn list_support_vectors(model: &KernelModel, j: usize) -> Result<Vec<usize>> {
    if j >= model.k() {
        return input(format!("class {} out of range for {} classes", j, model.k()));
    }
    Ok((0..model.n()).filter(|&i| model.alpha_bar.get(i, j) != 0.0).collect())
}

/// Per-class sums `Σ_i ᾱ_{ij}`; zero for every class when the positive and
/// negative update weights balance.
pub fn balance_by_class(model: &KernelModel) -> Vec<f64> {
    (0..model.k())
        .map(|j| (0..model.n()).map(|i| model.alpha_bar.get(i, j)).sum())
        .collect()
}

/// Primal weights `w_j = 1/(λT)·Σ_i ᾱ_{ij} x̃_i`; only defined for the
/// linear kernel.
pub fn reconstruct_primal(model: &KernelModel) -> Result<LinearModel> {
    if model.kernel.kind != KernelKind::Linear {
        return input("primal reconstruction needs the linear kernel");
    }
    let cols = model.support_points.cols();
    let mut w = Matrix::zeros(model.k(), cols);
    let scale = 1.0 / (model.lambda * model.iterations as f64);
    for i in 0..model.n() {
        let x = model.support_points.row(i);
        for j in 0..model.k() {
            let a = model.alpha_bar.get(i, j);
            if a != 0.0 {
                for (wv, xv) in w.row_mut(j).iter_mut().zip(x) {
                    *wv += a * xv;
                }
            }
        }
    }
    w.scale(scale);
    LinearModel::new(w, model.theta.clone())?.with_scaler(model.scaler.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;

    fn ds() -> LabeledDataset {
        let f = Matrix::from_rows(&[
            vec![-2.0, 0.5],
            vec![-1.5, -0.5],
            vec![2.0, 0.3],
            vec![1.7, -0.2],
            vec![0.1, 2.0],
            vec![0.0, 2.5],
        ])
        .unwrap();
        LabeledDataset::new(f, vec![0, 0, 1, 1, 2, 2], 3).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(&KernelSpec::rbf(0.7), &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(kernel_eval(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let v = kernel_eval(&KernelSpec::rbf(0.5), &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
        let p = kernel_eval(&KernelSpec::polynomial(0.5, 3, 1.0), &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(p, 6.5f64.powi(3));
        assert!(kernel_eval(&KernelSpec::linear(), &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gram_is_symmetric_with_unit_rbf_diagonal() {
        let g = GramCache::new(KernelSpec::rbf(0.3), &ds().augmented()).unwrap();
        let m = g.matrix();
        for i in 0..m.rows() {
            assert_eq!(m.get(i, i), 1.0);
            for l in 0..m.cols() {
                assert!((m.get(i, l) - m.get(l, i)).abs() <= 1e-12);
                assert!(m.get(i, l) > 0.0 && m.get(i, l) <= 1.0);
            }
        }
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let data = ds();
        let model = KernelModel::new(
            Matrix::zeros(6, 3),
            data.augmented(),
            0.1,
            1,
            PriorityVector::uniform(3).unwrap(),
            KernelSpec::rbf(1.0),
        )
        .unwrap();
        assert_eq!(predict_kernel(&model, &[5.0, 5.0]).unwrap(), 0);
        for j in 0..3 {
            assert!(list_support_vectors(&model, j).unwrap().is_empty());
        }
        assert!(list_support_vectors(&model, 3).is_err());
    }

    #[test]
    fn one_iteration_touches_sampled_row_only() {
        let data = ds();
        let theta = PriorityVector::new(vec![2.0, 1.0, 1.0]).unwrap();
        let cfg = TrainConfig::new(0.1, 1, 11);
        let model = train_kernel(&data, &theta, &cfg, &KernelSpec::rbf(0.5)).unwrap();
        let i = IndexSampler::new(data.n(), 11).next_index();
        for j in 0..3 {
            assert_eq!(list_support_vectors(&model, j).unwrap(), vec![i]);
            assert_eq!(model.alpha_bar().get(i, j), signed_delta(data.y(i), j));
        }
    }

    #[test]
    fn sign_structure_holds() {
        let data = ds();
        let theta = PriorityVector::new(vec![1.0, 3.0, 1.0]).unwrap();
        let model = train_kernel(&data, &theta, &TrainConfig::new(0.05, 400, 2), &KernelSpec::rbf(0.5)).unwrap();
        for i in 0..data.n() {
            for j in 0..3 {
                let a = model.alpha_bar().get(i, j);
                assert!(a == 0.0 || a.signum() == signed_delta(data.y(i), j));
                assert_eq!(a, a.round());
            }
        }
    }

    #[test]
    fn gram_cap_policy() {
        let data = ds();
        let theta = PriorityVector::uniform(3).unwrap();
        let cfg = TrainConfig::new(0.1, 50, 1);
        let strict = KernelOptions {
            gram_cap: 3,
            on_demand_above_cap: false,
        };
        let err = train_kernel_with(&data, &theta, &cfg, &KernelSpec::rbf(1.0), &strict).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        let lazy = KernelOptions {
            gram_cap: 3,
            on_demand_above_cap: true,
        };
        let a = train_kernel_with(&data, &theta, &cfg, &KernelSpec::rbf(1.0), &lazy).unwrap();
        let b = train_kernel(&data, &theta, &cfg, &KernelSpec::rbf(1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reconstruct_requires_linear_kernel() {
        let data = ds();
        let theta = PriorityVector::uniform(3).unwrap();
        let m = train_kernel(&data, &theta, &TrainConfig::new(0.1, 20, 1), &KernelSpec::rbf(1.0)).unwrap();
        assert!(reconstruct_primal(&m).is_err());
    }
}
