//! Cost-weighted metrics, stratified k-fold cross-validation and grid search.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{train_baseline, BaselineKind, BaselineModel};
use crate::data::fit_scaler;
use crate::error::{check_dim, input, Error, Result};
use crate::geometry::csv_err;
use crate::kernel::{predict_kernel, train_kernel};
use crate::linear::{train_linear, TrainTrace};
use crate::model::{KernelKind, KernelModel, KernelSpec, LabeledDataset, LinearModel, PriorityVector, TrainConfig};
use crate::sgd::derive_seed;

/// `k × k` counts, rows = true class, columns = predicted class.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    check_dim(truth.len(), predicted.len())?;
    let mut m = vec![vec![0; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return input(format!("class index out of range for {} classes", k));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// `Σ_j θ_j · (off-diagonal count in row j) / total`.
pub fn expected_risk(confusion: &[Vec<usize>], theta: &PriorityVector) -> Result<f64> {
    check_dim(theta.len(), confusion.len())?;
    let mut total = 0usize;
    let mut cost = 0.0;
    for (j, row) in confusion.iter().enumerate() {
        check_dim(confusion.len(), row.len())?;
        let n: usize = row.iter().sum();
        total += n;
        cost += theta.get(j) * (n - row[j]) as f64;
    }
    if total == 0 {
        return input("confusion matrix is empty");
    }
    Ok(cost / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: Vec<Vec<usize>>,
    pub expected_risk: f64,
    /// Recall per class; `None` for classes absent from the evaluation set.
    pub sensitivity: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<usize>>, theta: &PriorityVector) -> Result<Self> {
        let expected_risk = expected_risk(&confusion, theta)?;
        let sensitivity = confusion
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[j] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            confusion,
            expected_risk,
            sensitivity,
        })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], theta: &PriorityVector) -> Result<Self> {
        Self::from_confusion(confusion_matrix(truth, predicted, theta.len())?, theta)
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let right: usize = (0..self.confusion.len()).map(|j| self.confusion[j][j]).sum();
        right as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Apportioned,
    Baseline(BaselineKind),
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Apportioned,
        Method::Baseline(BaselineKind::Csova),
        Method::Baseline(BaselineKind::Cscs),
        Method::Baseline(BaselineKind::Csovo),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Apportioned => "apportioned",
            Method::Baseline(b) => b.name(),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apportioned" => Ok(Method::Apportioned),
            other => other.parse().map(Method::Baseline),
        }
    }
}

/// Regularization strength, either directly or through `λ = 1/(n·C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Lambda(f64),
    C(f64),
}

impl Regularization {
    pub fn lambda(self, n: usize) -> f64 {
        match self {
            Regularization::Lambda(l) => l,
            Regularization::C(c) => 1.0 / (n as f64 * c),
        }
    }
}

/// Number of SGD iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationBudget {
    Fixed(u64),
    /// Multiples of the training-set size.
    Epochs(u64),
}

impl IterationBudget {
    pub fn iterations(self, n: usize) -> u64 {
        match self {
            IterationBudget::Fixed(t) => t,
            IterationBudget::Epochs(e) => e * n as u64,
        }
    }
}

/// Everything needed to train one model on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    /// Only the apportioned method accepts non-linear kernels.
    pub kernel: KernelSpec,
    pub regularization: Regularization,
    pub budget: IterationBudget,
    pub seed: u64,
    /// Fit a standardizing scaler on the training data and store it in the model.
    pub standardize: bool,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            kernel: KernelSpec::linear(),
            regularization: Regularization::Lambda(1e-3),
            budget: IterationBudget::Epochs(50),
            seed: 0,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let (Method::Baseline(b), k) = (self.method, self.kernel.kind) {
            if k != KernelKind::Linear {
                return input(format!("baseline {} only supports the linear kernel", b));
            }
        }
        match self.regularization {
            Regularization::C(c) if !(c.is_finite() && c > 0.0) => input("C must be positive"),
            Regularization::Lambda(l) if !(l.is_finite() && l > 0.0) => input("lambda must be positive"),
            _ => Ok(()),
        }
    }

    pub fn train_config(&self, n: usize) -> TrainConfig {
        TrainConfig::new(self.regularization.lambda(n), self.budget.iterations(n).max(1), self.seed)
    }

    pub fn train(&self, data: &LabeledDataset, theta: &PriorityVector) -> Result<TrainedModel> {
        Ok(self.train_traced(data, theta, None)?.0)
    }

    /// As [`MethodSpec::train`], also sampling the objective every
    /// `record_every` iterations. Only the linear apportioned model yields a
    /// trace; the objective is measured on the (standardized) training data.
    pub fn train_traced(
        &self,
        data: &LabeledDataset,
        theta: &PriorityVector,
        record_every: Option<u64>,
    ) -> Result<(TrainedModel, Option<TrainTrace>)> {
        self.validate()?;
        let scaler = if self.standardize { Some(fit_scaler(data)?) } else { None };
        let scaled;
        let train_data = match &scaler {
            Some(s) => {
                scaled = s.apply_dataset(data)?;
                &scaled
            }
            None => data,
        };
        let mut cfg = self.train_config(data.n());
        Ok(match self.method {
            Method::Apportioned if self.kernel.kind == KernelKind::Linear => {
                cfg.record_objective_every = record_every;
                let (m, trace) = train_linear(train_data, theta, &cfg)?;
                (TrainedModel::Linear(m.with_scaler(scaler)?), Some(trace))
            }
            Method::Apportioned => (
                TrainedModel::Kernel(train_kernel(train_data, theta, &cfg, &self.kernel)?.with_scaler(scaler)?),
                None,
            ),
            Method::Baseline(kind) => (
                TrainedModel::Baseline(train_baseline(kind, train_data, theta, &cfg)?.with_scaler(scaler)?),
                None,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Linear(LinearModel),
    Kernel(KernelModel),
    Baseline(BaselineModel),
}

impl TrainedModel {
    pub fn theta(&self) -> &PriorityVector {
        match self {
            TrainedModel::Linear(m) => m.theta(),
            TrainedModel::Kernel(m) => m.theta(),
            TrainedModel::Baseline(m) => m.theta(),
        }
    }

    pub fn k(&self) -> usize {
        self.theta().len()
    }

    /// Input dimension, without the bias feature.
    pub fn d(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.d(),
            TrainedModel::Kernel(m) => m.d(),
            TrainedModel::Baseline(m) => m.d(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            TrainedModel::Linear(m) => m.predict(x),
            TrainedModel::Kernel(m) => predict_kernel(m, x),
            TrainedModel::Baseline(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        (0..data.n()).map(|i| self.predict(data.x(i))).collect()
    }

    pub fn evaluate(&self, data: &LabeledDataset, theta: &PriorityVector) -> Result<EvalReport> {
        EvalReport::from_predictions(data.labels(), &self.predict_all(data)?, theta)
    }
}

/// Fold number of every point. Each class is shuffled with a generator seeded
/// by `seed` and dealt round-robin, continuing where the previous class
/// stopped. Classes with fewer points than folds are pooled, shuffled and
/// dealt last.
pub fn stratified_folds(data: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return input("need at least 2 folds");
    }
    if data.n() < folds {
        return input(format!("{} points cannot fill {} folds", data.n(), folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; data.n()];
    let mut next = 0usize;
    let mut pooled = Vec::new();
    for j in 0..data.k() {
        let mut idx = data.indices_of(j);
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            log::warn!(
                "class {} has {} points for {} folds; assigning it without stratification",
                data.class_name(j),
                idx.len(),
                folds
            );
            pooled.extend(idx);
            continue;
        }
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    pooled.shuffle(&mut rng);
    for i in pooled {
        assignment[i] = next % folds;
        next += 1;
    }
    Ok(assignment)
}

/// Per-fold reports and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean_expected_risk: f64,
    /// Mean over the folds where the class was present.
    pub mean_sensitivity: Vec<Option<f64>>,
    /// Sum of the fold confusion matrices.
    pub pooled_confusion: Vec<Vec<usize>>,
}

impl CvReport {
    pub fn from_folds(folds: Vec<EvalReport>) -> Result<Self> {
        if folds.is_empty() {
            return input("no folds to average");
        }
        let k = folds[0].confusion.len();
        let mean_expected_risk = folds.iter().map(|f| f.expected_risk).sum::<f64>() / folds.len() as f64;
        let mean_sensitivity = (0..k)
            .map(|j| {
                let vals: Vec<f64> = folds.iter().filter_map(|f| f.sensitivity[j]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let mut pooled_confusion = vec![vec![0; k]; k];
        for f in &folds {
            for (r, row) in f.confusion.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    pooled_confusion[r][c] += v;
                }
            }
        }
        Ok(CvReport {
            folds,
            mean_expected_risk,
            mean_sensitivity,
            pooled_confusion,
        })
    }

    /// `fold,expected_risk,sensitivity_0,…` with a final `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.mean_sensitivity.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["fold".to_string(), "expected_risk".to_string()];
        header.extend((0..k).map(|j| format!("sensitivity_{}", j)));
        w.write_record(&header).map_err(csv_err)?;
        let opt = |v: &Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for (f, rep) in self.folds.iter().enumerate() {
            let mut rec = vec![f.to_string(), rep.expected_risk.to_string()];
            rec.extend(rep.sensitivity.iter().map(opt));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let mut rec = vec!["mean".to_string(), self.mean_expected_risk.to_string()];
        rec.extend(self.mean_sensitivity.iter().map(opt));
        w.write_record(&rec).map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6}  {:>14}  sensitivity", "fold", "expected_risk");
        let fmt_sens = |v: &[Option<f64>]| {
            v.iter()
                .map(|x| x.map_or_else(|| "-".to_string(), |y| format!("{:.3}", y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (f, rep) in self.folds.iter().enumerate() {
            let _ = writeln!(s, "{:>6}  {:>14.4}  {}", f, rep.expected_risk, fmt_sens(&rep.sensitivity));
        }
        let _ = writeln!(
            s,
            "{:>6}  {:>14.4}  {}",
            "mean",
            self.mean_expected_risk,
            fmt_sens(&self.mean_sensitivity)
        );
        s
    }
}

/// Stratified `folds`-fold cross-validation. Fold `f` trains with seed
/// `derive_seed(spec.seed, f)`.
pub fn kfold_cv(
    data: &LabeledDataset,
    theta: &PriorityVector,
    spec: &MethodSpec,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    spec.validate()?;
    check_dim(data.k(), theta.len())?;
    let assignment = stratified_folds(data, folds, seed)?;
    let reports = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == f).collect();
            let mut fold_spec = *spec;
            fold_spec.seed = derive_seed(spec.seed, f as u64);
            let model = fold_spec.train(&data.subset(&train)?, theta)?;
            model.evaluate(&data.subset(&test)?, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    CvReport::from_folds(reports)
}

/// `2^-5, 2^-3, …, 2^15`.
pub fn default_c_grid() -> Vec<f64> {
    (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// `2^-15, 2^-13, …, 2^3`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub c: f64,
    /// `None` for the linear kernel.
    pub gamma: Option<f64>,
    pub expected_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_c: f64,
    pub best_gamma: Option<f64>,
    pub best_report: CvReport,
    /// Every cell, sorted by `(C, gamma)`.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    /// `spec` with the winning `C` (and gamma, for non-linear kernels).
    pub fn apply(&self, spec: &MethodSpec) -> MethodSpec {
        let mut s = *spec;
        s.regularization = Regularization::C(self.best_c);
        if let Some(g) = self.best_gamma {
            s.kernel.gamma = g;
        }
        s
    }
}

/// Exhaustive search over `C` (and gamma when the kernel is not linear)
/// scoring each cell by the mean expected risk of `folds`-fold CV with the
/// same fold assignment. Ties go to the smaller `C`, then the smaller gamma.
pub fn grid_search(
    data: &LabeledDataset,
    theta: &PriorityVector,
    spec: &MethodSpec,
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if c_grid.is_empty() {
        return input("C grid is empty");
    }
    let linear = spec.kernel.kind == KernelKind::Linear;
    if !linear && gamma_grid.is_empty() {
        return input("gamma grid is empty");
    }
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let gammas: Vec<Option<f64>> = if linear {
        vec![None]
    } else {
        let mut g = gamma_grid.to_vec();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g.into_iter().map(Some).collect()
    };
    let cells: Vec<(f64, Option<f64>)> = cs.iter().flat_map(|&c| gammas.iter().map(move |&g| (c, g))).collect();

    let reports = cells
        .par_iter()
        .map(|&(c, g)| {
            let mut s = *spec;
            s.regularization = Regularization::C(c);
            if let Some(g) = g {
                s.kernel.gamma = g;
            }
            kfold_cv(data, theta, &s, folds, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.mean_expected_risk < reports[best].mean_expected_risk {
            best = i;
        }
    }
    let grid = cells
        .iter()
        .zip(&reports)
        .map(|(&(c, gamma), r)| GridCell {
            c,
            gamma,
            expected_risk: r.mean_expected_risk,
        })
        .collect();
    Ok(GridResult {
        best_c: cells[best].0,
        best_gamma: cells[best].1,
        best_report: reports[best].clone(),
        cells: grid,
    })
}
