//! Shared domain types: priority vectors, datasets, trained models.
//!
//! Every model works on *augmented* inputs: a constant `1.0` is appended to
//! each feature vector so that the bias of class `j` is the last entry of
//! row `j` and is regularized together with the rest of the row.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, input, Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return input(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return input(format!("row {} has {} columns, expected {}", i, r.len(), cols));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Appends the constant bias feature.
pub fn augment(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(1.0);
    v
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

/// Per-class misclassification costs, all finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector(Vec<f64>);

impl PriorityVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.len() < 2 {
            return input(format!(
                "priority vector needs at least 2 entries, got {}",
                costs.len()
            ));
        }
        if costs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return input("priority entries must be positive and finite");
        }
        Ok(PriorityVector(costs))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    #[inline]
    pub fn costs(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for PriorityVector {
    type Err = Error;

    /// Parses a comma-separated list such as `10,10,1,1`.
    fn from_str(s: &str) -> Result<Self> {
        let costs = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("bad priority entry '{}'", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        PriorityVector::new(costs)
    }
}

impl fmt::Display for PriorityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Feature matrix plus dense class labels `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    k: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.rows() == 0 {
            return input("dataset must contain at least one point");
        }
        if features.cols() == 0 {
            return input("dataset must have at least one feature");
        }
        check_dim(features.rows(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return input(format!("label {} out of range for {} classes", bad, k));
        }
        if !features.is_finite() {
            return input("features must be finite");
        }
        Ok(LabeledDataset {
            features,
            labels,
            k,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        check_dim(self.k, names.len())?;
        self.class_names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    #[inline]
    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Display name of class `j`, falling back to its index.
    pub fn class_name(&self, j: usize) -> String {
        self.class_names
            .as_ref()
            .map_or_else(|| j.to_string(), |names| names[j].clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Indices of the points labelled `j`.
    pub fn indices_of(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == j).collect()
    }

    /// Dataset restricted to `indices`, keeping `k` and class names.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.d();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        let mut out = LabeledDataset::new(Matrix::from_vec(indices.len(), d, data)?, labels, self.k)?;
        out.class_names = self.class_names.clone();
        Ok(out)
    }

    /// Feature matrix with the bias column appended.
    pub fn augmented(&self) -> Matrix {
        let d = self.d();
        let mut data = Vec::with_capacity(self.n() * (d + 1));
        for row in self.features.iter_rows() {
            data.extend_from_slice(row);
            data.push(1.0);
        }
        Matrix {
            rows: self.n(),
            cols: d + 1,
            data,
        }
    }

    pub(crate) fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(self.n() * self.d());
        for row in self.features.iter_rows() {
            data.extend(f(row));
        }
        let mut out = LabeledDataset::new(
            Matrix::from_vec(self.n(), self.d(), data)?,
            self.labels.clone(),
            self.k,
        )?;
        out.class_names = self.class_names.clone();
        Ok(out)
    }
}

/// Per-feature affine transform `(x - mean) / scale` recorded at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), scale.len())?;
        if scale.iter().any(|s| !s.is_finite() || *s <= 0.0) || mean.iter().any(|m| !m.is_finite()) {
            return input("scaler entries must be finite with positive scale");
        }
        Ok(Scaler { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        check_dim(self.dim(), data.d())?;
        data.map_features(|x| self.apply(x))
    }
}

/// Primal model: one augmented row `[w_j ; b_j]` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Matrix,
    theta: PriorityVector,
    scaler: Option<Scaler>,
}

impl LinearModel {
    pub fn new(weights: Matrix, theta: PriorityVector) -> Result<Self> {
        check_dim(theta.len(), weights.rows())?;
        if weights.cols() < 2 {
            return input("weight rows need at least one feature plus the bias column");
        }
        if !weights.is_finite() {
            return input("weights must be finite");
        }
        Ok(LinearModel {
            weights,
            theta,
            scaler: None,
        })
    }

    pub fn with_scaler(mut self, scaler: Option<Scaler>) -> Result<Self> {
        if let Some(s) = &scaler {
            check_dim(self.d(), s.dim())?;
        }
        self.scaler = scaler;
        Ok(self)
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn theta(&self) -> &PriorityVector {
        &self.theta
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    /// Input dimension before augmentation.
    pub fn d(&self) -> usize {
        self.weights.cols() - 1
    }

    /// Rows divided by their class cost: `w̄_j = w_j / θ_j`.
    pub fn scaled_rows(&self) -> Matrix {
        let mut out = self.weights.clone();
        for j in 0..out.rows() {
            let c = self.theta.get(j);
            out.row_mut(j).iter_mut().for_each(|v| *v /= c);
        }
        out
    }

    /// Scaler applied (if any) and bias feature appended.
    pub fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d(), x.len())?;
        Ok(match &self.scaler {
            Some(s) => augment(&s.apply(x)),
            None => augment(x),
        })
    }

    /// Unscaled scores `w_j · x̃`.
    pub fn raw_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xa = self.prepare(x)?;
        Ok(self.weights.iter_rows().map(|w| dot(w, &xa)).collect())
    }

    /// Decision scores `w̄_j · x̃`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.raw_scores(x)?;
        for (j, v) in s.iter_mut().enumerate() {
            *v /= self.theta.get(j);
        }
        Ok(s)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
    Polynomial,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Polynomial => "polynomial",
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            "polynomial" | "poly" => Ok(KernelKind::Polynomial),
            other => input(format!("unknown kernel '{}'", other)),
        }
    }
}

/// Kernel choice and its parameters. `gamma` is ignored by the linear kernel;
/// `degree` and `coef0` are only read by the polynomial kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            gamma,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn polynomial(gamma: f64, degree: u32, coef0: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Polynomial,
            gamma,
            degree,
            coef0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Linear => Ok(()),
            _ if !(self.gamma.is_finite() && self.gamma > 0.0) => input("kernel gamma must be positive"),
            KernelKind::Polynomial if self.degree < 1 => input("polynomial degree must be at least 1"),
            KernelKind::Polynomial if !self.coef0.is_finite() => input("polynomial coef0 must be finite"),
            _ => Ok(()),
        }
    }
}

/// Dual model: signed update counts per (training point, class).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub(crate) alpha_bar: Matrix,
    pub(crate) support_points: Matrix,
    pub(crate) lambda: f64,
    pub(crate) iterations: u64,
    pub(crate) theta: PriorityVector,
    pub(crate) kernel: KernelSpec,
    pub(crate) scaler: Option<Scaler>,
}

impl KernelModel {
    /// `support_points` are augmented (bias column included).
    pub fn new(
        alpha_bar: Matrix,
        support_points: Matrix,
        lambda: f64,
        iterations: u64,
        theta: PriorityVector,
        kernel: KernelSpec,
    ) -> Result<Self> {
        check_dim(alpha_bar.rows(), support_points.rows())?;
        check_dim(theta.len(), alpha_bar.cols())?;
        if support_points.cols() < 2 {
            return input("support points need at least one feature plus the bias column");
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return input("lambda must be positive");
        }
        if !alpha_bar.is_finite() || !support_points.is_finite() {
            return input("kernel model entries must be finite");
        }
        kernel.validate()?;
        Ok(KernelModel {
            alpha_bar,
            support_points,
            lambda,
            iterations,
            theta,
            kernel,
            scaler: None,
        })
    }

    pub fn with_scaler(mut self, scaler: Option<Scaler>) -> Result<Self> {
        if let Some(s) = &scaler {
            check_dim(self.d(), s.dim())?;
        }
        self.scaler = scaler;
        Ok(self)
    }

    pub fn alpha_bar(&self) -> &Matrix {
        &self.alpha_bar
    }

    pub fn support_points(&self) -> &Matrix {
        &self.support_points
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn theta(&self) -> &PriorityVector {
        &self.theta
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn k(&self) -> usize {
        self.alpha_bar.cols()
    }

    pub fn n(&self) -> usize {
        self.alpha_bar.rows()
    }

    pub fn d(&self) -> usize {
        self.support_points.cols() - 1
    }

    pub(crate) fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d(), x.len())?;
        Ok(match &self.scaler {
            Some(s) => augment(&s.apply(x)),
            None => augment(x),
        })
    }
}

/// SGD settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub iterations: u64,
    pub seed: u64,
    pub record_objective_every: Option<u64>,
}

impl TrainConfig {
    pub fn new(lambda: f64, iterations: u64, seed: u64) -> Self {
        TrainConfig {
            lambda,
            iterations,
            seed,
            record_objective_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return input("lambda must be positive");
        }
        if self.iterations == 0 {
            return input("iterations must be at least 1");
        }
        if self.record_objective_every == Some(0) {
            return input("objective recording interval must be positive");
        }
        Ok(())
    }
}
