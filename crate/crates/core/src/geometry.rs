//! Weighted bisectors, class margins and the pairwise norm inequality.
//!
//! Hyperplanes are augmented vectors `[n ; c]` describing `{x : n·x + c = 0}`.
//! "Augmented" quantities divide by the full norm `‖[n ; c]‖`; "feature"
//! quantities divide by `‖n‖` and are ordinary Euclidean distances.

use std::io::Write;

use crate::error::{check_dim, input, Error, Result};
use crate::model::{augment, dot, LabeledDataset, LinearModel, Matrix, Scaler};

/// Decision boundary between two classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Bisector {
    /// Augmented normal, positive on the side of the first class.
    Hyperplane(Vec<f64>),
    /// Both scaled rows coincide; no boundary exists.
    Degenerate,
}

impl Bisector {
    pub fn normal(&self) -> Option<&[f64]> {
        match self {
            Bisector::Hyperplane(n) => Some(n),
            Bisector::Degenerate => None,
        }
    }
}

fn check_pair(k: usize, i: usize, j: usize) -> Result<()> {
    if i >= k || j >= k {
        return input(format!("class pair ({}, {}) out of range for {} classes", i, j, k));
    }
    if i == j {
        return input("bisector needs two distinct classes");
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `w̄_i − w̄_j` in the model's internal (possibly standardized) coordinates.
pub fn bisector(model: &LinearModel, i: usize, j: usize) -> Result<Bisector> {
    check_pair(model.k(), i, j)?;
    let ti = model.theta().get(i);
    let tj = model.theta().get(j);
    let n: Vec<f64> = model
        .weights()
        .row(i)
        .iter()
        .zip(model.weights().row(j))
        .map(|(a, b)| a / ti - b / tj)
        .collect();
    if n.iter().all(|v| *v == 0.0) {
        Ok(Bisector::Degenerate)
    } else {
        Ok(Bisector::Hyperplane(n))
    }
}

/// `(w_j·x̃ − θ_j) / (w_i·x̃ − θ_i)`, which equals `θ_j/θ_i` on the bisector.
pub fn scaled_distance_ratio(model: &LinearModel, i: usize, j: usize, x: &[f64]) -> Result<f64> {
    check_pair(model.k(), i, j)?;
    let s = model.raw_scores(x)?;
    Ok((s[j] - model.theta().get(j)) / (s[i] - model.theta().get(i)))
}

/// Orthogonal projection of `x` onto the hyperplane `normal` (augmented).
pub fn project_to_hyperplane(normal: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dim(normal.len(), x.len() + 1)?;
    let feat = &normal[..x.len()];
    let nn = dot(feat, feat);
    if nn == 0.0 {
        return Err(Error::Degenerate("hyperplane has a zero feature normal".into()));
    }
    let r = dot(normal, &augment(x)) / nn;
    Ok(x.iter().zip(feat).map(|(xv, nv)| xv - r * nv).collect())
}

/// Expresses an augmented normal learned on standardized inputs in the
/// original input coordinates.
pub fn unscale_normal(normal: &[f64], scaler: Option<&Scaler>) -> Vec<f64> {
    let Some(s) = scaler else {
        return normal.to_vec();
    };
    let d = s.dim();
    let mut out = Vec::with_capacity(d + 1);
    let mut offset = normal[d];
    for f in 0..d {
        let nf = normal[f] / s.scale[f];
        offset -= nf * s.mean[f];
        out.push(nf);
    }
    out.push(offset);
    out
}

fn class_min_projection(normal: &[f64], data: &LabeledDataset, class: usize) -> Result<f64> {
    let idx = data.indices_of(class);
    if idx.is_empty() {
        return input(format!("no points of class {}", class));
    }
    Ok(idx
        .iter()
        .map(|&p| dot(normal, &augment(data.x(p))))
        .fold(f64::INFINITY, f64::min))
}

fn degenerate(i: usize, j: usize) -> Error {
    Error::Degenerate(format!("scaled rows of classes {} and {} coincide", i, j))
}

/// `γ_ij = min_{x ∈ class i} w̄^{ij}·x̃ / ‖w̄^{ij}‖`, augmented norm.
pub fn margin_gamma(model: &LinearModel, data: &LabeledDataset, i: usize, j: usize) -> Result<f64> {
    let (n, data) = model_space_bisector(model, data, i, j)?;
    Ok(class_min_projection(&n, &data, i)? / norm(&n))
}

/// As [`margin_gamma`] but divided by the feature part of the normal, i.e. the
/// signed Euclidean distance (in the model's input space) of the closest
/// class-`i` point.
pub fn margin_gamma_feature(model: &LinearModel, data: &LabeledDataset, i: usize, j: usize) -> Result<f64> {
    let (n, data) = model_space_bisector(model, data, i, j)?;
    let fnorm = norm(&n[..n.len() - 1]);
    if fnorm == 0.0 {
        return Err(degenerate(i, j));
    }
    Ok(class_min_projection(&n, &data, i)? / fnorm)
}

fn model_space_bisector(
    model: &LinearModel,
    data: &LabeledDataset,
    i: usize,
    j: usize,
) -> Result<(Vec<f64>, LabeledDataset)> {
    check_dim(model.d(), data.d())?;
    check_dim(model.k(), data.k())?;
    let n = bisector(model, i, j)?.normal().ok_or_else(|| degenerate(i, j))?.to_vec();
    let data = match model.scaler() {
        Some(s) => s.apply_dataset(data)?,
        None => data.clone(),
    };
    Ok((n, data))
}

/// One ordered pair of a [`MarginReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairMargin {
    pub i: usize,
    pub j: usize,
    /// Augmented-norm margin; `None` when class `i` has no points or the
    /// bisector is degenerate.
    pub gamma: Option<f64>,
    /// Feature-space margin (Euclidean distance).
    pub gamma_feature: Option<f64>,
    /// `(1 + η_ij) / ‖w̄^{ij}‖`.
    pub bound: Option<f64>,
    /// `θ_i / θ_j`.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub pairwise: Vec<PairMargin>,
}

impl MarginReport {
    /// Writes `pair,gamma,bound,eta,gamma_feature`; missing values are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        w.write_record(["pair", "gamma", "bound", "eta", "gamma_feature"])
            .map_err(csv_err)?;
        for p in &self.pairwise {
            w.write_record([
                format!("{}-{}", p.i, p.j),
                opt(p.gamma),
                opt(p.bound),
                p.eta.to_string(),
                opt(p.gamma_feature),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{:?}", other)),
    }
}

/// Margins and bounds for every ordered pair `i ≠ j`.
pub fn margin_report(model: &LinearModel, data: &LabeledDataset) -> Result<MarginReport> {
    check_dim(model.d(), data.d())?;
    check_dim(model.k(), data.k())?;
    let k = model.k();
    let mut pairwise = Vec::with_capacity(k * (k - 1));
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let eta = model.theta().get(i) / model.theta().get(j);
            let bis = bisector(model, i, j)?;
            let bound = bis.normal().map(|n| (1.0 + eta) / norm(n));
            let has_points = data.class_counts()[i] > 0;
            let usable = has_points && bis.normal().is_some();
            pairwise.push(PairMargin {
                i,
                j,
                gamma: if usable { Some(margin_gamma(model, data, i, j)?) } else { None },
                gamma_feature: if usable {
                    margin_gamma_feature(model, data, i, j).ok()
                } else {
                    None
                },
                bound,
                eta,
            });
        }
    }
    Ok(MarginReport { pairwise })
}

/// Outcome of the pairwise norm inequality `Σ_{r<s} ‖w_r − w_s‖² ≤ k‖W‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn pairwise_norm_check(w: &Matrix) -> NormCheck {
    let k = w.rows();
    let mut lhs = 0.0;
    for r in 0..k {
        for s in r + 1..k {
            lhs += w.row(r).iter().zip(w.row(s)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    let rhs = k as f64 * w.frobenius_sq();
    NormCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    }
}

/// Any model whose decision between two classes is a hyperplane.
pub trait PairwiseBoundary {
    fn num_classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Augmented normal in original input coordinates, positive toward `i`.
    fn pair_normal(&self, i: usize, j: usize) -> Result<Bisector>;
}

impl PairwiseBoundary for LinearModel {
    fn num_classes(&self) -> usize {
        self.k()
    }

    fn input_dim(&self) -> usize {
        self.d()
    }

    fn pair_normal(&self, i: usize, j: usize) -> Result<Bisector> {
        Ok(match bisector(self, i, j)? {
            Bisector::Hyperplane(n) => Bisector::Hyperplane(unscale_normal(&n, self.scaler())),
            Bisector::Degenerate => Bisector::Degenerate,
        })
    }
}

/// Euclidean distance from the `(i, j)` boundary to the nearest class-`i`
/// point divided by the distance to the nearest class-`j` point.
pub fn pair_distance_ratio(
    model: &dyn PairwiseBoundary,
    data: &LabeledDataset,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_dim(model.input_dim(), data.d())?;
    let n = model.pair_normal(i, j)?;
    let n = n.normal().ok_or_else(|| degenerate(i, j))?;
    let fnorm = norm(&n[..n.len() - 1]);
    if fnorm == 0.0 {
        return Err(degenerate(i, j));
    }
    let nearest = |c: usize| -> Result<f64> {
        let idx = data.indices_of(c);
        if idx.is_empty() {
            return input(format!("no points of class {}", c));
        }
        Ok(idx
            .iter()
            .map(|&p| dot(n, &augment(data.x(p))).abs() / fnorm)
            .fold(f64::INFINITY, f64::min))
    };
    Ok(nearest(i)? / nearest(j)?)
}
