//! Cost-weighted comparators: one-vs-all (CSOVA), Crammer–Singer (CSCS) and
//! one-vs-one (CSOVO).
//!
//! Every example's hinge term is multiplied by the cost of its true class,
//! and all three reuse [`pegasos_step`] with the same augmentation and
//! seeding as the apportioned solver. Independent subproblems draw their
//! index stream from [`derive_seed`]`(cfg.seed, subproblem)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_dim, input, Error, Result};
use crate::geometry::{unscale_normal, Bisector, PairwiseBoundary};
use crate::linear::validate_training_input;
use crate::model::{argmax, augment, dot, LabeledDataset, Matrix, PriorityVector, Scaler, TrainConfig};
use crate::sgd::{derive_seed, pegasos_step, IndexSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Csova,
    Cscs,
    Csovo,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Csova => "csova",
            BaselineKind::Cscs => "cscs",
            BaselineKind::Csovo => "csovo",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csova" => Ok(BaselineKind::Csova),
            "cscs" => Ok(BaselineKind::Cscs),
            "csovo" => Ok(BaselineKind::Csovo),
            other => input(format!("unknown baseline '{}'", other)),
        }
    }
}

/// How a one-vs-one pair takes part in the vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairVote {
    /// Decided by the sign of the pair's row.
    Trained,
    /// Only one class of the pair occurs in training; always votes for it.
    Fixed(usize),
    /// Neither class occurs in training.
    Abstain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub(crate) kind: BaselineKind,
    pub(crate) weights: Matrix,
    pub(crate) theta: PriorityVector,
    pub(crate) pair_votes: Vec<PairVote>,
    pub(crate) scaler: Option<Scaler>,
}

/// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn class_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Row of pair `(i, j)` (`i < j`) in a one-vs-one weight matrix.
pub fn pair_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

impl BaselineModel {
    pub fn new(
        kind: BaselineKind,
        weights: Matrix,
        theta: PriorityVector,
        pair_votes: Vec<PairVote>,
    ) -> Result<Self> {
        let k = theta.len();
        let rows = match kind {
            BaselineKind::Csovo => k * (k - 1) / 2,
            _ => k,
        };
        check_dim(rows, weights.rows())?;
        if weights.cols() < 2 {
            return input("weight rows need at least one feature plus the bias column");
        }
        if !weights.is_finite() {
            return input("weights must be finite");
        }
        match kind {
            BaselineKind::Csovo => check_dim(rows, pair_votes.len())?,
            _ if !pair_votes.is_empty() => return input("pair votes only apply to csovo"),
            _ => {}
        }
        Ok(BaselineModel {
            kind,
            weights,
            theta,
            pair_votes,
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

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn theta(&self) -> &PriorityVector {
        &self.theta
    }

    pub fn pair_votes(&self) -> &[PairVote] {
        &self.pair_votes
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn d(&self) -> usize {
        self.weights.cols() - 1
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d(), x.len())?;
        Ok(match &self.scaler {
            Some(s) => augment(&s.apply(x)),
            None => augment(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let xa = self.prepare(x)?;
        Ok(match self.kind {
            BaselineKind::Csova | BaselineKind::Cscs => {
                let s: Vec<f64> = self.weights.iter_rows().map(|w| dot(w, &xa)).collect();
                argmax(&s)
            }
            BaselineKind::Csovo => self.vote(&xa),
        })
    }

    fn vote(&self, xa: &[f64]) -> usize {
        let k = self.k();
        let mut votes = vec![0usize; k];
        let mut total = vec![0.0; k];
        for (p, (i, j)) in class_pairs(k).into_iter().enumerate() {
            match self.pair_votes[p] {
                PairVote::Trained => {
                    let s = dot(self.weights.row(p), xa);
                    votes[if s >= 0.0 { i } else { j }] += 1;
                    total[i] += s;
                    total[j] -= s;
                }
                PairVote::Fixed(c) => votes[c] += 1,
                PairVote::Abstain => {}
            }
        }
        let mut best = 0;
        for c in 1..k {
            if votes[c] > votes[best] || (votes[c] == votes[best] && total[c] > total[best]) {
                best = c;
            }
        }
        best
    }
}

impl PairwiseBoundary for BaselineModel {
    fn num_classes(&self) -> usize {
        self.k()
    }

    fn input_dim(&self) -> usize {
        self.d()
    }

    fn pair_normal(&self, i: usize, j: usize) -> Result<Bisector> {
        let k = self.k();
        if i >= k || j >= k || i == j {
            return input(format!("invalid class pair ({}, {})", i, j));
        }
        let n: Vec<f64> = match self.kind {
            BaselineKind::Csova | BaselineKind::Cscs => self
                .weights
                .row(i)
                .iter()
                .zip(self.weights.row(j))
                .map(|(a, b)| a - b)
                .collect(),
            BaselineKind::Csovo => {
                let p = pair_index(k, i.min(j), i.max(j));
                if self.pair_votes[p] != PairVote::Trained {
                    return Ok(Bisector::Degenerate);
                }
                let sign = if i < j { 1.0 } else { -1.0 };
                self.weights.row(p).iter().map(|v| sign * v).collect()
            }
        };
        if n.iter().all(|v| *v == 0.0) {
            return Ok(Bisector::Degenerate);
        }
        Ok(Bisector::Hyperplane(unscale_normal(&n, self.scaler())))
    }
}

/// Pegasos on `Σ θ_{y_i}·max(0, 1 − s_i w·x̃_i)` over the examples `members`,
/// where `s_i = +1` for class `positive` and `−1` otherwise.
fn weighted_binary(
    xa: &Matrix,
    labels: &[usize],
    members: &[usize],
    positive: usize,
    theta: &PriorityVector,
    lambda: f64,
    iterations: u64,
    seed: u64,
) -> Vec<f64> {
    let mut w = Matrix::zeros(1, xa.cols());
    let mut sampler = IndexSampler::new(members.len(), seed);
    let mut coef = [0.0];
    for t in 1..=iterations {
        let i = members[sampler.next_index()];
        let x = xa.row(i);
        let s = if labels[i] == positive { 1.0 } else { -1.0 };
        coef[0] = if 1.0 - s * dot(w.row(0), x) > 0.0 {
            theta.get(labels[i]) * s
        } else {
            0.0
        };
        pegasos_step(&mut w, x, &coef, lambda, t);
    }
    w.row(0).to_vec()
}

/// Cost-weighted binary hinge SVM separating `positive` from every other
/// class, seeded directly by `cfg.seed`.
pub fn train_weighted_binary(
    data: &LabeledDataset,
    positive: usize,
    theta: &PriorityVector,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    validate_training_input(data, theta, cfg)?;
    if positive >= data.k() {
        return input(format!("class {} out of range", positive));
    }
    let members: Vec<usize> = (0..data.n()).collect();
    Ok(weighted_binary(
        &data.augmented(),
        data.labels(),
        &members,
        positive,
        theta,
        cfg.lambda,
        cfg.iterations,
        cfg.seed,
    ))
}

pub fn train_csova(data: &LabeledDataset, theta: &PriorityVector, cfg: &TrainConfig) -> Result<BaselineModel> {
    validate_training_input(data, theta, cfg)?;
    let xa = data.augmented();
    let members: Vec<usize> = (0..data.n()).collect();
    let rows: Vec<Vec<f64>> = (0..data.k())
        .into_par_iter()
        .map(|j| {
            weighted_binary(
                &xa,
                data.labels(),
                &members,
                j,
                theta,
                cfg.lambda,
                cfg.iterations,
                derive_seed(cfg.seed, j as u64),
            )
        })
        .collect();
    BaselineModel::new(BaselineKind::Csova, Matrix::from_rows(&rows)?, theta.clone(), Vec::new())
}

pub fn train_cscs(data: &LabeledDataset, theta: &PriorityVector, cfg: &TrainConfig) -> Result<BaselineModel> {
    validate_training_input(data, theta, cfg)?;
    let xa = data.augmented();
    let k = data.k();
    let mut w = Matrix::zeros(k, xa.cols());
    let mut coef = vec![0.0; k];
    let mut sampler = IndexSampler::new(data.n(), cfg.seed);
    let mut scores = vec![0.0; k];
    for t in 1..=cfg.iterations {
        let i = sampler.next_index();
        let x = xa.row(i);
        let y = data.y(i);
        for (s, row) in scores.iter_mut().zip(w.iter_rows()) {
            *s = dot(row, x);
        }
        let mut rival = if y == 0 { 1 } else { 0 };
        for j in 0..k {
            if j != y && scores[j] > scores[rival] {
                rival = j;
            }
        }
        coef.iter_mut().for_each(|c| *c = 0.0);
        if 1.0 - (scores[y] - scores[rival]) > 0.0 {
            coef[y] = theta.get(y);
            coef[rival] = -theta.get(y);
        }
        pegasos_step(&mut w, x, &coef, cfg.lambda, t);
    }
    BaselineModel::new(BaselineKind::Cscs, w, theta.clone(), Vec::new())
}

pub fn train_csovo(data: &LabeledDataset, theta: &PriorityVector, cfg: &TrainConfig) -> Result<BaselineModel> {
    validate_training_input(data, theta, cfg)?;
    let xa = data.augmented();
    let k = data.k();
    let pairs = class_pairs(k);
    let fitted: Vec<(Vec<f64>, PairVote)> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let members: Vec<usize> = (0..data.n()).filter(|&m| data.y(m) == i || data.y(m) == j).collect();
            let has_i = members.iter().any(|&m| data.y(m) == i);
            let has_j = members.iter().any(|&m| data.y(m) == j);
            match (has_i, has_j) {
                (true, true) => (
                    weighted_binary(
                        &xa,
                        data.labels(),
                        &members,
                        i,
                        theta,
                        cfg.lambda,
                        cfg.iterations,
                        derive_seed(cfg.seed, p as u64),
                    ),
                    PairVote::Trained,
                ),
                (true, false) => (vec![0.0; xa.cols()], PairVote::Fixed(i)),
                (false, true) => (vec![0.0; xa.cols()], PairVote::Fixed(j)),
                (false, false) => (vec![0.0; xa.cols()], PairVote::Abstain),
            }
        })
        .collect();
    for (p, (_, v)) in fitted.iter().enumerate() {
        if *v != PairVote::Trained {
            log::warn!("class pair {:?} lacks training points on one side; using {:?}", pairs[p], v);
        }
    }
    let (rows, votes): (Vec<Vec<f64>>, Vec<PairVote>) = fitted.into_iter().unzip();
    BaselineModel::new(BaselineKind::Csovo, Matrix::from_rows(&rows)?, theta.clone(), votes)
}

pub fn train_baseline(
    kind: BaselineKind,
    data: &LabeledDataset,
    theta: &PriorityVector,
    cfg: &TrainConfig,
) -> Result<BaselineModel> {
    match kind {
        BaselineKind::Csova => train_csova(data, theta, cfg),
        BaselineKind::Cscs => train_cscs(data, theta, cfg),
        BaselineKind::Csovo => train_csovo(data, theta, cfg),
    }
}
