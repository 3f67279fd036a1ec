//! Pointwise population minimizer of the surrogate, for checking the
//! cost-sensitive consistency claim numerically.
//!
//! At a fixed input with class posteriors `P`, the expected surrogate is
//! `Σ_l P_l Σ_j [θ_l − δ̄_{l,j} f_j]_+`, minimized over scores `f` with
//! `Σ_j f_j = 0`. The claimed minimizer puts `θ_ŷ` on `ŷ = argmax_j θ_j P_j`
//! and `−θ_ŷ/(k−1)` everywhere else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{check_dim, input, Result};
use crate::loss::signed_delta;
use crate::model::{argmax, PriorityVector};

/// Largest class count accepted by [`minimize_expected_surrogate`].
pub const MAX_CLASSES: usize = 6;

const SUBGRADIENT_ITERS: u64 = 20_000;
const FINAL_STEP: f64 = 1e-4;

fn validate(p: &[f64], theta: &PriorityVector) -> Result<()> {
    check_dim(theta.len(), p.len())?;
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return input("probabilities must be finite and nonnegative");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return input(format!("probabilities sum to {}, expected 1", s));
    }
    Ok(())
}

fn objective(f: &[f64], p: &[f64], theta: &PriorityVector) -> f64 {
    let mut total = 0.0;
    for (l, &pl) in p.iter().enumerate() {
        if pl == 0.0 {
            continue;
        }
        let tl = theta.get(l);
        let inner: f64 = f
            .iter()
            .enumerate()
            .map(|(j, &fj)| (tl - signed_delta(l, j) * fj).max(0.0))
            .sum();
        total += pl * inner;
    }
    total
}

/// `Σ_l P_l Σ_j max(0, θ_l − δ̄_{l,j} f_j)`.
pub fn expected_surrogate(f: &[f64], p: &[f64], theta: &PriorityVector) -> Result<f64> {
    validate(p, theta)?;
    check_dim(theta.len(), f.len())?;
    Ok(objective(f, p, theta))
}

/// The claimed minimizer: `θ_ŷ` at `ŷ = argmax_j θ_j P_j` (lowest index on
/// ties), `−θ_ŷ/(k−1)` elsewhere.
pub fn closed_form(p: &[f64], theta: &PriorityVector) -> Result<Vec<f64>> {
    validate(p, theta)?;
    let yhat = weighted_argmax(p, theta);
    let t = theta.get(yhat);
    let k = theta.len();
    Ok((0..k).map(|j| if j == yhat { t } else { -t / (k - 1) as f64 }).collect())
}

fn weighted_argmax(p: &[f64], theta: &PriorityVector) -> usize {
    let w: Vec<f64> = p.iter().enumerate().map(|(j, v)| v * theta.get(j)).collect();
    argmax(&w)
}

/// `argmax_j θ_j P_j` if it is attained by exactly one class.
pub fn unique_weighted_argmax(p: &[f64], theta: &PriorityVector) -> Option<usize> {
    let w: Vec<f64> = p.iter().enumerate().map(|(j, v)| v * theta.get(j)).collect();
    let best = argmax(&w);
    (w.iter().filter(|&&v| v == w[best]).count() == 1).then_some(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherSolution {
    pub f: Vec<f64>,
    pub value: f64,
    /// `argmax_j θ_j P_j` is shared by several classes.
    pub tie: bool,
}

/// Projected subgradient descent from `f = 0` with steps `c/√t`, then
/// pairwise transfers `f_a += h, f_b −= h` with `h` shrinking to `1e-4`.
pub fn minimize_expected_surrogate(p: &[f64], theta: &PriorityVector) -> Result<FisherSolution> {
    validate(p, theta)?;
    let k = theta.len();
    if k > MAX_CLASSES {
        return input(format!("at most {} classes supported, got {}", MAX_CLASSES, k));
    }
    let scale = theta.costs().iter().cloned().fold(0.0, f64::max);

    let mut f = vec![0.0; k];
    let mut best = f.clone();
    let mut best_val = objective(&f, p, theta);
    let mut g = vec![0.0; k];
    for t in 1..=SUBGRADIENT_ITERS {
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = 0.0;
            for (l, &pl) in p.iter().enumerate() {
                let d = signed_delta(l, j);
                if theta.get(l) - d * f[j] > 0.0 {
                    *gj -= pl * d;
                }
            }
        }
        let mean = g.iter().sum::<f64>() / k as f64;
        let step = scale / (t as f64).sqrt();
        for (fj, gj) in f.iter_mut().zip(&g) {
            *fj -= step * (gj - mean);
        }
        let v = objective(&f, p, theta);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&f);
        }
    }

    let mut h = scale;
    while h >= FINAL_STEP * 0.999 {
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..k {
                for b in 0..k {
                    if a == b {
                        continue;
                    }
                    best[a] += h;
                    best[b] -= h;
                    let v = objective(&best, p, theta);
                    if v < best_val - 1e-15 {
                        best_val = v;
                        improved = true;
                    } else {
                        best[a] -= h;
                        best[b] += h;
                    }
                }
            }
        }
        h /= 2.0;
    }

    // Remove accumulated drift from the zero-sum constraint.
    let mean = best.iter().sum::<f64>() / k as f64;
    best.iter_mut().for_each(|v| *v -= mean);
    snap_to_breakpoints(&mut best, p, theta);
    let value = objective(&best, p, theta);
    Ok(FisherSolution {
        f: best,
        value,
        tie: unique_weighted_argmax(p, theta).is_none(),
    })
}

/// Kinks of coordinate `j`: `θ_j` and `−θ_l` for `l ≠ j`.
fn breakpoints(theta: &PriorityVector, j: usize) -> impl Iterator<Item = f64> + '_ {
    (0..theta.len()).map(move |l| if l == j { theta.get(j) } else { -theta.get(l) })
}

/// Moves coordinates within `10·FINAL_STEP` of a kink onto it, letting another
/// coordinate absorb the change, while the objective does not increase.
fn snap_to_breakpoints(f: &mut [f64], p: &[f64], theta: &PriorityVector) {
    let k = f.len();
    let mut val = objective(f, p, theta);
    let mut changed = true;
    let mut passes = 0;
    while changed && passes < 100 {
        changed = false;
        passes += 1;
        for a in 0..k {
            for bp in breakpoints(theta, a) {
                let delta = bp - f[a];
                if delta == 0.0 || delta.abs() > 10.0 * FINAL_STEP {
                    continue;
                }
                for c in 0..k {
                    if c == a {
                        continue;
                    }
                    let (fa, fc) = (f[a], f[c]);
                    f[a] = bp;
                    f[c] -= delta;
                    let v = objective(f, p, theta);
                    if v <= val {
                        val = v;
                        changed = true;
                        break;
                    }
                    f[a] = fa;
                    f[c] = fc;
                }
            }
        }
    }
}

/// One random posterior/cost draw and how the numeric minimizer compares
/// with the closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherRow {
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub weighted_argmax: Option<usize>,
    pub numeric_argmax: usize,
    pub numeric: Vec<f64>,
    pub numeric_value: f64,
    pub closed_form: Vec<f64>,
    pub closed_form_value: f64,
    /// Argmax agreement; `None` when `argmax θ_j P_j` is not unique.
    pub argmax_ok: Option<bool>,
    /// Every entry of the numeric minimizer within `1e-3` of the closed form.
    pub closed_form_ok: bool,
}

/// `k` uniform in `{2, 3, 4}`, `P` uniform on the simplex, `θ_j` uniform in
/// `[0.5, 5]`.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<f64>, PriorityVector) {
    let k = rng.random_range(2..=4);
    let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    let theta = (0..k).map(|_| rng.random_range(0.5..5.0)).collect();
    (p, PriorityVector::new(theta).expect("positive draw"))
}

pub fn fisher_row(p: &[f64], theta: &PriorityVector) -> Result<FisherRow> {
    let sol = minimize_expected_surrogate(p, theta)?;
    let cf = closed_form(p, theta)?;
    let wa = unique_weighted_argmax(p, theta);
    let na = argmax(&sol.f);
    Ok(FisherRow {
        p: p.to_vec(),
        theta: theta.costs().to_vec(),
        weighted_argmax: wa,
        numeric_argmax: na,
        closed_form_value: objective(&cf, p, theta),
        closed_form_ok: sol.f.iter().zip(&cf).all(|(a, b)| (a - b).abs() <= 1e-3),
        numeric: sol.f,
        numeric_value: sol.value,
        closed_form: cf,
        argmax_ok: wa.map(|w| w == na),
    })
}

/// `draws` seeded random instances.
pub fn fisher_check(draws: usize, seed: u64) -> Result<Vec<FisherRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let (p, theta) = random_instance(&mut rng);
            fisher_row(&p, &theta)
        })
        .collect()
}
