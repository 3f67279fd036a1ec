//! Seeded sampling and the Pegasos step shared by all primal solvers.
//!
//! Iteration `t` (1-based) uses step size `1 / (λ t)`. For a per-example
//! loss whose subgradient with respect to row `j` is `-c_j · x̃`, the step
//! on `(λ/2)‖W‖² + loss` is
//!
//! ```text
//! w_j ← (1 − 1/t) · w_j + c_j / (λ t) · x̃
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{axpy, Matrix};

/// Uniform index stream driven by a seeded ChaCha generator.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    rng: ChaCha8Rng,
    n: usize,
}

impl IndexSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        assert!(n > 0, "cannot sample from an empty range");
        IndexSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
        }
    }

    #[inline]
    pub fn next_index(&mut self) -> usize {
        self.rng.random_range(0..self.n)
    }
}

/// Derives an independent seed for subproblem `index` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Applies one Pegasos step in place. `coef[j]` is the negated loss
/// subgradient coefficient of row `j` (zero for inactive rows).
pub fn pegasos_step(weights: &mut Matrix, xa: &[f64], coef: &[f64], lambda: f64, t: u64) {
    let shrink = 1.0 - 1.0 / t as f64;
    let eta = 1.0 / (lambda * t as f64);
    for (j, &c) in coef.iter().enumerate() {
        let row = weights.row_mut(j);
        row.iter_mut().for_each(|v| *v *= shrink);
        if c != 0.0 {
            axpy(eta * c, xa, row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic() {
        let mut a = IndexSampler::new(17, 42);
        let mut b = IndexSampler::new(17, 42);
        let xs: Vec<usize> = (0..100).map(|_| a.next_index()).collect();
        let ys: Vec<usize> = (0..100).map(|_| b.next_index()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&i| i < 17));
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..8).map(|i| derive_seed(7, i)).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn first_step_ignores_previous_weights() {
        let mut w = Matrix::from_rows(&[vec![5.0, 5.0], vec![-3.0, 1.0]]).unwrap();
        pegasos_step(&mut w, &[2.0, 1.0], &[1.0, 0.0], 0.5, 1);
        assert_eq!(w.row(0), &[4.0, 2.0]);
        assert_eq!(w.row(1), &[0.0, 0.0]);
    }
}
