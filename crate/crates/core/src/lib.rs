//! Cost-sensitive multiclass large-margin classification with apportioned
//! margins.
//!
//! Each class `j` carries a cost `θ_j`. Predictions use the cost-scaled rows
//! `w_j / θ_j`, and training minimizes `(λ/2)‖W‖² + mean_i Σ_j
//! max(0, θ_{y_i} − δ̄_{y_i,j} w_j·x̃_i)` by stochastic subgradient descent,
//! which splits the margin between two classes in the ratio of their costs.
//!
//! ```
//! use apportion::{data, linear, model::{PriorityVector, TrainConfig}};
//!
//! let train = data::generate_synthetic(&data::SynthSpec::two_blobs(3.0, 0.5, 50, 1)).unwrap();
//! let theta: PriorityVector = "2,1".parse().unwrap();
//! let (model, _) = linear::train_linear(&train, &theta, &TrainConfig::new(1e-2, 5_000, 7)).unwrap();
//! assert_eq!(model.predict(&[-3.0, 0.0]).unwrap(), 0);
//! ```

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod format;
pub mod geometry;
pub mod kernel;
pub mod linear;
pub mod loss;
pub mod model;
pub mod sgd;

pub use error::{Error, Result};
pub use eval::{Method, MethodSpec, TrainedModel};
pub use model::{KernelModel, KernelSpec, LabeledDataset, LinearModel, Matrix, PriorityVector, TrainConfig};
