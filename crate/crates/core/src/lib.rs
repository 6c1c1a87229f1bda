//! Worst-case data poisoning of binary classifiers with simultaneous
//! learning of regularization hyperparameters.
//!
//! The library builds indiscriminate poisoning attacks as a multiobjective
//! bilevel optimization problem: the outer level jointly performs gradient
//! *ascent* on the features of a batch of poisoning points and gradient
//! *descent* on log-scale regularization hyperparameters, both driven by
//! hypergradients of a validation loss; the inner level trains the model by
//! full-batch gradient descent. Hypergradients are computed by reverse-mode
//! differentiation through the unrolled training run, with forward-mode and
//! implicit (stationarity + conjugate gradient) engines available as
//! cross-checks, plus a finite-difference oracle for testing.
//!
//! Module map:
//!
//! - [`numerics`] — dense matrices, norms, clipping, seeded RNG streams, and
//!   a conjugate-gradient solver.
//! - [`models`] — logistic regression and Leaky-ReLU MLPs with exact
//!   gradients, Hessian-vector products, and mixed second-order products.
//! - [`hypergrad`] — the hypergradient engines over a [`hypergrad::BilevelProblem`].
//! - [`attack`] — poison initialization, projected hypergradient
//!   descent/ascent, cumulative batching, hyperparameter-only learning, and
//!   grid/cross-validation baselines.
//! - [`data`] — synthetic tasks, IDX and CIFAR-10 binary parsing, and seeded
//!   balanced splits.
//! - [`metrics`] — test error, top-k feature extraction, Kuncheva's
//!   consistency index, and weight-norm diagnostics.
//!
//! All numeric code is generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`). The pipeline itself is intended to run in `f64` — the
//! hypergradient exactness checks rely on it — and the type aliases at the
//! crate root fix that choice.

pub mod attack;
pub mod data;
pub mod error;
pub mod hypergrad;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Dense row-major matrix in working precision.
pub type Matrix = numerics::DenseMatrix<f64>;
/// Flat model parameter vector in working precision.
pub type Params = models::ParamVector<f64>;
/// Model architecture description in working precision.
pub type Model = models::ModelSpec<f64>;
/// Regularizer description in working precision.
pub type Reg = models::RegSpec<f64>;
/// Feature matrix + binary labels + feasible box in working precision.
pub type Task = models::Dataset<f64>;
/// A batch of poisoning points in working precision.
pub type Poisons = attack::PoisonSet<f64>;
