//! Hypergradients of a validation objective with respect to poisoning
//! features and log-regularization hyperparameters.
//!
//! The outer objective is `A(X_p, Λ) = L_val(w(X_p, Λ))`, where `w` comes
//! from the inner training problem. Four interchangeable engines estimate
//! `∇_{X_p} A` and `∇_Λ A`:
//!
//! - [`rmd`] — reverse-mode differentiation of the unrolled training run:
//!   record the `T + 1` parameter states, then traverse them backwards
//!   accumulating Hessian-vector and mixed products. Exact derivative of the
//!   truncated-training objective; cost `O(T d)` independent of the number
//!   of outer variables.
//! - [`fmd`] — forward-mode accumulation of the same derivative alongside
//!   training; cost scales with the number of outer variables, so it is
//!   capped and intended for small problems and cross-checks.
//! - [`implicit`] — stationarity-based hypergradient: solve
//!   `(∇²_w L) v = ∇_w A` by conjugate gradient at a trained optimum and
//!   form `-(mixed products)ᵀ v`. Requires the inner problem to actually be
//!   at a stationary point.
//! - [`finite_diff`] — central-difference oracle that re-runs training per
//!   perturbed coordinate; the reference the others are tested against.
//!
//! The validation objective deliberately excludes the regularization
//! penalty: including `e^λ pen(w)` in the outer objective would reward
//! shrinking λ regardless of validation fit. [`TrainValProblem`] carries a
//! flag to flip that choice.

mod engines;
mod problem;
#[cfg(test)]
pub(crate) mod tests;

pub use engines::{finite_diff, fmd, implicit, rmd, rmd_with_trace, unroll, ImplicitConfig};
pub use problem::{BilevelProblem, TrainValProblem};

use crate::error::Result;
use crate::models::{Dataset, ModelSpec, ParamVector, RegSpec, TrainTrace};
use crate::numerics::DenseMatrix;
use crate::scalar::Real;

/// Default cap on `n_p * m + h` for forward-mode accumulation.
pub const DEFAULT_FMD_CAP: usize = 64;

/// Which engine produced a hypergradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Rmd,
    Fmd,
    Implicit,
    FiniteDiff,
}

/// Hypergradient of the outer objective.
#[derive(Debug, Clone)]
pub struct Hypergrad<T> {
    /// `∇_{X_p} A`, one row per poison point.
    pub d_poison: DenseMatrix<T>,
    /// `∇_Λ A`, one entry per hyperparameter group.
    pub d_lambda: Vec<T>,
    pub engine: EngineKind,
    /// Inner iterations the estimate used (0 for the implicit engine).
    pub t_used: usize,
}

impl<T: Real> Hypergrad<T> {
    pub fn all_finite(&self) -> bool {
        self.d_poison.all_finite() && self.d_lambda.iter().all(|v| v.is_finite())
    }

    /// Flattened view `[poison entries..., lambda entries...]`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = self.d_poison.data().to_vec();
        out.extend_from_slice(&self.d_lambda);
        out
    }
}

/// Reverse-mode hypergradient for a model/dataset instance; also returns the
/// trained parameters `w(T)`.
#[allow(clippy::too_many_arguments)]
pub fn rmd_hypergrad<T: Real>(
    spec: &ModelSpec<T>,
    train_poisoned: &Dataset<T>,
    poison_rows: &[usize],
    reg: &RegSpec<T>,
    val: &Dataset<T>,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
) -> Result<(Hypergrad<T>, ParamVector<T>)> {
    let problem = TrainValProblem::new(spec, train_poisoned, poison_rows, reg, val)?;
    rmd(&problem, w0, eta, t)
}

/// Forward-mode hypergradient; must agree with [`rmd_hypergrad`] to round-off.
#[allow(clippy::too_many_arguments)]
pub fn fmd_hypergrad<T: Real>(
    spec: &ModelSpec<T>,
    train_poisoned: &Dataset<T>,
    poison_rows: &[usize],
    reg: &RegSpec<T>,
    val: &Dataset<T>,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
    outer_dim_cap: usize,
) -> Result<Hypergrad<T>> {
    let problem = TrainValProblem::new(spec, train_poisoned, poison_rows, reg, val)?;
    fmd(&problem, w0, eta, t, outer_dim_cap)
}

/// Stationarity-based hypergradient at trained parameters `w_star`.
#[allow(clippy::too_many_arguments)]
pub fn implicit_hypergrad<T: Real>(
    spec: &ModelSpec<T>,
    train_poisoned: &Dataset<T>,
    poison_rows: &[usize],
    reg: &RegSpec<T>,
    val: &Dataset<T>,
    w_star: &ParamVector<T>,
    config: &ImplicitConfig<T>,
) -> Result<Hypergrad<T>> {
    let problem = TrainValProblem::new(spec, train_poisoned, poison_rows, reg, val)?;
    implicit(&problem, w_star, config)
}

/// Finite-difference oracle with the same signature as [`rmd_hypergrad`].
#[allow(clippy::too_many_arguments)]
pub fn fd_hypergrad<T: Real>(
    spec: &ModelSpec<T>,
    train_poisoned: &Dataset<T>,
    poison_rows: &[usize],
    reg: &RegSpec<T>,
    val: &Dataset<T>,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
    step: T,
) -> Result<Hypergrad<T>> {
    let mut problem = TrainValProblem::new(spec, train_poisoned, poison_rows, reg, val)?;
    finite_diff(&mut problem, w0, eta, t, step)
}

/// Unrolls the inner training of a model/dataset instance, recording states.
pub fn unroll_training<T: Real>(
    spec: &ModelSpec<T>,
    train_poisoned: &Dataset<T>,
    poison_rows: &[usize],
    reg: &RegSpec<T>,
    val: &Dataset<T>,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
) -> Result<TrainTrace<T>> {
    let problem = TrainValProblem::new(spec, train_poisoned, poison_rows, reg, val)?;
    unroll(&problem, w0, eta, t)
}
