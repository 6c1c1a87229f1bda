//! The bilevel problem interface the engines work against.

use crate::error::{Error, Result};
use crate::models::{
    self, Dataset, ModelSpec, ParamVector, RegSpec, SecondOrderProducts,
};
use crate::numerics::DenseMatrix;
use crate::scalar::Real;

/// Inner training problem plus outer validation objective, exposed through
/// the derivative products the engines need. Implementations must be
/// deterministic functions of their state.
pub trait BilevelProblem<T: Real> {
    /// Fresh zero parameter vector with the right layout.
    fn zero_params(&self) -> ParamVector<T>;

    /// `(n_p, m)`.
    fn poison_shape(&self) -> (usize, usize);

    /// Number of hyperparameter groups (0 when the regularizer is inactive).
    fn lambda_dim(&self) -> usize;

    fn poison_features(&self) -> DenseMatrix<T>;

    fn lambda_values(&self) -> Vec<T>;

    fn set_poison_features(&mut self, xp: &DenseMatrix<T>) -> Result<()>;

    fn set_lambda_values(&mut self, lambdas: &[T]) -> Result<()>;

    /// `∇_w L` of the inner (training) objective, regularizer included.
    fn train_grad(&self, w: &ParamVector<T>) -> Result<ParamVector<T>>;

    /// `(∇²_w L) v`.
    fn train_hvp(&self, w: &ParamVector<T>, v: &ParamVector<T>) -> Result<ParamVector<T>>;

    /// `∇_{X_p} (vᵀ ∇_w L)`, shape `(n_p, m)`.
    fn mixed_poison_transposed(
        &self,
        w: &ParamVector<T>,
        v: &ParamVector<T>,
    ) -> Result<DenseMatrix<T>>;

    /// `∇_Λ (vᵀ ∇_w L)`, length `lambda_dim()`.
    fn mixed_lambda_transposed(&self, w: &ParamVector<T>, v: &ParamVector<T>) -> Result<Vec<T>>;

    /// `(∂ ∇_w L / ∂X_p) dxp` — forward-mode mixed product.
    fn mixed_poison_forward(
        &self,
        w: &ParamVector<T>,
        dxp: &DenseMatrix<T>,
    ) -> Result<ParamVector<T>>;

    /// `(∂ ∇_w L / ∂Λ) dλ` — forward-mode mixed product.
    fn mixed_lambda_forward(&self, w: &ParamVector<T>, dlambda: &[T]) -> Result<ParamVector<T>>;

    /// All reverse-pass products for one direction `v`, in one go.
    fn second_order_products(
        &self,
        w: &ParamVector<T>,
        v: &ParamVector<T>,
    ) -> Result<SecondOrderProducts<T>> {
        Ok(SecondOrderProducts {
            hvp: self.train_hvp(w, v)?,
            d_poison: self.mixed_poison_transposed(w, v)?,
            d_lambda: if self.lambda_dim() > 0 {
                self.mixed_lambda_transposed(w, v)?
            } else {
                Vec::new()
            },
        })
    }

    /// Outer objective `A(w)`.
    fn outer_value(&self, w: &ParamVector<T>) -> Result<T>;

    /// `∇_w A(w)`.
    fn outer_grad(&self, w: &ParamVector<T>) -> Result<ParamVector<T>>;
}

/// The poisoning instance: a training set whose `poison_rows` features are
/// the outer variables (labels stay fixed), a regularizer whose log-scale
/// hyperparameters are outer variables, and a clean validation set defining
/// the outer objective.
#[derive(Debug, Clone)]
pub struct TrainValProblem<T> {
    spec: ModelSpec<T>,
    train: Dataset<T>,
    poison_rows: Vec<usize>,
    reg: RegSpec<T>,
    val: Dataset<T>,
    /// Whether `A` adds the regularization penalty (off by default).
    pub include_reg_in_outer: bool,
}

impl<T: Real> TrainValProblem<T> {
    pub fn new(
        spec: &ModelSpec<T>,
        train_poisoned: &Dataset<T>,
        poison_rows: &[usize],
        reg: &RegSpec<T>,
        val: &Dataset<T>,
    ) -> Result<Self> {
        spec.validate()?;
        reg.validate_for(spec.n_layers())?;
        if train_poisoned.m() != spec.input_dim() || val.m() != spec.input_dim() {
            return Err(Error::Shape {
                context: "TrainValProblem::new",
                details: format!(
                    "model input {} vs train width {} / val width {}",
                    spec.input_dim(),
                    train_poisoned.m(),
                    val.m()
                ),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &r in poison_rows {
            if r >= train_poisoned.n() {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: train_poisoned.n(),
                });
            }
            if !seen.insert(r) {
                return Err(Error::Config(format!("duplicate poison row {}", r)));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            train: train_poisoned.clone(),
            poison_rows: poison_rows.to_vec(),
            reg: reg.clone(),
            val: val.clone(),
            include_reg_in_outer: false,
        })
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        &self.spec
    }

    pub fn train(&self) -> &Dataset<T> {
        &self.train
    }

    pub fn reg(&self) -> &RegSpec<T> {
        &self.reg
    }

    pub fn val(&self) -> &Dataset<T> {
        &self.val
    }

    pub fn poison_rows(&self) -> &[usize] {
        &self.poison_rows
    }

    /// Training loss at `w` (inner objective, regularizer included).
    pub fn train_loss(&self, w: &ParamVector<T>) -> Result<T> {
        models::loss(&self.spec, w, &self.train, &self.reg, true)
    }
}

impl<T: Real> BilevelProblem<T> for TrainValProblem<T> {
    fn zero_params(&self) -> ParamVector<T> {
        ParamVector::zeros(self.spec.layout())
    }

    fn poison_shape(&self) -> (usize, usize) {
        (self.poison_rows.len(), self.train.m())
    }

    fn lambda_dim(&self) -> usize {
        self.reg.group_count()
    }

    fn poison_features(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.poison_rows.len(), self.train.m());
        for (slot, &row) in self.poison_rows.iter().enumerate() {
            out.row_mut(slot).copy_from_slice(self.train.x().row(row));
        }
        out
    }

    fn lambda_values(&self) -> Vec<T> {
        self.reg.lambdas.clone()
    }

    fn set_poison_features(&mut self, xp: &DenseMatrix<T>) -> Result<()> {
        if xp.shape() != self.poison_shape() {
            return Err(Error::Shape {
                context: "set_poison_features",
                details: format!("{:?} vs {:?}", xp.shape(), self.poison_shape()),
            });
        }
        for (slot, &row) in self.poison_rows.iter().enumerate() {
            self.train.set_row(row, xp.row(slot));
        }
        Ok(())
    }

    fn set_lambda_values(&mut self, lambdas: &[T]) -> Result<()> {
        if lambdas.len() != self.reg.group_count() {
            return Err(Error::Shape {
                context: "set_lambda_values",
                details: format!("{} vs {} groups", lambdas.len(), self.reg.group_count()),
            });
        }
        self.reg.lambdas.clear();
        self.reg.lambdas.extend_from_slice(lambdas);
        Ok(())
    }

    fn train_grad(&self, w: &ParamVector<T>) -> Result<ParamVector<T>> {
        models::grad_w(&self.spec, w, &self.train, &self.reg, true)
    }

    fn train_hvp(&self, w: &ParamVector<T>, v: &ParamVector<T>) -> Result<ParamVector<T>> {
        models::hvp_w(&self.spec, w, &self.train, &self.reg, v)
    }

    fn mixed_poison_transposed(
        &self,
        w: &ParamVector<T>,
        v: &ParamVector<T>,
    ) -> Result<DenseMatrix<T>> {
        models::mixed_hvp_poison(&self.spec, w, &self.train, &self.poison_rows, v)
    }

    fn mixed_lambda_transposed(&self, w: &ParamVector<T>, v: &ParamVector<T>) -> Result<Vec<T>> {
        models::mixed_hvp_lambda(&self.spec, w, &self.reg, v, self.train.n())
    }

    fn mixed_poison_forward(
        &self,
        w: &ParamVector<T>,
        dxp: &DenseMatrix<T>,
    ) -> Result<ParamVector<T>> {
        models::mixed_poison_forward(&self.spec, w, &self.train, &self.poison_rows, dxp)
    }

    fn mixed_lambda_forward(&self, w: &ParamVector<T>, dlambda: &[T]) -> Result<ParamVector<T>> {
        models::mixed_lambda_forward(&self.spec, w, &self.reg, dlambda, self.train.n())
    }

    fn second_order_products(
        &self,
        w: &ParamVector<T>,
        v: &ParamVector<T>,
    ) -> Result<SecondOrderProducts<T>> {
        models::second_order_products(&self.spec, w, &self.train, &self.reg, &self.poison_rows, v)
    }

    fn outer_value(&self, w: &ParamVector<T>) -> Result<T> {
        models::loss(&self.spec, w, &self.val, &self.reg, self.include_reg_in_outer)
    }

    fn outer_grad(&self, w: &ParamVector<T>) -> Result<ParamVector<T>> {
        models::grad_w(&self.spec, w, &self.val, &self.reg, self.include_reg_in_outer)
    }
}
