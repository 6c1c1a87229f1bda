//! Differentiable binary classifiers with regularized losses.
//!
//! Two architectures: logistic regression and a feed-forward MLP with Leaky
//! ReLU hidden activations and a single sigmoid output. The loss is the mean
//! binary cross-entropy over samples plus, optionally, an `e^λ`-weighted L1
//! or L2 penalty added once (not per sample). All derivatives — gradient,
//! Hessian-vector product, and the mixed second-order products with respect
//! to selected input rows and to the log-hyperparameters — are computed
//! exactly without ever materializing a Hessian.

mod ops;
mod second_order;
mod train;

pub use ops::{forward, grad_w, loss};
pub use second_order::{
    hvp_w, mixed_hvp_lambda, mixed_hvp_poison, mixed_lambda_forward, mixed_poison_forward,
    second_order_products, SecondOrderProducts,
};
pub use train::{init_params, sgd_train, train_model, InitScheme};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{clip_in_place, DenseMatrix};
use crate::scalar::Real;

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

/// Architecture description: layer widths from input to the single output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    pub kind: ModelKind,
    /// `[m, h1, ..., 1]`; logistic regression is `[m, 1]`.
    pub layer_sizes: Vec<usize>,
    /// Negative slope of the Leaky ReLU (MLP only).
    pub leaky_slope: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::Logistic,
            layer_sizes: vec![input_dim, 1],
            leaky_slope: T::of(0.01),
        }
    }

    pub fn mlp(layer_sizes: Vec<usize>, leaky_slope: T) -> Result<Self> {
        let spec = Self {
            kind: ModelKind::Mlp,
            layer_sizes,
            leaky_slope,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be >= 2 non-zero entries".into()));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config("output layer must have width 1 (binary tasks)".into()));
        }
        match self.kind {
            ModelKind::Logistic => {
                if self.layer_sizes.len() != 2 {
                    return Err(Error::Config("logistic regression is input -> 1".into()));
                }
            }
            ModelKind::Mlp => {
                if self.layer_sizes.len() < 3 {
                    return Err(Error::Config("MLP needs at least one hidden layer".into()));
                }
                let slope = self.leaky_slope.to_f64().unwrap();
                if !(0.0..1.0).contains(&slope) || slope == 0.0 {
                    return Err(Error::Config(format!("leaky slope {} outside (0, 1)", slope)));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Number of weight layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layout(&self) -> Arc<ParamLayout> {
        let mut layers = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let in_dim = self.layer_sizes[l];
            let out_dim = self.layer_sizes[l + 1];
            let weight_start = offset;
            let bias_start = offset + in_dim * out_dim;
            offset = bias_start + out_dim;
            layers.push(LayerLayout {
                in_dim,
                out_dim,
                weight_start,
                bias_start,
                has_bias: true,
            });
        }
        Arc::new(ParamLayout { layers, len: offset })
    }
}

/// One layer's span inside the flat parameter vector. Weights are row-major
/// `(out, in)`: entry `(o, i)` lives at `weight_start + o * in_dim + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight_start: usize,
    pub bias_start: usize,
    pub has_bias: bool,
}

impl LayerLayout {
    pub fn weight_len(&self) -> usize {
        self.in_dim * self.out_dim
    }

    pub fn bias_len(&self) -> usize {
        if self.has_bias {
            self.out_dim
        } else {
            0
        }
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.bias_len()
    }
}

/// Per-layer partition of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: Vec<LayerLayout>,
    pub len: usize,
}

impl ParamLayout {
    /// Single unstructured block of `len` weights without bias; used by
    /// low-dimensional test problems.
    pub fn flat(len: usize) -> Arc<Self> {
        Arc::new(Self {
            layers: vec![LayerLayout {
                in_dim: len,
                out_dim: 1,
                weight_start: 0,
                bias_start: len,
                has_bias: false,
            }],
            len,
        })
    }
}

/// Flat model parameter vector with its per-layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    data: Vec<T>,
    layout: Arc<ParamLayout>,
}

impl<T: Real> ParamVector<T> {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let data = vec![T::zero(); layout.len];
        Self { data, layout }
    }

    pub fn from_data(layout: Arc<ParamLayout>, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.len {
            return Err(Error::Shape {
                context: "ParamVector::from_data",
                details: format!("layout expects {} entries, got {}", layout.len, data.len()),
            });
        }
        Ok(Self { data, layout })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let l = &self.layout.layers[layer];
        &self.data[l.weight_start..l.weight_start + l.weight_len()]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layout.layers[layer].clone();
        &mut self.data[l.weight_start..l.weight_start + l.weight_len()]
    }

    pub fn biases(&self, layer: usize) -> &[T] {
        let l = &self.layout.layers[layer];
        &self.data[l.bias_start..l.bias_start + l.bias_len()]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layout.layers[layer].clone();
        &mut self.data[l.bias_start..l.bias_start + l.bias_len()]
    }

    /// `self += alpha * other`; layouts must match.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.layout.len, other.layout.len);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in &mut self.data {
            *a = *a * alpha;
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        crate::numerics::dot(&self.data, &other.data)
    }

    pub fn norm2(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Penalty norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegNorm {
    None,
    L2,
    L1,
}

/// How hyperparameters map onto layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegGrouping {
    /// One λ for all layers.
    Single,
    /// One λ per layer.
    PerLayer,
}

/// Regularizer: penalty `Σ_g e^{λ_g} pen(w_g)` with `pen = ½||·||₂²` or
/// `||·||₁` over a group's weights. λ is log-scale so the multiplier is
/// always positive. Bias terms are excluded unless `include_bias` is set.
/// "No regularization" is `RegNorm::None`, never a -∞ λ.
#[derive(Debug, Clone, PartialEq)]
pub struct RegSpec<T> {
    pub norm: RegNorm,
    pub grouping: RegGrouping,
    /// Log-scale hyperparameters; length 1 (single) or #layers (per-layer).
    pub lambdas: Vec<T>,
    pub include_bias: bool,
}

impl<T: Real> RegSpec<T> {
    pub fn none() -> Self {
        Self {
            norm: RegNorm::None,
            grouping: RegGrouping::Single,
            lambdas: Vec::new(),
            include_bias: false,
        }
    }

    pub fn l2(lambda: T) -> Self {
        Self {
            norm: RegNorm::L2,
            grouping: RegGrouping::Single,
            lambdas: vec![lambda],
            include_bias: false,
        }
    }

    pub fn l1(lambda: T) -> Self {
        Self {
            norm: RegNorm::L1,
            grouping: RegGrouping::Single,
            lambdas: vec![lambda],
            include_bias: false,
        }
    }

    pub fn per_layer(norm: RegNorm, lambdas: Vec<T>) -> Self {
        Self {
            norm,
            grouping: RegGrouping::PerLayer,
            lambdas,
            include_bias: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.norm != RegNorm::None
    }

    /// Number of hyperparameters.
    pub fn group_count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate_for(&self, n_layers: usize) -> Result<()> {
        match self.norm {
            RegNorm::None => {
                if !self.lambdas.is_empty() {
                    return Err(Error::Config("norm None requires empty lambdas".into()));
                }
            }
            _ => {
                let expected = match self.grouping {
                    RegGrouping::Single => 1,
                    RegGrouping::PerLayer => n_layers,
                };
                if self.lambdas.len() != expected {
                    return Err(Error::Config(format!(
                        "expected {} lambdas for grouping, got {}",
                        expected,
                        self.lambdas.len()
                    )));
                }
                if !self.lambdas.iter().all(|l| l.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "RegSpec lambdas".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Layers belonging to each hyperparameter group.
    pub fn group_layers(&self, n_layers: usize) -> Vec<Vec<usize>> {
        match self.grouping {
            RegGrouping::Single => vec![(0..n_layers).collect()],
            RegGrouping::PerLayer => (0..n_layers).map(|l| vec![l]).collect(),
        }
    }
}

/// Per-feature box constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBounds<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> FeatureBounds<T> {
    pub fn uniform(lo: T, hi: T, dim: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::Bounds {
                context: "FeatureBounds::uniform",
                index: 0,
            });
        }
        Ok(Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        })
    }

    pub fn per_feature(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape {
                context: "FeatureBounds::per_feature",
                details: format!("lo length {} vs hi length {}", lo.len(), hi.len()),
            });
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Bounds {
                context: "FeatureBounds::per_feature",
                index: i,
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn contains_row(&self, row: &[T]) -> bool {
        row.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    pub fn clip_row(&self, row: &mut [T]) {
        clip_in_place(row, &self.lo, &self.hi).expect("validated bounds");
    }
}

/// Feature matrix, binary labels, and the per-feature feasible box.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    x: DenseMatrix<T>,
    y: Vec<u8>,
    bounds: FeatureBounds<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DenseMatrix<T>, y: Vec<u8>, bounds: FeatureBounds<T>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::InsufficientSamples("dataset must have at least one row".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::Shape {
                context: "Dataset::new",
                details: format!("{} rows vs {} labels", x.rows(), y.len()),
            });
        }
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::Config(format!("labels must be 0 or 1, got {}", bad)));
        }
        if bounds.dim() != x.cols() {
            return Err(Error::Shape {
                context: "Dataset::new",
                details: format!("{} features vs {}-dim bounds", x.cols(), bounds.dim()),
            });
        }
        for i in 0..x.rows() {
            if !bounds.contains_row(x.row(i)) {
                return Err(Error::Config(format!("row {} outside feature bounds", i)));
            }
        }
        Ok(Self { x, y, bounds })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &DenseMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn bounds(&self) -> &FeatureBounds<T> {
        &self.bounds
    }

    pub fn label_real(&self, i: usize) -> T {
        T::of(self.y[i] as f64)
    }

    /// Replaces one row's features. Keeping the row inside the feasible box
    /// is the caller's job: attack code projects before writing, and the
    /// finite-difference oracle deliberately steps epsilon outside.
    pub fn set_row(&mut self, i: usize, row: &[T]) {
        self.x.row_mut(i).copy_from_slice(row);
    }

    pub fn set_label(&mut self, i: usize, label: u8) {
        debug_assert!(label <= 1);
        self.y[i] = label;
    }

    /// Rows and labels gathered into a new dataset (used by fold splitting).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.m());
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::IndexOutOfRange { index: i, len: self.n() });
            }
            data.extend_from_slice(self.x.row(i));
            y.push(self.y[i]);
        }
        let x = DenseMatrix::new(indices.len(), self.m(), data)?;
        Dataset::new(x, y, self.bounds.clone())
    }
}

/// Recorded sequence of parameter states from an unrolled training run:
/// `states[t + 1] = states[t] - eta * grad(states[t])`, `states.len() == T+1`.
#[derive(Debug, Clone)]
pub struct TrainTrace<T> {
    pub states: Vec<ParamVector<T>>,
    pub eta: T,
}

impl<T: Real> TrainTrace<T> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_params(&self) -> &ParamVector<T> {
        self.states.last().expect("trace has at least the initial state")
    }
}
