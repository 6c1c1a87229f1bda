//! Forward pass, loss, and first-order gradients.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{Dataset, ModelSpec, ParamVector, RegNorm, RegSpec};

#[inline]
pub(super) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy from the logit, in the overflow-free form
/// `max(z, 0) - z y + ln(1 + exp(-|z|))`.
#[inline]
pub(super) fn bce_with_logit<T: Real>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(super) fn leaky<T: Real>(z: T, slope: T) -> T {
    if z > T::zero() {
        z
    } else {
        slope * z
    }
}

#[inline]
pub(super) fn leaky_deriv<T: Real>(z: T, slope: T) -> T {
    if z > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// Reusable per-sample buffers, one slot per layer.
pub(super) struct Workspace<T> {
    /// Pre-activations.
    pub z: Vec<Vec<T>>,
    /// Post-activations (hidden layers; the output slot is unused).
    pub a: Vec<Vec<T>>,
    /// Backprop adjoints of `z`.
    pub delta: Vec<Vec<T>>,
    /// Tangents of `z` (second-order passes).
    pub rz: Vec<Vec<T>>,
    /// Tangents of `a`.
    pub ra: Vec<Vec<T>>,
    /// Tangents of `delta`.
    pub rdelta: Vec<Vec<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new(spec: &ModelSpec<T>) -> Self {
        let widths: Vec<usize> = spec.layer_sizes[1..].to_vec();
        let make = || widths.iter().map(|&w| vec![T::zero(); w]).collect::<Vec<_>>();
        Self {
            z: make(),
            a: make(),
            delta: make(),
            rz: make(),
            ra: make(),
            rdelta: make(),
        }
    }
}

pub(super) fn check_model_inputs<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    input_dim: usize,
    context: &'static str,
) -> Result<()> {
    spec.validate()?;
    if input_dim != spec.input_dim() {
        return Err(Error::Shape {
            context,
            details: format!("input width {} vs model input {}", input_dim, spec.input_dim()),
        });
    }
    let expected = spec.layout().len;
    if w.len() != expected {
        return Err(Error::Shape {
            context,
            details: format!("parameter length {} vs layout length {}", w.len(), expected),
        });
    }
    Ok(())
}

/// Runs the layers on one input row; fills `ws.z`/`ws.a` and returns the logit.
pub(super) fn forward_sample<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    x: &[T],
    ws: &mut Workspace<T>,
) -> T {
    let n_layers = spec.n_layers();
    for l in 0..n_layers {
        let layer = &w.layout().layers[l];
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let weights = w.weights(l);
        let biases = w.biases(l);
        // Split borrows: previous activation vs this layer's buffers.
        let (head, tail) = ws.z.split_at_mut(l);
        let _ = head;
        let z = &mut tail[0];
        for o in 0..out_dim {
            let wrow = &weights[o * in_dim..(o + 1) * in_dim];
            let prev: &[T] = if l == 0 { x } else { &ws.a[l - 1] };
            let mut acc = if layer.has_bias { biases[o] } else { T::zero() };
            for (wi, pi) in wrow.iter().zip(prev) {
                acc = acc + *wi * *pi;
            }
            z[o] = acc;
        }
        if l + 1 < n_layers {
            for o in 0..out_dim {
                ws.a[l][o] = leaky(ws.z[l][o], spec.leaky_slope);
            }
        }
    }
    ws.z[n_layers - 1][0]
}

/// Backprop from a scalar seed `dL/dz_out`; accumulates parameter adjoints
/// into `grad` and optionally returns the input-row adjoint.
pub(super) fn backward_sample<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    x: &[T],
    ws: &mut Workspace<T>,
    seed: T,
    grad: &mut ParamVector<T>,
    mut input_grad: Option<&mut [T]>,
) {
    let n_layers = spec.n_layers();
    ws.delta[n_layers - 1][0] = seed;
    for l in (0..n_layers).rev() {
        let layer = w.layout().layers[l].clone();
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let weights = w.weights(l);
        for o in 0..out_dim {
            let d = ws.delta[l][o];
            let prev: &[T] = if l == 0 { x } else { &ws.a[l - 1] };
            let grow =
                &mut grad.data_mut()[layer.weight_start + o * in_dim..layer.weight_start + (o + 1) * in_dim];
            for (g, &p) in grow.iter_mut().zip(prev) {
                *g = *g + d * p;
            }
            if layer.has_bias {
                grad.data_mut()[layer.bias_start + o] = grad.data_mut()[layer.bias_start + o] + d;
            }
        }
        if l > 0 {
            // delta_{l-1} = (W_l' delta_l) ⊙ leaky'(z_{l-1})
            let (lo, hi) = ws.delta.split_at_mut(l);
            let prev_delta = &mut lo[l - 1];
            let cur_delta = &hi[0];
            for i in 0..in_dim {
                let mut acc = T::zero();
                for o in 0..out_dim {
                    acc = acc + weights[o * in_dim + i] * cur_delta[o];
                }
                prev_delta[i] = acc * leaky_deriv(ws.z[l - 1][i], spec.leaky_slope);
            }
        } else if let Some(gx) = input_grad.as_deref_mut() {
            for i in 0..in_dim {
                let mut acc = T::zero();
                for o in 0..out_dim {
                    acc = acc + weights[o * in_dim + i] * ws.delta[0][o];
                }
                gx[i] = acc;
            }
        }
    }
}

/// Per-row probabilities `σ(logit)`.
pub fn forward<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    x: &crate::numerics::DenseMatrix<T>,
) -> Result<Vec<T>> {
    check_model_inputs(spec, w, x.cols(), "forward")?;
    let mut ws = Workspace::new(spec);
    Ok((0..x.rows())
        .map(|i| sigmoid(forward_sample(spec, w, x.row(i), &mut ws)))
        .collect())
}

/// Penalty term `Σ_g (e^{λ_g} / n) pen(w_g)`.
///
/// The 1/n factor keeps the penalty commensurate with the mean data loss:
/// with the customary hyperparameter magnitudes (e^λ up to 10³-10⁵) an
/// unnormalized penalty would put full-batch gradient descent far outside
/// its stability region (|1 - η e^λ| >> 1) at the standard learning rates.
pub(super) fn penalty<T: Real>(w: &ParamVector<T>, reg: &RegSpec<T>, n_train: usize) -> T {
    let n_layers = w.layout().layers.len();
    let mut total = T::zero();
    for (g, layers) in reg.group_layers(n_layers).iter().enumerate() {
        let scale = reg.lambdas[g].exp() / T::of(n_train as f64);
        let mut pen = T::zero();
        for &l in layers {
            for &v in w.weights(l) {
                pen = pen + match reg.norm {
                    RegNorm::L2 => T::of(0.5) * v * v,
                    RegNorm::L1 => v.abs(),
                    RegNorm::None => T::zero(),
                };
            }
            if reg.include_bias {
                for &v in w.biases(l) {
                    pen = pen + match reg.norm {
                        RegNorm::L2 => T::of(0.5) * v * v,
                        RegNorm::L1 => v.abs(),
                        RegNorm::None => T::zero(),
                    };
                }
            }
        }
        total = total + scale * pen;
    }
    total
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Adds the penalty gradient: `(e^{λ_g}/n) w_g` for L2,
/// `(e^{λ_g}/n) sign(w_g)` (with `sign(0) = 0`) for L1.
pub(super) fn add_penalty_gradient<T: Real>(
    w: &ParamVector<T>,
    reg: &RegSpec<T>,
    n_train: usize,
    grad: &mut ParamVector<T>,
) {
    if !reg.is_active() {
        return;
    }
    let n_layers = w.layout().layers.len();
    for (g, layers) in reg.group_layers(n_layers).iter().enumerate() {
        let scale = reg.lambdas[g].exp() / T::of(n_train as f64);
        for &l in layers {
            let layer = w.layout().layers[l].clone();
            for idx in layer.weight_start..layer.weight_start + layer.weight_len() {
                let v = w.data()[idx];
                let term = match reg.norm {
                    RegNorm::L2 => v,
                    RegNorm::L1 => sign(v),
                    RegNorm::None => T::zero(),
                };
                grad.data_mut()[idx] = grad.data_mut()[idx] + scale * term;
            }
            if reg.include_bias {
                for idx in layer.bias_start..layer.bias_start + layer.bias_len() {
                    let v = w.data()[idx];
                    let term = match reg.norm {
                        RegNorm::L2 => v,
                        RegNorm::L1 => sign(v),
                        RegNorm::None => T::zero(),
                    };
                    grad.data_mut()[idx] = grad.data_mut()[idx] + scale * term;
                }
            }
        }
    }
}

/// Mean binary cross-entropy, plus the penalty iff `include_reg`.
pub fn loss<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    data: &Dataset<T>,
    reg: &RegSpec<T>,
    include_reg: bool,
) -> Result<T> {
    check_model_inputs(spec, w, data.m(), "loss")?;
    reg.validate_for(spec.n_layers())?;
    let mut ws = Workspace::new(spec);
    let mut total = T::zero();
    for i in 0..data.n() {
        let z = forward_sample(spec, w, data.x().row(i), &mut ws);
        total = total + bce_with_logit(z, data.label_real(i));
    }
    let mut out = total / T::of(data.n() as f64);
    if include_reg && reg.is_active() {
        out = out + penalty(w, reg, data.n());
    }
    Ok(out)
}

/// Exact gradient of [`loss`] with respect to the parameters.
pub fn grad_w<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    data: &Dataset<T>,
    reg: &RegSpec<T>,
    include_reg: bool,
) -> Result<ParamVector<T>> {
    check_model_inputs(spec, w, data.m(), "grad_w")?;
    reg.validate_for(spec.n_layers())?;
    let mut ws = Workspace::new(spec);
    let mut grad = ParamVector::zeros(w.layout().clone());
    let scale = T::one() / T::of(data.n() as f64);
    for i in 0..data.n() {
        let z = forward_sample(spec, w, data.x().row(i), &mut ws);
        let seed = (sigmoid(z) - data.label_real(i)) * scale;
        backward_sample(spec, w, data.x().row(i), &mut ws, seed, &mut grad, None);
    }
    if include_reg {
        add_penalty_gradient(w, reg, data.n(), &mut grad);
    }
    Ok(grad)
}
