//! Exact second-order products via tangent (directional-derivative)
//! propagation through the forward and backward passes.
//!
//! For a tangent direction `v` in parameter space, running the usual
//! backprop together with its directional derivative yields both
//! `(∇²_w L) v` and `∇_x (vᵀ ∇_w L)` in one pass at a small constant factor
//! over a gradient. The same machinery with a tangent on selected input rows
//! gives the forward-mode mixed product `(∂∇_w L / ∂X) dX`. Leaky ReLU has
//! zero second derivative almost everywhere, so no curvature terms appear
//! for the activations; the L1 penalty likewise contributes nothing here.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::scalar::Real;

use super::ops::{check_model_inputs, forward_sample, leaky_deriv, sigmoid, Workspace};
use super::{Dataset, ModelSpec, ParamVector, RegNorm, RegSpec};

/// Hessian-vector product, poison-feature mixed product, and λ mixed product
/// from a single shared pass.
#[derive(Debug, Clone)]
pub struct SecondOrderProducts<T> {
    /// `(∇²_w L) v` including the penalty curvature.
    pub hvp: ParamVector<T>,
    /// `∇_{X_p} (vᵀ ∇_w L)`, one row per poison row.
    pub d_poison: DenseMatrix<T>,
    /// `∇_Λ (vᵀ ∇_w L)`, one entry per hyperparameter group (empty when the
    /// regularizer is inactive).
    pub d_lambda: Vec<T>,
}

/// Tangent propagation for one sample.
///
/// `weight_tangent`/`input_tangent` select the direction; `out_param_tangent`
/// accumulates the tangent of the parameter gradient, `out_input_tangent`
/// receives the tangent of the input-row gradient. `seed_scale` is the
/// per-sample weight in the mean loss (1/n).
#[allow(clippy::too_many_arguments)]
fn tangent_sample<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    x: &[T],
    y: T,
    seed_scale: T,
    ws: &mut Workspace<T>,
    weight_tangent: Option<&ParamVector<T>>,
    input_tangent: Option<&[T]>,
    out_param_tangent: Option<&mut ParamVector<T>>,
    out_input_tangent: Option<&mut [T]>,
) {
    let n_layers = spec.n_layers();
    let logit = forward_sample(spec, w, x, ws);

    // Tangent forward: rz_l = V_l prev + W_l rprev + c_l, ra_l = φ'(z_l) ⊙ rz_l.
    for l in 0..n_layers {
        let layer = w.layout().layers[l].clone();
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
        let weights = w.weights(l);
        for o in 0..out_dim {
            let mut acc = T::zero();
            if let Some(v) = weight_tangent {
                let vrow = &v.weights(l)[o * in_dim..(o + 1) * in_dim];
                let prev: &[T] = if l == 0 { x } else { &ws.a[l - 1] };
                for (vi, pi) in vrow.iter().zip(prev) {
                    acc = acc + *vi * *pi;
                }
                if layer.has_bias {
                    acc = acc + v.biases(l)[o];
                }
            }
            let wrow = &weights[o * in_dim..(o + 1) * in_dim];
            if l == 0 {
                if let Some(dx) = input_tangent {
                    for (wi, di) in wrow.iter().zip(dx) {
                        acc = acc + *wi * *di;
                    }
                }
            } else {
                for (wi, ri) in wrow.iter().zip(&ws.ra[l - 1]) {
                    acc = acc + *wi * *ri;
                }
            }
            ws.rz[l][o] = acc;
        }
        if l + 1 < n_layers {
            for o in 0..out_dim {
                ws.ra[l][o] = ws.rz[l][o] * leaky_deriv(ws.z[l][o], spec.leaky_slope);
            }
        }
    }

    // Seeds: δ = (σ(z) - y) / n, rδ = σ'(z) rz / n.
    let s = sigmoid(logit);
    ws.delta[n_layers - 1][0] = (s - y) * seed_scale;
    ws.rdelta[n_layers - 1][0] = s * (T::one() - s) * ws.rz[n_layers - 1][0] * seed_scale;

    let mut out_param_tangent = out_param_tangent;
    for l in (0..n_layers).rev() {
        let layer = w.layout().layers[l].clone();
        let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);

        if let Some(out) = out_param_tangent.as_deref_mut() {
            // r(∇W_l) = rδ_l ⊗ prev + δ_l ⊗ rprev ; r(∇b_l) = rδ_l.
            for o in 0..out_dim {
                let rd = ws.rdelta[l][o];
                let d = ws.delta[l][o];
                let grow = &mut out.data_mut()
                    [layer.weight_start + o * in_dim..layer.weight_start + (o + 1) * in_dim];
                if l == 0 {
                    for (i, g) in grow.iter_mut().enumerate() {
                        let mut acc = rd * x[i];
                        if let Some(dx) = input_tangent {
                            acc = acc + d * dx[i];
                        }
                        *g = *g + acc;
                    }
                } else {
                    for (i, g) in grow.iter_mut().enumerate() {
                        *g = *g + rd * ws.a[l - 1][i] + d * ws.ra[l - 1][i];
                    }
                }
                if layer.has_bias {
                    out.data_mut()[layer.bias_start + o] = out.data_mut()[layer.bias_start + o] + rd;
                }
            }
        }

        let weights = w.weights(l);
        if l > 0 {
            // δ_{l-1} and rδ_{l-1}; the V' δ term only exists with a weight tangent.
            for i in 0..in_dim {
                let mut acc_d = T::zero();
                let mut acc_rd = T::zero();
                for o in 0..out_dim {
                    acc_d = acc_d + weights[o * in_dim + i] * ws.delta[l][o];
                    acc_rd = acc_rd + weights[o * in_dim + i] * ws.rdelta[l][o];
                }
                if let Some(v) = weight_tangent {
                    let vw = v.weights(l);
                    for o in 0..out_dim {
                        acc_rd = acc_rd + vw[o * in_dim + i] * ws.delta[l][o];
                    }
                }
                let phi = leaky_deriv(ws.z[l - 1][i], spec.leaky_slope);
                ws.delta[l - 1][i] = acc_d * phi;
                ws.rdelta[l - 1][i] = acc_rd * phi;
            }
        } else if let Some(gx) = out_input_tangent {
            // r(∇_x) = W_0' rδ_0 + V_0' δ_0.
            for (i, g) in gx.iter_mut().enumerate() {
                let mut acc = T::zero();
                for o in 0..out_dim {
                    acc = acc + weights[o * in_dim + i] * ws.rdelta[0][o];
                }
                if let Some(v) = weight_tangent {
                    let vw = v.weights(0);
                    for o in 0..out_dim {
                        acc = acc + vw[o * in_dim + i] * ws.delta[0][o];
                    }
                }
                *g = acc;
            }
            break;
        }
    }
}

fn add_penalty_curvature<T: Real>(
    w: &ParamVector<T>,
    reg: &RegSpec<T>,
    n_train: usize,
    v: &ParamVector<T>,
    out: &mut ParamVector<T>,
) {
    // L2 penalty has Hessian (e^{λ_g}/n) I on its group; L1 is
    // curvature-free a.e.
    if reg.norm != RegNorm::L2 {
        return;
    }
    let n_layers = w.layout().layers.len();
    for (g, layers) in reg.group_layers(n_layers).iter().enumerate() {
        let scale = reg.lambdas[g].exp() / T::of(n_train as f64);
        for &l in layers {
            let layer = w.layout().layers[l].clone();
            for idx in layer.weight_start..layer.weight_start + layer.weight_len() {
                out.data_mut()[idx] = out.data_mut()[idx] + scale * v.data()[idx];
            }
            if reg.include_bias {
                for idx in layer.bias_start..layer.bias_start + layer.bias_len() {
                    out.data_mut()[idx] = out.data_mut()[idx] + scale * v.data()[idx];
                }
            }
        }
    }
}

fn check_tangent<T: Real>(w: &ParamVector<T>, v: &ParamVector<T>, context: &'static str) -> Result<()> {
    if v.len() != w.len() {
        return Err(Error::Shape {
            context,
            details: format!("tangent length {} vs parameter length {}", v.len(), w.len()),
        });
    }
    Ok(())
}

fn check_poison_rows<T: Real>(data: &Dataset<T>, rows: &[usize]) -> Result<()> {
    for &r in rows {
        if r >= data.n() {
            return Err(Error::IndexOutOfRange { index: r, len: data.n() });
        }
    }
    Ok(())
}

/// Exact `(∇²_w L) v` for the regularized training loss.
pub fn hvp_w<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    data: &Dataset<T>,
    reg: &RegSpec<T>,
    v: &ParamVector<T>,
) -> Result<ParamVector<T>> {
    check_model_inputs(spec, w, data.m(), "hvp_w")?;
    check_tangent(w, v, "hvp_w")?;
    reg.validate_for(spec.n_layers())?;
    let mut ws = Workspace::new(spec);
    let mut out = ParamVector::zeros(w.layout().clone());
    let scale = T::one() / T::of(data.n() as f64);
    for i in 0..data.n() {
        tangent_sample(
            spec,
            w,
            data.x().row(i),
            data.label_real(i),
            scale,
            &mut ws,
            Some(v),
            None,
            Some(&mut out),
            None,
        );
    }
    add_penalty_curvature(w, reg, data.n(), v, &mut out);
    Ok(out)
}

/// Exact `∇_{X_p} (vᵀ ∇_w L)`: rows ordered as `poison_rows`. Only the poison
/// samples' own loss terms depend on their features, so only those rows are
/// visited.
pub fn mixed_hvp_poison<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    train: &Dataset<T>,
    poison_rows: &[usize],
    v: &ParamVector<T>,
) -> Result<DenseMatrix<T>> {
    check_model_inputs(spec, w, train.m(), "mixed_hvp_poison")?;
    check_tangent(w, v, "mixed_hvp_poison")?;
    check_poison_rows(train, poison_rows)?;
    let mut ws = Workspace::new(spec);
    let mut out = DenseMatrix::zeros(poison_rows.len(), train.m());
    let scale = T::one() / T::of(train.n() as f64);
    for (slot, &row) in poison_rows.iter().enumerate() {
        tangent_sample(
            spec,
            w,
            train.x().row(row),
            train.label_real(row),
            scale,
            &mut ws,
            Some(v),
            None,
            None,
            Some(out.row_mut(slot)),
        );
    }
    Ok(out)
}

/// Exact `∇_Λ (vᵀ ∇_w L)`: component `g` is `(e^{λ_g}/n) (w_gᵀ v_g)` for L2
/// and `(e^{λ_g}/n) (sign(w_g)ᵀ v_g)` for L1.
pub fn mixed_hvp_lambda<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    reg: &RegSpec<T>,
    v: &ParamVector<T>,
    n_train: usize,
) -> Result<Vec<T>> {
    if !reg.is_active() {
        return Err(Error::NoRegularizer);
    }
    check_tangent(w, v, "mixed_hvp_lambda")?;
    reg.validate_for(spec.n_layers())?;
    let n_layers = w.layout().layers.len();
    let mut out = Vec::with_capacity(reg.group_count());
    for (g, layers) in reg.group_layers(n_layers).iter().enumerate() {
        let scale = reg.lambdas[g].exp() / T::of(n_train as f64);
        let mut acc = T::zero();
        for &l in layers {
            for (&wi, &vi) in w.weights(l).iter().zip(v.weights(l)) {
                acc = acc + pen_grad_term(reg.norm, wi) * vi;
            }
            if reg.include_bias {
                for (&wi, &vi) in w.biases(l).iter().zip(v.biases(l)) {
                    acc = acc + pen_grad_term(reg.norm, wi) * vi;
                }
            }
        }
        out.push(scale * acc);
    }
    Ok(out)
}

fn pen_grad_term<T: Real>(norm: RegNorm, w: T) -> T {
    match norm {
        RegNorm::L2 => w,
        RegNorm::L1 => {
            if w > T::zero() {
                T::one()
            } else if w < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        }
        RegNorm::None => T::zero(),
    }
}

/// Forward-mode mixed product `(∂∇_w L / ∂X_p) dX_p`: the tangent of the
/// parameter gradient when poison rows move along `dxp`.
pub fn mixed_poison_forward<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    train: &Dataset<T>,
    poison_rows: &[usize],
    dxp: &DenseMatrix<T>,
) -> Result<ParamVector<T>> {
    check_model_inputs(spec, w, train.m(), "mixed_poison_forward")?;
    check_poison_rows(train, poison_rows)?;
    if dxp.shape() != (poison_rows.len(), train.m()) {
        return Err(Error::Shape {
            context: "mixed_poison_forward",
            details: format!(
                "tangent shape {:?} vs ({}, {})",
                dxp.shape(),
                poison_rows.len(),
                train.m()
            ),
        });
    }
    let mut ws = Workspace::new(spec);
    let mut out = ParamVector::zeros(w.layout().clone());
    let scale = T::one() / T::of(train.n() as f64);
    for (slot, &row) in poison_rows.iter().enumerate() {
        tangent_sample(
            spec,
            w,
            train.x().row(row),
            train.label_real(row),
            scale,
            &mut ws,
            None,
            Some(dxp.row(slot)),
            Some(&mut out),
            None,
        );
    }
    Ok(out)
}

/// Forward-mode mixed product for λ: `Σ_g dλ_g (e^{λ_g}/n) pen'(w_g)`.
pub fn mixed_lambda_forward<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    reg: &RegSpec<T>,
    dlambda: &[T],
    n_train: usize,
) -> Result<ParamVector<T>> {
    if !reg.is_active() {
        return Err(Error::NoRegularizer);
    }
    reg.validate_for(spec.n_layers())?;
    if dlambda.len() != reg.group_count() {
        return Err(Error::Shape {
            context: "mixed_lambda_forward",
            details: format!("tangent length {} vs {} groups", dlambda.len(), reg.group_count()),
        });
    }
    let n_layers = w.layout().layers.len();
    let mut out = ParamVector::zeros(w.layout().clone());
    for (g, layers) in reg.group_layers(n_layers).iter().enumerate() {
        let scale = dlambda[g] * reg.lambdas[g].exp() / T::of(n_train as f64);
        for &l in layers {
            let layer = w.layout().layers[l].clone();
            for idx in layer.weight_start..layer.weight_start + layer.weight_len() {
                out.data_mut()[idx] =
                    out.data_mut()[idx] + scale * pen_grad_term(reg.norm, w.data()[idx]);
            }
            if reg.include_bias {
                for idx in layer.bias_start..layer.bias_start + layer.bias_len() {
                    out.data_mut()[idx] =
                        out.data_mut()[idx] + scale * pen_grad_term(reg.norm, w.data()[idx]);
                }
            }
        }
    }
    Ok(out)
}

/// One shared pass computing everything the reverse-mode backward step needs:
/// Hessian-vector product over all samples, the poison-row mixed product, and
/// the λ mixed product.
pub fn second_order_products<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    train: &Dataset<T>,
    reg: &RegSpec<T>,
    poison_rows: &[usize],
    v: &ParamVector<T>,
) -> Result<SecondOrderProducts<T>> {
    check_model_inputs(spec, w, train.m(), "second_order_products")?;
    check_tangent(w, v, "second_order_products")?;
    check_poison_rows(train, poison_rows)?;
    reg.validate_for(spec.n_layers())?;

    let slot_of: HashMap<usize, usize> = poison_rows
        .iter()
        .enumerate()
        .map(|(slot, &row)| (row, slot))
        .collect();

    let mut ws = Workspace::new(spec);
    let mut hvp = ParamVector::zeros(w.layout().clone());
    let mut d_poison = DenseMatrix::zeros(poison_rows.len(), train.m());
    let scale = T::one() / T::of(train.n() as f64);

    for i in 0..train.n() {
        let input_grad: Option<&mut [T]> = match slot_of.get(&i) {
            Some(&slot) => Some(d_poison.row_mut(slot)),
            None => None,
        };
        tangent_sample(
            spec,
            w,
            train.x().row(i),
            train.label_real(i),
            scale,
            &mut ws,
            Some(v),
            None,
            Some(&mut hvp),
            input_grad,
        );
    }
    add_penalty_curvature(w, reg, train.n(), v, &mut hvp);

    let d_lambda = if reg.is_active() {
        mixed_hvp_lambda(spec, w, reg, v, train.n())?
    } else {
        Vec::new()
    };

    Ok(SecondOrderProducts {
        hvp,
        d_poison,
        d_lambda,
    })
}
