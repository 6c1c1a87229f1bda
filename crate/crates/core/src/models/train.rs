//! Full-batch gradient-descent training and parameter initialization.

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

use super::ops::grad_w;
use super::{Dataset, ModelKind, ModelSpec, ParamVector, RegSpec, TrainTrace};

/// Parameter initialization schemes.
pub enum InitScheme<'a> {
    Zeros,
    /// Xavier/Glorot uniform: weights in `±sqrt(6 / (fan_in + fan_out))`,
    /// biases set to `1e-2`.
    Xavier(&'a mut RngStream),
}

pub fn init_params<T: Real>(spec: &ModelSpec<T>, scheme: InitScheme<'_>) -> ParamVector<T> {
    let layout = spec.layout();
    let mut w = ParamVector::zeros(layout.clone());
    match scheme {
        InitScheme::Zeros => {}
        InitScheme::Xavier(rng) => {
            for l in 0..layout.layers.len() {
                let layer = layout.layers[l].clone();
                let bound = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
                for v in w.weights_mut(l) {
                    *v = T::of(rng.uniform(-bound, bound));
                }
                for b in w.biases_mut(l) {
                    *b = T::of(1e-2);
                }
            }
        }
    }
    w
}

/// Runs `steps` full-batch gradient-descent updates
/// `w ← w - eta * ∇_w L(train, reg, w)` and optionally records every state.
///
/// The recorded trace has `steps + 1` states, with `trace.states[0] == w0`
/// and the last state equal to the returned parameters.
pub fn sgd_train<T: Real>(
    spec: &ModelSpec<T>,
    data: &Dataset<T>,
    reg: &RegSpec<T>,
    w0: &ParamVector<T>,
    eta: T,
    steps: usize,
    record_trace: bool,
) -> Result<(ParamVector<T>, Option<TrainTrace<T>>)> {
    let eta_f = eta.to_f64().unwrap();
    if !(0.0..=1.0).contains(&eta_f) || eta_f == 0.0 {
        return Err(Error::Config(format!("learning rate {} outside (0, 1]", eta_f)));
    }
    let mut w = w0.clone();
    let mut states = if record_trace {
        let mut s = Vec::with_capacity(steps + 1);
        s.push(w.clone());
        Some(s)
    } else {
        None
    };
    for t in 0..steps {
        let grad = grad_w(spec, &w, data, reg, true)?;
        if !grad.all_finite() {
            return Err(Error::NonFiniteAt {
                context: "sgd_train gradient",
                iteration: t,
            });
        }
        w.add_scaled(-eta, &grad);
        if let Some(s) = states.as_mut() {
            s.push(w.clone());
        }
    }
    let trace = states.map(|states| TrainTrace { states, eta });
    Ok((w, trace))
}

/// Standard evaluation training: zeros init for logistic regression, Xavier
/// for MLPs, then full-batch descent with the given settings.
pub fn train_model<T: Real>(
    spec: &ModelSpec<T>,
    data: &Dataset<T>,
    reg: &RegSpec<T>,
    eta: T,
    epochs: usize,
    rng: &mut RngStream,
) -> Result<ParamVector<T>> {
    let w0 = match spec.kind {
        ModelKind::Logistic => init_params(spec, InitScheme::Zeros),
        ModelKind::Mlp => init_params(spec, InitScheme::Xavier(rng)),
    };
    let (w, _) = sgd_train(spec, data, reg, &w0, eta, epochs, false)?;
    Ok(w)
}
