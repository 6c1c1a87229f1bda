//! The four hypergradient engines.

use crate::error::{Error, Result};
use crate::models::{ParamVector, TrainTrace};
use crate::numerics::{conjugate_gradient, CgConfig, DenseMatrix};
use crate::scalar::Real;

use super::{BilevelProblem, EngineKind, Hypergrad};

/// Unrolls `t` inner gradient-descent steps from `w0`, recording all states.
pub fn unroll<T: Real, P: BilevelProblem<T>>(
    problem: &P,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
) -> Result<TrainTrace<T>> {
    let mut states = Vec::with_capacity(t + 1);
    let mut w = w0.clone();
    states.push(w.clone());
    for step in 0..t {
        let g = problem.train_grad(&w)?;
        if !g.all_finite() {
            return Err(Error::NonFiniteAt {
                context: "unroll forward pass",
                iteration: step,
            });
        }
        w.add_scaled(-eta, &g);
        states.push(w.clone());
    }
    Ok(TrainTrace { states, eta })
}

/// Reverse-mode hypergradient: forward unroll, then backward accumulation
///
/// ```text
/// ∂w ← ∇_w A(w(T))
/// for t = T-1 .. 0:
///     ∂X_p ← ∂X_p - η (∇_{X_p}∇_w L(w(t)))ᵀ ∂w
///     ∂Λ   ← ∂Λ   - η (∇_Λ∇_w L(w(t)))ᵀ ∂w
///     ∂w   ← (I - η ∇²_w L(w(t))) ∂w
/// ```
///
/// Mixed products and the Hessian-vector product at step `t` both use the
/// incoming `∂w`, matching the chain-rule expansion of the unrolled updates.
/// Returns the hypergradient together with the trained parameters `w(T)`.
pub fn rmd<T: Real, P: BilevelProblem<T>>(
    problem: &P,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
) -> Result<(Hypergrad<T>, ParamVector<T>)> {
    let trace = unroll(problem, w0, eta, t)?;
    let (hg, w_final) = rmd_with_trace(problem, &trace)?;
    Ok((hg, w_final))
}

/// Backward pass of [`rmd`] over an existing trace.
pub fn rmd_with_trace<T: Real, P: BilevelProblem<T>>(
    problem: &P,
    trace: &TrainTrace<T>,
) -> Result<(Hypergrad<T>, ParamVector<T>)> {
    let t = trace.steps();
    let eta = trace.eta;
    let w_final = trace.final_params().clone();
    let (n_p, m) = problem.poison_shape();
    let h = problem.lambda_dim();

    let mut pw = problem.outer_grad(&w_final)?;
    let mut d_poison = DenseMatrix::zeros(n_p, m);
    let mut d_lambda = vec![T::zero(); h];

    for step in (0..t).rev() {
        let w = &trace.states[step];
        let products = problem.second_order_products(w, &pw)?;
        d_poison.add_scaled(-eta, &products.d_poison)?;
        for (dl, &g) in d_lambda.iter_mut().zip(&products.d_lambda) {
            *dl = *dl - eta * g;
        }
        pw.add_scaled(-eta, &products.hvp);
        if !pw.all_finite() {
            return Err(Error::NonFiniteAt {
                context: "rmd backward pass",
                iteration: step,
            });
        }
    }

    Ok((
        Hypergrad {
            d_poison,
            d_lambda,
            engine: EngineKind::Rmd,
            t_used: t,
        },
        w_final,
    ))
}

/// Forward-mode hypergradient: propagates one tangent column per outer
/// variable alongside training. Cost grows with `n_p m + h`, so the outer
/// dimension is capped; exceeding the cap is an error directing callers to
/// reverse mode.
pub fn fmd<T: Real, P: BilevelProblem<T>>(
    problem: &P,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
    outer_dim_cap: usize,
) -> Result<Hypergrad<T>> {
    let (n_p, m) = problem.poison_shape();
    let h = problem.lambda_dim();
    let q = n_p * m + h;
    if q > outer_dim_cap {
        return Err(Error::FmdCapExceeded {
            needed: q,
            cap: outer_dim_cap,
        });
    }
    if t == 0 {
        return Err(Error::Config("forward-mode accumulation needs t >= 1".into()));
    }

    let trace = unroll(problem, w0, eta, t)?;
    // Tangent columns dw/d(outer_j); w0 does not depend on the outer
    // variables, so they start at zero.
    let mut columns: Vec<ParamVector<T>> = (0..q).map(|_| problem.zero_params()).collect();

    for step in 0..t {
        let w = &trace.states[step];
        for (j, col) in columns.iter_mut().enumerate() {
            let hv = problem.train_hvp(w, col)?;
            let direct = if j < n_p * m {
                let mut unit = DenseMatrix::zeros(n_p, m);
                unit.data_mut()[j] = T::one();
                problem.mixed_poison_forward(w, &unit)?
            } else {
                let mut unit = vec![T::zero(); h];
                unit[j - n_p * m] = T::one();
                problem.mixed_lambda_forward(w, &unit)?
            };
            // col ← col - η (∇²_w L · col + ∂∇_w L/∂outer_j)
            col.add_scaled(-eta, &hv);
            col.add_scaled(-eta, &direct);
        }
    }

    let outer_grad = problem.outer_grad(trace.final_params())?;
    let mut d_poison = DenseMatrix::zeros(n_p, m);
    let mut d_lambda = vec![T::zero(); h];
    for (j, col) in columns.iter().enumerate() {
        let g = col.dot(&outer_grad);
        if j < n_p * m {
            d_poison.data_mut()[j] = g;
        } else {
            d_lambda[j - n_p * m] = g;
        }
    }

    Ok(Hypergrad {
        d_poison,
        d_lambda,
        engine: EngineKind::Fmd,
        t_used: t,
    })
}

/// Settings for the stationarity-based engine.
#[derive(Debug, Clone)]
pub struct ImplicitConfig<T> {
    pub cg: CgConfig<T>,
    /// Maximum allowed `||∇_w L(w_star)||`. Callers with a meaningful scale
    /// should use [`ImplicitConfig::with_reference_grad_norm`].
    pub stationarity_tol: T,
}

impl<T: Real> Default for ImplicitConfig<T> {
    fn default() -> Self {
        Self {
            cg: CgConfig::default(),
            stationarity_tol: T::of(1e-6),
        }
    }
}

impl<T: Real> ImplicitConfig<T> {
    /// Scales the stationarity tolerance as `1e-6 (1 + ||∇_w L(w0)||)` given
    /// the gradient norm at the training start point.
    pub fn with_reference_grad_norm(mut self, grad_norm_at_w0: T) -> Self {
        self.stationarity_tol = T::of(1e-6) * (T::one() + grad_norm_at_w0);
        self
    }
}

/// Implicit hypergradient at a stationary point `w_star`:
/// solve `(∇²_w L) v = ∇_w A`, then `∇ A = -(mixed products)ᵀ v`.
pub fn implicit<T: Real, P: BilevelProblem<T>>(
    problem: &P,
    w_star: &ParamVector<T>,
    config: &ImplicitConfig<T>,
) -> Result<Hypergrad<T>> {
    let grad = problem.train_grad(w_star)?;
    let grad_norm = grad.norm2();
    if grad_norm > config.stationarity_tol {
        return Err(Error::NotStationary {
            grad_norm: grad_norm.to_f64().unwrap(),
            tol: config.stationarity_tol.to_f64().unwrap(),
        });
    }

    let outer_grad = problem.outer_grad(w_star)?;
    let layout_template = w_star.clone();
    let apply = |x: &[T]| -> Vec<T> {
        let mut v = layout_template.clone();
        v.data_mut().copy_from_slice(x);
        match problem.train_hvp(w_star, &v) {
            Ok(hv) => hv.data().to_vec(),
            // Poisoned by NaN so the solver aborts with a non-finite error.
            Err(_) => vec![T::nan(); x.len()],
        }
    };
    let solution = conjugate_gradient(apply, outer_grad.data(), &config.cg)?;
    if !solution.converged {
        return Err(Error::CgNoConvergence {
            iterations: solution.iterations,
            rel_residual: solution.rel_residual.to_f64().unwrap(),
        });
    }
    let mut v = w_star.clone();
    v.data_mut().copy_from_slice(&solution.x);

    let mut d_poison = problem.mixed_poison_transposed(w_star, &v)?;
    d_poison.scale(-T::one());
    let d_lambda = if problem.lambda_dim() > 0 {
        problem
            .mixed_lambda_transposed(w_star, &v)?
            .into_iter()
            .map(|g| -g)
            .collect()
    } else {
        Vec::new()
    };

    Ok(Hypergrad {
        d_poison,
        d_lambda,
        engine: EngineKind::Implicit,
        t_used: 0,
    })
}

/// Central-difference oracle: re-runs the unrolled training per perturbed
/// outer coordinate. Restores the problem state before returning.
pub fn finite_diff<T: Real, P: BilevelProblem<T>>(
    problem: &mut P,
    w0: &ParamVector<T>,
    eta: T,
    t: usize,
    step: T,
) -> Result<Hypergrad<T>> {
    let (n_p, m) = problem.poison_shape();
    let h = problem.lambda_dim();
    let xp0 = problem.poison_features();
    let lambda0 = problem.lambda_values();

    let mut d_poison = DenseMatrix::zeros(n_p, m);
    let mut d_lambda = vec![T::zero(); h];

    let eval = |problem: &P| -> Result<T> {
        let trace = unroll(problem, w0, eta, t)?;
        problem.outer_value(trace.final_params())
    };

    for j in 0..n_p * m {
        let mut xp = xp0.clone();
        xp.data_mut()[j] = xp0.data()[j] + step;
        problem.set_poison_features(&xp)?;
        let plus = eval(problem)?;
        xp.data_mut()[j] = xp0.data()[j] - step;
        problem.set_poison_features(&xp)?;
        let minus = eval(problem)?;
        d_poison.data_mut()[j] = (plus - minus) / (T::of(2.0) * step);
    }
    problem.set_poison_features(&xp0)?;

    for g in 0..h {
        let mut l = lambda0.clone();
        l[g] = lambda0[g] + step;
        problem.set_lambda_values(&l)?;
        let plus = eval(problem)?;
        l[g] = lambda0[g] - step;
        problem.set_lambda_values(&l)?;
        let minus = eval(problem)?;
        d_lambda[g] = (plus - minus) / (T::of(2.0) * step);
    }
    problem.set_lambda_values(&lambda0)?;

    Ok(Hypergrad {
        d_poison,
        d_lambda,
        engine: EngineKind::FiniteDiff,
        t_used: t,
    })
}
