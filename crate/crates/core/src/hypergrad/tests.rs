use approx::assert_relative_eq;

use crate::error::Error;
use crate::models::{
    grad_w, init_params, sgd_train, Dataset, FeatureBounds, InitScheme, ModelSpec, ParamLayout,
    ParamVector, RegSpec,
};
use crate::numerics::{DenseMatrix, RngStream};

use super::*;

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

pub(crate) fn scalar_param(v: f64) -> ParamVector<f64> {
    ParamVector::from_data(ParamLayout::flat(1), vec![v]).unwrap()
}

/// Inner loss ½(w - x_p)² + (e^λ / 2) w², outer objective c · ½ w².
/// Either outer block can be switched off. Closed forms:
/// w* = x_p / (1 + e^λ), dA/dx_p = c w* / (1 + e^λ), dA/dλ = -c e^λ w*² / (1 + e^λ).
#[derive(Debug, Clone)]
pub(crate) struct QuadraticToy {
    pub(crate) x_p: f64,
    pub(crate) lambda: f64,
    pub(crate) with_poison: bool,
    pub(crate) with_lambda: bool,
    pub(crate) outer_scale: f64,
}

impl QuadraticToy {
    pub(crate) fn poison_only(x_p: f64) -> Self {
        Self {
            x_p,
            lambda: 0.0,
            with_poison: true,
            with_lambda: false,
            outer_scale: 1.0,
        }
    }

    pub(crate) fn lambda_only(lambda: f64) -> Self {
        Self {
            // x_p = 1 and no e^λ-free coupling gives inner loss ½(w-1)² + (e^λ/2)w².
            x_p: 1.0,
            lambda,
            with_poison: false,
            with_lambda: true,
            outer_scale: 1.0,
        }
    }

    pub(crate) fn full(x_p: f64, lambda: f64) -> Self {
        Self {
            x_p,
            lambda,
            with_poison: true,
            with_lambda: true,
            outer_scale: 1.0,
        }
    }

    pub(crate) fn w_star(&self) -> f64 {
        self.x_p / (1.0 + self.lambda.exp())
    }
}

impl BilevelProblem<f64> for QuadraticToy {
    fn zero_params(&self) -> ParamVector<f64> {
        scalar_param(0.0)
    }

    fn poison_shape(&self) -> (usize, usize) {
        if self.with_poison {
            (1, 1)
        } else {
            (0, 1)
        }
    }

    fn lambda_dim(&self) -> usize {
        usize::from(self.with_lambda)
    }

    fn poison_features(&self) -> DenseMatrix<f64> {
        if self.with_poison {
            DenseMatrix::new(1, 1, vec![self.x_p]).unwrap()
        } else {
            DenseMatrix::zeros(0, 1)
        }
    }

    fn lambda_values(&self) -> Vec<f64> {
        if self.with_lambda {
            vec![self.lambda]
        } else {
            Vec::new()
        }
    }

    fn set_poison_features(&mut self, xp: &DenseMatrix<f64>) -> crate::Result<()> {
        if self.with_poison {
            self.x_p = xp.get(0, 0);
        }
        Ok(())
    }

    fn set_lambda_values(&mut self, lambdas: &[f64]) -> crate::Result<()> {
        if self.with_lambda {
            self.lambda = lambdas[0];
        }
        Ok(())
    }

    fn train_grad(&self, w: &ParamVector<f64>) -> crate::Result<ParamVector<f64>> {
        let w0 = w.data()[0];
        Ok(scalar_param((w0 - self.x_p) + self.lambda.exp() * w0))
    }

    fn train_hvp(&self, _w: &ParamVector<f64>, v: &ParamVector<f64>) -> crate::Result<ParamVector<f64>> {
        Ok(scalar_param((1.0 + self.lambda.exp()) * v.data()[0]))
    }

    fn mixed_poison_transposed(
        &self,
        _w: &ParamVector<f64>,
        v: &ParamVector<f64>,
    ) -> crate::Result<DenseMatrix<f64>> {
        if self.with_poison {
            Ok(DenseMatrix::new(1, 1, vec![-v.data()[0]]).unwrap())
        } else {
            Ok(DenseMatrix::zeros(0, 1))
        }
    }

    fn mixed_lambda_transposed(
        &self,
        w: &ParamVector<f64>,
        v: &ParamVector<f64>,
    ) -> crate::Result<Vec<f64>> {
        Ok(vec![self.lambda.exp() * w.data()[0] * v.data()[0]])
    }

    fn mixed_poison_forward(
        &self,
        _w: &ParamVector<f64>,
        dxp: &DenseMatrix<f64>,
    ) -> crate::Result<ParamVector<f64>> {
        if self.with_poison {
            Ok(scalar_param(-dxp.get(0, 0)))
        } else {
            Ok(scalar_param(0.0))
        }
    }

    fn mixed_lambda_forward(
        &self,
        w: &ParamVector<f64>,
        dlambda: &[f64],
    ) -> crate::Result<ParamVector<f64>> {
        Ok(scalar_param(self.lambda.exp() * w.data()[0] * dlambda[0]))
    }

    fn outer_value(&self, w: &ParamVector<f64>) -> crate::Result<f64> {
        let w0 = w.data()[0];
        Ok(self.outer_scale * 0.5 * w0 * w0)
    }

    fn outer_grad(&self, w: &ParamVector<f64>) -> crate::Result<ParamVector<f64>> {
        Ok(scalar_param(self.outer_scale * w.data()[0]))
    }
}

// ---------------------------------------------------------------------------
// Closed-form toys
// ---------------------------------------------------------------------------

#[test]
fn rmd_scalar_poison_toy() {
    // Inner ½(w - x_p)², w0 = 0, η = 0.5, T = 1 ⇒ w(1) = x_p/2 and
    // dA/dx_p = x_p/4; at x_p = 2 the hypergradient is 0.5.
    let toy = QuadraticToy {
        lambda: -1e9, // e^λ = 0: pure ½(w - x_p)² inner loss
        ..QuadraticToy::poison_only(2.0)
    };
    let (hg, w_final) = rmd(&toy, &scalar_param(0.0), 0.5, 1).unwrap();
    assert_relative_eq!(w_final.data()[0], 1.0, max_relative = 1e-12);
    assert!((hg.d_poison.get(0, 0) - 0.5).abs() <= 1e-10);
    assert!(hg.d_lambda.is_empty());
}

#[test]
fn rmd_scalar_lambda_toy() {
    // Inner ½(w-1)² + (e^λ/2)w², w0 = 0, η = 1, T = 2 ⇒ w(2) = 1 - e^λ and
    // dA/dλ = (1 - e^λ)(-e^λ); at λ = ln 0.5 that is -0.25.
    let toy = QuadraticToy::lambda_only(0.5f64.ln());
    let (hg, w_final) = rmd(&toy, &scalar_param(0.0), 1.0, 2).unwrap();
    assert_relative_eq!(w_final.data()[0], 0.5, max_relative = 1e-12);
    assert!((hg.d_lambda[0] - (-0.25)).abs() <= 1e-10);
}

#[test]
fn rmd_zero_outer_gradient_gives_zero_hypergradients() {
    // x_p = 0 keeps every state at 0, so ∇_w A(w(T)) = 0.
    let toy = QuadraticToy::full(0.0, 0.3);
    let (hg, _) = rmd(&toy, &scalar_param(0.0), 0.5, 10).unwrap();
    assert_eq!(hg.d_poison.get(0, 0), 0.0);
    assert_eq!(hg.d_lambda[0], 0.0);
}

#[test]
fn implicit_quadratic_closed_forms() {
    // w* = x_p/(1+e^λ); at x_p = 2, λ = 0: dA/dx_p = 0.5, dA/dλ = -0.5.
    let toy = QuadraticToy::full(2.0, 0.0);
    let w_star = scalar_param(toy.w_star());
    let hg = implicit(&toy, &w_star, &ImplicitConfig::default()).unwrap();
    assert!((hg.d_poison.get(0, 0) - 0.5).abs() <= 1e-10);
    assert!((hg.d_lambda[0] - (-0.5)).abs() <= 1e-10);
}

#[test]
fn implicit_zero_outer_gradient() {
    let toy = QuadraticToy::full(0.0, 0.0);
    let hg = implicit(&toy, &scalar_param(0.0), &ImplicitConfig::default()).unwrap();
    assert_eq!(hg.d_poison.get(0, 0), 0.0);
    assert_eq!(hg.d_lambda[0], 0.0);
}

#[test]
fn implicit_rejects_non_stationary_point() {
    let toy = QuadraticToy::full(2.0, 0.0);
    let err = implicit(&toy, &scalar_param(0.0), &ImplicitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NotStationary { .. }));
}

#[test]
fn fmd_matches_rmd_on_toys() {
    for toy in [
        QuadraticToy::poison_only(2.0),
        QuadraticToy::lambda_only(0.5f64.ln()),
        QuadraticToy::full(1.5, -0.7),
    ] {
        let w0 = scalar_param(0.0);
        let (r, _) = rmd(&toy, &w0, 0.3, 7).unwrap();
        let f = fmd(&toy, &w0, 0.3, 7, DEFAULT_FMD_CAP).unwrap();
        assert!(rel_diff(&r.flatten(), &f.flatten()) <= 1e-12);
    }
}

#[test]
fn fmd_single_step_expansion() {
    // T = 1 with w0 fixed: dw(1)/dx_p = -η ∂²L/∂x_p∂w = η, so
    // dA/dx_p = η w(1) = η² x_p... with η = 0.5, x_p = 2: 0.5 * 1.0 = 0.5.
    let toy = QuadraticToy {
        lambda: -1e9,
        ..QuadraticToy::poison_only(2.0)
    };
    let f = fmd(&toy, &scalar_param(0.0), 0.5, 1, DEFAULT_FMD_CAP).unwrap();
    assert!((f.d_poison.get(0, 0) - 0.5).abs() <= 1e-12);
}

#[test]
fn fmd_cap_exceeded() {
    let toy = QuadraticToy::full(1.0, 0.0);
    let err = fmd(&toy, &scalar_param(0.0), 0.5, 3, 1).unwrap_err();
    assert!(matches!(err, Error::FmdCapExceeded { needed: 2, cap: 1 }));
}

#[test]
fn hypergradient_is_linear_in_outer_objective_scale() {
    let base = QuadraticToy::full(1.3, -0.2);
    let scaled = QuadraticToy {
        outer_scale: 3.75,
        ..base.clone()
    };
    let w0 = scalar_param(0.0);
    let (hg1, _) = rmd(&base, &w0, 0.4, 9).unwrap();
    let (hg2, _) = rmd(&scaled, &w0, 0.4, 9).unwrap();
    for (a, b) in hg1.flatten().iter().zip(hg2.flatten()) {
        assert!((a * 3.75 - b).abs() <= 1e-12);
    }
}

#[test]
fn fd_oracle_on_toys() {
    let mut toy = QuadraticToy::full(2.0, 0.1);
    let w0 = scalar_param(0.0);
    let (r, _) = rmd(&toy, &w0, 0.5, 40).unwrap();
    let fd = finite_diff(&mut toy, &w0, 0.5, 40, 1e-5).unwrap();
    assert!(rel_diff(&r.flatten(), &fd.flatten()) <= 1e-9);
    // the problem state is restored
    assert_eq!(toy.x_p, 2.0);
    assert_eq!(toy.lambda, 0.1);
}

// ---------------------------------------------------------------------------
// Model-backed instances
// ---------------------------------------------------------------------------

fn wide_bounds(m: usize) -> FeatureBounds<f64> {
    FeatureBounds::uniform(-100.0, 100.0, m).unwrap()
}

fn random_instance(
    n: usize,
    m: usize,
    rng: &mut RngStream,
) -> (Dataset<f64>, Dataset<f64>) {
    let make = |n: usize, rng: &mut RngStream| {
        let x = DenseMatrix::from_fn(n, m, |_, _| rng.uniform(-1.0, 1.0));
        let y: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        Dataset::new(x, y, wide_bounds(m)).unwrap()
    };
    (make(n, rng), make(n.max(4) / 2, rng))
}

#[test]
fn rmd_matches_fd_on_lr_instance() {
    let mut rng = RngStream::new(71);
    let (train, val) = random_instance(12, 3, &mut rng);
    let spec = ModelSpec::logistic(3);
    let reg = RegSpec::l2(-0.5);
    let rows = [1usize, 5];
    let w0 = init_params(&spec, InitScheme::Zeros);
    let (r, _) = rmd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.2, 50).unwrap();
    let fd = fd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.2, 50, 1e-5).unwrap();
    let err = rel_diff(&r.flatten(), &fd.flatten());
    assert!(err <= 1e-5, "rel err {}", err);
}

#[test]
fn rmd_matches_fd_on_mlp_instance() {
    let mut rng = RngStream::new(73);
    let (train, val) = random_instance(8, 3, &mut rng);
    let spec = ModelSpec::mlp(vec![3, 4, 1], 0.01).unwrap();
    let reg = RegSpec::l2(-1.0);
    let rows = [0usize, 4];
    let mut wrng = rng.derive("w0");
    let w0 = init_params(&spec, InitScheme::Xavier(&mut wrng));
    let (r, _) = rmd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.2, 30).unwrap();
    let fd = fd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.2, 30, 1e-5).unwrap();
    let err = rel_diff(&r.flatten(), &fd.flatten());
    assert!(err <= 1e-4, "rel err {}", err);
}

#[test]
fn fd_skips_lambda_block_without_regularizer() {
    let mut rng = RngStream::new(79);
    let (train, val) = random_instance(6, 2, &mut rng);
    let spec = ModelSpec::logistic(2);
    let w0 = init_params(&spec, InitScheme::Zeros);
    let fd = fd_hypergrad(&spec, &train, &[2], &RegSpec::none(), &val, &w0, 0.3, 10, 1e-5)
        .unwrap();
    assert!(fd.d_lambda.is_empty());
}

#[test]
fn fmd_agrees_with_rmd_on_lr_instance() {
    let mut rng = RngStream::new(83);
    let (train, val) = random_instance(10, 3, &mut rng);
    let spec = ModelSpec::logistic(3);
    let reg = RegSpec::l2(0.0);
    let rows = [2usize, 7];
    let w0 = init_params(&spec, InitScheme::Zeros);
    let (r, _) = rmd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.25, 40).unwrap();
    let f = fmd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.25, 40, 64).unwrap();
    let err = rel_diff(&r.flatten(), &f.flatten());
    assert!(err <= 1e-10, "rel err {}", err);
}

#[test]
fn implicit_agrees_with_rmd_at_convergence() {
    // Strongly convex LR + L2: train close to stationarity, then the
    // truncated-training derivative and the implicit one nearly coincide.
    let mut rng = RngStream::new(89);
    let (train, val) = random_instance(14, 3, &mut rng);
    let spec = ModelSpec::logistic(3);
    let reg = RegSpec::l2(0.0);
    let rows = [0usize, 9];
    let w0 = init_params(&spec, InitScheme::Zeros);

    let (w_star, _) = sgd_train(&spec, &train, &reg, &w0, 0.5, 4000, false).unwrap();
    let gnorm = grad_w(&spec, &w_star, &train, &reg, true).unwrap().norm2();
    assert!(gnorm <= 1e-9, "not converged: {}", gnorm);

    let (r, _) = rmd_hypergrad(&spec, &train, &rows, &reg, &val, &w0, 0.5, 4000).unwrap();
    let cfg = ImplicitConfig::default();
    let im = implicit_hypergrad(&spec, &train, &rows, &reg, &val, &w_star, &cfg).unwrap();
    let err = rel_diff(&r.flatten(), &im.flatten());
    assert!(err <= 1e-3, "rel err {}", err);
}

#[test]
fn unroll_trace_matches_sgd_train() {
    let mut rng = RngStream::new(97);
    let (train, val) = random_instance(9, 3, &mut rng);
    let spec = ModelSpec::logistic(3);
    let reg = RegSpec::l2(-2.0);
    let w0 = init_params(&spec, InitScheme::Zeros);
    let trace = unroll_training(&spec, &train, &[1], &reg, &val, &w0, 0.2, 15).unwrap();
    assert_eq!(trace.states.len(), 16);
    assert_eq!(trace.states[0].data(), w0.data());
    let (w, sgd_trace) = sgd_train(&spec, &train, &reg, &w0, 0.2, 15, true).unwrap();
    assert_eq!(trace.final_params().data(), w.data());
    for (a, b) in trace.states.iter().zip(&sgd_trace.unwrap().states) {
        assert_eq!(a.data(), b.data());
    }
}
