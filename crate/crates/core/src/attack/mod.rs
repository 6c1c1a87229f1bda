//! The multiobjective poisoning attack.
//!
//! Outer loop per hyperiteration: one reverse-mode pass yields both
//! hypergradients, then the poison features take a projected *ascent* step
//! (the attacker maximizes validation loss) while the log-regularization
//! hyperparameters take a projected *descent* step (the defender minimizes
//! it). Labels of poisoning points are flipped once at initialization and
//! never change. Poisoning fractions are simulated cumulatively: each
//! optimized batch is frozen, the next batch replaces further clean rows,
//! and λ restarts from its initial value.

mod run;
mod search;

pub use run::{run_attack, run_hyperlearn, AttackResult, FractionResult, HyperlearnResult};
pub use search::{grid_search_lambda, kfold_cv_lambda, GridSearchOutcome, TrainSettings};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::hypergrad::{rmd, BilevelProblem, Hypergrad};
use crate::models::{Dataset, FeatureBounds, ParamVector};
use crate::numerics::{clip_in_place, DenseMatrix, RngStream};
use crate::scalar::Real;

/// A batch of poisoning points: features being optimized, their fixed
/// flipped labels, the clean training rows they replace, and the feasible
/// feature box.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonSet<T> {
    pub features: DenseMatrix<T>,
    pub labels: Vec<u8>,
    pub indices: Vec<usize>,
    pub domain: FeatureBounds<T>,
}

impl<T: Real> PoisonSet<T> {
    /// Empty batch (used by hyperparameter-only optimization).
    pub fn empty(m: usize, domain: FeatureBounds<T>) -> Self {
        Self {
            features: DenseMatrix::zeros(0, m),
            labels: Vec::new(),
            indices: Vec::new(),
            domain,
        }
    }

    pub fn n_points(&self) -> usize {
        self.indices.len()
    }

    pub fn is_feasible(&self) -> bool {
        (0..self.features.rows()).all(|i| self.domain.contains_row(self.features.row(i)))
    }

    /// Clips every row into the feasible box.
    pub fn project(&mut self) {
        for i in 0..self.features.rows() {
            let row = self.features.row_mut(i);
            let _ = i;
            clip_in_place(row, self.domain.lo(), self.domain.hi()).expect("validated domain");
        }
    }
}

/// Settings for the outer optimization.
#[derive(Debug, Clone)]
pub struct AttackConfig<T> {
    /// Hyperiterations per poison batch.
    pub hyper_iters: usize,
    /// Outer step size.
    pub alpha: T,
    /// Unrolled inner iterations per hypergradient.
    pub inner_steps: usize,
    /// Inner learning rate.
    pub eta: T,
    /// Feasible interval for every λ group.
    pub lambda_bounds: (T, T),
    /// Value λ restarts from whenever a new batch begins.
    pub lambda_init: T,
    /// Whether λ is updated at all (off reproduces fixed-λ attacks).
    pub learn_lambda: bool,
    /// Poisoning fractions to simulate cumulatively; non-decreasing, first 0.
    pub fraction_schedule: Vec<f64>,
    /// Points optimized simultaneously; `None` optimizes each fraction
    /// increment as one batch, otherwise must divide every increment.
    pub poison_batch: Option<usize>,
    /// Scale the poison hypergradient to unit Frobenius norm before stepping.
    pub normalize_xp_grad: bool,
    /// Replace each λ hypergradient component by its sign before stepping.
    pub lambda_sign_update: bool,
    pub seed: u64,
}

impl<T: Real> AttackConfig<T> {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        let alpha = self.alpha.to_f64().unwrap();
        if !(0.0..=1.0).contains(&alpha) || alpha == 0.0 {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", alpha)));
        }
        if self.lambda_bounds.0 > self.lambda_bounds.1 {
            return Err(Error::Config("lambda bounds crossed".into()));
        }
        if self.fraction_schedule.is_empty() {
            return Err(Error::Config("empty fraction schedule".into()));
        }
        if self.fraction_schedule[0] != 0.0 {
            return Err(Error::Config("fraction schedule must start at 0".into()));
        }
        let mut prev_count = 0usize;
        for &f in &self.fraction_schedule {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("fraction {} outside [0, 1]", f)));
            }
            let count = fraction_count(f, n_train);
            if count < prev_count {
                return Err(Error::Config("fraction schedule must be non-decreasing".into()));
            }
            let increment = count - prev_count;
            if let Some(batch) = self.poison_batch {
                if batch == 0 {
                    return Err(Error::Config("poison batch must be positive".into()));
                }
                if increment % batch != 0 {
                    return Err(Error::Config(format!(
                        "batch size {} does not divide increment {}",
                        batch, increment
                    )));
                }
            }
            prev_count = count;
        }
        if prev_count > n_train {
            return Err(Error::Config("schedule exceeds the training set".into()));
        }
        Ok(())
    }
}

pub(crate) fn fraction_count(fraction: f64, n_train: usize) -> usize {
    (fraction * n_train as f64).round() as usize
}

/// Samples `n_p` distinct training rows (uniformly over subsets), clones
/// their features, flips their labels, and projects the clones into the
/// feasible box.
pub fn init_poison<T: Real>(
    train: &Dataset<T>,
    n_p: usize,
    rng: &mut RngStream,
) -> Result<PoisonSet<T>> {
    init_poison_excluding(train, n_p, &HashSet::new(), rng)
}

/// [`init_poison`] restricted to rows not in `exclude` (rows already
/// replaced by earlier batches).
pub fn init_poison_excluding<T: Real>(
    train: &Dataset<T>,
    n_p: usize,
    exclude: &HashSet<usize>,
    rng: &mut RngStream,
) -> Result<PoisonSet<T>> {
    let pool: Vec<usize> = (0..train.n()).filter(|i| !exclude.contains(i)).collect();
    if n_p > pool.len() {
        return Err(Error::InsufficientSamples(format!(
            "{} poisons requested, {} clean rows available",
            n_p,
            pool.len()
        )));
    }
    let indices = rng.distinct_from(&pool, n_p)?;
    let mut features = DenseMatrix::zeros(n_p, train.m());
    let mut labels = Vec::with_capacity(n_p);
    for (slot, &row) in indices.iter().enumerate() {
        features.row_mut(slot).copy_from_slice(train.x().row(row));
        labels.push(1 - train.y()[row]);
    }
    let mut set = PoisonSet {
        features,
        labels,
        indices,
        domain: train.bounds().clone(),
    };
    set.project();
    Ok(set)
}

/// Projection onto a per-feature box (delegates to element-wise clipping).
pub fn project_features<T: Real>(xp: &mut DenseMatrix<T>, domain: &FeatureBounds<T>) -> Result<()> {
    for i in 0..xp.rows() {
        clip_in_place(xp.row_mut(i), domain.lo(), domain.hi())?;
    }
    Ok(())
}

/// Projection of λ onto its interval.
pub fn project_lambdas<T: Real>(lambdas: &mut [T], bounds: (T, T)) -> Result<()> {
    clip_in_place(lambdas, &[bounds.0], &[bounds.1])
}

/// Per-hyperiteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperIterRecord<T> {
    /// Outer objective at the trained parameters of this pass (before the
    /// update it produced).
    pub outer_loss: T,
    /// Frobenius norm of the raw poison hypergradient.
    pub xp_grad_norm: T,
    /// λ after the update.
    pub lambdas: Vec<T>,
    /// Post-projection feasibility checks; both must always hold.
    pub xp_feasible: bool,
    pub lambda_feasible: bool,
}

fn sign_of<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// One hyperiteration: a single reverse-mode pass, then the simultaneous
/// projected ascent step on the poison features and descent step on λ. The
/// problem's training rows are refreshed with the updated features.
pub fn attack_step<T: Real, P: BilevelProblem<T>>(
    problem: &mut P,
    poison: &mut PoisonSet<T>,
    lambdas: &mut [T],
    config: &AttackConfig<T>,
    w0: &ParamVector<T>,
) -> Result<HyperIterRecord<T>> {
    let (hg, w_final): (Hypergrad<T>, _) = rmd(problem, w0, config.eta, config.inner_steps)?;
    if !hg.all_finite() {
        return Err(Error::NonFinite {
            context: "attack_step hypergradient".into(),
        });
    }
    let outer_loss = problem.outer_value(&w_final)?;

    let xp_grad_norm = hg.d_poison.frobenius_norm();
    if poison.n_points() > 0 {
        let mut step = hg.d_poison;
        if config.normalize_xp_grad && xp_grad_norm >= T::of(1e-12) {
            step.scale(T::one() / xp_grad_norm);
        }
        // Ascent on the outer objective.
        poison.features.add_scaled(config.alpha, &step)?;
        poison.project();
        problem.set_poison_features(&poison.features)?;
    }

    if config.learn_lambda && !lambdas.is_empty() {
        for (l, &g) in lambdas.iter_mut().zip(&hg.d_lambda) {
            let update = if config.lambda_sign_update { sign_of(g) } else { g };
            // Descent on the outer objective.
            *l = *l - config.alpha * update;
        }
        project_lambdas(lambdas, config.lambda_bounds)?;
        problem.set_lambda_values(lambdas)?;
    }

    Ok(HyperIterRecord {
        outer_loss,
        xp_grad_norm,
        lambdas: lambdas.to_vec(),
        xp_feasible: poison.is_feasible(),
        lambda_feasible: lambdas
            .iter()
            .all(|&l| l >= config.lambda_bounds.0 && l <= config.lambda_bounds.1),
    })
}
