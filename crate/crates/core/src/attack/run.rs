//! The cumulative attack driver and hyperparameter-only learning.

use std::collections::HashSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::hypergrad::TrainValProblem;
use crate::models::{
    init_params, Dataset, InitScheme, ModelKind, ModelSpec, ParamVector, RegSpec,
};
use crate::numerics::RngStream;
use crate::scalar::Real;

use super::{
    attack_step, fraction_count, init_poison_excluding, AttackConfig, HyperIterRecord, PoisonSet,
};

/// Outcome of one fraction increment of the schedule.
#[derive(Debug, Clone)]
pub struct FractionResult<T> {
    pub fraction: f64,
    /// Total poison count once this increment is frozen.
    pub n_poisons_total: usize,
    /// Batches frozen during this increment (empty for the 0% entry).
    pub new_batches: Vec<PoisonSet<T>>,
    /// λ at the end of the increment (learned, or the fixed template values).
    pub lambdas: Vec<T>,
    /// One record per hyperiteration, concatenated over the batches.
    pub trajectory: Vec<HyperIterRecord<T>>,
    pub wall_time_s: f64,
}

/// Full attack outcome.
#[derive(Debug, Clone)]
pub struct AttackResult<T> {
    pub per_fraction: Vec<FractionResult<T>>,
    /// Training set with every frozen batch substituted.
    pub final_train: Dataset<T>,
}

impl<T: Real> AttackResult<T> {
    /// Rebuilds the poisoned training set as it stood after fraction index
    /// `upto` (inclusive).
    pub fn poisoned_at(&self, clean: &Dataset<T>, upto: usize) -> Result<Dataset<T>> {
        if upto >= self.per_fraction.len() {
            return Err(Error::IndexOutOfRange {
                index: upto,
                len: self.per_fraction.len(),
            });
        }
        let mut data = clean.clone();
        for fr in &self.per_fraction[..=upto] {
            for batch in &fr.new_batches {
                for (slot, &row) in batch.indices.iter().enumerate() {
                    data.set_row(row, batch.features.row(slot));
                    data.set_label(row, batch.labels[slot]);
                }
            }
        }
        Ok(data)
    }

    /// All rows replaced up to fraction index `upto` (inclusive).
    pub fn poison_rows_at(&self, upto: usize) -> Vec<usize> {
        self.per_fraction[..=upto.min(self.per_fraction.len() - 1)]
            .iter()
            .flat_map(|fr| fr.new_batches.iter())
            .flat_map(|b| b.indices.iter().copied())
            .collect()
    }
}

fn initial_lambdas<T: Real>(reg: &RegSpec<T>, config: &AttackConfig<T>) -> Vec<T> {
    if !reg.is_active() {
        Vec::new()
    } else if config.learn_lambda {
        vec![config.lambda_init; reg.group_count()]
    } else {
        reg.lambdas.clone()
    }
}

fn inner_start<T: Real>(
    spec: &ModelSpec<T>,
    rng: &RngStream,
    fraction_idx: usize,
    batch_idx: usize,
    tau: usize,
) -> ParamVector<T> {
    match spec.kind {
        ModelKind::Logistic => init_params(spec, InitScheme::Zeros),
        ModelKind::Mlp => {
            // Fresh random start per hyperiteration so the poisons generalize
            // across initializations.
            let mut wrng = rng.derive(&format!("w0:f{}:b{}:t{}", fraction_idx, batch_idx, tau));
            init_params(spec, InitScheme::Xavier(&mut wrng))
        }
    }
}

/// Runs the cumulative poisoning attack over `config.fraction_schedule`.
///
/// For every increment: a new batch of clean rows is sampled from the
/// not-yet-replaced pool, cloned with flipped labels, substituted into the
/// training set, and optimized for `hyper_iters` hyperiterations jointly
/// with λ (when learning is on); then the batch freezes and λ re-initializes.
/// A zero-size increment with λ learning on still runs the hyperiterations,
/// which is exactly hyperparameter-only learning.
pub fn run_attack<T: Real>(
    clean: &Dataset<T>,
    val: &Dataset<T>,
    spec: &ModelSpec<T>,
    reg_template: &RegSpec<T>,
    config: &AttackConfig<T>,
) -> Result<AttackResult<T>> {
    spec.validate()?;
    reg_template.validate_for(spec.n_layers())?;
    config.validate(clean.n())?;
    if config.learn_lambda && !reg_template.is_active() {
        return Err(Error::Config(
            "lambda learning requires an active regularizer".into(),
        ));
    }

    let rng = RngStream::new(config.seed);
    let mut poisoned = clean.clone();
    let mut used: HashSet<usize> = HashSet::new();
    let mut per_fraction = Vec::with_capacity(config.fraction_schedule.len());
    let mut n_so_far = 0usize;

    for (fi, &fraction) in config.fraction_schedule.iter().enumerate() {
        let started = Instant::now();
        let target = fraction_count(fraction, clean.n());
        let mut remaining = target - n_so_far;

        let mut reg = reg_template.clone();
        let mut lambdas = initial_lambdas(&reg, config);
        if reg.is_active() {
            reg.lambdas = lambdas.clone();
        }

        let mut new_batches = Vec::new();
        let mut trajectory = Vec::new();

        // Sub-batches of the increment; one λ-only round when the increment
        // is empty but λ is learned.
        let mut batch_idx = 0usize;
        loop {
            let batch_size = match config.poison_batch {
                Some(b) => b.min(remaining),
                None => remaining,
            };
            let optimizing_lambda = config.learn_lambda && reg.is_active();
            if batch_size == 0 && !(batch_idx == 0 && optimizing_lambda) {
                break;
            }

            let mut batch_rng = rng.derive(&format!("init-poison:f{}:b{}", fi, batch_idx));
            let mut poison = if batch_size > 0 {
                init_poison_excluding(&poisoned, batch_size, &used, &mut batch_rng)?
            } else {
                PoisonSet::empty(clean.m(), clean.bounds().clone())
            };
            for (slot, &row) in poison.indices.iter().enumerate() {
                poisoned.set_row(row, poison.features.row(slot));
                poisoned.set_label(row, poison.labels[slot]);
            }

            if batch_size > 0 || optimizing_lambda {
                let mut problem =
                    TrainValProblem::new(spec, &poisoned, &poison.indices, &reg, val)?;
                for tau in 0..config.hyper_iters {
                    let w0 = inner_start(spec, &rng, fi, batch_idx, tau);
                    let record = attack_step(&mut problem, &mut poison, &mut lambdas, config, &w0)?;
                    trajectory.push(record);
                }
                // Written features live in the problem's copy; mirror them
                // into the running poisoned set.
                for (slot, &row) in poison.indices.iter().enumerate() {
                    poisoned.set_row(row, poison.features.row(slot));
                }
                if reg.is_active() {
                    reg.lambdas = lambdas.clone();
                }
            }

            used.extend(poison.indices.iter().copied());
            remaining -= batch_size;
            if batch_size > 0 {
                new_batches.push(poison);
            }
            batch_idx += 1;
            if remaining == 0 {
                break;
            }
        }

        n_so_far = target;
        per_fraction.push(FractionResult {
            fraction,
            n_poisons_total: target,
            new_batches,
            lambdas: if reg.is_active() { lambdas } else { Vec::new() },
            trajectory,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(AttackResult {
        per_fraction,
        final_train: poisoned,
    })
}

/// Outcome of hyperparameter-only learning.
#[derive(Debug, Clone)]
pub struct HyperlearnResult<T> {
    pub lambdas: Vec<T>,
    pub trajectory: Vec<HyperIterRecord<T>>,
}

/// Projected hypergradient descent on λ alone over a fixed training set
/// (clean or already poisoned). Starts from the template's λ values.
pub fn run_hyperlearn<T: Real>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    spec: &ModelSpec<T>,
    reg: &RegSpec<T>,
    config: &AttackConfig<T>,
) -> Result<HyperlearnResult<T>> {
    if !reg.is_active() {
        return Err(Error::NoRegularizer);
    }
    spec.validate()?;
    reg.validate_for(spec.n_layers())?;
    let mut lambdas = reg.lambdas.clone();
    let mut poison = PoisonSet::empty(train.m(), train.bounds().clone());
    let mut problem = TrainValProblem::new(spec, train, &[], reg, val)?;
    let rng = RngStream::new(config.seed);
    let mut step_config = config.clone();
    step_config.learn_lambda = true;

    let mut trajectory = Vec::with_capacity(config.hyper_iters);
    for tau in 0..config.hyper_iters {
        let w0 = inner_start(spec, &rng, 0, 0, tau);
        let record = attack_step(&mut problem, &mut poison, &mut lambdas, &step_config, &w0)?;
        trajectory.push(record);
    }
    Ok(HyperlearnResult { lambdas, trajectory })
}
