//! Grid-search and cross-validation baselines for choosing λ.

use crate::error::{Error, Result};
use crate::models::{init_params, loss, train_model, Dataset, InitScheme, ModelSpec, RegSpec};
use crate::numerics::RngStream;
use crate::scalar::Real;

/// Training settings used when a model is retrained from scratch for
/// evaluation or search.
#[derive(Debug, Clone, Copy)]
pub struct TrainSettings<T> {
    pub eta: T,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome<T> {
    pub best_lambda: T,
    /// `(λ, validation loss)` in evaluation order.
    pub table: Vec<(T, T)>,
}

/// Smallest λ achieving the minimum loss (ties resolve to the smaller λ).
pub(crate) fn argmin_lambda<T: Real>(table: &[(T, T)]) -> T {
    let mut entries: Vec<(T, T)> = table.to_vec();
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite lambdas"));
    let mut best = entries[0];
    for &(l, v) in &entries[1..] {
        if v < best.1 {
            best = (l, v);
        }
    }
    best.0
}

/// Trains a candidate and scores it on the held-out set. A run whose final
/// training loss exceeds its initial one has left the gradient-descent
/// stability region (large e^λ at a fixed η); such candidates are scored
/// +∞ so the search never selects a diverged model.
fn fit_and_score<T: Real>(
    spec: &ModelSpec<T>,
    train: &Dataset<T>,
    held_out: &Dataset<T>,
    reg: &RegSpec<T>,
    settings: &TrainSettings<T>,
    rng: &mut RngStream,
) -> Result<T> {
    let mut init_rng = rng.clone();
    let w = train_model(spec, train, reg, settings.eta, settings.epochs, rng)?;
    if !w.all_finite() {
        return Ok(T::infinity());
    }
    let w0 = match spec.kind {
        crate::models::ModelKind::Logistic => init_params(spec, InitScheme::Zeros),
        crate::models::ModelKind::Mlp => init_params(spec, InitScheme::Xavier(&mut init_rng)),
    };
    let final_train_loss = loss(spec, &w, train, reg, true)?;
    let initial_train_loss = loss(spec, &w0, train, reg, true)?;
    if final_train_loss > initial_train_loss {
        return Ok(T::infinity());
    }
    loss(spec, &w, held_out, reg, false)
}

/// Trains from scratch once per grid value (same starting point for every
/// candidate) and picks the λ minimizing the validation loss.
pub fn grid_search_lambda<T: Real>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    spec: &ModelSpec<T>,
    reg_template: &RegSpec<T>,
    grid: &[T],
    settings: &TrainSettings<T>,
    rng: &RngStream,
) -> Result<GridSearchOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if !reg_template.is_active() {
        return Err(Error::NoRegularizer);
    }
    let mut table = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut reg = reg_template.clone();
        for l in reg.lambdas.iter_mut() {
            *l = lambda;
        }
        // Identical init across candidates so only λ varies.
        let mut candidate_rng = rng.derive("grid-search-init");
        let val_loss = fit_and_score(spec, train, val, &reg, settings, &mut candidate_rng)?;
        table.push((lambda, val_loss));
    }
    Ok(GridSearchOutcome {
        best_lambda: argmin_lambda(&table),
        table,
    })
}

/// K-fold cross-validated grid search on the training set alone (no trusted
/// validation set): picks the λ minimizing the mean held-out-fold loss.
pub fn kfold_cv_lambda<T: Real>(
    train: &Dataset<T>,
    spec: &ModelSpec<T>,
    reg_template: &RegSpec<T>,
    grid: &[T],
    folds: usize,
    settings: &TrainSettings<T>,
    rng: &mut RngStream,
) -> Result<GridSearchOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if !reg_template.is_active() {
        return Err(Error::NoRegularizer);
    }
    if folds < 2 || folds > train.n() {
        return Err(Error::Config(format!(
            "fold count {} outside [2, {}]",
            folds,
            train.n()
        )));
    }
    let mut order: Vec<usize> = (0..train.n()).collect();
    rng.shuffle(&mut order);
    let fold_of = |i: usize| i * folds / train.n();

    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let held: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| fold_of(*pos) == f)
            .map(|(_, &i)| i)
            .collect();
        let rest: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| fold_of(*pos) != f)
            .map(|(_, &i)| i)
            .collect();
        splits.push((train.subset(&rest)?, train.subset(&held)?));
    }

    let mut table = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut reg = reg_template.clone();
        for l in reg.lambdas.iter_mut() {
            *l = lambda;
        }
        let mut total = T::zero();
        for (fit, held) in &splits {
            let mut fold_rng = rng.derive("cv-init");
            total = total + fit_and_score(spec, fit, held, &reg, settings, &mut fold_rng)?;
        }
        table.push((lambda, total / T::of(folds as f64)));
    }
    Ok(GridSearchOutcome {
        best_lambda: argmin_lambda(&table),
        table,
    })
}
