//! Subcommand implementations.

mod attack;
mod check;
mod eval;
mod hyperlearn;
mod synth;

pub use attack::cmd_attack;
pub use check::{cmd_check_gradients, CheckOptions};
pub use eval::cmd_eval;
pub use hyperlearn::cmd_hyperlearn;
pub use synth::cmd_synth_demo;

use poisonlearn::metrics::{kuncheva_index, top_k_features, weight_norms};
use poisonlearn::models::train_model;
use poisonlearn::numerics::RngStream;
use poisonlearn::{Model, Params, Reg, Task};

use crate::config::ExperimentConfig;
use crate::CliResult;

/// Retrains from scratch with the evaluation settings (seeded init for MLPs).
pub(crate) fn eval_train(
    config: &ExperimentConfig,
    spec: &Model,
    data: &Task,
    reg: &Reg,
    seed_rng: &RngStream,
    label: &str,
) -> CliResult<Params> {
    let mut rng = seed_rng.derive(label);
    Ok(train_model(
        spec,
        data,
        reg,
        config.eval.eta,
        config.eval.epochs,
        &mut rng,
    )?)
}

/// Top-k feature consistency against a baseline parameter vector, when the
/// configured k fits the feature count.
pub(crate) fn consistency_vs(
    config: &ExperimentConfig,
    baseline: &Params,
    current: &Params,
) -> Option<(usize, f64)> {
    let k = config.eval.consistency_k;
    let m = baseline.layout().layers[0].in_dim;
    if k == 0 || k >= m {
        return None;
    }
    let a = top_k_features(baseline, k).ok()?;
    let b = top_k_features(current, k).ok()?;
    kuncheva_index(&a, &b).ok().map(|v| (k, v))
}

pub(crate) fn norms_record(w: &Params) -> (f64, Vec<f64>) {
    let norms = weight_norms(w);
    (norms.total, norms.per_layer)
}
