//! `synth-demo`: the two-Gaussian plane experiment. Sweeps a single
//! poisoning point over a grid of locations, recording the validation error
//! without regularization, with a fixed λ, and the grid-searched λ* per
//! location; then runs the actual single-point attack.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use poisonlearn::attack::{
    attack_step, grid_search_lambda, AttackConfig, PoisonSet, TrainSettings,
};
use poisonlearn::hypergrad::TrainValProblem;
use poisonlearn::metrics::test_error;
use poisonlearn::models::{init_params, InitScheme, RegSpec};
use poisonlearn::numerics::{DenseMatrix, RngStream};
use poisonlearn::{Model, Reg, Task};

use crate::config::{ExperimentConfig, RegMode};
use crate::records::{to_value, write_jsonl, Header, VERSION};
use crate::{CliError, CliResult};

#[derive(Serialize)]
struct CellRecord {
    record: &'static str,
    x1: f64,
    x2: f64,
    val_error_noreg: f64,
    val_error_fixed: f64,
    lambda_star: f64,
}

#[derive(Serialize)]
struct AttackRecord {
    record: &'static str,
    reg: &'static str,
    init: Vec<f64>,
    found: Vec<f64>,
    val_error_clean: f64,
    val_error_poisoned: f64,
    timing_s: f64,
}

/// Training set with one extra (poison) row appended.
fn with_appended_row(train: &Task, row: &[f64], label: u8) -> CliResult<Task> {
    let mut data = train.x().data().to_vec();
    data.extend_from_slice(row);
    let mut labels = train.y().to_vec();
    labels.push(label);
    let x = DenseMatrix::new(train.n() + 1, train.m(), data)
        .map_err(CliError::from)?;
    Ok(Task::new(x, labels, train.bounds().clone())?)
}

fn eval_val_error(
    config: &ExperimentConfig,
    spec: &Model,
    train: &Task,
    val: &Task,
    reg: &Reg,
    rng: &RngStream,
    label: &str,
) -> CliResult<f64> {
    let w = super::eval_train(config, spec, train, reg, rng, label)?;
    Ok(test_error(spec, &w, val)?)
}

/// Single appended-point attack under the given regularizer; returns the
/// optimized location.
#[allow(clippy::too_many_arguments)]
fn optimize_single_point(
    config: &ExperimentConfig,
    spec: &Model,
    train: &Task,
    val: &Task,
    reg: &Reg,
    start: &[f64],
    label: u8,
    seed_rng: &RngStream,
) -> CliResult<Vec<f64>> {
    let poisoned = with_appended_row(train, start, label)?;
    let poison_row = poisoned.n() - 1;
    let mut problem = TrainValProblem::new(spec, &poisoned, &[poison_row], reg, val)?;
    let mut poison = PoisonSet {
        features: DenseMatrix::new(1, train.m(), start.to_vec()).map_err(CliError::from)?,
        labels: vec![label],
        indices: vec![poison_row],
        domain: train.bounds().clone(),
    };
    let mut lambdas = reg.lambdas.clone();
    let attack_cfg: AttackConfig<f64> = AttackConfig {
        learn_lambda: false,
        ..config.attack_config(RegMode::None, seed_rng.seed())
    };
    let w0 = init_params(spec, InitScheme::Zeros);
    for _ in 0..attack_cfg.hyper_iters {
        attack_step(&mut problem, &mut poison, &mut lambdas, &attack_cfg, &w0)?;
    }
    Ok(poison.features.row(0).to_vec())
}

pub fn cmd_synth_demo(config: &ExperimentConfig) -> CliResult<PathBuf> {
    let spec = config.model_spec()?;
    if spec.input_dim() != 2 {
        return Err(CliError::Config(
            "synth-demo needs the two-feature synthetic task (task.kind = synthetic)".into(),
        ));
    }
    let rng = RngStream::new(config.master_seed).derive("synth-demo");
    let (train, val, _test) = config.build_task(rng.derive("task").seed())?;

    let reg_none = RegSpec::none();
    let reg_fixed = {
        let mut r = config.reg_for_mode(RegMode::Fixed, None)?;
        for l in r.lambdas.iter_mut() {
            *l = config.synth.fixed_lambda;
        }
        r
    };
    let settings = TrainSettings {
        eta: config.eval.eta,
        epochs: config.eval.epochs,
    };
    let lambda_grid = config.synth.lambda_grid.values();

    // A poison is a clone of a class-0 ("blue") point with flipped label 1;
    // the sweep moves its features over the feasible box.
    let poison_label: u8 = 1;
    let lo = train.bounds().lo()[0];
    let hi = train.bounds().hi()[0];
    let grid_n = config.synth.grid_n.max(2);

    let mut lines = Vec::new();
    for iy in 0..grid_n {
        for ix in 0..grid_n {
            let x1 = lo + (hi - lo) * ix as f64 / (grid_n - 1) as f64;
            let x2 = lo + (hi - lo) * iy as f64 / (grid_n - 1) as f64;
            let poisoned = with_appended_row(&train, &[x1, x2], poison_label)?;
            let err_noreg =
                eval_val_error(config, &spec, &poisoned, &val, &reg_none, &rng, "cell-noreg")?;
            let err_fixed =
                eval_val_error(config, &spec, &poisoned, &val, &reg_fixed, &rng, "cell-fixed")?;
            let search = grid_search_lambda(
                &poisoned,
                &val,
                &spec,
                &reg_fixed,
                &lambda_grid,
                &settings,
                &rng,
            )?;
            lines.push(to_value(&CellRecord {
                record: "cell",
                x1,
                x2,
                val_error_noreg: err_noreg,
                val_error_fixed: err_fixed,
                lambda_star: search.best_lambda,
            }));
        }
    }

    // The optimized single-point attack, with and without regularization.
    let clean_err_noreg =
        eval_val_error(config, &spec, &train, &val, &reg_none, &rng, "clean-noreg")?;
    let clean_err_fixed =
        eval_val_error(config, &spec, &train, &val, &reg_fixed, &rng, "clean-fixed")?;
    // Clone a class-0 validation point as the starting location.
    let start_idx = (0..val.n())
        .find(|&i| val.y()[i] == 0)
        .ok_or_else(|| CliError::Config("validation set has no class-0 point".into()))?;
    let start = val.x().row(start_idx).to_vec();

    for (reg, reg_name, clean_err) in [
        (&reg_none, "none", clean_err_noreg),
        (&reg_fixed, "fixed", clean_err_fixed),
    ] {
        let started = Instant::now();
        let found = optimize_single_point(
            config,
            &spec,
            &train,
            &val,
            reg,
            &start,
            poison_label,
            &rng.derive(&format!("attack:{}", reg_name)),
        )?;
        let poisoned = with_appended_row(&train, &found, poison_label)?;
        let err = eval_val_error(
            config,
            &spec,
            &poisoned,
            &val,
            reg,
            &rng,
            &format!("attacked:{}", reg_name),
        )?;
        lines.push(to_value(&AttackRecord {
            record: "attack",
            reg: if reg_name == "none" { "none" } else { "fixed" },
            init: start.clone(),
            found,
            val_error_clean: clean_err,
            val_error_poisoned: err,
            timing_s: started.elapsed().as_secs_f64(),
        }));
    }

    let header = Header {
        record: "header",
        command: "synth-demo",
        version: VERSION,
        config,
    };
    write_jsonl(&config.output, &header, &lines)?;
    Ok(config.output.clone())
}
