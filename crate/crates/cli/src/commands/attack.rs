//! `attack`: run the poisoning attack under each configured regularization
//! mode, retrain from scratch at every fraction, and record test error and
//! diagnostics.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use poisonlearn::attack::{kfold_cv_lambda, run_attack, TrainSettings};
use poisonlearn::numerics::RngStream;
use poisonlearn::Params;

use crate::config::{ExperimentConfig, RegMode};
use crate::records::{
    csv_sibling, to_value, write_csv_projection, write_jsonl, Header, ResultRecord, VERSION,
};
use crate::{CliError, CliResult};

use super::{consistency_vs, eval_train, norms_record};

pub fn cmd_attack(config: &ExperimentConfig) -> CliResult<PathBuf> {
    let spec = config.model_spec()?;
    // Fail early on mode/reg inconsistencies.
    for &mode in &config.modes {
        let _ = config.reg_for_mode(mode, None)?;
    }
    if config.modes.contains(&RegMode::Clean) && config.model.kind != "lr" {
        return Err(CliError::Config(
            "mode `clean` (cross-validated λ) is only supported for model.kind = lr".into(),
        ));
    }

    let units: Vec<(usize, RegMode)> = (0..config.repetitions)
        .flat_map(|rep| config.modes.iter().map(move |&m| (rep, m)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {}", e)))?;
    let outcomes: Vec<CliResult<Vec<ResultRecord>>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(rep, mode)| run_unit(config, &spec, rep, mode))
            .collect()
    });

    let mut records = Vec::new();
    for outcome in outcomes {
        records.extend(outcome?);
    }

    let header = Header {
        record: "header",
        command: "attack",
        version: VERSION,
        config,
    };
    let lines: Vec<serde_json::Value> = records.iter().map(to_value).collect();
    write_jsonl(&config.output, &header, &lines)?;
    write_csv_projection(&csv_sibling(&config.output), &records)?;
    Ok(config.output.clone())
}

fn run_unit(
    config: &ExperimentConfig,
    spec: &poisonlearn::Model,
    rep: usize,
    mode: RegMode,
) -> CliResult<Vec<ResultRecord>> {
    let rep_rng = RngStream::new(config.master_seed).derive(&format!("rep:{}", rep));
    let (clean, val, test) = config.build_task(rep_rng.derive("task").seed())?;

    // λ_CLEAN: cross-validated on the clean training set, then held fixed.
    let clean_lambda: Option<Vec<f64>> = if mode == RegMode::Clean {
        let template = config.reg_for_mode(RegMode::Clean, None)?;
        let settings = TrainSettings {
            eta: config.eval.eta,
            epochs: config.eval.epochs,
        };
        let mut cv_rng = rep_rng.derive("clean-cv");
        let grid = config.clean_grid.values();
        let out = kfold_cv_lambda(
            &clean,
            spec,
            &template,
            &grid,
            config.clean_folds,
            &settings,
            &mut cv_rng,
        )?;
        Some(vec![out.best_lambda; template.group_count()])
    } else {
        None
    };

    let reg_template = config.reg_for_mode(mode, clean_lambda.as_deref())?;
    let attack_cfg = config.attack_config(mode, rep_rng.derive(&format!("attack:{}", mode.name())).seed());
    let started = Instant::now();
    let result = run_attack(&clean, &val, spec, &reg_template, &attack_cfg)?;
    let attack_time = started.elapsed().as_secs_f64();

    // Clean baseline weights for the consistency index (fraction 0 retrain).
    let mut records = Vec::new();
    let mut baseline: Option<Params> = None;
    for (fi, fr) in result.per_fraction.iter().enumerate() {
        let eval_started = Instant::now();
        let data = result.poisoned_at(&clean, fi)?;
        let eval_reg = match mode {
            RegMode::Rmd => config.reg_for_mode(mode, Some(&fr.lambdas))?,
            _ => reg_template.clone(),
        };
        let w = eval_train(
            config,
            spec,
            &data,
            &eval_reg,
            &rep_rng,
            &format!("eval:{}:{}", mode.name(), fi),
        )?;
        if fi == 0 {
            baseline = Some(w.clone());
        }
        let consistency = baseline
            .as_ref()
            .and_then(|b| consistency_vs(config, b, &w));
        let (norm_total, norm_layers) = norms_record(&w);
        records.push(ResultRecord {
            record: "result".into(),
            repetition: rep,
            mode: mode.name().into(),
            fraction: fr.fraction,
            n_poisons: fr.n_poisons_total,
            test_error: poisonlearn::metrics::test_error(spec, &w, &test)?,
            lambdas: eval_reg.lambdas.clone(),
            weight_norm_total: norm_total,
            weight_norms_per_layer: norm_layers,
            consistency_k: consistency.map(|c| c.0),
            consistency: consistency.map(|c| c.1),
            val_loss: fr.trajectory.last().map(|r| r.outer_loss),
            timing_s: eval_started.elapsed().as_secs_f64()
                + attack_time / result.per_fraction.len() as f64,
        });
    }
    Ok(records)
}
