//! `eval`: clean-training baseline per regularization mode — no attack, just
//! train with the evaluation settings and report test error and diagnostics.

use std::path::PathBuf;
use std::time::Instant;

use poisonlearn::attack::{kfold_cv_lambda, run_hyperlearn, TrainSettings};
use poisonlearn::metrics::test_error;
use poisonlearn::numerics::RngStream;

use crate::config::{ExperimentConfig, RegMode};
use crate::records::{
    csv_sibling, to_value, write_csv_projection, write_jsonl, Header, ResultRecord, VERSION,
};
use crate::{CliError, CliResult};

use super::{eval_train, norms_record};

pub fn cmd_eval(config: &ExperimentConfig) -> CliResult<PathBuf> {
    let spec = config.model_spec()?;
    let mut records = Vec::new();

    for rep in 0..config.repetitions {
        let rep_rng = RngStream::new(config.master_seed).derive(&format!("rep:{}", rep));
        let (train, val, test) = config.build_task(rep_rng.derive("task").seed())?;

        for &mode in &config.modes {
            let started = Instant::now();
            let reg = match mode {
                RegMode::Rmd => {
                    // λ learned on the clean task, then used for evaluation.
                    let template = config.reg_for_mode(RegMode::Rmd, None)?;
                    let cfg = config.attack_config(RegMode::Rmd, rep_rng.derive("eval-hyperlearn").seed());
                    let out = run_hyperlearn(&train, &val, &spec, &template, &cfg)?;
                    config.reg_for_mode(RegMode::Rmd, Some(&out.lambdas))?
                }
                RegMode::Clean => {
                    if config.model.kind != "lr" {
                        return Err(CliError::Config(
                            "mode `clean` is only supported for model.kind = lr".into(),
                        ));
                    }
                    let template = config.reg_for_mode(RegMode::Clean, None)?;
                    let settings = TrainSettings {
                        eta: config.eval.eta,
                        epochs: config.eval.epochs,
                    };
                    let mut cv_rng = rep_rng.derive("clean-cv");
                    let out = kfold_cv_lambda(
                        &train,
                        &spec,
                        &template,
                        &config.clean_grid.values(),
                        config.clean_folds,
                        &settings,
                        &mut cv_rng,
                    )?;
                    config.reg_for_mode(
                        RegMode::Clean,
                        Some(&vec![out.best_lambda; template.group_count()]),
                    )?
                }
                _ => config.reg_for_mode(mode, None)?,
            };

            let w = eval_train(config, &spec, &train, &reg, &rep_rng, &format!("eval:{}", mode.name()))?;
            let (norm_total, norm_layers) = norms_record(&w);
            records.push(ResultRecord {
                record: "result".into(),
                repetition: rep,
                mode: mode.name().into(),
                fraction: 0.0,
                n_poisons: 0,
                test_error: test_error(&spec, &w, &test)?,
                lambdas: reg.lambdas.clone(),
                weight_norm_total: norm_total,
                weight_norms_per_layer: norm_layers,
                consistency_k: None,
                consistency: None,
                val_loss: None,
                timing_s: started.elapsed().as_secs_f64(),
            });
        }
    }

    let header = Header {
        record: "header",
        command: "eval",
        version: VERSION,
        config,
    };
    let lines: Vec<serde_json::Value> = records.iter().map(to_value).collect();
    write_jsonl(&config.output, &header, &lines)?;
    write_csv_projection(&csv_sibling(&config.output), &records)?;
    Ok(config.output.clone())
}
