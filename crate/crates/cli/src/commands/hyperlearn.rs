//! `hyperlearn`: learn λ on a fixed training set by hypergradient descent,
//! or by k-fold cross-validated grid search (`hyperlearn.cv = true`).

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use poisonlearn::attack::{kfold_cv_lambda, run_hyperlearn, TrainSettings};
use poisonlearn::numerics::RngStream;

use crate::config::{ExperimentConfig, RegMode};
use crate::records::{to_value, write_jsonl, Header, VERSION};
use crate::CliResult;

#[derive(Serialize)]
struct TrajectoryRecord {
    record: &'static str,
    repetition: usize,
    iteration: usize,
    lambdas: Vec<f64>,
    val_loss: f64,
}

#[derive(Serialize)]
struct FinalRecord {
    record: &'static str,
    repetition: usize,
    method: &'static str,
    lambdas: Vec<f64>,
    timing_s: f64,
}

pub fn cmd_hyperlearn(config: &ExperimentConfig) -> CliResult<PathBuf> {
    let spec = config.model_spec()?;
    let mut lines = Vec::new();

    for rep in 0..config.repetitions {
        let rep_rng = RngStream::new(config.master_seed).derive(&format!("rep:{}", rep));
        let (train, val, _test) = config.build_task(rep_rng.derive("task").seed())?;
        let started = Instant::now();

        if config.hyperlearn_cv {
            let template = config.reg_for_mode(RegMode::Clean, None)?;
            let settings = TrainSettings {
                eta: config.eval.eta,
                epochs: config.eval.epochs,
            };
            let mut cv_rng = rep_rng.derive("clean-cv");
            let grid = config.clean_grid.values();
            let out = kfold_cv_lambda(
                &train,
                &spec,
                &template,
                &grid,
                config.clean_folds,
                &settings,
                &mut cv_rng,
            )?;
            lines.push(to_value(&FinalRecord {
                record: "final",
                repetition: rep,
                method: "cv",
                lambdas: vec![out.best_lambda; template.group_count()],
                timing_s: started.elapsed().as_secs_f64(),
            }));
        } else {
            let reg = config.reg_for_mode(RegMode::Rmd, None)?;
            let attack_cfg =
                config.attack_config(RegMode::Rmd, rep_rng.derive("hyperlearn").seed());
            let out = run_hyperlearn(&train, &val, &spec, &reg, &attack_cfg)?;
            for (i, rec) in out.trajectory.iter().enumerate() {
                lines.push(to_value(&TrajectoryRecord {
                    record: "trajectory",
                    repetition: rep,
                    iteration: i,
                    lambdas: rec.lambdas.clone(),
                    val_loss: rec.outer_loss,
                }));
            }
            lines.push(to_value(&FinalRecord {
                record: "final",
                repetition: rep,
                method: "rmd",
                lambdas: out.lambdas,
                timing_s: started.elapsed().as_secs_f64(),
            }));
        }
    }

    let header = Header {
        record: "header",
        command: "hyperlearn",
        version: VERSION,
        config,
    };
    write_jsonl(&config.output, &header, &lines)?;
    Ok(config.output.clone())
}
