//! `check-gradients`: run the engine-agreement and finite-difference suites
//! on randomized instances and report per-check maximum relative errors.

use poisonlearn::hypergrad::{
    fd_hypergrad, fmd_hypergrad, implicit_hypergrad, rmd_hypergrad, Hypergrad, ImplicitConfig,
};
use poisonlearn::models::{
    grad_w, init_params, sgd_train, Dataset, FeatureBounds, InitScheme, ModelSpec, RegSpec,
};
use poisonlearn::numerics::{DenseMatrix, RngStream};
use poisonlearn::{Model, Reg, Task};

use crate::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    /// Negative-control hook: deliberately corrupt one reverse-mode
    /// component so the suite must fail.
    pub corrupt: bool,
}

struct CheckLine {
    name: String,
    max_rel_err: f64,
    tol: f64,
}

impl CheckLine {
    fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn random_task(n: usize, m: usize, rng: &mut RngStream) -> CliResult<Task> {
    let x = DenseMatrix::from_fn(n, m, |_, _| rng.uniform(-1.0, 1.0));
    let y: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
    Ok(Dataset::new(x, y, FeatureBounds::uniform(-10.0, 10.0, m)?)?)
}

struct Instance {
    spec: Model,
    reg: Reg,
    train: Task,
    val: Task,
    rows: Vec<usize>,
    eta: f64,
    steps: usize,
}

fn lr_instance(i: usize, rng: &mut RngStream) -> CliResult<Instance> {
    let m = 2 + rng.below(5);
    let n = 10 + rng.below(21);
    let n_p = 1 + rng.below(3);
    let reg = match i % 3 {
        0 => RegSpec::l2(rng.uniform(-1.0, 0.5)),
        1 => RegSpec::l1(rng.uniform(-1.5, 0.0)),
        _ => RegSpec::none(),
    };
    let train = random_task(n, m, rng)?;
    let rows: Vec<usize> = (0..n_p).collect();
    Ok(Instance {
        spec: ModelSpec::logistic(m),
        reg,
        val: random_task(n / 2 + 2, m, rng)?,
        train,
        rows,
        eta: 0.2,
        steps: 20 + rng.below(41),
    })
}

fn mlp_instance(rng: &mut RngStream) -> CliResult<Instance> {
    let m = 2 + rng.below(3);
    let n = 8 + rng.below(9);
    let train = random_task(n, m, rng)?;
    Ok(Instance {
        spec: ModelSpec::mlp(vec![m, 4, 1], 0.01).map_err(CliError::from)?,
        reg: RegSpec::l2(rng.uniform(-1.0, 0.0)),
        val: random_task(n / 2 + 2, m, rng)?,
        train,
        rows: vec![0, 1],
        eta: 0.2,
        steps: 10 + rng.below(21),
    })
}

fn maybe_corrupt(hg: &mut Hypergrad<f64>, corrupt: bool) {
    if corrupt && !hg.d_poison.is_empty() {
        let v = hg.d_poison.get(0, 0);
        hg.d_poison.set(0, 0, v + 1e-3 * (1.0 + v.abs()));
    }
}

pub fn cmd_check_gradients(options: &CheckOptions) -> CliResult<()> {
    let mut lines: Vec<CheckLine> = Vec::new();
    let mut rng = RngStream::new(options.seed).derive("check-gradients");

    // Reverse mode vs the finite-difference oracle, and forward mode vs
    // reverse mode, on logistic-regression instances.
    for i in 0..8 {
        let inst = lr_instance(i, &mut rng)?;
        let w0 = init_params(&inst.spec, InitScheme::Zeros);
        let (mut rmd, _) = rmd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, inst.eta, inst.steps,
        )?;
        maybe_corrupt(&mut rmd, options.corrupt);
        let fd = fd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, inst.eta, inst.steps,
            1e-5,
        )?;
        lines.push(CheckLine {
            name: format!("rmd-vs-fd lr[{}]", i),
            max_rel_err: rel_diff(&rmd.flatten(), &fd.flatten()),
            tol: 1e-5,
        });
        let fmd = fmd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, inst.eta, inst.steps,
            64,
        )?;
        lines.push(CheckLine {
            name: format!("fmd-vs-rmd lr[{}]", i),
            max_rel_err: rel_diff(&fmd.flatten(), &rmd.flatten()),
            tol: 1e-10,
        });
    }

    // Reverse mode vs finite differences on MLP instances.
    for i in 0..4 {
        let inst = mlp_instance(&mut rng)?;
        let mut wrng = rng.derive(&format!("mlp-w0:{}", i));
        let w0 = init_params(&inst.spec, InitScheme::Xavier(&mut wrng));
        let (mut rmd, _) = rmd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, inst.eta, inst.steps,
        )?;
        maybe_corrupt(&mut rmd, options.corrupt);
        let fd = fd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, inst.eta, inst.steps,
            1e-5,
        )?;
        lines.push(CheckLine {
            name: format!("rmd-vs-fd mlp[{}]", i),
            max_rel_err: rel_diff(&rmd.flatten(), &fd.flatten()),
            tol: 1e-4,
        });
    }

    // Implicit engine vs long-horizon reverse mode on strongly convex
    // instances trained to stationarity.
    for i in 0..3 {
        let mut inst = lr_instance(0, &mut rng)?;
        inst.reg = RegSpec::l2(0.0);
        let w0 = init_params(&inst.spec, InitScheme::Zeros);
        let steps = 4000;
        let (w_star, _) = sgd_train(&inst.spec, &inst.train, &inst.reg, &w0, 0.5, steps, false)?;
        let gnorm = grad_w(&inst.spec, &w_star, &inst.train, &inst.reg, true)?.norm2();
        if gnorm > 1e-9 {
            return Err(CliError::Numerical(format!(
                "implicit check {}: inner training did not reach stationarity ({})",
                i, gnorm
            )));
        }
        let (mut rmd, _) = rmd_hypergrad(
            &inst.spec, &inst.train, &inst.rows, &inst.reg, &inst.val, &w0, 0.5, steps,
        )?;
        maybe_corrupt(&mut rmd, options.corrupt);
        let implicit = implicit_hypergrad(
            &inst.spec,
            &inst.train,
            &inst.rows,
            &inst.reg,
            &inst.val,
            &w_star,
            &ImplicitConfig::default(),
        )?;
        lines.push(CheckLine {
            name: format!("implicit-vs-rmd lr[{}]", i),
            max_rel_err: rel_diff(&implicit.flatten(), &rmd.flatten()),
            tol: 1e-3,
        });
    }

    let mut failures = 0usize;
    for line in &lines {
        println!(
            "check {:<24} max_rel_err = {:>12.3e}  tol = {:>8.0e}  {}",
            line.name,
            line.max_rel_err,
            line.tol,
            if line.passed() { "PASS" } else { "FAIL" }
        );
        if !line.passed() {
            failures += 1;
        }
    }
    println!(
        "check summary: {} passed, {} failed",
        lines.len() - failures,
        failures
    );
    if failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "{} of {} gradient checks failed",
            failures,
            lines.len()
        )));
    }
    Ok(())
}
