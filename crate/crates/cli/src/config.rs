//! Flat key-value configuration with dotted section keys, layered as
//! built-in defaults <- preset <- config file <- command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use poisonlearn::attack::AttackConfig;
use poisonlearn::data::{self, Normalization, RawPool, SplitSpec};
use poisonlearn::models::{ModelSpec, RegGrouping, RegNorm, RegSpec};
use poisonlearn::numerics::RngStream;
use poisonlearn::{Model, Reg, Task};

use crate::presets::preset_map;
use crate::{CliError, CliResult};

/// Raw `key = value` map (deterministic iteration order).
pub type KeyValues = BTreeMap<String, String>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_key_values(text: &str, source: &str) -> CliResult<KeyValues> {
    let mut map = KeyValues::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected `key = value`, got `{}`",
                source,
                lineno + 1,
                line
            )));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!(
                "{}:{}: empty key",
                source,
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Typed extraction that records which keys were consumed, so leftover
/// (misspelled) keys can be reported by name.
struct KeyReader {
    values: KeyValues,
    consumed: BTreeSet<String>,
}

impl KeyReader {
    fn new(values: KeyValues) -> Self {
        Self {
            values,
            consumed: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or_else(|| default.to_string())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| {
                CliError::Config(format!("key `{}`: cannot parse `{}`", key, v))
            }),
        }
    }

    fn f64_opt(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse_f64(key, &v).map(Some),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn bool(&mut self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(CliError::Config(format!(
                    "key `{}`: expected a boolean, got `{}`",
                    key, other
                ))),
            },
        }
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| parse_f64(key, s.trim()))
                .collect::<CliResult<Vec<f64>>>(),
        }
    }

    fn usize_list(&mut self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        CliError::Config(format!("key `{}`: bad entry `{}`", key, s.trim()))
                    })
                })
                .collect(),
        }
    }

    fn finish(self) -> CliResult<()> {
        let unknown: Vec<String> = self
            .values
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

fn parse_f64(key: &str, v: &str) -> CliResult<f64> {
    match v {
        "-inf" | "-INF" => Ok(f64::NEG_INFINITY),
        "inf" | "INF" => Ok(f64::INFINITY),
        _ => v
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("key `{}`: cannot parse `{}` as a number", key, v))),
    }
}

/// Regularization modes an attack experiment runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegMode {
    /// No regularizer at all.
    None,
    /// Fixed large λ (`fixed_lambda`).
    Fixed,
    /// λ learned jointly with the attack by hypergradient descent.
    Rmd,
    /// λ from k-fold cross-validation on the clean training set, then fixed.
    Clean,
}

impl RegMode {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "none" => Ok(RegMode::None),
            "fixed" => Ok(RegMode::Fixed),
            "rmd" => Ok(RegMode::Rmd),
            "clean" => Ok(RegMode::Clean),
            other => Err(CliError::Config(format!(
                "key `modes`: unknown mode `{}` (none|fixed|rmd|clean)",
                other
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegMode::None => "none",
            RegMode::Fixed => "fixed",
            RegMode::Rmd => "rmd",
            RegMode::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Two-Gaussian plane task.
    Synthetic,
    /// Procedurally drawn 0-vs-8 image pool (fully offline).
    SyntheticDigits,
    /// IDX image/label files (MNIST-style layout).
    Idx,
    /// CIFAR-10 binary batch files.
    Cifar10,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub data_dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub cifar_files: Vec<String>,
    pub class_a: u8,
    pub class_b: u8,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub normalization: String,
    /// Synthetic-task sizes (per class).
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// Pool size per class for the synthetic digit task.
    pub digits_per_class: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelConfig {
    pub kind: String,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegConfig {
    pub norm: String,
    pub grouping: String,
    pub include_bias: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSettings {
    pub hyper_iters: usize,
    pub alpha: f64,
    pub inner_steps: usize,
    pub eta: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lambda_init: f64,
    pub fractions: Vec<f64>,
    pub poison_batch: Option<usize>,
    pub normalize_xp_grad: bool,
    pub lambda_sign_update: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSettings {
    pub eta: f64,
    pub epochs: usize,
    pub consistency_k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSettings {
    pub grid_n: usize,
    pub lambda_grid: GridSpec,
    pub fixed_lambda: f64,
    pub attack_restarts: usize,
}

/// Inclusive arithmetic grid `lo, lo+step, ..., hi`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut v = self.lo;
        while v <= self.hi + 1e-12 {
            out.push(v);
            v += self.step;
        }
        out
    }

    fn parse(key: &str, text: &str) -> CliResult<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "key `{}`: expected `lo:hi:step`, got `{}`",
                key, text
            )));
        }
        let lo = parse_f64(key, parts[0])?;
        let hi = parse_f64(key, parts[1])?;
        let step = parse_f64(key, parts[2])?;
        if step <= 0.0 || hi < lo {
            return Err(CliError::Config(format!("key `{}`: empty grid", key)));
        }
        Ok(GridSpec { lo, hi, step })
    }
}

/// Fully resolved experiment description; embedded verbatim into every
/// result file for auditability.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub reg: RegConfig,
    pub attack: AttackSettings,
    pub eval: EvalSettings,
    pub modes: Vec<RegMode>,
    pub fixed_lambda: f64,
    pub clean_grid: GridSpec,
    pub clean_folds: usize,
    pub hyperlearn_cv: bool,
    pub synth: SynthSettings,
    pub repetitions: usize,
    pub master_seed: u64,
    pub output: PathBuf,
    pub jobs: usize,
}

/// Command-line overrides applied after file keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

pub fn load_config(
    config_path: Option<&Path>,
    preset: Option<&str>,
    overrides: &Overrides,
) -> CliResult<ExperimentConfig> {
    let mut merged = KeyValues::new();
    if let Some(name) = preset {
        let presets = preset_map();
        let Some(values) = presets.get(name) else {
            let known: Vec<&str> = presets.keys().copied().collect();
            return Err(CliError::Config(format!(
                "unknown preset `{}`; available: {}",
                name,
                known.join(", ")
            )));
        };
        for (k, v) in values.iter() {
            merged.insert(k.to_string(), v.to_string());
        }
    }
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        let file_values = parse_key_values(&text, &path.display().to_string())?;
        merged.extend(file_values);
    }
    resolve(merged, preset, overrides)
}

fn resolve(
    values: KeyValues,
    preset: Option<&str>,
    overrides: &Overrides,
) -> CliResult<ExperimentConfig> {
    let mut r = KeyReader::new(values);

    let task_kind = match r.string("task.kind", "synthetic").as_str() {
        "synthetic" => TaskKind::Synthetic,
        "synthetic-digits" => TaskKind::SyntheticDigits,
        "mnist" | "fmnist" | "idx" => TaskKind::Idx,
        "cifar10" => TaskKind::Cifar10,
        other => {
            return Err(CliError::Config(format!(
                "key `task.kind`: unknown task `{}`",
                other
            )))
        }
    };
    let task = TaskConfig {
        kind: task_kind,
        data_dir: PathBuf::from(r.string("task.data_dir", ".")),
        train_images: r.string("task.train_images", "train-images-idx3-ubyte"),
        train_labels: r.string("task.train_labels", "train-labels-idx1-ubyte"),
        test_images: r.string("task.test_images", "t10k-images-idx3-ubyte"),
        test_labels: r.string("task.test_labels", "t10k-labels-idx1-ubyte"),
        cifar_files: r
            .string(
                "task.cifar_files",
                "data_batch_1.bin,data_batch_2.bin,data_batch_3.bin,data_batch_4.bin,data_batch_5.bin,test_batch.bin",
            )
            .split(',')
            .map(|s| s.trim().to_string())
            .collect(),
        class_a: r.parse("task.class_a", 0u8)?,
        class_b: r.parse("task.class_b", 8u8)?,
        n_train: r.parse("task.n_train", 5000usize)?,
        n_val: r.parse("task.n_val", 500usize)?,
        n_test: r.parse("task.n_test", 3000usize)?,
        normalization: r.string("task.normalization", "unit"),
        train_per_class: r.parse("task.train_per_class", 16usize)?,
        val_per_class: r.parse("task.val_per_class", 32usize)?,
        test_per_class: r.parse("task.test_per_class", 256usize)?,
        digits_per_class: r.parse("task.digits_per_class", 1200usize)?,
    };

    let model = ModelConfig {
        kind: r.string("model.kind", "lr"),
        hidden: r.usize_list("model.hidden", &[32, 8])?,
        leaky_slope: r.f64("model.leaky_slope", 0.01)?,
    };

    let reg = RegConfig {
        norm: r.string("reg.norm", "l2"),
        grouping: r.string("reg.grouping", "single"),
        include_bias: r.bool("reg.include_bias", false)?,
    };

    let attack = AttackSettings {
        hyper_iters: r.parse("attack.hyper_iters", 100usize)?,
        alpha: r.f64("attack.alpha", 0.3)?,
        inner_steps: r.parse("attack.inner_steps", 100usize)?,
        eta: r.f64("attack.eta", 0.1)?,
        lambda_lo: r.f64("attack.lambda_lo", f64::NEG_INFINITY)?,
        lambda_hi: r.f64("attack.lambda_hi", (5e3f64).ln())?,
        lambda_init: r.f64("attack.lambda_init", 0.0)?,
        fractions: r.f64_list("attack.fractions", &[0.0, 0.1, 0.2])?,
        poison_batch: match r.raw("attack.poison_batch") {
            None => None,
            Some(v) if v == "none" => None,
            Some(v) => Some(v.parse::<usize>().map_err(|_| {
                CliError::Config(format!("key `attack.poison_batch`: bad value `{}`", v))
            })?),
        },
        normalize_xp_grad: r.bool("attack.normalize_xp_grad", true)?,
        lambda_sign_update: r.bool("attack.lambda_sign_update", true)?,
    };

    let eval = EvalSettings {
        eta: r.f64("eval.eta", attack.eta)?,
        epochs: r.parse("eval.epochs", attack.inner_steps)?,
        consistency_k: r.parse("eval.consistency_k", 20usize)?,
    };

    let modes = r
        .string("modes", "none,rmd")
        .split(',')
        .map(|s| RegMode::parse(s.trim()))
        .collect::<CliResult<Vec<RegMode>>>()?;

    // The customary "very large" λ depends on the norm; an explicit
    // `fixed.lambda` wins.
    let fixed_l2 = r.f64("fixed.lambda_l2", 1000f64.ln())?;
    let fixed_l1 = r.f64("fixed.lambda_l1", 50f64.ln())?;
    let fixed_lambda = match r.f64_opt("fixed.lambda")? {
        Some(v) => v,
        None => match reg.norm.as_str() {
            "l1" => fixed_l1,
            _ => fixed_l2,
        },
    };

    let clean_grid = GridSpec::parse("clean.grid", &r.string("clean.grid", "-8:6:1"))?;
    let clean_folds = r.parse("clean.folds", 5usize)?;
    let hyperlearn_cv = r.bool("hyperlearn.cv", false)?;

    let synth = SynthSettings {
        grid_n: r.parse("synth.grid_n", 12usize)?,
        lambda_grid: GridSpec::parse("synth.lambda_grid", &r.string("synth.lambda_grid", "-8:6:0.5"))?,
        fixed_lambda: r.f64("synth.fixed_lambda", 20f64.ln())?,
        attack_restarts: r.parse("synth.attack_restarts", 1usize)?,
    };

    let repetitions = r.parse("repetitions", 1usize)?;
    if repetitions == 0 {
        return Err(CliError::Config("key `repetitions`: must be >= 1".into()));
    }
    let master_seed = r.parse("master_seed", 0u64)?;
    let output = PathBuf::from(r.string("output", "results.jsonl"));
    let jobs = r.parse("jobs", 1usize)?;

    r.finish()?;

    Ok(ExperimentConfig {
        preset: preset.map(|s| s.to_string()),
        task,
        model,
        reg,
        attack,
        eval,
        modes,
        fixed_lambda,
        clean_grid,
        clean_folds,
        hyperlearn_cv,
        synth,
        repetitions,
        master_seed: overrides.seed.unwrap_or(master_seed),
        output: overrides.out.clone().unwrap_or(output),
        jobs: overrides.jobs.unwrap_or(jobs).max(1),
    })
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> CliResult<Model> {
        match self.model.kind.as_str() {
            "lr" => Ok(ModelSpec::logistic(self.input_dim()?)),
            "mlp" => {
                let mut sizes = vec![self.input_dim()?];
                sizes.extend_from_slice(&self.model.hidden);
                sizes.push(1);
                Ok(ModelSpec::mlp(sizes, self.model.leaky_slope)?)
            }
            other => Err(CliError::Config(format!(
                "key `model.kind`: unknown model `{}`",
                other
            ))),
        }
    }

    pub fn input_dim(&self) -> CliResult<usize> {
        Ok(match self.task.kind {
            TaskKind::Synthetic => 2,
            TaskKind::SyntheticDigits | TaskKind::Idx => 784,
            TaskKind::Cifar10 => 3072,
        })
    }

    fn reg_norm(&self) -> CliResult<RegNorm> {
        match self.reg.norm.as_str() {
            "none" => Ok(RegNorm::None),
            "l2" => Ok(RegNorm::L2),
            "l1" => Ok(RegNorm::L1),
            other => Err(CliError::Config(format!(
                "key `reg.norm`: unknown norm `{}`",
                other
            ))),
        }
    }

    fn reg_grouping(&self) -> CliResult<RegGrouping> {
        match self.reg.grouping.as_str() {
            "single" => Ok(RegGrouping::Single),
            "per-layer" => Ok(RegGrouping::PerLayer),
            other => Err(CliError::Config(format!(
                "key `reg.grouping`: unknown grouping `{}`",
                other
            ))),
        }
    }

    fn group_count(&self) -> CliResult<usize> {
        Ok(match self.reg_grouping()? {
            RegGrouping::Single => 1,
            RegGrouping::PerLayer => self.model_spec()?.n_layers(),
        })
    }

    /// Regularizer (with starting λ values) for a given mode.
    pub fn reg_for_mode(&self, mode: RegMode, lambda: Option<&[f64]>) -> CliResult<Reg> {
        if mode == RegMode::None {
            return Ok(RegSpec::none());
        }
        let norm = self.reg_norm()?;
        if norm == RegNorm::None {
            return Err(CliError::Config(format!(
                "mode `{}` needs reg.norm of l1 or l2",
                mode.name()
            )));
        }
        let h = self.group_count()?;
        let lambdas: Vec<f64> = match (mode, lambda) {
            (_, Some(values)) => values.to_vec(),
            (RegMode::Fixed, None) => vec![self.fixed_lambda; h],
            (RegMode::Rmd, None) => vec![self.attack.lambda_init; h],
            (RegMode::Clean, None) | (RegMode::None, None) => vec![0.0; h],
        };
        let reg = RegSpec {
            norm,
            grouping: self.reg_grouping()?,
            lambdas,
            include_bias: self.reg.include_bias,
        };
        reg.validate_for(self.model_spec()?.n_layers())?;
        Ok(reg)
    }

    /// Attack settings for a mode; λ is only learned in `rmd` mode.
    pub fn attack_config(&self, mode: RegMode, seed: u64) -> AttackConfig<f64> {
        AttackConfig {
            hyper_iters: self.attack.hyper_iters,
            alpha: self.attack.alpha,
            inner_steps: self.attack.inner_steps,
            eta: self.attack.eta,
            lambda_bounds: (self.attack.lambda_lo, self.attack.lambda_hi),
            lambda_init: self.attack.lambda_init,
            learn_lambda: mode == RegMode::Rmd,
            fraction_schedule: self.attack.fractions.clone(),
            poison_batch: self.attack.poison_batch,
            normalize_xp_grad: self.attack.normalize_xp_grad,
            lambda_sign_update: self.attack.lambda_sign_update,
            seed,
        }
    }

    fn normalization(&self) -> CliResult<Normalization> {
        match self.task.normalization.as_str() {
            "unit" => Ok(Normalization::UnitInterval),
            "symmetric" => Ok(Normalization::SymmetricUnit),
            other => Err(CliError::Config(format!(
                "key `task.normalization`: unknown mode `{}` (unit|symmetric)",
                other
            ))),
        }
    }

    /// Materializes (train, validation, test) for one repetition seed.
    pub fn build_task(&self, seed: u64) -> CliResult<(Task, Task, Task)> {
        match self.task.kind {
            TaskKind::Synthetic => {
                let mut rng = RngStream::new(seed).derive("task");
                let (train, val) = data::gen_synthetic_gaussians(
                    self.task.train_per_class,
                    self.task.val_per_class,
                    &mut rng,
                )?;
                let test = data::sample_gaussian_task(
                    self.task.test_per_class,
                    &mut rng.derive("test"),
                )?;
                Ok((train, val, test))
            }
            TaskKind::SyntheticDigits => {
                // The pool is a fixed corpus: its content does not depend on
                // the split seed.
                let mut pool_rng = RngStream::new(0xD161).derive("digit-pool");
                let pool = data::gen_digit_pool(self.task.digits_per_class, &mut pool_rng)?;
                self.split_pool(&pool, seed)
            }
            TaskKind::Idx => {
                let dir = &self.task.data_dir;
                let train = data::load_idx_pool(
                    dir.join(&self.task.train_images),
                    dir.join(&self.task.train_labels),
                )?;
                let test = data::load_idx_pool(
                    dir.join(&self.task.test_images),
                    dir.join(&self.task.test_labels),
                )?;
                let pool = RawPool::concat(&[train, test])?;
                self.split_pool(&pool, seed)
            }
            TaskKind::Cifar10 => {
                let paths: Vec<PathBuf> = self
                    .task
                    .cifar_files
                    .iter()
                    .map(|f| self.task.data_dir.join(f))
                    .collect();
                let pool = data::load_cifar10_binary(&paths)?;
                self.split_pool(&pool, seed)
            }
        }
    }

    fn split_pool(&self, pool: &RawPool, seed: u64) -> CliResult<(Task, Task, Task)> {
        let spec = SplitSpec {
            n_train: self.task.n_train,
            n_val: self.task.n_val,
            n_test: self.task.n_test,
            class_pair: (self.task.class_a, self.task.class_b),
            normalization: self.normalization()?,
            seed,
        };
        Ok(data::make_binary_task(pool, &spec)?)
    }
}
