//! Result serialization: line-delimited JSON records headed by the resolved
//! config, plus a CSV projection for plotting.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::{CliError, CliResult};

/// First line of every result file: the full resolved configuration and the
/// code version, so results are self-describing.
#[derive(Debug, Serialize)]
pub struct Header<'a> {
    pub record: &'static str,
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a ExperimentConfig,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One evaluation cell of an attack experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub record: String,
    pub repetition: usize,
    pub mode: String,
    pub fraction: f64,
    pub n_poisons: usize,
    pub test_error: f64,
    /// λ in effect when retraining for evaluation (empty for mode `none`).
    pub lambdas: Vec<f64>,
    pub weight_norm_total: f64,
    pub weight_norms_per_layer: Vec<f64>,
    /// Top-k feature consistency vs. the same mode's clean baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<f64>,
    /// Outer loss recorded at the final hyperiteration of this fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    /// Wall time; stripped before determinism comparisons.
    pub timing_s: f64,
}

pub fn write_jsonl(path: &Path, header: &Header<'_>, lines: &[Value]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header_line = serde_json::to_string(header)
        .map_err(|e| CliError::Config(format!("serialize header: {}", e)))?;
    writeln!(out, "{}", header_line)?;
    for line in lines {
        let text = serde_json::to_string(line)
            .map_err(|e| CliError::Config(format!("serialize record: {}", e)))?;
        writeln!(out, "{}", text)?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("record serialization cannot fail")
}

/// Timing fields carry wall-clock noise; everything else in a result file is
/// a pure function of config + seed.
const TIMING_KEYS: &[&str] = &["timing_s", "wall_time_s"];

fn strip_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for key in TIMING_KEYS {
                map.remove(*key);
            }
            for (_, v) in map.iter_mut() {
                strip_timing(v);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Canonical content of a result file for determinism comparisons: every
/// line parsed, timing fields removed, re-serialized.
pub fn canonical_content(path: &Path) -> CliResult<String> {
    let text = std::fs::read_to_string(path)?;
    let mut out = String::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut value: Value = serde_json::from_str(line).map_err(|e| {
            CliError::Config(format!("{}:{}: bad JSON: {}", path.display(), lineno + 1, e))
        })?;
        strip_timing(&mut value);
        out.push_str(&value.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Flat `(mode, fraction, mean test error, mean λ)` projection across
/// repetitions, ordered by mode appearance then fraction.
pub fn write_csv_projection(path: &Path, records: &[ResultRecord]) -> CliResult<()> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys
            .iter()
            .any(|(m, f)| m == &r.mode && (f - r.fraction).abs() < 1e-12)
        {
            keys.push((r.mode.clone(), r.fraction));
        }
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mode,fraction,mean_test_error,mean_lambda")?;
    for (mode, fraction) in keys {
        let cells: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| r.mode == mode && (r.fraction - fraction).abs() < 1e-12)
            .collect();
        let mean_err: f64 =
            cells.iter().map(|r| r.test_error).sum::<f64>() / cells.len() as f64;
        let lambda_means: Vec<f64> = cells
            .iter()
            .filter(|r| !r.lambdas.is_empty())
            .map(|r| r.lambdas.iter().sum::<f64>() / r.lambdas.len() as f64)
            .collect();
        let mean_lambda = if lambda_means.is_empty() {
            String::new()
        } else {
            format!(
                "{}",
                lambda_means.iter().sum::<f64>() / lambda_means.len() as f64
            )
        };
        writeln!(out, "{},{},{},{}", mode, fraction, mean_err, mean_lambda)?;
    }
    out.flush()?;
    Ok(())
}

/// Conventional CSV sibling of a JSONL output path.
pub fn csv_sibling(path: &Path) -> std::path::PathBuf {
    path.with_extension("csv")
}
