//! The `eval` command: error, group sparsity and a FLOPs table for a saved model.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use wgsef_nn::compact::{compact_shape, CompactionRecord};
use wgsef_nn::flops::{flops_estimate, FlopsReport};
use wgsef_nn::io::read_params;
use wgsef_nn::{Model, ModelSpec, NnError};
use wgsef_train::evaluate;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub error: f64,
    /// Percent; `None` for a compacted export, whose groups differ from the config's.
    pub group_sparsity: Option<f64>,
    pub flops: FlopsReport,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "error          {:.4}%", self.error)?;
        writeln!(f, "loss           {:.6}", self.loss)?;
        match self.group_sparsity {
            Some(s) => writeln!(f, "group sparsity {s:.2}%")?,
            None => writeln!(f, "group sparsity n/a")?,
        }
        writeln!(f, "{:<8} {:>7} {:>12} {:>12} {:>8}", "layer", "units", "dense FLOPs", "FLOPs", "ratio")?;
        for l in &self.flops.layers {
            writeln!(
                f,
                "{:<8} {:>3}/{:<3} {:>12} {:>12} {:>7.2}%",
                l.label,
                l.alive_outputs,
                l.outputs,
                l.dense_flops,
                l.flops,
                100.0 * l.ratio
            )?;
        }
        write!(f, "{:<8} {:>7} {:>12} {:>12} {:>7.2}%", "total", "", self.flops.dense_flops, self.flops.flops, 100.0 * self.flops.ratio)
    }
}

#[derive(Deserialize)]
struct Sidecar {
    spec: ModelSpec,
}

/// `model.wgsf` next to `model.json` (a spec) or `pruned.json` (a compaction record).
pub fn load_model(path: &Path) -> Result<(Model, bool)> {
    let sidecar = path.with_extension("json");
    let text = std::fs::read_to_string(&sidecar)
        .map_err(|e| NnError::BadModelFile(format!("cannot read {}: {e}", sidecar.display())))?;
    let bad = |e: serde_json::Error| NnError::BadModelFile(format!("{}: {e}", sidecar.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let (mut model, compacted) = if value.get("layers").is_some() {
        let record: CompactionRecord = serde_json::from_value(value).map_err(bad)?;
        (compact_shape(&record)?, true)
    } else {
        let sc: Sidecar = serde_json::from_value(value).map_err(bad)?;
        (Model::build(&sc.spec)?, false)
    };
    let theta = read_params(path)?;
    model.scatter_params(&theta).map_err(|e| NnError::BadModelFile(e.to_string()))?;
    Ok((model, compacted))
}

/// Evaluates `model_path` on the config's evaluation split.
pub fn cmd_eval(config_path: &Path, model_path: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<EvalReport> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let model_path: PathBuf = match model_path {
        Some(p) => p.to_path_buf(),
        None => out
            .map(Path::to_path_buf)
            .or_else(|| config.output_dir.clone())
            .map(|d| d.join("model.wgsf"))
            .ok_or_else(|| CliError::Config("no model: pass --model or --out".into()))?,
    };
    let (model, compacted) = load_model(&model_path)?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let exp = config.prepare(&base)?;
    evaluate_model(&model, compacted, &exp)
}

pub fn evaluate_model(model: &Model, compacted: bool, exp: &crate::config::Experiment) -> Result<EvalReport> {
    let eval = evaluate(model, &exp.eval)?;
    let theta = model.flatten_params();
    let group_sparsity = (!compacted && theta.len() == exp.model.num_params())
        .then(|| 100.0 * exp.reg.group_sparsity(&theta, exp.config.zero_tol));
    Ok(EvalReport {
        loss: eval.loss,
        error: eval.error,
        group_sparsity,
        flops: flops_estimate(model, &theta, exp.config.zero_tol)?,
    })
}
