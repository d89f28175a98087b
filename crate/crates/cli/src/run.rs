//! The `train` command and the files it writes.
//!
//! Output directory layout:
//!
//! ```text
//! config.json     effective configuration (seed override applied)
//! metrics.csv     one row per epoch
//! model.wgsf      final parameters; model.json holds the model spec
//! pruned.wgsf     structurally compacted export; pruned.json its record
//! summary.json    final metrics, per-layer FLOPs and unit counts
//! checkpoints/    only with checkpoint_every
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wgsef_nn::compact::compact;
use wgsef_nn::flops::flops_estimate;
use wgsef_nn::io::write_params;
use wgsef_nn::ModelSpec;
use wgsef_train::train::HspgSummary;
use wgsef_train::{hspg_train, train, EpochRecord, TrainOutcome};

use crate::config::{Experiment, Planted, RunConfig};
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 7] = ["epoch", "loss", "val_error", "group_sparsity", "dual_mass", "flops_ratio", "seconds"];

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub seed: Option<u64>,
    /// Zeroes every wall-clock field so identical runs write identical files.
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub optimizer: String,
    pub epochs: usize,
    pub steps: usize,
    /// Last metrics row (after the prune when `prune_at_end` is set).
    #[serde(rename = "final")]
    pub final_metrics: Option<EpochRecord>,
    pub pre_prune: Option<EpochRecord>,
    pub groups: GroupCounts,
    pub terms: Vec<TermSummary>,
    pub layers: Vec<LayerSummary>,
    pub flops: FlopsSummary,
    pub params: ParamSummary,
    pub hspg: Option<HspgSummary>,
    pub support_recovery: Option<SupportRecovery>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub total: usize,
    pub zero: usize,
    /// `sum_l (m_l - k_l)`.
    pub target_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub label: String,
    pub groups: usize,
    pub k: usize,
    pub lambda: f64,
    pub zero_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub label: String,
    /// Filters or neurons.
    pub units: usize,
    pub alive_units: usize,
    pub dense_flops: u64,
    pub flops: u64,
    pub flops_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsSummary {
    pub dense: u64,
    pub pruned: u64,
    /// Percent.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub total: usize,
    pub nonzero: usize,
    pub compact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecovery {
    pub planted: Vec<usize>,
    pub recovered: Vec<usize>,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelSidecar {
    spec: ModelSpec,
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub outcome: TrainOutcome,
    pub summary: Summary,
}

/// Groups whose parameters are not all zero.
pub fn recovered_support(planted: &Planted, theta: &[f64]) -> Vec<usize> {
    (0..planted.groups.len()).filter(|&j| planted.groups[j].iter().any(|&i| theta[i] != 0.0)).collect()
}

/// Removes the files a failed run created (and the directory if it made it).
struct Cleanup {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    armed: bool,
}

impl Cleanup {
    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        let _ = std::fs::remove_dir_all(self.dir.join("checkpoints"));
        if self.created_dir {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

pub fn cmd_train(config_path: &Path, opts: &TrainOptions) -> Result<RunReport> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = opts
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
    let exp = config.prepare(&base)?;
    run_experiment(&exp, &out, opts.deterministic)
}

/// Trains a prepared experiment and writes every output file into `out`.
pub fn run_experiment(exp: &Experiment, out: &Path, deterministic: bool) -> Result<RunReport> {
    let created_dir = !out.exists();
    std::fs::create_dir_all(out)?;
    let mut cleanup = Cleanup { dir: out.to_path_buf(), created_dir, files: Vec::new(), armed: true };
    let report = write_run(exp, out, deterministic, &mut cleanup)?;
    cleanup.armed = false;
    Ok(report)
}

fn write_run(exp: &Experiment, out: &Path, deterministic: bool, cleanup: &mut Cleanup) -> Result<RunReport> {
    let config = &exp.config;
    let path = cleanup.track(out.join("config.json"));
    std::fs::write(path, serde_json::to_string_pretty(config)?)?;

    let mut tc = config.train_config();
    if tc.checkpoint_every.is_some() {
        tc.checkpoint_dir = Some(out.join("checkpoints"));
    }
    let started = Instant::now();
    let mut outcome = match config.hspg_config() {
        None => train(exp.model.clone(), &exp.train, &exp.eval, &exp.reg, &tc)?,
        Some(h) => hspg_train(exp.model.clone(), &exp.train, &exp.eval, &exp.reg, &tc, &h)?,
    };
    let seconds = if deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
    if deterministic {
        outcome.records.iter_mut().for_each(|r| r.seconds = 0.0);
        if let Some(r) = outcome.pre_prune.as_mut() {
            r.seconds = 0.0;
        }
    }

    write_metrics(&cleanup.track(out.join("metrics.csv")), &outcome.records)?;
    let theta = outcome.model.flatten_params();
    write_params(&cleanup.track(out.join("model.wgsf")), &theta)?;
    let sidecar = ModelSidecar { spec: outcome.model.spec.clone() };
    std::fs::write(cleanup.track(out.join("model.json")), serde_json::to_string_pretty(&sidecar)?)?;
    let (compacted, record) = compact(&outcome.model, config.zero_tol)?;
    write_params(&cleanup.track(out.join("pruned.wgsf")), &compacted.flatten_params())?;
    std::fs::write(cleanup.track(out.join("pruned.json")), serde_json::to_string_pretty(&record)?)?;

    let flops = flops_estimate(&outcome.model, &theta, config.zero_tol)?;
    let zero_per_term = exp.reg.zero_groups_per_term(&theta, config.zero_tol);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        name: config.name.clone(),
        seed: config.seed,
        optimizer: match config.hspg_config() {
            None => "prox_sgd".into(),
            Some(_) => "hspg".into(),
        },
        epochs: config.epochs,
        steps: outcome.steps,
        final_metrics: outcome.records.last().cloned(),
        pre_prune: outcome.pre_prune.clone(),
        groups: GroupCounts {
            total: exp.reg.total_groups(),
            zero: zero_per_term.iter().sum(),
            target_zero: exp.reg.target_zero_groups(),
        },
        terms: exp
            .reg
            .terms
            .iter()
            .zip(&zero_per_term)
            .map(|(t, &z)| TermSummary {
                label: t.region.label.clone(),
                groups: t.region.partition.len(),
                k: t.params.k,
                lambda: t.params.lambda,
                zero_groups: z,
            })
            .collect(),
        layers: flops
            .layers
            .iter()
            .map(|l| LayerSummary {
                label: l.label.clone(),
                units: l.outputs,
                alive_units: l.alive_outputs,
                dense_flops: l.dense_flops,
                flops: l.flops,
                flops_ratio: 100.0 * l.ratio,
            })
            .collect(),
        flops: FlopsSummary { dense: flops.dense_flops, pruned: flops.flops, ratio: 100.0 * flops.ratio },
        params: ParamSummary {
            total: theta.len(),
            nonzero: theta.iter().filter(|v| **v != 0.0).count(),
            compact: record.compact_params,
        },
        hspg: outcome.hspg.clone(),
        support_recovery: exp.planted.as_ref().map(|p| {
            let recovered = recovered_support(p, &theta);
            SupportRecovery { exact: recovered == p.support, planted: p.support.clone(), recovered }
        }),
        seconds,
    };
    std::fs::write(cleanup.track(out.join("summary.json")), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunReport { out_dir: out.to_path_buf(), outcome, summary })
}

pub fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.val_error.to_string(),
            r.group_sparsity.to_string(),
            r.dual_mass.to_string(),
            r.flops_ratio.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != METRICS_HEADER {
        return Err(CliError::Config(format!("{} has header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
