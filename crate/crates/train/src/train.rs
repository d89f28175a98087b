//! Training loops: momentum prox-SGD with an optional terminal prune, and
//! the two-phase half-space variant.
//!
//! Seeds: every random stream is `derive_seed(seed, stream)` for the stream
//! constants in [`streams`]; epoch `e` shuffles with
//! `derive_seed(derive_seed(seed, SHUFFLE), e)`.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wgsef_core::optim::{
    derive_seed, half_space_step, prox_sgd_step, HspgState, MomentumSchedule, Phase, ProxSgdState, Regularizer,
    StepSchedule, SwitchCondition,
};
use wgsef_nn::flops::flops_estimate;
use wgsef_nn::io::write_params;
use wgsef_nn::models::argmax_rows;
use wgsef_nn::{Model, Targets};

use crate::data::{batches, Dataset};
use crate::error::{Result, TrainError};

pub mod streams {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const ROOT: u64 = 2;
    pub const DATA: u64 = 3;
}

/// Batch size used for evaluation passes.
pub const EVAL_BATCH: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step: StepSchedule,
    pub momentum: MomentumSchedule,
    pub seed: u64,
    pub prune_at_end: bool,
    /// Rank groups by `sqrt(d_j) ||theta_j||` instead of `||theta_j||` when pruning.
    pub weighted_prune: bool,
    /// Group norms at or below this count as zero in the metrics.
    pub zero_tol: f64,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, step: StepSchedule, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            step,
            momentum: MomentumSchedule::default(),
            seed,
            prune_at_end: false,
            weighted_prune: false,
            zero_tol: wgsef_core::groups::DEFAULT_ZERO_TOL,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HspgConfig {
    pub switch: SwitchCondition,
    pub epsilon: f64,
}

/// One row of `metrics.csv`. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss of the data term over the epoch.
    pub loss: f64,
    pub val_error: f64,
    pub group_sparsity: f64,
    /// `sum_j u_j` of the last proximal step in the epoch.
    pub dual_mass: f64,
    pub flops_ratio: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HspgSummary {
    /// Steps taken before the half-space phase began (`None` if it never did).
    pub switched_after_steps: Option<usize>,
    pub half_space_steps: usize,
    pub projected_groups: usize,
    /// Groups that were zero before a half-space step and nonzero after it.
    pub reactivations: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// One per epoch; with `prune_at_end` the last one describes the pruned model.
    pub records: Vec<EpochRecord>,
    /// Last-epoch metrics before the prune.
    pub pre_prune: Option<EpochRecord>,
    pub hspg: Option<HspgSummary>,
    /// Steps taken.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Misclassification rate for labels, `100 * SSE / SST` for real targets.
    pub error: f64,
}

pub fn evaluate(model: &Model, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(TrainError::DataEmpty);
    }
    let n = data.len();
    let mut loss = 0.0;
    let mut wrong = 0usize;
    let mut sse = 0.0;
    for start in (0..n).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(n);
        let x = data.inputs.slice_rows(start, end);
        let idx: Vec<usize> = (start..end).collect();
        let t = data.targets.select(&idx);
        let out = model.predict(&x)?;
        loss += model.loss(&x, &t)? * (end - start) as f64;
        match &t {
            Targets::Labels(l) => wrong += argmax_rows(&out).iter().zip(l).filter(|(p, y)| p != y).count(),
            Targets::Values(y) => sse += out.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>(),
        }
    }
    let error = match &data.targets {
        Targets::Labels(_) => 100.0 * wrong as f64 / n as f64,
        Targets::Values(y) => {
            let d = y.data();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let sst: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
            100.0 * sse / if sst > 0.0 { sst } else { d.len() as f64 }
        }
    };
    Ok(Evaluation { loss: loss / n as f64, error })
}

/// Momentum prox-SGD over shuffled minibatches; optionally prunes every term
/// to its `k` largest groups after the last epoch.
pub fn train(model: Model, train: &Dataset, val: &Dataset, reg: &Regularizer<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run(model, train, val, reg, cfg, None)
}

/// Prox-SGD until the switch condition holds, then half-space steps.
pub fn hspg_train(
    model: Model,
    train: &Dataset,
    val: &Dataset,
    reg: &Regularizer<f64>,
    cfg: &TrainConfig,
    hspg: &HspgConfig,
) -> Result<TrainOutcome> {
    run(model, train, val, reg, cfg, Some(hspg))
}

fn zero_groups_mask(reg: &Regularizer<f64>, theta: &[f64]) -> Vec<bool> {
    let mut out = Vec::new();
    for term in &reg.terms {
        let local = term.region.gather(theta);
        out.extend(term.region.partition.group_sq_norms(&local).unwrap().into_iter().map(|s| s == 0.0));
    }
    out
}

fn run(
    mut model: Model,
    train: &Dataset,
    val: &Dataset,
    reg: &Regularizer<f64>,
    cfg: &TrainConfig,
    hspg: Option<&HspgConfig>,
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::DataEmpty);
    }
    if cfg.batch_size == 0 || cfg.batch_size > train.len() {
        return Err(TrainError::ConfigInvalid(format!(
            "batch size {} must lie in [1, {}]",
            cfg.batch_size,
            train.len()
        )));
    }
    if train.sample_shape() != model.spec.input_shape.as_slice() {
        return Err(TrainError::ConfigInvalid(format!(
            "samples of shape {:?} for a model expecting {:?}",
            train.sample_shape(),
            model.spec.input_shape
        )));
    }
    let mut phase = hspg.map(|h| HspgState::new(h.switch, h.epsilon)).transpose()?;
    let mut summary = hspg.map(|_| HspgSummary {
        switched_after_steps: None,
        half_space_steps: 0,
        projected_groups: 0,
        reactivations: 0,
    });
    let mut state = ProxSgdState::new(model.flatten_params());
    let shuffle = derive_seed(cfg.seed, streams::SHUFFLE);
    let root = derive_seed(cfg.seed, streams::ROOT);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut pre_prune = None;
    let mut dual_mass = 0.0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        for idx in batches(train.len(), cfg.batch_size, derive_seed(shuffle, epoch as u64)) {
            let x = train.inputs.gather_rows(&idx);
            let t = train.targets.select(&idx);
            model.scatter_params(&state.theta)?;
            let (loss, grad) = model.loss_and_grad(&x, &t)?;
            loss_sum += loss * idx.len() as f64;

            if let Some(ph) = phase.as_mut() {
                ph.before_step(state.t);
                if ph.phase == Phase::HalfSpace {
                    let s = summary.as_mut().unwrap();
                    s.switched_after_steps.get_or_insert(state.t);
                    let before = zero_groups_mask(reg, &state.theta);
                    let alpha = cfg.step.rate(state.t + 1)?;
                    let rep = half_space_step(&mut state.theta, &grad, reg, alpha, ph.epsilon)?;
                    let after = zero_groups_mask(reg, &state.theta);
                    s.reactivations += before.iter().zip(&after).filter(|(b, a)| **b && !**a).count();
                    s.projected_groups += rep.projected;
                    s.half_space_steps += 1;
                    state.t += 1;
                    continue;
                }
            }
            let report = prox_sgd_step(&mut state, &grad, reg, &cfg.step, &cfg.momentum, root)?;
            dual_mass = report.dual_mass();
        }
        model.scatter_params(&state.theta)?;
        if let Some(ph) = phase.as_mut() {
            ph.end_epoch(reg.zero_groups(&state.theta, cfg.zero_tol));
        }
        let loss = loss_sum / train.len() as f64;
        let mut record = epoch_record(&model, &state.theta, val, reg, cfg, epoch, loss, dual_mass)?;
        if epoch == cfg.epochs && cfg.prune_at_end {
            record.seconds = started.elapsed().as_secs_f64();
            pre_prune = Some(record);
            reg.prune(&mut state.theta, cfg.weighted_prune);
            model.scatter_params(&state.theta)?;
            record = epoch_record(&model, &state.theta, val, reg, cfg, epoch, loss, dual_mass)?;
        }
        record.seconds = started.elapsed().as_secs_f64();
        records.push(record);
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
            if every > 0 && epoch % every == 0 {
                write_checkpoint(dir, epoch, &state, phase.as_ref().map(|p| p.phase))?;
            }
        }
    }
    model.scatter_params(&state.theta)?;
    Ok(TrainOutcome { model, records, pre_prune, hspg: summary, steps: state.t })
}

#[allow(clippy::too_many_arguments)]
fn epoch_record(
    model: &Model,
    theta: &[f64],
    val: &Dataset,
    reg: &Regularizer<f64>,
    cfg: &TrainConfig,
    epoch: usize,
    loss: f64,
    dual_mass: f64,
) -> Result<EpochRecord> {
    let eval = evaluate(model, val)?;
    Ok(EpochRecord {
        epoch,
        loss,
        val_error: eval.error,
        group_sparsity: 100.0 * reg.group_sparsity(theta, cfg.zero_tol),
        dual_mass,
        flops_ratio: 100.0 * flops_estimate(model, theta, cfg.zero_tol)?.ratio,
        seconds: 0.0,
    })
}

#[derive(Serialize)]
struct CheckpointState {
    epoch: usize,
    steps: usize,
    half_space: bool,
}

/// Writes `epoch_NNNN.wgsf` (parameters), `epoch_NNNN.momentum.wgsf` and
/// `epoch_NNNN.state.json`.
fn write_checkpoint(dir: &std::path::Path, epoch: usize, state: &ProxSgdState<f64>, phase: Option<Phase>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("epoch_{epoch:04}");
    write_params(&dir.join(format!("{stem}.wgsf")), &state.theta)?;
    write_params(&dir.join(format!("{stem}.momentum.wgsf")), &state.momentum)?;
    let info = CheckpointState { epoch, steps: state.t, half_space: phase == Some(Phase::HalfSpace) };
    std::fs::write(dir.join(format!("{stem}.state.json")), serde_json::to_string_pretty(&info).unwrap())?;
    Ok(())
}
