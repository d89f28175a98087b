//! Acceptance checks. Each check returns an [`Outcome`] instead of
//! panicking so a driver can report every criterion in one pass.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgsef_cli::bench::{bench_prox, DEFAULT_SIZES};
use wgsef_cli::config::{Experiment, OptimizerConfig};
use wgsef_cli::run::recovered_support;
use wgsef_cli::{CliError, RunConfig};
use wgsef_core::envelope::{prox, value, EnvelopeParams};
use wgsef_core::groups::GroupPartition;
use wgsef_core::optim::SwitchCondition;
use wgsef_core::selftest::{envelope_law_suites, prox_oracle_suite, sef_reduction_suite, SuiteReport};
use wgsef_nn::gradcheck::{check_model, primitive_suite, DEFAULT_STEP, DEFAULT_TOL};
use wgsef_nn::{Architecture, Model, ModelSpec, Targets, Tensor};
use wgsef_train::{hspg_train, train, EpochRecord, TrainOutcome};

pub const ORACLE_TIME_LIMIT: f64 = 30.0;
pub const SYNTHETIC_TIME_LIMIT: f64 = 30.0;
pub const LENET_TIME_LIMIT: f64 = 1800.0;
pub const LENET_ERROR_GAP: f64 = 1.5;
pub const HSPG_ERROR_GAP: f64 = 1.0;
pub const RECOVERY_RUNS: u64 = 20;
pub const RECOVERY_REQUIRED: usize = 18;
pub const HSPG_PAIRS: u64 = 5;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{:>2}] {}: {} ({:.1} s)", self.id, self.name, self.detail, self.seconds)
    }
}

fn timed(id: usize, name: &'static str, check: impl FnOnce() -> Result<(bool, String), CliError>) -> Outcome {
    let started = Instant::now();
    let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome { id, name, passed, detail, seconds: started.elapsed().as_secs_f64() }
}

fn suites_detail(reports: &[SuiteReport]) -> (bool, String) {
    let passed = reports.iter().all(SuiteReport::passed);
    let detail = reports
        .iter()
        .map(|r| format!("{} worst {:.1e}/{:.0e} ({} fail)", r.name, r.worst, r.tolerance, r.failures))
        .collect::<Vec<_>>()
        .join(", ");
    (passed, detail)
}

/// Randomized root search against the bisection oracle on 10^4 instances.
pub fn prox_oracle(seed: u64) -> Outcome {
    let mut out = timed(1, "prox oracle equivalence", || {
        let rep = prox_oracle_suite(10_000, seed);
        Ok((rep.passed() && rep.trials == 10_000, format!("{} instances, worst {:.2e} <= 1e-8", rep.trials, rep.worst)))
    });
    if out.seconds >= ORACLE_TIME_LIMIT {
        out.passed = false;
    }
    out.detail += &format!(", limit {ORACLE_TIME_LIMIT} s");
    out
}

/// The two hand-solved anchors on singleton groups, unit weights, k = 1, lambda = 1.
///
/// Value at x = (3, 1): minimise 1/2 (9/u1 + 1/u2) over u1 + u2 = 1. Stationarity
/// gives 9/u1^2 = 1/u2^2, so u = (3/4, 1/4) and the value is 1/2 (12 + 4) = 8.
///
/// Prox at t = (3, 1): u_i = clamp(eta |t_i| - 1, 0, 1) with sum u = 1. For
/// eta in [2/3, 1] this is u = (1, 0), so v = (1 * 3 / (1 + 1), 0) = (1.5, 0).
pub fn hand_anchors() -> Outcome {
    timed(2, "hand anchors", || {
        let p = GroupPartition::<f64>::singletons(2)?;
        let prm = EnvelopeParams::new(1, 1.0)?;
        let (v, _) = prox(&p, &prm, 1.0, &[3.0, 1.0], 0)?;
        let (val, dual) = value(&p, &prm, &[3.0, 1.0])?;
        let errs = [
            (v[0] - 1.5).abs().max(v[1].abs()),
            (val - 8.0).abs(),
            (dual.u[0] - 0.75).abs().max((dual.u[1] - 0.25).abs()),
        ];
        let worst = errs.iter().copied().fold(0.0, f64::max);
        Ok((
            worst <= 1e-10,
            format!("prox {v:?}, value {val}, u {:?}, worst {worst:.1e} <= 1e-10", dual.u),
        ))
    })
}

/// Sparse equality, underestimation, midpoint convexity, nonexpansiveness and
/// Fenchel-Young on 10^3 random points.
pub fn envelope_laws(seed: u64) -> Outcome {
    timed(3, "envelope laws", || {
        let reports = envelope_law_suites(1000, seed);
        let (passed, detail) = suites_detail(&reports);
        Ok((passed && reports.iter().all(|r| r.trials == 1000), detail))
    })
}

/// Singleton groups with unit weights against the sorted scalar closed forms.
pub fn sef_reduction(seed: u64) -> Outcome {
    timed(4, "scalar envelope reduction", || Ok(suites_detail(&[sef_reduction_suite(1000, seed)])))
}

/// Every autodiff primitive and the full LeNet-5 against central differences.
pub fn gradient_checks(seed: u64) -> Outcome {
    timed(5, "gradient checks", || {
        let mut reports = primitive_suite(seed)?;
        let model = Model::build(&ModelSpec {
            architecture: Architecture::LeNet5,
            input_shape: vec![1, 32, 32],
            outputs: 10,
            seed,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(vec![2, 1, 32, 32], (0..2 * 1024).map(|_| rng.random_range(0.0..1.0)).collect())?;
        let labels = Targets::Labels(vec![rng.random_range(0..10), rng.random_range(0..10)]);
        reports.push(check_model("lenet5", &model, &x, &labels, 300, seed, DEFAULT_STEP, DEFAULT_TOL)?);
        let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.to_string()).collect();
        let checked: usize = reports.iter().map(|r| r.checked).sum();
        let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
        let detail = if failed.is_empty() {
            format!("{} checks, {checked} coordinates, worst rel. error {worst:.1e} <= {DEFAULT_TOL:.0e}", reports.len())
        } else {
            failed.join("; ")
        };
        Ok((failed.is_empty(), detail))
    })
}

pub fn synthetic_config(seed: u64) -> Result<RunConfig, CliError> {
    RunConfig::from_json(&format!(
        r#"{{
            "name": "synthetic-recovery",
            "model": {{"kind": "linear"}},
            "data": {{"kind": "synthetic", "n": 200, "m": 20, "support": 4, "sigma": 0.01, "samples": 1000}},
            "regularizer": {{"lambda": 0.1, "k": 4, "scope": "global"}},
            "step": {{"kind": "constant", "rate": 0.02}},
            "epochs": 20,
            "batch_size": 32,
            "seed": {seed},
            "prune_at_end": true
        }}"#
    ))
}

fn run(exp: &Experiment) -> Result<TrainOutcome, CliError> {
    let tc = exp.config.train_config();
    Ok(match exp.config.hspg_config() {
        None => train(exp.model.clone(), &exp.train, &exp.eval, &exp.reg, &tc)?,
        Some(h) => hspg_train(exp.model.clone(), &exp.train, &exp.eval, &exp.reg, &tc, &h)?,
    })
}

/// Planted-support recovery on 20 seeded synthetic regressions.
pub fn support_recovery() -> Outcome {
    timed(6, "synthetic support recovery", || {
        let mut exact = 0;
        let mut slowest: f64 = 0.0;
        let mut misses = Vec::new();
        for seed in 0..RECOVERY_RUNS {
            let started = Instant::now();
            let exp = synthetic_config(seed)?.prepare(Path::new("."))?;
            let out = run(&exp)?;
            slowest = slowest.max(started.elapsed().as_secs_f64());
            let planted = exp.planted.as_ref().ok_or_else(|| CliError::Failed("no planted support".into()))?;
            if recovered_support(planted, &out.model.flatten_params()) == planted.support {
                exact += 1;
            } else {
                misses.push(seed);
            }
        }
        let passed = exact >= RECOVERY_REQUIRED && slowest < SYNTHETIC_TIME_LIMIT;
        Ok((
            passed,
            format!(
                "{exact}/{RECOVERY_RUNS} exact (need {RECOVERY_REQUIRED}), missed seeds {misses:?}, slowest run {slowest:.2} s < {SYNTHETIC_TIME_LIMIT} s"
            ),
        ))
    })
}

/// The sparse LeNet-5 run and its identically seeded unregularized baseline.
pub struct LenetRuns {
    pub sparse: Experiment,
    pub sparse_out: TrainOutcome,
    pub sparse_seconds: f64,
    pub baseline_out: TrainOutcome,
    pub baseline_seconds: f64,
}

pub fn lenet_runs(configs: &Path) -> Result<LenetRuns, CliError> {
    let timed_run = |name: &str| -> Result<(Experiment, TrainOutcome, f64), CliError> {
        let exp = RunConfig::load(&configs.join(name))?.prepare(configs)?;
        let started = Instant::now();
        let out = run(&exp)?;
        Ok((exp, out, started.elapsed().as_secs_f64()))
    };
    let (_, baseline_out, baseline_seconds) = timed_run("lenet_mnist_baseline.json")?;
    let (sparse, sparse_out, sparse_seconds) = timed_run("lenet_mnist_3_8.json")?;
    Ok(LenetRuns { sparse, sparse_out, sparse_seconds, baseline_out, baseline_seconds })
}

fn last(out: &TrainOutcome) -> Result<&EpochRecord, CliError> {
    out.records.last().ok_or_else(|| CliError::Failed("run produced no epochs".into()))
}

/// Post-prune filter counts within (3, 8) and test error within 1.5 points of the baseline.
pub fn lenet_desk_scale(runs: &Result<LenetRuns, CliError>) -> Outcome {
    let mut out = timed(7, "desk-scale LeNet-5 3-8", || {
        let r = runs.as_ref().map_err(|e| CliError::Failed(e.to_string()))?;
        let theta = r.sparse_out.model.flatten_params();
        let zero = r.sparse.reg.zero_groups_per_term(&theta, r.sparse.config.zero_tol);
        let mut counts_ok = true;
        let mut counts = Vec::new();
        for ((term, z), cap) in r.sparse.reg.terms.iter().zip(&zero).zip([3, 8]) {
            let alive = term.region.partition.len() - z;
            counts_ok &= alive <= cap;
            counts.push(format!("{} {alive}/{} (<= {cap})", term.region.label, term.region.partition.len()));
        }
        counts_ok &= zero.len() == 2;
        let (err, base) = (last(&r.sparse_out)?.val_error, last(&r.baseline_out)?.val_error);
        let error_ok = err - base <= LENET_ERROR_GAP;
        let time_ok = r.sparse_seconds <= LENET_TIME_LIMIT;
        let pre = r.sparse_out.pre_prune.as_ref().map_or(f64::NAN, |p| p.val_error);
        Ok((
            counts_ok && error_ok && time_ok,
            format!(
                "filters {}; test error {err:.2}% vs baseline {base:.2}% (gap {:.2} <= {LENET_ERROR_GAP}), {pre:.2}% before prune; run {:.0} s <= {LENET_TIME_LIMIT} s, baseline {:.0} s",
                counts.join(", "),
                err - base,
                r.sparse_seconds,
                r.baseline_seconds
            ),
        ))
    });
    if let Ok(r) = runs {
        out.seconds = r.sparse_seconds + r.baseline_seconds;
    }
    out
}

/// Zero-group counts per epoch during training; the last epoch uses the
/// pre-prune metrics so the prune itself does not count as progress.
pub fn training_zero_counts(out: &TrainOutcome, total: usize) -> Vec<usize> {
    let mut records: Vec<&EpochRecord> = out.records.iter().collect();
    if let (Some(pre), Some(last)) = (out.pre_prune.as_ref(), records.last_mut()) {
        *last = pre;
    }
    records.iter().map(|r| (r.group_sparsity / 100.0 * total as f64).round() as usize).collect()
}

/// First epoch (1-based) at which `target` zero groups are reached, and
/// whether every later epoch stays within one group of it.
pub fn trajectory_verdict(counts: &[usize], target: usize) -> (Option<usize>, bool) {
    match counts.iter().position(|&c| c >= target) {
        None => (None, false),
        Some(i) => (Some(i + 1), counts[i..].iter().all(|&c| c + 1 >= target)),
    }
}

/// The target sparsity is reached within the first third of the epochs and holds afterwards.
pub fn sparsity_trajectory(runs: &Result<LenetRuns, CliError>) -> Outcome {
    timed(8, "sparsity trajectory", || {
        let r = runs.as_ref().map_err(|e| CliError::Failed(e.to_string()))?;
        let (total, target) = (r.sparse.reg.total_groups(), r.sparse.reg.target_zero_groups());
        let counts = training_zero_counts(&r.sparse_out, total);
        let deadline = r.sparse.config.epochs.div_ceil(3);
        let (reached, holds) = trajectory_verdict(&counts, target);
        let passed = reached.is_some_and(|e| e <= deadline) && holds;
        let when = reached.map_or("never".to_string(), |e| format!("epoch {e}"));
        Ok((
            passed,
            format!("target {target}/{total} zero groups reached {when} (deadline epoch {deadline}), zero groups per epoch {counts:?}"),
        ))
    })
}

/// Log-log slope of prox time against n over 10^3..10^6.
pub fn prox_scaling(seed: u64) -> Outcome {
    timed(9, "prox linear scaling", || {
        let rep = bench_prox(&DEFAULT_SIZES, seed)?;
        let rows = rep.rows.iter().map(|r| format!("n={} {:.2e} s", r.n, r.seconds)).collect::<Vec<_>>().join(", ");
        Ok((rep.slope_ok(), format!("slope {:.3} in [0.85, 1.15]; {rows}", rep.slope)))
    })
}

/// Half-space training against plain proximal SGD under paired seeds and the same step budget.
pub fn hspg_behavior() -> Outcome {
    timed(10, "half-space variant", || {
        let mut lines = Vec::new();
        let mut passed = true;
        for seed in 0..HSPG_PAIRS {
            let mut config = synthetic_config(seed)?;
            config.prune_at_end = false;
            let prox_exp = config.prepare(Path::new("."))?;
            let steps = config.epochs * prox_exp.train.len().div_ceil(config.batch_size);
            config.optimizer = OptimizerConfig::Hspg { switch: SwitchCondition::FixedIterations { steps: steps / 2 }, epsilon: 0.0 };
            let hspg_exp = config.prepare(Path::new("."))?;
            let (a, b) = (run(&prox_exp)?, run(&hspg_exp)?);
            let summary = b.hspg.clone().ok_or_else(|| CliError::Failed("no half-space summary".into()))?;
            let (ra, rb) = (last(&a)?, last(&b)?);
            let ok = a.steps == b.steps
                && rb.group_sparsity >= ra.group_sparsity
                && (rb.val_error - ra.val_error).abs() <= HSPG_ERROR_GAP
                && summary.reactivations == 0
                && summary.half_space_steps > 0;
            passed &= ok;
            lines.push(format!(
                "seed {seed}: sparsity {:.0}% vs {:.0}%, error {:.3} vs {:.3}, {} half-space steps, {} reactivations",
                rb.group_sparsity, ra.group_sparsity, rb.val_error, ra.val_error, summary.half_space_steps, summary.reactivations
            ));
        }
        Ok((passed, lines.join("; ")))
    })
}

/// Workspace root, for the shipped configs and data.
pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
