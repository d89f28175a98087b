//! Central-difference gradient checks for tape primitives and whole models.
//!
//! Relative error per coordinate is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`;
//! the floor keeps coordinates whose true gradient is zero from being judged
//! on finite-difference rounding alone.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{conv_out_len, Tape, Var};
use crate::error::Result;
use crate::models::{Model, Targets};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst: f64,
}

impl GradCheckReport {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checked: 0, failures: 0, worst: 0.0 }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }

    fn record(&mut self, analytic: f64, numeric: f64, tol: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.checked += 1;
        self.worst = self.worst.max(err);
        if err > tol {
            self.failures += 1;
        }
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<24} {} {}/{} worst rel {:.2e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checked - self.failures,
            self.checked,
            self.worst
        )
    }
}

/// Checks every coordinate of every input of the scalar function `f`.
pub fn check_function(
    name: &str,
    inputs: &[Tensor],
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut grads = tape.backward(out)?;
    let mut report = GradCheckReport::new(name);
    let mut work = inputs.to_vec();
    for (i, v) in vars.into_iter().enumerate() {
        let analytic = grads.take_or_zeros(v, inputs[i].numel());
        for (j, &a) in analytic.iter().enumerate() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;
            report.record(a, (up - down) / (2.0 * step), tol);
        }
    }
    Ok(report)
}

/// Checks the model's flat loss gradient on `coords` randomly chosen parameters.
#[allow(clippy::too_many_arguments)]
pub fn check_model(
    name: &str,
    model: &Model,
    x: &Tensor,
    targets: &Targets,
    coords: usize,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, grad) = model.loss_and_grad(x, targets)?;
    let theta = model.flatten_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, theta.len(), coords.min(theta.len()));
    let mut probe = model.clone();
    let mut work = theta.clone();
    let mut report = GradCheckReport::new(name);
    for j in picks.iter() {
        work[j] = theta[j] + step;
        probe.scatter_params(&work)?;
        let up = probe.loss(x, targets)?;
        work[j] = theta[j] - step;
        probe.scatter_params(&work)?;
        let down = probe.loss(x, targets)?;
        work[j] = theta[j];
        report.record(grad[j], (up - down) / (2.0 * step), tol);
    }
    Ok(report)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).unwrap()
}

/// Entries moved at least `gap` away from zero, so relu kinks are not crossed.
fn away_from_zero(mut t: Tensor, gap: f64) -> Tensor {
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = if *v < 0.0 { -gap } else { gap };
        }
    }
    t
}

/// Gradient checks of every primitive on randomized small shapes. Non-scalar
/// outputs are reduced with `mse` against a random target.
pub fn primitive_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, tol) = (DEFAULT_STEP, DEFAULT_TOL);
    let mut out = Vec::new();

    let m = rng.random_range(2..5);
    let k = rng.random_range(2..5);
    let n = rng.random_range(2..5);
    let (a, b) = (random_tensor(&mut rng, &[m, k]), random_tensor(&mut rng, &[k, n]));
    let target = random_tensor(&mut rng, &[m, n]);
    out.push(check_function("matmul", &[a.clone(), b], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        t.mse(y, &target)
    }, h, tol)?);
    let bt = random_tensor(&mut rng, &[n, k]);
    out.push(check_function("matmul_bt", &[a, bt], |t, v| {
        let y = t.matmul_bt(v[0], v[1])?;
        t.mse(y, &target)
    }, h, tol)?);

    let x = random_tensor(&mut rng, &[2, 3, 2, 2]);
    let bias = random_tensor(&mut rng, &[3]);
    let target4 = random_tensor(&mut rng, &[2, 3, 2, 2]);
    out.push(check_function("add_bias", &[x, bias], |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        t.mse(y, &target4)
    }, h, tol)?);

    let x = away_from_zero(random_tensor(&mut rng, &[3, 5]), 1e-3);
    let target2 = random_tensor(&mut rng, &[3, 5]);
    out.push(check_function("relu", &[x], |t, v| {
        let y = t.relu(v[0]);
        t.mse(y, &target2)
    }, h, tol)?);

    for (stride, pad) in [(1, 0), (1, 1), (2, 2), (2, 0)] {
        let (c, f) = (rng.random_range(1..4), rng.random_range(1..4));
        let (hh, ww) = (rng.random_range(5..9), rng.random_range(5..9));
        let x = random_tensor(&mut rng, &[2, c, hh, ww]);
        let w = random_tensor(&mut rng, &[f, c, 3, 3]);
        let oh = conv_out_len(hh, 3, stride, pad).unwrap();
        let ow = conv_out_len(ww, 3, stride, pad).unwrap();
        let target = random_tensor(&mut rng, &[2, f, oh, ow]);
        out.push(check_function(&format!("conv2d s{stride} p{pad}"), &[x, w], |t, v| {
            let y = t.conv2d(v[0], v[1], stride, pad)?;
            t.mse(y, &target)
        }, h, tol)?);
    }

    let x = random_tensor(&mut rng, &[2, 2, 6, 6]);
    let target = random_tensor(&mut rng, &[2, 2, 3, 3]);
    out.push(check_function("max_pool2d", &[x], |t, v| {
        let y = t.max_pool2d(v[0], 2, 2)?;
        t.mse(y, &target)
    }, h, tol)?);

    let x = random_tensor(&mut rng, &[2, 3, 2]);
    let target = random_tensor(&mut rng, &[2, 6]);
    out.push(check_function("flatten", &[x], |t, v| {
        let y = t.flatten(v[0])?;
        t.mse(y, &target)
    }, h, tol)?);

    let logits = random_tensor(&mut rng, &[4, 5]);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
    out.push(check_function("softmax_cross_entropy", &[logits], |t, v| t.softmax_cross_entropy(v[0], &labels), h, tol)?);

    let p = random_tensor(&mut rng, &[3, 2]);
    let target = random_tensor(&mut rng, &[3, 2]);
    out.push(check_function("mse", &[p], |t, v| t.mse(v[0], &target), h, tol)?);

    let (a, b) = (random_tensor(&mut rng, &[2, 3]), random_tensor(&mut rng, &[2, 3]));
    let target = random_tensor(&mut rng, &[2, 3]);
    out.push(check_function("add", &[a.clone(), b], |t, v| {
        let y = t.add(v[0], v[1])?;
        t.mse(y, &target)
    }, h, tol)?);
    out.push(check_function("scale", &[a], |t, v| {
        let y = t.scale(v[0], -1.7);
        t.mse(y, &target)
    }, h, tol)?);
    Ok(out)
}
