//! Randomized property suites for the root search and the envelope.
//!
//! Used by the `prox-selftest` command and by the acceptance tests. Every
//! suite draws its instances from a seeded generator and reports the number of
//! failed trials together with the worst error it observed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::envelope::{conjugate, envelope_gradient, prox, prox_with, value, EnvelopeParams, RootMethod};
use crate::groups::GroupPartition;
use crate::optim::derive_seed;
use crate::oracle;
use crate::pwl_root::{clamp_terms, find_root, find_root_bisection};
use crate::scalar::{dot, max_abs_diff, norm_sq};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, trials: 0, failures: 0, worst: 0.0, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.trials > 0
    }

    /// Records one trial whose error is `err` (pass iff `err <= tolerance`).
    fn record(&mut self, err: f64) {
        self.trials += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.worst = self.worst.max(err);
        if err > self.tolerance {
            self.failures += 1;
        }
    }

    fn check(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { f64::INFINITY });
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<18} {} {:>6}/{:<6} worst {:.3e} (tol {:.0e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.trials - self.failures,
            self.trials,
            self.worst,
            self.tolerance
        )
    }
}

/// A random prox problem: `n <= 64`, `m <= 8`, `k in [1, m]`,
/// `lambda` log-uniform on `[1e-3, 10]`, `d_j in [0.1, 10]`, `t ~ N(0, 9)`.
#[derive(Debug, Clone)]
pub struct ProxInstance {
    pub partition: GroupPartition<f64>,
    pub params: EnvelopeParams<f64>,
    pub t: Vec<f64>,
}

pub fn random_partition(rng: &mut impl Rng, n: usize, m: usize, unit_weights: bool) -> GroupPartition<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (pos, &i) in idx.iter().enumerate() {
        let j = if pos < m { pos } else { rng.random_range(0..m) };
        groups[j].push(i);
    }
    let weights = (0..m)
        .map(|_| if unit_weights { 1.0 } else { rng.random_range(0.1..10.0) })
        .collect();
    GroupPartition::new(n, groups, Some(weights)).expect("generated partition is valid")
}

pub fn random_instance(rng: &mut impl Rng) -> ProxInstance {
    let n = rng.random_range(1..=64);
    let m = rng.random_range(1..=8usize.min(n));
    let partition = random_partition(rng, n, m, false);
    let k = rng.random_range(1..=m);
    let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
    let normal = Normal::new(0.0, 3.0).unwrap();
    let t = (0..n).map(|_| normal.sample(rng)).collect();
    ProxInstance { partition, params: EnvelopeParams::new(k, lambda).unwrap(), t }
}

fn random_vec(rng: &mut impl Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Random point with at most `k` nonzero groups.
fn random_sparse_point(rng: &mut impl Rng, p: &GroupPartition<f64>, k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.shuffle(rng);
    let mut x = vec![0.0; p.n()];
    let normal = Normal::new(0.0, 3.0).unwrap();
    for &j in order.iter().take(k) {
        for &i in p.group(j) {
            x[i] = normal.sample(rng);
        }
    }
    x
}

fn ridge(p: &GroupPartition<f64>, x: &[f64]) -> f64 {
    p.group_sq_norms(x)
        .unwrap()
        .iter()
        .zip(p.weights())
        .map(|(s, d)| 0.5 * d * s)
        .sum()
}

/// Randomized root search against bisection, `|difference| <= 1e-10`.
pub fn root_oracle_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("root_oracle", 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while rep.trials < trials {
        let m = rng.random_range(2..=32);
        let b: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.01..20.0) })
            .collect();
        let alpha: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..5.0)).collect();
        let positive = b.iter().filter(|&&x| x > 0.0).count();
        if positive < 2 {
            continue;
        }
        let k = rng.random_range(1..positive);
        let terms = clamp_terms(&b, &alpha).unwrap();
        match (find_root(&terms, k, rng.random()), find_root_bisection(&terms, k, 1e-15)) {
            (Ok(a), Ok(c)) => rep.record((a - c).abs()),
            _ => rep.check(false),
        }
    }
    rep
}

/// Prox via randomized root search against prox via bisection, infinity norm `<= 1e-8`.
pub fn prox_oracle_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("prox_oracle", 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let inst = random_instance(&mut rng);
        let a = prox(&inst.partition, &inst.params, 1.0, &inst.t, derive_seed(seed, trial as u64));
        let b = prox_with(&inst.partition, &inst.params, 1.0, &inst.t, RootMethod::Bisection { abs_tol: 1e-15 });
        match (a, b) {
            (Ok((a, _)), Ok((b, _))) => rep.record(max_abs_diff(&a, &b)),
            _ => rep.check(false),
        }
    }
    rep
}

/// `F(x) = lambda GS_k(x) + 1/2 ||x - t||^2` is not improved by 100 random perturbations.
pub fn prox_optimality_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("prox_optimality", 1e-7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let inst = random_instance(&mut rng);
        let (p, prm, t) = (&inst.partition, &inst.params, &inst.t);
        let objective = |x: &[f64]| {
            let diff: Vec<f64> = x.iter().zip(t).map(|(a, b)| a - b).collect();
            prm.lambda * value(p, prm, x).unwrap().0 + 0.5 * norm_sq(&diff)
        };
        let (v, _) = prox(p, prm, 1.0, t, rng.random()).unwrap();
        let base = objective(&v);
        let radius = 0.1 * norm_sq(t).sqrt() + 0.1;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let dir = random_vec(&mut rng, t.len(), 1.0);
            let scale = radius * rng.random_range(0.0..1.0) / norm_sq(&dir).sqrt().max(1e-300);
            let w: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + scale * d).collect();
            worst = worst.max(base - objective(&w));
        }
        rep.record(worst);
    }
    rep
}

/// The two hand-solved anchors: `prox_{GS_1}((3,1)) = (1.5, 0)` and
/// `GS_1((3,1)) = 8` with `u = (3/4, 1/4)`.
pub fn anchors_suite() -> SuiteReport {
    let mut rep = SuiteReport::new("hand_anchors", 1e-10);
    let p = GroupPartition::<f64>::singletons(2).unwrap();
    let prm = EnvelopeParams::new(1, 1.0).unwrap();
    let (v, _) = prox(&p, &prm, 1.0, &[3.0, 1.0], 0).unwrap();
    rep.record(max_abs_diff(&v, &[1.5, 0.0]));
    let (val, d) = value(&p, &prm, &[3.0, 1.0]).unwrap();
    rep.record((val - 8.0).abs());
    rep.record(max_abs_diff(&d.u, &[0.75, 0.25]));
    rep
}

/// Singleton groups with unit weights against the sorted scalar envelope, `<= 1e-10`.
pub fn sef_reduction_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("sef_reduction", 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let n = rng.random_range(1..=32);
        let k = rng.random_range(1..=n);
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let mut x = random_vec(&mut rng, n, 3.0);
        for v in x.iter_mut() {
            if rng.random_bool(0.15) {
                *v = 0.0;
            }
        }
        let p = GroupPartition::singletons(n).unwrap();
        let prm = EnvelopeParams::new(k, lambda).unwrap();
        let val = value(&p, &prm, &x).unwrap().0;
        let expected = oracle::sef_value(&x, k);
        let (v, _) = prox(&p, &prm, 1.0, &x, rng.random()).unwrap();
        let err = ((val - expected).abs() / expected.abs().max(1.0)).max(max_abs_diff(&v, &oracle::sef_prox(&x, k, lambda)));
        rep.record(err);
    }
    rep
}

/// Envelope laws on random points: equality with `gs_k` on k-group-sparse
/// points, strict underestimation of `gs_k` at denser points, midpoint
/// convexity, nonexpansiveness of the prox and Fenchel-Young.
pub fn envelope_law_suites(trials: usize, seed: u64) -> Vec<SuiteReport> {
    let mut equality = SuiteReport::new("sparse_equality", 1e-10);
    let mut under = SuiteReport::new("underestimation", 1e-9);
    let mut convex = SuiteReport::new("midpoint_convexity", 1e-9);
    let mut nonexp = SuiteReport::new("nonexpansive", 1e-10);
    let mut fy = SuiteReport::new("fenchel_young", 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let inst = random_instance(&mut rng);
        let (p, prm) = (&inst.partition, &inst.params);
        let k = prm.k;
        let gs_k = |x: &[f64]| oracle::gs_k(p.groups(), p.weights(), x, k);
        let gs = |x: &[f64]| value(p, prm, x).unwrap().0;

        let sparse = random_sparse_point(&mut rng, p, k);
        let exact = gs_k(&sparse);
        equality.record((gs(&sparse) - exact).abs() / exact.max(1.0));

        // Convex combination of k-sparse points: GS_k <= sum c_i gs_k(y_i), and
        // strictly below gs_k = inf whenever more than k groups are active.
        let parts: Vec<Vec<f64>> = (0..3).map(|_| random_sparse_point(&mut rng, p, k)).collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut mix = vec![0.0; p.n()];
        let mut bound = 0.0;
        for (y, c) in parts.iter().zip(&raw) {
            let c = c / total;
            bound += c * gs_k(y);
            for (m, v) in mix.iter_mut().zip(y) {
                *m += c * v;
            }
        }
        let env = gs(&mix);
        let mut err = (env - bound).max(0.0) / bound.max(1.0);
        let support = p.group_norms(&mix).unwrap().support_size();
        if support > k && !(env.is_finite() && gs_k(&mix).is_infinite() && env > ridge(p, &mix)) {
            err = f64::INFINITY;
        }
        under.record(err);

        let a = random_vec(&mut rng, p.n(), 3.0);
        let b = random_vec(&mut rng, p.n(), 3.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        convex.record((gs(&mid) - 0.5 * gs(&a) - 0.5 * gs(&b)).max(0.0));

        let (pa, _) = prox(p, prm, 1.0, &a, rng.random()).unwrap();
        let (pb, _) = prox(p, prm, 1.0, &b, rng.random()).unwrap();
        let dp: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let dt: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        nonexp.record((norm_sq(&dp).sqrt() - norm_sq(&dt).sqrt()).max(0.0));

        // Inequality for an arbitrary pair, equality at the envelope gradient.
        let ineq = dot(&a, &b) - gs(&a) - conjugate(p, prm, &b).unwrap();
        let g = envelope_gradient(p, prm, &a).unwrap();
        let gap = (gs(&a) + conjugate(p, prm, &g).unwrap() - dot(&a, &g)).abs() / gs(&a).max(1.0);
        fy.record(ineq.max(0.0).max(gap));
    }
    vec![equality, under, convex, nonexp, fy]
}

/// Every suite with `trials` instances each.
pub fn run_all(trials: usize, seed: u64) -> Vec<SuiteReport> {
    let mut out = vec![
        anchors_suite(),
        root_oracle_suite(trials, derive_seed(seed, 1)),
        prox_oracle_suite(trials, derive_seed(seed, 2)),
        prox_optimality_suite((trials / 10).max(1), derive_seed(seed, 3)),
        sef_reduction_suite(trials, derive_seed(seed, 4)),
    ];
    out.extend(envelope_law_suites(trials, derive_seed(seed, 5)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_small() {
        for rep in run_all(200, 17) {
            assert!(rep.passed(), "{rep}");
        }
    }
}
