//! `prox-selftest` and `bench-prox`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use wgsef_core::envelope::{prox_in_place, EnvelopeParams, RootMethod};
use wgsef_core::groups::GroupPartition;
use wgsef_core::optim::derive_seed;
use wgsef_core::selftest::{run_all, SuiteReport};

use crate::error::{CliError, Result};

pub const DEFAULT_SIZES: [usize; 4] = [1_000, 10_000, 100_000, 1_000_000];
/// Accepted range for the fitted log-log slope.
pub const SLOPE_RANGE: (f64, f64) = (0.85, 1.15);

/// Runs every property suite; errors with [`CliError::Failed`] if any fails.
pub fn cmd_prox_selftest(trials: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    let reports = run_all(trials, seed);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Failed(format!("suites failed: {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    /// Best per-call time over the measured batches.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln seconds` against `ln n`.
    pub slope: f64,
}

impl BenchReport {
    pub fn slope_ok(&self) -> bool {
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&self.slope)
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:>10} {:>8} {:>14}", "n", "m", "seconds")?;
        for r in &self.rows {
            writeln!(f, "{:>10} {:>8} {:>14.6e}", r.n, r.m, r.seconds)?;
        }
        write!(f, "log-log slope {:.3}", self.slope)
    }
}

/// Groups used for size `n`: about 100 coordinates each, `m` kept in `[10, 1e5]`.
pub fn groups_for(n: usize) -> usize {
    (n / 100).clamp(10, 100_000).min(n)
}

pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Times one prox of size `n` with about `m` contiguous groups of equal
/// size. Returns the actual group count and the seconds per call.
pub fn time_prox(n: usize, m: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = n.div_ceil(m.max(1));
    let m = n.div_ceil(size);
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..10.0)).collect();
    let partition = GroupPartition::contiguous(n, size, Some(weights))?;
    let params = EnvelopeParams::new((m / 2).max(1), 1.0)?;
    let t: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x = t.clone();
    let mut call = |i: u64| -> Result<()> {
        x.copy_from_slice(&t);
        prox_in_place(&partition, &params, 1.0, &mut x, RootMethod::Randomized { seed: derive_seed(seed, i) })?;
        Ok(())
    };
    let probe = Instant::now();
    call(0)?;
    let once = probe.elapsed().max(Duration::from_nanos(100));
    let reps = (Duration::from_millis(20).as_secs_f64() / once.as_secs_f64()).ceil().clamp(1.0, 10_000.0) as u64;
    let mut best = f64::INFINITY;
    for batch in 0..5 {
        let start = Instant::now();
        for r in 0..reps {
            call(1 + batch * reps + r)?;
        }
        best = best.min(start.elapsed().as_secs_f64() / reps as f64);
    }
    Ok((m, best))
}

pub fn bench_prox(sizes: &[usize], seed: u64) -> Result<BenchReport> {
    if sizes.len() < 2 || sizes.iter().any(|&n| n < 10) {
        return Err(CliError::Config("bench needs at least two sizes, each >= 10".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (m, seconds) = time_prox(n, groups_for(n), derive_seed(seed, n as u64))?;
        rows.push(BenchRow { n, m, seconds });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds.ln()).collect();
    Ok(BenchReport { slope: fit_slope(&xs, &ys), rows })
}

/// Prints the timing table; fails when the slope leaves [`SLOPE_RANGE`].
pub fn cmd_bench_prox(sizes: &[usize], seed: u64) -> Result<BenchReport> {
    let report = bench_prox(sizes, seed)?;
    println!("{report}");
    if report.slope_ok() {
        Ok(report)
    } else {
        Err(CliError::Failed(format!(
            "slope {:.3} outside [{}, {}]",
            report.slope, SLOPE_RANGE.0, SLOPE_RANGE.1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|v| (5.0 * v.powf(1.3)).ln()).collect();
        assert!((fit_slope(&xs, &ys) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn group_counts() {
        assert_eq!(groups_for(1_000), 10);
        assert_eq!(groups_for(1_000_000), 10_000);
        assert_eq!(groups_for(100_000_000), 100_000);
        assert_eq!(groups_for(12), 10);
    }
}
