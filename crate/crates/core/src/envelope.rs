//! Weighted group sparse envelope `GS_k`.
//!
//! `GS_k` is the biconjugate of `gs_k(theta) = 1/2 sum_j d_j ||theta_{s_j}||^2`
//! restricted to vectors with at most `k` nonzero groups. Everything reduces
//! to the vector of weighted group norms `b_j = sqrt(d_j) ||theta_{s_j}||`:
//!
//! * value: `GS_k(theta) = 1/2 min_{u in B_k} sum_j b_j^2 / u_j`,
//! * prox: `v_{s_j} = u_j t_{s_j} / (lambda d_j + u_j)` with
//!   `u_j = clamp(eta b_j - lambda d_j, 0, 1)` and `eta` the root of `sum u_j = k`,
//!
//! where `B_k = {u : 0 <= u <= 1, sum u <= k}`. Both solves are one root search
//! over `m` clamps, so the whole pipeline is linear in `n`.

use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::pwl_root::{clamp_terms, find_root, find_root_bisection};
use crate::scalar::Scalar;

/// Sparsity budget `k` and regularization magnitude `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams<T> {
    pub k: usize,
    pub lambda: T,
}

impl<T: Scalar> EnvelopeParams<T> {
    pub fn new(k: usize, lambda: T) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("sparsity budget k must be at least 1".into()));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidParams(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { k, lambda })
    }

    /// Checks `k <= m` against a concrete partition.
    pub fn validate_for(&self, partition: &GroupPartition<T>) -> Result<()> {
        if self.k > partition.len() {
            return Err(Error::InvalidParams(format!(
                "k = {} exceeds the number of groups m = {}",
                self.k,
                partition.len()
            )));
        }
        Ok(())
    }
}

/// Minimizer `u` of the variational problem, its multiplier and whether the
/// budget constraint `sum u <= k` was binding.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariables<T> {
    pub u: Vec<T>,
    pub mu: T,
    pub active: bool,
}

impl<T: Scalar> DualVariables<T> {
    pub fn mass(&self) -> T {
        self.u.iter().copied().sum()
    }

    fn inactive(b: &[T]) -> Self {
        Self {
            u: b.iter().map(|&x| if x > T::zero() { T::one() } else { T::zero() }).collect(),
            mu: T::zero(),
            active: false,
        }
    }
}

/// How the scalar root `eta` is located.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootMethod {
    /// Randomized breakpoint pruning, expected linear time.
    Randomized { seed: u64 },
    /// Bisection followed by a linear solve; used as a cross-check.
    Bisection { abs_tol: f64 },
}

impl Default for RootMethod {
    fn default() -> Self {
        RootMethod::Randomized { seed: 0x5eed }
    }
}

fn solve_eta<T: Scalar>(b: &[T], alpha: &[T], k: usize, method: RootMethod) -> Result<T> {
    let terms = clamp_terms(b, alpha)?;
    match method {
        RootMethod::Randomized { seed } => find_root(&terms, k, seed),
        RootMethod::Bisection { abs_tol } => find_root_bisection(&terms, k, T::lit(abs_tol)),
    }
}

/// Conjugate `gs_k^*(y) = 1/2 * (sum of the k largest ||y_{s_j}||^2 / d_j)`.
pub fn conjugate<T: Scalar>(partition: &GroupPartition<T>, params: &EnvelopeParams<T>, y: &[T]) -> Result<T> {
    params.validate_for(partition)?;
    let mut scores: Vec<T> = partition
        .group_sq_norms(y)?
        .into_iter()
        .zip(partition.weights())
        .map(|(s, &d)| s / d)
        .collect();
    let k = params.k;
    if k < scores.len() {
        // Linear-time selection of the top k; ties do not change the sum.
        scores.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap());
    }
    Ok(T::half() * scores[..k].iter().copied().sum::<T>())
}

/// `GS_k(theta)` (without the `lambda` factor) and the minimizing `u`.
pub fn value<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    theta: &[T],
) -> Result<(T, DualVariables<T>)> {
    value_with(partition, params, theta, RootMethod::default())
}

pub fn value_with<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    theta: &[T],
    method: RootMethod,
) -> Result<(T, DualVariables<T>)> {
    params.validate_for(partition)?;
    let b = partition.group_norms(theta)?.values;
    let support = b.iter().filter(|&&x| x > T::zero()).count();
    if support <= params.k {
        let v = T::half() * b.iter().map(|&x| x * x).sum::<T>();
        return Ok((v, DualVariables::inactive(&b)));
    }
    // u_j = min(1, b_j / sqrt(mu)) with sum u = k: clamps with zero offset, eta = 1/sqrt(mu).
    let zeros = vec![T::zero(); b.len()];
    let eta = solve_eta(&b, &zeros, params.k, method)?;
    let u: Vec<T> = b.iter().map(|&x| (eta * x).clamp_unit()).collect();
    let v = T::half()
        * b.iter()
            .zip(&u)
            .filter(|(&x, _)| x > T::zero())
            .map(|(&x, &uj)| x * x / uj)
            .sum::<T>();
    Ok((v, DualVariables { u, mu: (eta * eta).recip(), active: true }))
}

/// `prox_{step * lambda * GS_k}(t)` with the default randomized root search.
pub fn prox<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    step: T,
    t: &[T],
    seed: u64,
) -> Result<(Vec<T>, DualVariables<T>)> {
    prox_with(partition, params, step, t, RootMethod::Randomized { seed })
}

pub fn prox_with<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    step: T,
    t: &[T],
    method: RootMethod,
) -> Result<(Vec<T>, DualVariables<T>)> {
    let mut out = t.to_vec();
    let duals = prox_in_place(partition, params, step, &mut out, method)?;
    Ok((out, duals))
}

/// In-place prox; `x` holds `t` on entry and the prox point on return.
pub fn prox_in_place<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    step: T,
    x: &mut [T],
    method: RootMethod,
) -> Result<DualVariables<T>> {
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::NonpositiveStep(step.as_f64()));
    }
    params.validate_for(partition)?;
    let b = partition.group_norms(x)?.values;
    let lambda = step * params.lambda;
    if lambda == T::zero() {
        let (_, duals) = value_with(partition, params, x, method)?;
        return Ok(duals);
    }
    let alpha: Vec<T> = partition.weights().iter().map(|&d| lambda * d).collect();
    let support = b.iter().filter(|&&v| v > T::zero()).count();
    let duals = if support <= params.k {
        DualVariables::inactive(&b)
    } else {
        let eta = solve_eta(&b, &alpha, params.k, method)?;
        let u = b
            .iter()
            .zip(&alpha)
            .map(|(&bj, &aj)| if bj > T::zero() { (eta * bj - aj).clamp_unit() } else { T::zero() })
            .collect();
        DualVariables { u, mu: (eta * eta).recip(), active: true }
    };
    for (j, group) in partition.groups().iter().enumerate() {
        let uj = duals.u[j];
        if uj > T::zero() {
            let scale = uj / (alpha[j] + uj);
            for &i in group {
                x[i] *= scale;
            }
        } else {
            for &i in group {
                x[i] = T::zero();
            }
        }
    }
    Ok(duals)
}

/// Gradient of `GS_k` on groups with nonzero norm: `d_j theta_{s_j} / u_j`.
/// Zero-norm groups get zero.
pub fn envelope_gradient<T: Scalar>(
    partition: &GroupPartition<T>,
    params: &EnvelopeParams<T>,
    theta: &[T],
) -> Result<Vec<T>> {
    let (_, duals) = value(partition, params, theta)?;
    envelope_gradient_from(partition, theta, &duals)
}

pub fn envelope_gradient_from<T: Scalar>(
    partition: &GroupPartition<T>,
    theta: &[T],
    duals: &DualVariables<T>,
) -> Result<Vec<T>> {
    partition.check_len(theta.len())?;
    if duals.u.len() != partition.len() {
        return Err(Error::DimensionMismatch { expected: partition.len(), actual: duals.u.len() });
    }
    let mut g = vec![T::zero(); theta.len()];
    for (j, group) in partition.groups().iter().enumerate() {
        let uj = duals.u[j];
        if uj > T::zero() {
            let c = partition.weight(j) / uj;
            for &i in group {
                g[i] = c * theta[i];
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{dot, max_abs_diff, norm_sq};

    fn singletons(n: usize) -> GroupPartition<f64> {
        GroupPartition::singletons(n).unwrap()
    }

    fn params(k: usize, lambda: f64) -> EnvelopeParams<f64> {
        EnvelopeParams::new(k, lambda).unwrap()
    }

    #[test]
    fn conjugate_examples() {
        let p = singletons(2);
        assert_eq!(conjugate(&p, &params(1, 1.0), &[3.0, 1.0]).unwrap(), 4.5);
        assert_eq!(conjugate(&p, &params(1, 1.0), &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(conjugate(&p, &params(2, 1.0), &[3.0, 1.0]).unwrap(), 5.0);
    }

    #[test]
    fn value_hand_solution() {
        // KKT: u_j = b_j / sqrt(mu), sum u = 1 gives sqrt(mu) = 4, u = (3/4, 1/4),
        // value = 1/2 (9 / (3/4) + 1 / (1/4)) = 8.
        let (v, d) = value(&singletons(2), &params(1, 1.0), &[3.0, 1.0]).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert!(max_abs_diff(&d.u, &[0.75, 0.25]) < 1e-12);
        assert!((d.mu - 16.0).abs() < 1e-10);
        assert!(d.active);
    }

    #[test]
    fn value_on_sparse_and_full_budget() {
        let (v, d) = value(&singletons(2), &params(1, 1.0), &[3.0, 0.0]).unwrap();
        assert_eq!(v, 4.5);
        assert_eq!(d.u, vec![1.0, 0.0]);
        assert!(!d.active);

        let p = GroupPartition::new(5, vec![vec![0, 1], vec![2], vec![3, 4]], Some(vec![0.5, 2.0, 1.0])).unwrap();
        let theta = [1.0, -2.0, 0.5, 3.0, 0.0];
        let (v, d) = value(&p, &params(3, 1.0), &theta).unwrap();
        let ridge = 0.5 * (0.5 * 5.0 + 2.0 * 0.25 + 9.0);
        assert!((v - ridge).abs() < 1e-12);
        assert_eq!(d.u, vec![1.0; 3]);
    }

    #[test]
    fn prox_hand_solution() {
        // eta = 2/3, u = (1, 0), scale 1 / (1 + 1).
        let (v, d) = prox(&singletons(2), &params(1, 1.0), 1.0, &[3.0, 1.0], 9).unwrap();
        assert!(max_abs_diff(&v, &[1.5, 0.0]) < 1e-12);
        assert_eq!(v[1], 0.0);
        assert!(max_abs_diff(&d.u, &[1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn prox_trivial_cases() {
        let p = GroupPartition::new(4, vec![vec![0, 1], vec![2, 3]], Some(vec![0.5, 3.0])).unwrap();
        let (v, _) = prox(&p, &params(1, 2.0), 0.5, &[0.0; 4], 1).unwrap();
        assert_eq!(v, vec![0.0; 4]);

        let t = [1.0, -2.0, 4.0, 0.5];
        let (v, _) = prox(&p, &params(2, 2.0), 0.5, &t, 1).unwrap();
        let expected = [1.0 / 1.5, -2.0 / 1.5, 4.0 / 4.0, 0.5 / 4.0];
        assert!(max_abs_diff(&v, &expected) < 1e-15);

        let (v, _) = prox(&p, &params(1, 0.0), 0.5, &t, 1).unwrap();
        assert_eq!(v, t.to_vec());

        assert_eq!(prox(&p, &params(1, 1.0), 0.0, &t, 1).unwrap_err(), Error::NonpositiveStep(0.0));
        assert!(matches!(prox(&p, &params(3, 1.0), 1.0, &t, 1), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn gradient_examples() {
        let g = envelope_gradient(&singletons(2), &params(1, 1.0), &[3.0, 1.0]).unwrap();
        assert!(max_abs_diff(&g, &[4.0, 4.0]) < 1e-12);

        let p = GroupPartition::new(3, vec![vec![0, 1], vec![2]], Some(vec![0.5, 2.0])).unwrap();
        let g = envelope_gradient(&p, &params(2, 1.0), &[1.0, 2.0, -3.0]).unwrap();
        assert_eq!(g, vec![0.5, 1.0, -6.0]);

        let g = envelope_gradient(&p, &params(1, 1.0), &[0.0, 0.0, -3.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, -6.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = GroupPartition::new(6, vec![vec![0, 1], vec![2, 3, 4], vec![5]], Some(vec![0.7, 1.3, 2.0])).unwrap();
        let prm = params(1, 1.0);
        let theta = [0.4, -1.1, 0.9, 0.3, -0.2, 0.8];
        let g = envelope_gradient(&p, &prm, &theta).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut a = theta;
            let mut b = theta;
            a[i] += h;
            b[i] -= h;
            let fd = (value(&p, &prm, &a).unwrap().0 - value(&p, &prm, &b).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn fenchel_young_equality_at_gradient() {
        let p = GroupPartition::new(5, vec![vec![0, 1], vec![2], vec![3, 4]], Some(vec![0.5, 2.0, 1.0])).unwrap();
        let prm = params(2, 1.0);
        let theta = [1.0, -2.0, 0.5, 3.0, 0.7];
        let (v, _) = value(&p, &prm, &theta).unwrap();
        let g = envelope_gradient(&p, &prm, &theta).unwrap();
        let c = conjugate(&p, &prm, &g).unwrap();
        assert!((v + c - dot(&theta, &g)).abs() < 1e-10);
    }

    #[test]
    fn prox_minimizes_composite() {
        let p = GroupPartition::new(5, vec![vec![0, 1], vec![2], vec![3, 4]], Some(vec![0.5, 2.0, 1.0])).unwrap();
        let prm = params(1, 0.8);
        let t = [1.0, -2.0, 0.5, 3.0, 0.7];
        let f = |x: &[f64]| {
            let diff: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a - b).collect();
            prm.lambda * value(&p, &prm, x).unwrap().0 + 0.5 * norm_sq(&diff)
        };
        let (v, d) = prox(&p, &prm, 1.0, &t, 3).unwrap();
        assert!(d.mass() <= 1.0 + 1e-9);
        let base = f(&v);
        for i in 0..5 {
            for s in [-1e-3, 1e-3] {
                let mut w = v.clone();
                w[i] += s;
                assert!(base <= f(&w) + 1e-12);
            }
        }
    }

    #[test]
    fn bisection_route_agrees() {
        let p = GroupPartition::contiguous(9, 2, Some(vec![1.0, 0.3, 2.0, 0.9, 5.0])).unwrap();
        let prm = params(2, 0.4);
        let t = [1.0, -2.0, 0.5, 3.0, 0.7, -0.1, 0.2, 1.4, 0.05];
        let (a, _) = prox(&p, &prm, 1.0, &t, 42).unwrap();
        let (b, _) = prox_with(&p, &prm, 1.0, &t, RootMethod::Bisection { abs_tol: 1e-15 }).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn single_precision_prox() {
        let p = GroupPartition::<f32>::singletons(2).unwrap();
        let prm = EnvelopeParams::new(1, 1.0f32).unwrap();
        let (v, _) = prox(&p, &prm, 1.0, &[3.0, 1.0], 9).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-5 && v[1] == 0.0);
    }
}
