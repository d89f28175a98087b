//! Proximal stochastic gradient steps with the group envelope regularizer.
//!
//! The state update is
//!
//! ```text
//! m_t       = rho_t m_{t-1} + (1 - rho_t) g_t
//! theta_t+1 = prox_{alpha_t lambda GS_k}(theta_t - alpha_t m_t)
//! ```
//!
//! applied to the flat parameter vector. Regularized coordinates are grouped
//! into [`Region`]s (one per layer, or one concatenated region for a global
//! scope); coordinates outside every region take a plain momentum step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::envelope::{envelope_gradient_from, prox_in_place, value, DualVariables, EnvelopeParams, RootMethod};
use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::scalar::Scalar;

/// Stepsize schedule `alpha_t`, `t` counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { rate: f64 },
    /// Cosine annealing from `initial` to `min` over `total_steps`.
    Cosine { initial: f64, min: f64, total_steps: usize },
    /// Multiply by `factor` every `every` steps.
    StepDecay { initial: f64, factor: f64, every: usize },
}

impl StepSchedule {
    pub fn rate(&self, t: usize) -> Result<f64> {
        let t = t.max(1);
        let rate = match *self {
            StepSchedule::Constant { rate } => rate,
            StepSchedule::Cosine { initial, min, total_steps } => {
                if t > total_steps {
                    return Err(Error::ScheduleExhausted(t));
                }
                let progress = (t - 1) as f64 / total_steps.max(1) as f64;
                min + 0.5 * (initial - min) * (1.0 + (PI * progress).cos())
            }
            StepSchedule::StepDecay { initial, factor, every } => {
                initial * factor.powi(((t - 1) / every.max(1)) as i32)
            }
        };
        if !(rate > 0.0) {
            return Err(Error::NonpositiveStep(rate));
        }
        Ok(rate)
    }
}

/// Momentum `rho_t = rho0 * decay^(t-1)`; `decay = 1` keeps it constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumSchedule {
    pub rho0: f64,
    #[serde(default = "one")]
    pub decay: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MomentumSchedule {
    fn default() -> Self {
        Self { rho0: 0.9, decay: 1.0 }
    }
}

impl MomentumSchedule {
    pub fn constant(rho0: f64) -> Self {
        Self { rho0, decay: 1.0 }
    }

    pub fn rho(&self, t: usize) -> Result<f64> {
        let rho = self.rho0 * self.decay.powi(t.max(1) as i32 - 1);
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParams(format!("momentum must lie in [0, 1), got {rho}")));
        }
        Ok(rho)
    }
}

/// A grouped block of flat-vector coordinates: `partition` indexes into `indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub label: String,
    pub indices: Vec<usize>,
    pub partition: GroupPartition<T>,
}

impl<T: Scalar> Region<T> {
    pub fn new(label: impl Into<String>, indices: Vec<usize>, partition: GroupPartition<T>) -> Result<Self> {
        partition.check_len(indices.len())?;
        Ok(Self { label: label.into(), indices, partition })
    }

    /// Region covering a whole vector of length `partition.n()`.
    pub fn whole(partition: GroupPartition<T>) -> Self {
        Self { label: "all".into(), indices: (0..partition.n()).collect(), partition }
    }

    pub fn gather(&self, theta: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| theta[i]).collect()
    }

    pub fn scatter(&self, local: &[T], theta: &mut [T]) {
        for (&i, &v) in self.indices.iter().zip(local) {
            theta[i] = v;
        }
    }

    /// One region spanning the concatenated coordinates of `regions`.
    pub fn concat(label: impl Into<String>, regions: &[Region<T>]) -> Result<Self> {
        let indices = regions.iter().flat_map(|r| r.indices.iter().copied()).collect();
        let parts: Vec<_> = regions.iter().map(|r| r.partition.clone()).collect();
        Self::new(label, indices, GroupPartition::concat(&parts)?)
    }
}

/// Per-layer `(lambda_l, k_l)` pairs or a single global pair.
#[derive(Debug, Clone, PartialEq)]
pub enum RegScope<T> {
    PerLayer(Vec<EnvelopeParams<T>>),
    Global(EnvelopeParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegTerm<T> {
    pub region: Region<T>,
    pub params: EnvelopeParams<T>,
}

/// `h(theta) = sum_l lambda_l GS_{k_l}(theta_l)` over disjoint regions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Regularizer<T> {
    pub terms: Vec<RegTerm<T>>,
}

impl<T: Scalar> Regularizer<T> {
    /// Resolves a scope against the per-layer regions. A global scope
    /// concatenates every region into one partition.
    pub fn resolve(scope: &RegScope<T>, layers: Vec<Region<T>>) -> Result<Self> {
        let terms = match scope {
            RegScope::PerLayer(params) => {
                if params.len() != layers.len() {
                    return Err(Error::InvalidParams(format!(
                        "{} per-layer (lambda, k) pairs for {} grouped layers",
                        params.len(),
                        layers.len()
                    )));
                }
                layers
                    .into_iter()
                    .zip(params)
                    .map(|(region, &params)| RegTerm { region, params })
                    .collect()
            }
            RegScope::Global(params) => {
                if layers.is_empty() {
                    Vec::new()
                } else {
                    vec![RegTerm { region: Region::concat("global", &layers)?, params: *params }]
                }
            }
        };
        for term in &terms {
            term.params.validate_for(&term.region.partition)?;
        }
        Ok(Self { terms })
    }

    pub fn total_groups(&self) -> usize {
        self.terms.iter().map(|t| t.region.partition.len()).sum()
    }

    /// Target number of zero groups, `sum_l (m_l - k_l)`.
    pub fn target_zero_groups(&self) -> usize {
        self.terms.iter().map(|t| t.region.partition.len() - t.params.k).sum()
    }

    pub fn zero_groups(&self, theta: &[T], tol: T) -> usize {
        self.terms
            .iter()
            .map(|t| t.region.partition.zero_group_count(&t.region.gather(theta), tol).unwrap())
            .sum()
    }

    /// Zero-group count per term, in term order.
    pub fn zero_groups_per_term(&self, theta: &[T], tol: T) -> Vec<usize> {
        self.terms
            .iter()
            .map(|t| t.region.partition.zero_group_count(&t.region.gather(theta), tol).unwrap())
            .collect()
    }

    pub fn group_sparsity(&self, theta: &[T], tol: T) -> f64 {
        let total = self.total_groups();
        if total == 0 {
            return 0.0;
        }
        self.zero_groups(theta, tol) as f64 / total as f64
    }

    /// `h(theta)`, including the `lambda` factors.
    pub fn value(&self, theta: &[T]) -> Result<T> {
        let mut acc = T::zero();
        for term in &self.terms {
            let (v, _) = value(&term.region.partition, &term.params, &term.region.gather(theta))?;
            acc += term.params.lambda * v;
        }
        Ok(acc)
    }

    /// `prox_{step h}` applied in place, one independent prox per term.
    pub fn prox_in_place(&self, theta: &mut [T], step: T, seed: u64) -> Result<Vec<DualVariables<T>>> {
        self.prox_in_place_with(theta, step, |i| RootMethod::Randomized { seed: derive_seed(seed, i as u64) })
    }

    pub fn prox_in_place_with(
        &self,
        theta: &mut [T],
        step: T,
        method: impl Fn(usize) -> RootMethod,
    ) -> Result<Vec<DualVariables<T>>> {
        let mut duals = Vec::with_capacity(self.terms.len());
        for (i, term) in self.terms.iter().enumerate() {
            let mut local = term.region.gather(theta);
            duals.push(prox_in_place(&term.region.partition, &term.params, step, &mut local, method(i))?);
            term.region.scatter(&local, theta);
        }
        Ok(duals)
    }

    /// Zeroes the `m_l - k_l` smallest groups of every term.
    pub fn prune(&self, theta: &mut [T], weighted: bool) {
        for term in &self.terms {
            let mut local = term.region.gather(theta);
            prune_in_place(&mut local, &term.region.partition, term.params.k, weighted);
            term.region.scatter(&local, theta);
        }
    }
}

/// SplitMix64 derivation of independent seeds from a base seed and a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keeps the `k` groups of largest norm and zeroes the rest.
///
/// Ranking uses raw `l2` group norms unless `weighted`, in which case
/// `sqrt(d_j) ||theta_j||` is used. Ties keep the lower group index.
pub fn prune<T: Scalar>(theta: &[T], partition: &GroupPartition<T>, k: usize, weighted: bool) -> Result<Vec<T>> {
    partition.check_len(theta.len())?;
    if k == 0 || k > partition.len() {
        return Err(Error::InvalidParams(format!("prune needs 1 <= k <= m, got k = {k}")));
    }
    let mut out = theta.to_vec();
    prune_in_place(&mut out, partition, k, weighted);
    Ok(out)
}

pub fn prune_in_place<T: Scalar>(theta: &mut [T], partition: &GroupPartition<T>, k: usize, weighted: bool) {
    let sq = partition.group_sq_norms(theta).expect("region length matches partition");
    let score: Vec<T> = if weighted {
        sq.iter().zip(partition.weights()).map(|(&s, &d)| s * d).collect()
    } else {
        sq
    };
    let mut order: Vec<usize> = (0..partition.len()).collect();
    order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
    for &j in &order[k.min(order.len())..] {
        for &i in partition.group(j) {
            theta[i] = T::zero();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSgdState<T> {
    pub theta: Vec<T>,
    pub momentum: Vec<T>,
    /// Number of completed steps.
    pub t: usize,
}

impl<T: Scalar> ProxSgdState<T> {
    pub fn new(theta: Vec<T>) -> Self {
        let momentum = vec![T::zero(); theta.len()];
        Self { theta, momentum, t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub step_size: f64,
    pub duals: Vec<DualVariables<T>>,
}

impl<T: Scalar> StepReport<T> {
    pub fn dual_mass(&self) -> f64 {
        self.duals.iter().map(|d| d.mass().as_f64()).sum()
    }
}

/// One momentum proximal step. `seed` feeds the root searches of this step.
pub fn prox_sgd_step<T: Scalar>(
    state: &mut ProxSgdState<T>,
    grad: &[T],
    reg: &Regularizer<T>,
    step: &StepSchedule,
    momentum: &MomentumSchedule,
    seed: u64,
) -> Result<StepReport<T>> {
    if grad.len() != state.theta.len() {
        return Err(Error::DimensionMismatch { expected: state.theta.len(), actual: grad.len() });
    }
    let t = state.t + 1;
    let alpha = step.rate(t)?;
    let rho = T::lit(momentum.rho(t)?);
    let a = T::lit(alpha);
    let keep = T::one() - rho;
    for ((m, th), &g) in state.momentum.iter_mut().zip(state.theta.iter_mut()).zip(grad) {
        *m = rho * *m + keep * g;
        *th -= a * *m;
    }
    let duals = reg.prox_in_place(&mut state.theta, a, derive_seed(seed, t as u64))?;
    state.t = t;
    Ok(StepReport { step_size: alpha, duals })
}

/// When the half-space phase starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchCondition {
    /// After a fixed number of proximal steps.
    FixedIterations { steps: usize },
    /// Once the zero-group count moved by less than `tol_groups` over `window` epochs.
    SparsityStable { window: usize, tol_groups: usize },
}

impl Default for SwitchCondition {
    fn default() -> Self {
        SwitchCondition::SparsityStable { window: 3, tol_groups: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    FirstOrder,
    HalfSpace,
}

/// Phase bookkeeping for the two-phase half-space method.
#[derive(Debug, Clone, PartialEq)]
pub struct HspgState {
    pub phase: Phase,
    pub switch: SwitchCondition,
    pub epsilon: f64,
    zero_history: Vec<usize>,
}

impl HspgState {
    pub fn new(switch: SwitchCondition, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidParams(format!("projection threshold must lie in [0, 1), got {epsilon}")));
        }
        Ok(Self { phase: Phase::FirstOrder, switch, epsilon, zero_history: Vec::new() })
    }

    /// Called before each step with the number of steps taken so far.
    pub fn before_step(&mut self, steps_done: usize) {
        if let SwitchCondition::FixedIterations { steps } = self.switch {
            if steps_done >= steps {
                self.phase = Phase::HalfSpace;
            }
        }
    }

    /// Called at each epoch end with the current zero-group count.
    pub fn end_epoch(&mut self, zero_groups: usize) {
        self.zero_history.push(zero_groups);
        if let SwitchCondition::SparsityStable { window, tol_groups } = self.switch {
            let w = window.max(1);
            if self.zero_history.len() > w {
                let recent = &self.zero_history[self.zero_history.len() - w - 1..];
                let lo = *recent.iter().min().unwrap();
                let hi = *recent.iter().max().unwrap();
                if hi - lo < tol_groups.max(1) {
                    self.phase = Phase::HalfSpace;
                }
            }
        }
    }
}

/// Outcome of one half-space step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HalfSpaceReport {
    /// Dense groups zeroed by the projection test.
    pub projected: usize,
    /// Groups that were already zero and stayed frozen.
    pub frozen: usize,
}

/// Norms at or below this are treated as sparse by the half-space step.
pub const SPARSE_NORM_TOL: f64 = 1e-12;

/// Half-space step: a gradient step on `f + h` over dense groups, sparse
/// groups held at zero, then dense groups failing
/// `<tilde_theta_g, theta_g> >= epsilon ||theta_g||^2` are zeroed.
/// Coordinates outside every region take a plain gradient step.
pub fn half_space_step<T: Scalar>(
    theta: &mut [T],
    grad_f: &[T],
    reg: &Regularizer<T>,
    step_size: T,
    epsilon: T,
) -> Result<HalfSpaceReport> {
    if grad_f.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), actual: grad_f.len() });
    }
    let mut in_region = vec![false; theta.len()];
    let mut report = HalfSpaceReport::default();
    let tol = T::lit(SPARSE_NORM_TOL);
    let mut updates: Vec<(usize, T)> = Vec::new();

    for term in &reg.terms {
        let region = &term.region;
        let part = &region.partition;
        let local = region.gather(theta);
        let sq = part.group_sq_norms(&local)?;
        // Zero-norm groups get u_j = 0 and hence no envelope gradient.
        let (_, duals) = value(part, &term.params, &local)?;
        let grad_h = envelope_gradient_from(part, &local, &duals)?;
        for (j, group) in part.groups().iter().enumerate() {
            for &li in group {
                in_region[region.indices[li]] = true;
            }
            if sq[j].sqrt() <= tol {
                report.frozen += 1;
                for &li in group {
                    updates.push((region.indices[li], T::zero()));
                }
                continue;
            }
            let mut inner = T::zero();
            let mut tentative = Vec::with_capacity(group.len());
            for &li in group {
                let gi = region.indices[li];
                let v = local[li] - step_size * (grad_f[gi] + term.params.lambda * grad_h[li]);
                inner += v * local[li];
                tentative.push((gi, v));
            }
            if inner < epsilon * sq[j] {
                report.projected += 1;
                updates.extend(tentative.into_iter().map(|(gi, _)| (gi, T::zero())));
            } else {
                updates.extend(tentative);
            }
        }
    }
    for (i, th) in theta.iter_mut().enumerate() {
        if !in_region[i] {
            *th -= step_size * grad_f[i];
        }
    }
    for (i, v) in updates {
        theta[i] = v;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::prox;
    use crate::scalar::max_abs_diff;

    fn reg_whole(p: GroupPartition<f64>, k: usize, lambda: f64) -> Regularizer<f64> {
        Regularizer::resolve(
            &RegScope::Global(EnvelopeParams::new(k, lambda).unwrap()),
            vec![Region::whole(p)],
        )
        .unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::Constant { rate: 0.1 }.rate(7).unwrap(), 0.1);
        let c = StepSchedule::Cosine { initial: 1.0, min: 0.0, total_steps: 4 };
        assert_eq!(c.rate(1).unwrap(), 1.0);
        assert!((c.rate(3).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.rate(5), Err(Error::ScheduleExhausted(5)));
        let s = StepSchedule::StepDecay { initial: 1.0, factor: 0.5, every: 2 };
        assert_eq!((s.rate(2).unwrap(), s.rate(3).unwrap()), (1.0, 0.5));
        let m = MomentumSchedule { rho0: 0.9, decay: 0.5 };
        assert_eq!(m.rho(1).unwrap(), 0.9);
        assert_eq!(m.rho(3).unwrap(), 0.225);
    }

    #[test]
    fn prune_examples() {
        let p = GroupPartition::contiguous(4, 2, None).unwrap();
        assert_eq!(prune(&[3.0, 0.0, 0.0, 1.0], &p, 1, false).unwrap(), vec![3.0, 0.0, 0.0, 0.0]);
        assert_eq!(prune(&[3.0, 0.0, 0.0, 1.0], &p, 2, false).unwrap(), vec![3.0, 0.0, 0.0, 1.0]);
        assert_eq!(prune(&[1.0, 0.0, 0.0, 1.0], &p, 1, false).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        // Weighting flips the ranking: d = (0.01, 1).
        let q = GroupPartition::contiguous(4, 2, Some(vec![0.01, 1.0])).unwrap();
        assert_eq!(prune(&[3.0, 0.0, 0.0, 1.0], &q, 1, true).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_lambda_is_momentum_sgd() {
        let reg = reg_whole(GroupPartition::contiguous(4, 2, None).unwrap(), 1, 0.0);
        let mut state = ProxSgdState::new(vec![1.0, 2.0, 3.0, 4.0]);
        let mut reference = state.theta.clone();
        let mut m_ref = [0.0; 4];
        let sched = StepSchedule::Constant { rate: 0.1 };
        let mom = MomentumSchedule::constant(0.9);
        for t in 0..5 {
            let g: Vec<f64> = state.theta.iter().map(|x| x * 0.5 + t as f64).collect();
            let g_ref: Vec<f64> = reference.iter().map(|x| x * 0.5 + t as f64).collect();
            prox_sgd_step(&mut state, &g, &reg, &sched, &mom, 1).unwrap();
            for i in 0..4 {
                m_ref[i] = 0.9 * m_ref[i] + (1.0 - 0.9) * g_ref[i];
                reference[i] -= 0.1 * m_ref[i];
            }
        }
        assert_eq!(state.theta, reference);
    }

    #[test]
    fn first_step_is_prox_of_negative_gradient() {
        let p = GroupPartition::contiguous(6, 2, Some(vec![0.5, 1.0, 2.0])).unwrap();
        let reg = reg_whole(p.clone(), 1, 0.7);
        let g = [1.0, -2.0, 0.3, 0.4, 2.0, 1.0];
        let mut state = ProxSgdState::new(vec![0.0; 6]);
        let report = prox_sgd_step(
            &mut state,
            &g,
            &reg,
            &StepSchedule::Constant { rate: 1.0 },
            &MomentumSchedule::constant(0.0),
            5,
        )
        .unwrap();
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let (expected, _) = prox(&p, &EnvelopeParams::new(1, 0.7).unwrap(), 1.0, &neg, 0).unwrap();
        assert!(max_abs_diff(&state.theta, &expected) < 1e-12);
        assert!(report.dual_mass() <= 1.0 + 1e-9);
    }

    #[test]
    fn converges_to_ridge_solution_with_full_budget() {
        // f = 1/2 ||theta - c||^2, k = m: fixed point c_j / (1 + lambda d_j).
        let p = GroupPartition::new(5, vec![vec![0, 1], vec![2], vec![3, 4]], Some(vec![0.5, 2.0, 1.0])).unwrap();
        let lambda = 0.8;
        let reg = reg_whole(p.clone(), 3, lambda);
        let c = [1.0, -2.0, 0.5, 3.0, 0.7];
        let mut state = ProxSgdState::new(vec![0.0; 5]);
        for _ in 0..1000 {
            let g: Vec<f64> = state.theta.iter().zip(&c).map(|(x, c)| x - c).collect();
            prox_sgd_step(&mut state, &g, &reg, &StepSchedule::Constant { rate: 0.5 }, &MomentumSchedule::constant(0.0), 0)
                .unwrap();
        }
        let d = [0.5, 0.5, 2.0, 1.0, 1.0];
        let expected: Vec<f64> = c.iter().zip(&d).map(|(c, d)| c / (1.0 + lambda * d)).collect();
        assert!(max_abs_diff(&state.theta, &expected) < 1e-6);
    }

    #[test]
    fn per_layer_scope_needs_matching_lengths() {
        let a = Region::new("a", vec![0, 1], GroupPartition::contiguous(2, 1, None).unwrap()).unwrap();
        let scope = RegScope::PerLayer(vec![EnvelopeParams::new(1, 1.0).unwrap(); 2]);
        assert!(Regularizer::resolve(&scope, vec![a]).is_err());
    }

    #[test]
    fn global_scope_concatenates() {
        let a = Region::new("a", vec![0, 1], GroupPartition::contiguous(2, 1, None).unwrap()).unwrap();
        let b = Region::new("b", vec![3, 4, 5], GroupPartition::contiguous(3, 3, None).unwrap()).unwrap();
        let reg = Regularizer::resolve(&RegScope::Global(EnvelopeParams::new(2, 1.0).unwrap()), vec![a, b]).unwrap();
        assert_eq!(reg.terms.len(), 1);
        assert_eq!(reg.terms[0].region.indices, vec![0, 1, 3, 4, 5]);
        assert_eq!(reg.total_groups(), 3);
        assert_eq!(reg.target_zero_groups(), 1);
    }

    #[test]
    fn half_space_freezes_and_projects() {
        let p = GroupPartition::contiguous(6, 2, Some(vec![1.0; 3])).unwrap();
        let reg = reg_whole(p, 3, 0.0);
        // Group 0 is zero, group 1 gets pushed through the origin, group 2 moves a little.
        let mut theta = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 5.0];
        let grad = [3.0, 3.0, 2.0, 2.0, 0.1, 0.1, 1.0];
        let mut theta6 = theta[..6].to_vec();
        let report = half_space_step(&mut theta6, &grad[..6], &reg, 1.0, 0.0).unwrap();
        assert_eq!(report, HalfSpaceReport { projected: 1, frozen: 1 });
        assert_eq!(theta6, vec![0.0, 0.0, 0.0, 0.0, 1.9, 1.9]);

        // epsilon = 0: a group survives when the tentative point keeps a nonnegative inner product.
        theta.truncate(6);
        theta[2] = 3.0;
        theta[3] = 3.0;
        let r = half_space_step(&mut theta, &grad[..6], &reg, 1.0, 0.0).unwrap();
        assert_eq!(r.projected, 0);
        assert_eq!(&theta[2..4], &[1.0, 1.0]);
    }

    #[test]
    fn hspg_switching() {
        let mut s = HspgState::new(SwitchCondition::FixedIterations { steps: 3 }, 0.0).unwrap();
        s.before_step(2);
        assert_eq!(s.phase, Phase::FirstOrder);
        s.before_step(3);
        assert_eq!(s.phase, Phase::HalfSpace);

        let mut s = HspgState::new(SwitchCondition::default(), 0.1).unwrap();
        for z in [0, 2, 5, 5, 5] {
            s.end_epoch(z);
            assert_eq!(s.phase, Phase::FirstOrder);
        }
        s.end_epoch(5);
        assert_eq!(s.phase, Phase::HalfSpace);
        assert!(HspgState::new(SwitchCondition::default(), 1.0).is_err());
    }

    #[test]
    fn seeds_are_distinct_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
