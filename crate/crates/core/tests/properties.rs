use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wgsef_core::envelope::{conjugate, envelope_gradient, prox, prox_with, value, EnvelopeParams, RootMethod};
use wgsef_core::groups::GroupPartition;
use wgsef_core::optim::{
    half_space_step, prox_sgd_step, prune, MomentumSchedule, ProxSgdState, RegScope, Region, Regularizer, StepSchedule,
};
use wgsef_core::oracle;
use wgsef_core::scalar::{dot, norm_sq};
use wgsef_core::selftest::{random_instance, ProxInstance};

fn instance(seed: u64) -> (ChaCha8Rng, ProxInstance) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    (rng, inst)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn whole_reg(p: &GroupPartition<f64>, params: EnvelopeParams<f64>) -> Regularizer<f64> {
    Regularizer::resolve(&RegScope::Global(params), vec![Region::whole(p.clone())]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn envelope_equals_ridge_on_k_sparse_points(seed in any::<u64>()) {
        let (mut rng, inst) = instance(seed);
        let (p, prm) = (&inst.partition, &inst.params);
        let mut x = gaussian(&mut rng, p.n(), 2.0);
        for j in prm.k..p.len() {
            for &i in p.group(j) {
                x[i] = 0.0;
            }
        }
        let exact = oracle::gs_k(p.groups(), p.weights(), &x, prm.k);
        let (v, _) = value(p, prm, &x).unwrap();
        prop_assert!((v - exact).abs() <= 1e-10 * exact.max(1.0), "{} vs {}", v, exact);
    }

    #[test]
    fn prox_is_nonexpansive(seed in any::<u64>()) {
        let (mut rng, inst) = instance(seed);
        let (p, prm) = (&inst.partition, &inst.params);
        let a = inst.t.clone();
        let b = gaussian(&mut rng, p.n(), 3.0);
        let step = rng.random_range(0.1..2.0);
        let (pa, _) = prox(p, prm, step, &a, 1).unwrap();
        let (pb, _) = prox(p, prm, step, &b, 2).unwrap();
        let dp: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let dt: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        // Firm nonexpansiveness implies plain nonexpansiveness.
        prop_assert!(norm_sq(&dp) <= dot(&dp, &dt) + 1e-9);
        prop_assert!(norm_sq(&dp).sqrt() <= norm_sq(&dt).sqrt() + 1e-10);
    }

    #[test]
    fn root_methods_agree(seed in any::<u64>()) {
        let (_, inst) = instance(seed);
        let (p, prm) = (&inst.partition, &inst.params);
        let (a, _) = prox_with(p, prm, 1.0, &inst.t, RootMethod::Randomized { seed }).unwrap();
        let (b, _) = prox_with(p, prm, 1.0, &inst.t, RootMethod::Bisection { abs_tol: 1e-15 }).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-8, "{}", diff);
    }

    #[test]
    fn fenchel_young_holds(seed in any::<u64>()) {
        let (mut rng, inst) = instance(seed);
        let (p, prm) = (&inst.partition, &inst.params);
        let x = inst.t.clone();
        let y = gaussian(&mut rng, p.n(), 3.0);
        let (gx, _) = value(p, prm, &x).unwrap();
        prop_assert!(dot(&x, &y) <= gx + conjugate(p, prm, &y).unwrap() + 1e-8 * gx.max(1.0));
        let g = envelope_gradient(p, prm, &x).unwrap();
        let gap = gx + conjugate(p, prm, &g).unwrap() - dot(&x, &g);
        prop_assert!(gap.abs() <= 1e-8 * gx.max(1.0), "{}", gap);
    }

    #[test]
    fn single_and_double_precision_agree(seed in any::<u64>()) {
        let (_, inst) = instance(seed);
        let p32 = GroupPartition::<f32>::new(
            inst.partition.n(),
            inst.partition.groups().to_vec(),
            Some(inst.partition.weights().iter().map(|&d| d as f32).collect()),
        )
        .unwrap();
        let prm32 = EnvelopeParams::new(inst.params.k, inst.params.lambda as f32).unwrap();
        let t32: Vec<f32> = inst.t.iter().map(|&v| v as f32).collect();
        let (a, _) = prox(&inst.partition, &inst.params, 1.0, &inst.t, 3).unwrap();
        let (b, _) = prox(&p32, &prm32, 1.0, &t32, 3).unwrap();
        let scale = inst.t.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - *y as f64).abs() <= 1e-3 * scale, "{} vs {}", x, y);
        }
    }

    #[test]
    fn prune_leaves_at_most_k_groups(seed in any::<u64>(), weighted in any::<bool>()) {
        let (_, inst) = instance(seed);
        let (p, k) = (&inst.partition, inst.params.k);
        let pruned = prune(&inst.t, p, k, weighted).unwrap();
        let zero = p.zero_group_count(&pruned, 0.0).unwrap();
        prop_assert!(zero >= p.len() - k);
        prop_assert!(p.group_sparsity_ratio(&pruned, 0.0).unwrap() >= (p.len() - k) as f64 / p.len() as f64);
        for j in 0..p.len() {
            let kept = p.group(j).iter().any(|&i| pruned[i] != 0.0);
            if kept {
                prop_assert!(p.group(j).iter().all(|&i| pruned[i] == inst.t[i]));
            }
        }
    }

    #[test]
    fn half_space_step_freezes_zero_groups(seed in any::<u64>(), eps in 0.0f64..0.9) {
        let (mut rng, inst) = instance(seed);
        let (p, prm) = (&inst.partition, inst.params);
        let mut theta = inst.t.clone();
        let zeroed: Vec<usize> = (0..p.len()).filter(|_| rng.random_bool(0.4)).collect();
        for &j in &zeroed {
            for &i in p.group(j) {
                theta[i] = 0.0;
            }
        }
        let grad = gaussian(&mut rng, p.n(), 5.0);
        let reg = whole_reg(p, prm);
        half_space_step(&mut theta, &grad, &reg, 0.1, eps).unwrap();
        for &j in &zeroed {
            prop_assert!(p.group(j).iter().all(|&i| theta[i] == 0.0));
        }
    }

    #[test]
    fn momentum_stays_within_the_largest_gradient(
        seed in any::<u64>(),
        rho0 in 0.0f64..0.99,
        decay in 0.5f64..=1.0,
        steps in 1usize..40,
    ) {
        let (mut rng, inst) = instance(seed);
        let reg = whole_reg(&inst.partition, inst.params);
        let mut state = ProxSgdState::new(inst.t.clone());
        let momentum = MomentumSchedule { rho0, decay };
        let mut largest: f64 = 0.0;
        for _ in 0..steps {
            let sd = rng.random_range(0.1..10.0);
            let g = gaussian(&mut rng, inst.t.len(), sd);
            largest = largest.max(norm_sq(&g).sqrt());
            prox_sgd_step(&mut state, &g, &reg, &StepSchedule::Constant { rate: 0.05 }, &momentum, seed).unwrap();
            prop_assert!(norm_sq(&state.momentum).sqrt() <= largest * (1.0 + 1e-12));
        }
    }
}
