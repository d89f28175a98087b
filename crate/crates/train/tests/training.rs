use wgsef_core::envelope::EnvelopeParams;
use wgsef_core::optim::{derive_seed, RegScope, Regularizer, StepSchedule, SwitchCondition};
use wgsef_nn::io::read_params;
use wgsef_nn::{make_groups, Architecture, GroupingScheme, Model, ModelSpec, Targets};
use wgsef_train::data::{gen_group_sparse, SyntheticGroupSpec, SyntheticProblem};
use wgsef_train::{hspg_train, train, Dataset, HspgConfig, TrainConfig};

struct Setup {
    problem: SyntheticProblem,
    train: Dataset,
    val: Dataset,
    model: Model,
}

fn setup(seed: u64, n: usize, m: usize, support: usize, samples: usize) -> Setup {
    let spec = SyntheticGroupSpec { n, m, support, sigma: 0.01, samples, seed: derive_seed(seed, 3) };
    let problem = gen_group_sparse(&spec).unwrap();
    let (train, val) = problem.data.split_last(0.1).unwrap();
    let model = Model::build(&ModelSpec {
        architecture: Architecture::Linear,
        input_shape: vec![n],
        outputs: 1,
        seed: derive_seed(seed, 0),
    })
    .unwrap();
    Setup { problem, train, val, model }
}

fn planted_reg(s: &Setup, k: usize, lambda: f64) -> Regularizer<f64> {
    let scheme = GroupingScheme::Custom { groups: s.problem.groups.clone(), weights: None };
    let regions = make_groups(&s.model, &scheme, false).unwrap();
    Regularizer::resolve(&RegScope::Global(EnvelopeParams::new(k, lambda).unwrap()), regions).unwrap()
}

fn support_of(s: &Setup, theta: &[f64]) -> Vec<usize> {
    (0..s.problem.groups.len()).filter(|&j| s.problem.groups[j].iter().any(|&i| theta[i] != 0.0)).collect()
}

#[test]
fn planted_support_is_recovered_after_prune() {
    let mut exact = 0;
    for seed in 0..6 {
        let s = setup(seed, 200, 20, 4, 1000);
        let reg = planted_reg(&s, 4, 0.1);
        let mut cfg = TrainConfig::new(20, 32, StepSchedule::Constant { rate: 0.02 }, seed);
        cfg.prune_at_end = true;
        let out = train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
        let theta = out.model.flatten_params();
        let support = support_of(&s, &theta);
        assert_eq!(support.len(), 4);
        assert!(out.records.last().unwrap().group_sparsity >= 80.0);
        exact += usize::from(support == s.problem.support);
    }
    assert!(exact >= 5, "{exact}/6 exact recoveries");
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let s = setup(1, 20, 5, 2, 50);
    let reg = planted_reg(&s, 2, 0.1);
    let cfg = TrainConfig::new(0, 8, StepSchedule::Constant { rate: 0.1 }, 1);
    let out = train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.steps, 0);
    assert_eq!(out.model, s.model);
}

#[test]
fn zero_lambda_matches_unregularized_training_bitwise() {
    let s = setup(2, 40, 8, 3, 200);
    let reg = planted_reg(&s, 3, 0.0);
    let cfg = TrainConfig::new(3, 16, StepSchedule::Constant { rate: 0.05 }, 2);
    let a = train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
    let b = train(s.model.clone(), &s.train, &s.val, &Regularizer::default(), &cfg).unwrap();
    assert_eq!(a.model.flatten_params(), b.model.flatten_params());
    let losses = |o: &wgsef_train::TrainOutcome| o.records.iter().map(|r| r.loss).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
}

#[test]
fn runs_are_reproducible() {
    let s = setup(3, 40, 8, 3, 200);
    let reg = planted_reg(&s, 3, 0.1);
    let mut cfg = TrainConfig::new(3, 16, StepSchedule::Constant { rate: 0.05 }, 3);
    cfg.prune_at_end = true;
    let strip = |o: wgsef_train::TrainOutcome| {
        let mut r = o.records;
        r.iter_mut().for_each(|x| x.seconds = 0.0);
        (o.model.flatten_params(), r)
    };
    let a = strip(train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap());
    let b = strip(train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap());
    assert_eq!(a, b);
    cfg.seed = 4;
    let c = strip(train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap());
    assert_ne!(a.0, c.0);
}

#[test]
fn prune_reaches_the_target_sparsity_exactly() {
    let s = setup(4, 60, 12, 4, 300);
    for k in [1, 4, 7, 12] {
        let reg = planted_reg(&s, k, 1e-4);
        let mut cfg = TrainConfig::new(2, 32, StepSchedule::Constant { rate: 0.05 }, 4);
        cfg.prune_at_end = true;
        let out = train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
        let theta = out.model.flatten_params();
        assert!(reg.zero_groups(&theta, 0.0) >= 12 - k, "k={k}");
        let last = out.records.last().unwrap();
        assert!(last.group_sparsity + 1e-9 >= 100.0 * (12 - k) as f64 / 12.0, "k={k}: {}", last.group_sparsity);
        assert!(out.pre_prune.is_some());
        assert_eq!(out.records.len(), 2);
    }
}

#[test]
fn composite_objective_decreases_over_epochs() {
    let s = setup(5, 100, 10, 3, 600);
    let reg = planted_reg(&s, 3, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::new(20, 32, StepSchedule::Constant { rate: 0.01 }, 5);
    cfg.checkpoint_every = Some(1);
    cfg.checkpoint_dir = Some(dir.path().to_path_buf());
    train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
    let mut model = s.model.clone();
    let mut objective = Vec::new();
    for epoch in 1..=20 {
        let theta = read_params(&dir.path().join(format!("epoch_{epoch:04}.wgsf"))).unwrap();
        assert!(dir.path().join(format!("epoch_{epoch:04}.momentum.wgsf")).exists());
        model.scatter_params(&theta).unwrap();
        objective.push(model.loss(&s.train.inputs, &s.train.targets).unwrap() + reg.value(&theta).unwrap());
    }
    let down = objective.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(down as f64 >= 0.95 * 19.0, "{down}/19 decreasing pairs: {objective:?}");
}

#[test]
fn full_budget_with_small_lambda_tracks_plain_sgd() {
    let s = setup(6, 40, 8, 3, 400);
    let reg = planted_reg(&s, 8, 1e-4);
    let cfg = TrainConfig::new(10, 16, StepSchedule::Constant { rate: 0.02 }, 6);
    let a = train(s.model.clone(), &s.train, &s.val, &reg, &cfg).unwrap();
    let b = train(s.model.clone(), &s.train, &s.val, &Regularizer::default(), &cfg).unwrap();
    let (ea, eb) = (a.records.last().unwrap().val_error, b.records.last().unwrap().val_error);
    assert!((ea - eb).abs() <= 0.5, "{ea} vs {eb}");
}

#[test]
fn half_space_phase_never_reactivates_groups() {
    let s = setup(7, 200, 20, 4, 1000);
    let reg = planted_reg(&s, 4, 0.1);
    let cfg = TrainConfig::new(20, 32, StepSchedule::Constant { rate: 0.02 }, 7);
    let steps_per_epoch = s.train.len().div_ceil(32);
    let hspg = HspgConfig { switch: SwitchCondition::FixedIterations { steps: 10 * steps_per_epoch }, epsilon: 0.0 };
    let out = hspg_train(s.model.clone(), &s.train, &s.val, &reg, &cfg, &hspg).unwrap();
    let summary = out.hspg.unwrap();
    assert_eq!(summary.switched_after_steps, Some(10 * steps_per_epoch));
    assert_eq!(summary.half_space_steps, 10 * steps_per_epoch);
    assert_eq!(summary.reactivations, 0);
    let sparsity: Vec<f64> = out.records.iter().map(|r| r.group_sparsity).collect();
    for w in sparsity[10..].windows(2) {
        assert!(w[1] >= w[0], "{sparsity:?}");
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let s = setup(8, 20, 5, 2, 50);
    let other = setup(8, 30, 5, 2, 50);
    let cfg = TrainConfig::new(1, 8, StepSchedule::Constant { rate: 0.1 }, 1);
    assert!(train(s.model.clone(), &other.train, &other.val, &Regularizer::default(), &cfg).is_err());
    let big = TrainConfig::new(1, 1000, StepSchedule::Constant { rate: 0.1 }, 1);
    assert!(train(s.model.clone(), &s.train, &s.val, &Regularizer::default(), &big).is_err());
    let empty = s.train.subset(&[]);
    assert!(train(s.model.clone(), &empty, &s.val, &Regularizer::default(), &cfg).is_err());
    assert!(matches!(s.train.targets, Targets::Values(_)));
}
