use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgsef_nn::compact::compact;
use wgsef_nn::flops::flops_estimate;
use wgsef_nn::io::{decode_params, encode_params, read_params, write_params};
use wgsef_nn::{make_groups, Architecture, GroupingScheme, Model, ModelSpec, Tensor};

fn lenet(seed: u64) -> Model {
    Model::build(&ModelSpec { architecture: Architecture::LeNet5, input_shape: vec![1, 32, 32], outputs: 10, seed })
        .unwrap()
}

fn mlp(seed: u64) -> Model {
    Model::build(&ModelSpec {
        architecture: Architecture::Mlp { hidden: vec![12, 7] },
        input_shape: vec![9],
        outputs: 3,
        seed,
    })
    .unwrap()
}

/// Zeroes the incoming weights of `units` in layer `l` of the flat vector.
fn zero_units(model: &Model, theta: &mut [f64], l: usize, units: &[usize]) {
    let block = &model.layout()[l];
    let per = block.weight.len() / model.layers[l].weight.shape()[0];
    for &u in units {
        theta[block.weight.start + u * per..block.weight.start + (u + 1) * per].fill(0.0);
    }
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<usize> {
    (0..n).filter(|_| rng.random_bool(p)).collect()
}

fn weight_coords(model: &Model, layers: impl Iterator<Item = usize>) -> Vec<usize> {
    let layout = model.layout();
    layers.flat_map(|l| layout[l].weight.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn groups_never_overlap_and_cover_their_layers(which in 0usize..4, lenet_model in any::<bool>(), bias in any::<bool>()) {
        let model = if lenet_model { lenet(1) } else { mlp(1) };
        let scheme = [GroupingScheme::PerFilter, GroupingScheme::PerChannel, GroupingScheme::PerNeuron, GroupingScheme::Unstructured][which].clone();
        let regions = match make_groups(&model, &scheme, bias) {
            Ok(r) => r,
            Err(_) => {
                // Filter and channel schemes need conv layers; channel groups take no biases.
                prop_assert!((!lenet_model && which < 2) || (which == 1 && bias));
                return Ok(());
            }
        };
        let mut seen = vec![0u8; model.num_params()];
        for r in &regions {
            for g in r.partition.groups() {
                for &i in g {
                    seen[r.indices[i]] += 1;
                }
            }
        }
        prop_assert!(seen.iter().all(|&c| c <= 1));
        let convs = model.layers.iter().filter(|l| l.weight.shape().len() == 4).count();
        let covered = match which {
            0 | 1 => weight_coords(&model, 0..convs),
            2 => weight_coords(&model, convs..model.layers.len()),
            _ => weight_coords(&model, 0..model.layers.len()),
        };
        prop_assert!(covered.iter().all(|&i| seen[i] == 1));
    }

    #[test]
    fn flops_never_grow_when_more_filters_are_pruned(seed in any::<u64>()) {
        let model = lenet(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = model.flatten_params();
        for (l, p) in [(0usize, 0.3), (1, 0.3), (2, 0.2), (3, 0.2)] {
            let units = random_subset(&mut rng, model.layers[l].weight.shape()[0], p);
            zero_units(&model, &mut a, l, &units);
        }
        let mut b = a.clone();
        for l in 0..4 {
            let extra = random_subset(&mut rng, model.layers[l].weight.shape()[0], 0.3);
            zero_units(&model, &mut b, l, &extra);
        }
        let (fa, fb) = (flops_estimate(&model, &a, 0.0).unwrap(), flops_estimate(&model, &b, 0.0).unwrap());
        prop_assert!(fb.flops <= fa.flops);
        for (la, lb) in fa.layers.iter().zip(&fb.layers) {
            prop_assert!(lb.flops <= la.flops, "{}: {} > {}", la.label, lb.flops, la.flops);
        }
        prop_assert!(fa.flops <= fa.dense_flops);
    }

    #[test]
    fn params_round_trip_bit_exactly(bits in proptest::collection::vec(any::<u64>(), 0..200)) {
        let values: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
        let back = decode_params(&encode_params(&values)).unwrap();
        prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), bits.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wgsf");
        write_params(&path, &values).unwrap();
        prop_assert_eq!(read_params(&path).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), bits);
    }

    #[test]
    fn compaction_preserves_predictions(seed in any::<u64>(), use_lenet in any::<bool>()) {
        let model = if use_lenet { lenet(seed) } else { mlp(seed) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = model.flatten_params();
        // Every hidden layer; the output layer is never removed.
        for l in 0..model.layers.len() - 1 {
            let units = random_subset(&mut rng, model.layers[l].weight.shape()[0], 0.4);
            zero_units(&model, &mut theta, l, &units);
        }
        let mut zeroed = model.clone();
        zeroed.scatter_params(&theta).unwrap();
        let (small, record) = compact(&zeroed, 0.0).unwrap();
        prop_assert!(record.compact_params <= record.original_params);
        let shape: Vec<usize> = if use_lenet { vec![3, 1, 32, 32] } else { vec![3, 9] };
        let n: usize = shape.iter().product();
        let x = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (a, b) = (zeroed.predict(&x).unwrap(), small.predict(&x).unwrap());
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0), "{} vs {}", p, q);
        }
    }
}
