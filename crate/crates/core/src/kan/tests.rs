use super::*;
use crate::basis::BasisSpec;
use crate::hcr::{pairwise_basis, HcrModel, MultiIndex};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOY: [usize; 4] = [6, 4, 4, 3];

fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

/// Perturbs LayerNorm affine parameters away from (1, 0) so their gradients
/// are not degenerate.
fn jitter_norms(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, block) in net.params_mut() {
        if name.contains("ln.") {
            for v in block.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
/// Largest relative error between the analytic gradient of `Σ r ⊙ logits`
/// and central differences, per block.
fn fd_errors(net: &Network<f64>, x: &Array2<f64>, seed: u64) -> Vec<(String, f64)> {
    let probe = {
        let logits = net.forward(x.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn(logits.raw_dim(), |_| rng.random_range(-1.0..1.0))
    };
    let loss = |n: &Network<f64>| (n.forward(x.view()).unwrap() * &probe).sum();
    let (_, cache) = net.forward_cached(x.view()).unwrap();
    let grads = net.backward(&cache, probe.view()).unwrap();
    let h = 1e-5;
    let mut work = net.clone();
    let mut out = Vec::new();
    for (b, (name, g)) in grads.blocks.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let orig = work.params_mut()[b].1[i];
            work.params_mut()[b].1[i] = orig + h;
            let lp = loss(&work);
            work.params_mut()[b].1[i] = orig - h;
            let lm = loss(&work);
            work.params_mut()[b].1[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        out.push((name.clone(), worst));
    }
    out
}

#[test]
fn zero_weights_give_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layer = KanLayer::<f64>::cdf(5, 3, 3, false, &mut rng).unwrap();
    layer.weights.fill(0.0);
    let (y, _) = layer.forward(random_batch(4, 5, 1).view()).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));

    for variant in Variant::ALL {
        let mut net = build_variant::<f64>(variant, &TOY, 3, 2).unwrap();
        for (name, block) in net.params_mut() {
            if name.ends_with("weights") {
                block.fill(0.0);
            }
        }
        let logits = net.forward(random_batch(3, 6, 2).view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0), "{variant}");
    }
}

#[test]
fn single_input_neuron_reads_constant_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layer = KanLayer::<f64>::cdf(1, 1, 1, true, &mut rng).unwrap();
    layer.weights = array![[0.7, -1.3]];
    // one feature: LayerNorm maps it to 0, so u = 0.5 and f_1(u) = 0
    let (y, cache) = layer.forward(array![[3.2], [-1.0]].view()).unwrap();
    assert_eq!(cache.features(), &array![[1.0, 0.0], [1.0, 0.0]]);
    assert_eq!(y, array![[0.7], [0.7]]);
}

#[test]
fn feature_layout_is_input_major() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = KanLayer::<f64>::cdf(4, 2, 3, false, &mut rng).unwrap();
    let x = random_batch(3, 4, 7);
    let (_, cache) = layer.forward(x.view()).unwrap();
    assert_eq!(cache.features().ncols(), 16);
    let spec = BasisSpec::<f64>::new(3);
    for (p, u) in cache.features().rows().into_iter().zip(cache.normalized().rows()) {
        for i in 0..4 {
            let block = spec.eval(u[i]).unwrap();
            assert_eq!(p.slice(ndarray::s![i * 4..i * 4 + 4]).to_vec(), block);
        }
    }
}

#[test]
fn shape_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = KanLayer::<f64>::cdf(4, 2, 3, false, &mut rng).unwrap();
    assert!(matches!(layer.forward(random_batch(2, 5, 0).view()), Err(KanError::InvalidShape(_))));
    let (_, cache) = layer.forward(random_batch(2, 4, 0).view()).unwrap();
    assert!(matches!(
        layer.backward(Array2::zeros((3, 2)).view(), &cache),
        Err(KanError::CacheMismatch(_))
    ));

    let a = KanLayer::<f64>::cdf(4, 2, 3, false, &mut rng).unwrap();
    let b = KanLayer::<f64>::cdf(3, 2, 3, false, &mut rng).unwrap();
    assert!(matches!(Network::new(vec![a, b]), Err(KanError::DimChain { layer: 0, .. })));
    assert!(matches!(Network::<f64>::new(vec![]), Err(KanError::Empty)));

    let net = build_variant::<f64>(Variant::CdfKalNet, &TOY, 3, 0).unwrap();
    let (_, cache) = net.forward_cached(random_batch(2, 6, 0).view()).unwrap();
    assert!(net.backward(&cache, Array2::zeros((2, 4)).view()).is_err());
    let other = build_variant::<f64>(Variant::CdfKalNet, &[6, 3], 3, 0).unwrap();
    let (_, short) = other.forward_cached(random_batch(2, 6, 0).view()).unwrap();
    assert!(matches!(
        net.backward(&short, Array2::zeros((2, 3)).view()),
        Err(KanError::CacheMismatch(_))
    ));
}

#[test]
fn every_variant_matches_finite_differences() {
    for variant in Variant::ALL {
        for (batch, seed) in [(2usize, 3u64), (5, 4)] {
            let mut net = build_variant::<f64>(variant, &TOY, 3, seed).unwrap();
            jitter_norms(&mut net, seed);
            let x = random_batch(batch, 6, seed + 10);
            for (name, err) in fd_errors(&net, &x, seed) {
                assert!(err < 1e-4, "{variant} batch {batch} {name}: {err:e}");
            }
        }
    }
}

#[test]
fn alternative_wirings_match_finite_differences() {
    let x = random_batch(4, 6, 1);
    for options in [
        BuildOptions {
            minmax_scope: MinMaxScope::WholeBatch,
            ..Default::default()
        },
        BuildOptions {
            minmax_scope: MinMaxScope::PerSample,
            ..Default::default()
        },
    ] {
        let net = build_variant_with::<f64>(Variant::KalNet, &TOY, 3, 5, options).unwrap();
        for (name, err) in fd_errors(&net, &x, 2) {
            assert!(err < 1e-4, "{options:?} {name}: {err:e}");
        }
    }
    let projected = BuildOptions {
        silu_residual: Residual::ProjectedSilu,
        ..Default::default()
    };
    let net = build_variant_with::<f64>(Variant::CdfKalSilu, &TOY, 4, 5, projected).unwrap();
    for (name, err) in fd_errors(&net, &x, 2) {
        assert!(err < 1e-4, "projected {name}: {err:e}");
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    for variant in Variant::ALL {
        let net = build_variant::<f64>(variant, &TOY, 3, 1).unwrap();
        let x = random_batch(3, 6, 1);
        let (logits, cache) = net.forward_cached(x.view()).unwrap();
        let grads = net.backward(&cache, Array2::zeros(logits.raw_dim()).view()).unwrap();
        assert!(grads.is_zero(), "{variant}");
    }
}

#[test]
fn frozen_norms_have_no_gradient_blocks() {
    let net = build_variant::<f64>(Variant::CdfKalNetFixedNorm, &TOY, 3, 1).unwrap();
    let (logits, cache) = net.forward_cached(random_batch(3, 6, 1).view()).unwrap();
    let grads = net.backward(&cache, logits.view()).unwrap();
    let names: Vec<&str> = grads.blocks.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["layer0.weights", "layer1.weights", "layer2.weights"]);
    let layout: Vec<String> = net.param_layout().into_iter().map(|(n, _)| n).collect();
    assert_eq!(layout, names);
}

#[test]
fn network_outputs() {
    let net = build_variant::<f64>(Variant::CdfKalNet, &MNIST_DIMS, 3, 0).unwrap();
    let x = random_batch(7, 784, 3).mapv(|v| (v + 2.0) / 4.0);
    let a = net.forward(x.view()).unwrap();
    let b = net.forward(x.view()).unwrap();
    assert_eq!(a.dim(), (7, 10));
    assert_eq!(a, b);
    assert_eq!(net.pre_norm().unwrap().dim(), 784);
    assert_eq!(net.dims(), MNIST_DIMS.to_vec());
}

#[test]
fn freezing_norms_drops_affine_count() {
    for variant in Variant::ALL {
        let mut net = build_variant::<f64>(variant, &TOY, 3, 0).unwrap();
        let before = net.trainable_params();
        let ln_sites: usize = net
            .layers()
            .iter()
            .map(|l| {
                let input = l.ln.as_ref().filter(|p| !p.frozen).map_or(0, |p| p.dim());
                let output = match &l.output {
                    OutputStage::NormSilu(p) if !p.frozen => p.dim(),
                    _ => 0,
                };
                input + output
            })
            .sum();
        net.freeze_norms();
        assert_eq!(before - net.trainable_params(), 2 * ln_sites, "{variant}");
    }
}

#[test]
fn variant_structure() {
    let count = |v| build_variant::<f64>(v, &MNIST_DIMS, 3, 0).unwrap().trainable_params();
    let ln_affine = 2 * (784 + 64 + 64);
    assert_eq!(count(Variant::CdfKalNet) - count(Variant::CdfKalNetFixedNorm), ln_affine);
    assert_eq!(count(Variant::CdfKalNet), count(Variant::CdfKalSilu));
    let square = [8, 8, 8];
    assert_eq!(
        build_variant::<f64>(Variant::CdfKalNet, &square, 3, 0).unwrap().trainable_params(),
        build_variant::<f64>(Variant::CdfKalSilu, &square, 3, 0).unwrap().trainable_params()
    );

    let kal = build_variant::<f64>(Variant::KalNet, &TOY, 3, 0).unwrap();
    assert!(!kal.uses_cdf());
    assert!(kal.layers().iter().all(|l| l.ln.is_none()));
    for v in [Variant::CdfKalNet, Variant::CdfKalNetFixedNorm, Variant::CdfKalSilu] {
        assert!(build_variant::<f64>(v, &TOY, 3, 0).unwrap().uses_cdf());
    }

    let shapes = |v| -> Vec<(usize, usize)> {
        build_variant::<f64>(v, &TOY, 5, 0)
            .unwrap()
            .layers()
            .iter()
            .map(|l| l.weights.dim())
            .collect()
    };
    for v in Variant::ALL {
        assert_eq!(shapes(v), vec![(4, 36), (4, 24), (3, 24)]);
    }
}

#[test]
fn variant_names_and_degree_range() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert_eq!("fixednorm".parse::<Variant>().unwrap(), Variant::CdfKalNetFixedNorm);
    assert!(matches!("KAN".parse::<Variant>(), Err(KanError::UnknownVariant(_))));
    assert!(matches!(build_variant::<f64>(Variant::CdfKalNet, &TOY, 2, 0), Err(KanError::DegreeOutOfRange(2))));
    assert!(matches!(build_variant::<f64>(Variant::CdfKalNet, &TOY, 12, 0), Err(KanError::DegreeOutOfRange(12))));
    assert!(build_variant::<f64>(Variant::CdfKalNet, &TOY, 11, 0).is_ok());
}

#[test]
fn activations_stay_in_range() {
    let x = random_batch(16, 6, 9).mapv(|v| v * 50.0);
    let cdf = build_variant::<f64>(Variant::CdfKalNet, &TOY, 3, 0).unwrap();
    let kal = build_variant::<f64>(Variant::KalNet, &TOY, 3, 0).unwrap();
    for layer in 0..3 {
        let u = cdf.normalized_activations(x.view(), layer).unwrap();
        assert!(u.iter().all(|&v| v > 0.0 && v < 1.0));
        let u = kal.normalized_activations(x.view(), layer).unwrap();
        assert!(u.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    assert!(cdf.normalized_activations(x.view(), 3).is_err());
}

#[test]
fn neuron_from_pairwise_model_reproduces_numerator() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let coeffs = pairwise_basis(4, 3)
        .into_iter()
        .filter(|i| !i.is_zero())
        .map(|i| (i, rng.random_range(-0.3..0.3)));
    let model = HcrModel::from_coefficients(4, 3, coeffs).unwrap();
    let reduced = model.kan_reduce(1).unwrap();
    let mut layer = KanLayer::<f64>::cdf(3, 1, 3, true, &mut rng).unwrap();
    layer.weights = Array2::from_shape_vec((1, 12), reduced.layer_weights()).unwrap();
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let u: Vec<f64> = reduced.inputs.iter().map(|&i| x[i]).collect();
        let p = ndarray::Array1::from(layer.feature_vector(&u));
        let neuron = layer.weights.dot(&p)[0];
        let direct = model.first_moment_numerator(1, &x).unwrap();
        assert!((neuron - direct).abs() < 1e-12);
    }
    let _ = MultiIndex::zero(1);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for v in Variant::ALL {
        let mut net = build_variant::<f64>(v, &TOY, 4, 3).unwrap();
        jitter_norms(&mut net, 1);
        let path = dir.path().join(format!("{v}.ckpt"));
        net.save_checkpoint(&path).unwrap();
        let back = Network::<f64>::load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        let x = random_batch(3, 6, 0);
        assert_eq!(back.forward(x.view()).unwrap(), net.forward(x.view()).unwrap());
    }
    let custom = build_variant_with::<f64>(
        Variant::KalNet,
        &TOY,
        3,
        0,
        BuildOptions {
            minmax_scope: MinMaxScope::PerSample,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(Network::from_checkpoint(&custom.to_checkpoint()).unwrap(), custom);
}

#[test]
fn checkpoint_rejects_damage() {
    let net = build_variant::<f64>(Variant::CdfKalNet, &[3, 2], 3, 0).unwrap();
    let text = net.to_checkpoint();
    let broken = [
        text.replace("cdfkan-checkpoint 1", "cdfkan-checkpoint 2"),
        text.replace("norm=cdf", "norm=tanh"),
        text.replace("weights 2 12", "weights 2 11"),
        text.lines().take(5).collect::<Vec<_>>().join("\n"),
        format!("{text}extra\n"),
    ];
    for b in broken {
        assert!(matches!(Network::<f64>::from_checkpoint(&b), Err(KanError::Checkpoint { .. })), "{b}");
    }
}

#[test]
fn single_precision_network_runs() {
    let net = build_variant::<f32>(Variant::CdfKalSilu, &TOY, 3, 0).unwrap();
    let x = random_batch(4, 6, 0).mapv(|v| v as f32);
    let (logits, cache) = net.forward_cached(x.view()).unwrap();
    assert!(logits.iter().all(|v| v.is_finite()));
    let grads = net.backward(&cache, logits.view()).unwrap();
    assert!(!grads.is_zero());
}

proptest! {
    #[test]
    fn checkpoint_round_trip_any_weights(seed in any::<u64>(), degree in 3usize..=6) {
        let net = build_variant::<f64>(Variant::CdfKalSilu, &[3, 3, 2], degree, seed).unwrap();
        prop_assert_eq!(Network::from_checkpoint(&net.to_checkpoint()).unwrap(), net);
    }
}
