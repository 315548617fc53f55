use ctfdbf_core::learn::{
    evaluate, run_protocol, stratified_split, train, ClassifierConfig, ClassifierKind, LabeledDataset, Mlp,
};
use ctfdbf_core::seed::rng_for;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Classes on a line in the first few dimensions, plus pure-noise columns.
fn mixture(n_classes: usize, per_class: usize, d: usize, spread: f64, seed: u64) -> LabeledDataset {
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, spread).unwrap();
    let n = n_classes * per_class;
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        let c = (i / per_class) as f64;
        let centre = if j < 4 { c * (1.0 + j as f64 * 0.3) } else { 0.0 };
        centre + noise.sample(&mut rng)
    });
    let y = (0..n).map(|i| (i / per_class) as u8).collect();
    LabeledDataset::new(x, y, None).unwrap()
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let data = mixture(21, 50, 10, 0.3, 1);
    let cfg = ClassifierConfig::new(ClassifierKind::DecisionTree);
    let mut accs = Vec::new();
    for s in 0..20u64 {
        let mut rng = rng_for(2, &[s]);
        let (tr, te) = stratified_split(&data.labels, 0.8, &mut rng);
        let mut train_set = data.subset(&tr);
        train_set.labels.shuffle(&mut rng);
        let model = train(&cfg.clone().with_seed(s), &train_set).unwrap();
        accs.push(evaluate(&model, &data.subset(&te)).unwrap().accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 1.0 / 21.0).abs() <= 0.03, "mean accuracy {mean}");
}

#[test]
fn forest_is_at_least_as_good_as_a_tree() {
    let data = mixture(6, 40, 20, 0.9, 3);
    let mut rf = ClassifierConfig::new(ClassifierKind::RandomForest);
    rf.trees = 100;
    let dt = ClassifierConfig::new(ClassifierKind::DecisionTree);
    let a_rf = run_protocol(&data, &rf, 0.8, 20, 4).unwrap().accuracy.mean;
    let a_dt = run_protocol(&data, &dt, 0.8, 20, 4).unwrap().accuracy.mean;
    assert!(a_rf >= a_dt, "rf {a_rf} < dt {a_dt}");
}

#[test]
fn full_size_network_gradient_spot_check() {
    let mut rng = rng_for(5, &[]);
    let net = Mlp::init(&[294, 100, 200, 100, 11], &mut rng);
    let x = Array2::from_shape_fn((10, 294), |_| rng.random_range(-1.5..1.5));
    let y: Vec<usize> = (0..10).map(|i| i % 11).collect();
    let (_, grads) = net.loss_and_grad(&x, &y);
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..400 {
        let l = rng.random_range(0..net.layers.len());
        let (r, c) = net.layers[l].w.dim();
        let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
        let mut plus = net.clone();
        let mut minus = net.clone();
        plus.layers[l].w[[i, j]] += h;
        minus.layers[l].w[[i, j]] -= h;
        let numeric = (plus.loss(&x, &y) - minus.loss(&x, &y)) / (2.0 * h);
        let analytic = grads[l].w[[i, j]];
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-6 {
            checked += 1;
            assert!((analytic - numeric).abs() / scale < 1e-4, "layer {l} ({i},{j}): {analytic} vs {numeric}");
        }
    }
    assert!(checked > 50);
}

#[test]
fn every_classifier_handles_multiclass_blobs() {
    let data = mixture(4, 30, 8, 0.2, 6);
    for kind in ClassifierKind::ALL {
        let mut cfg = ClassifierConfig::new(kind);
        cfg.trees = 30;
        let s = run_protocol(&data, &cfg, 0.8, 3, 7).unwrap();
        assert!(s.accuracy.mean > 0.9, "{kind}: {}", s.accuracy.mean);
        assert!(s.accuracy.mean <= 1.0 && s.f1.mean <= 1.0);
    }
}
