use activscope::heads::*;
use activscope::parallel::Execution;
use activscope::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two classes separated by a gap of 2 along the first axis.
fn separable_blobs(seed: u64, per_class: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2u8 {
        for _ in 0..per_class {
            let x0 = if class == 0 {
                rng.gen_range(-3.0..-1.0)
            } else {
                rng.gen_range(1.0..3.0)
            };
            rows.push(vec![x0, rng.gen_range(-2.0..2.0)]);
            labels.push(class);
        }
    }
    FeatureMatrix::from_rows(&rows, labels, "blobs").unwrap()
}

/// `d` uniform features in [-1, 1]; the label is `x[informative] > 0`.
fn planted(seed: u64, n: usize, d: usize, informative: &[usize]) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let row: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = informative.iter().all(|&k| row[k] > 0.0) as u8;
        rows.push(row);
        labels.push(label);
    }
    FeatureMatrix::from_rows(&rows, labels, "planted").unwrap()
}

fn shuffled(x: &FeatureMatrix, seed: u64) -> FeatureMatrix {
    let mut idx: Vec<usize> = (0..x.n()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    x.select_rows(&idx).unwrap()
}

fn small_forest() -> ForestConfig {
    ForestConfig {
        n_trees: 25,
        ..Default::default()
    }
}

#[test]
fn logistic_separates_blobs() {
    let x = separable_blobs(7, 20);
    let m = fit_logistic(&x, &LogisticConfig::default()).unwrap();
    assert_eq!(m.accuracy(&x).unwrap(), 1.0);
}

#[test]
fn svm_separates_blobs() {
    let x = separable_blobs(7, 20);
    let m = fit_svm(&x, &SvmConfig::default()).unwrap();
    assert_eq!(m.accuracy(&x).unwrap(), 1.0);
}

#[test]
fn scaling_features_and_weights_keeps_scores() {
    let x = separable_blobs(7, 20);
    let m = fit_logistic(&x, &LogisticConfig::default()).unwrap();
    let doubled: Vec<Vec<f32>> = (0..x.n()).map(|i| x.row(i).iter().map(|v| v * 2.0).collect()).collect();
    let halved = LogisticModel {
        weights: m.weights.iter().map(|w| w / 2.0).collect(),
        ..m.clone()
    };
    for (i, row) in doubled.iter().enumerate() {
        assert_eq!(halved.decision_score(row), m.decision_score(x.row(i)));
    }
}

#[test]
fn svm_objective_non_increasing() {
    for seed in 1..=3 {
        let x = planted(seed, 60, 4, &[0]);
        let cfg = SvmConfig {
            seed,
            epochs: 30,
            lambda: 0.01,
        };
        let m = fit_svm(&x, &cfg).unwrap();
        assert_eq!(m.objective_trace.len(), 30);
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {:?}", m.objective_trace);
        }
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let x = planted(3, 30, 5, &[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let (b, l2, eps) = (0.2, 0.05, 1e-6);
    let (_, gw, gb) = logistic_objective(&x, &w, b, l2).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
    for j in 0..5 {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[j] += eps;
        wm[j] -= eps;
        let numeric = (logistic_objective(&x, &wp, b, l2).unwrap().0 - logistic_objective(&x, &wm, b, l2).unwrap().0)
            / (2.0 * eps);
        assert!(rel(gw[j], numeric) <= 1e-6, "w[{j}]: {} vs {numeric}", gw[j]);
    }
    let numeric = (logistic_objective(&x, &w, b + eps, l2).unwrap().0
        - logistic_objective(&x, &w, b - eps, l2).unwrap().0)
        / (2.0 * eps);
    assert!(rel(gb, numeric) <= 1e-6);
}

#[test]
fn single_tree_reaches_purity() {
    let x = planted(5, 200, 6, &[0, 2]);
    let cfg = ForestConfig {
        n_trees: 1,
        bootstrap: false,
        ..Default::default()
    };
    let m = fit_forest(&x, &cfg).unwrap();
    assert_eq!(m.accuracy(&x).unwrap(), 1.0);
}

#[test]
fn planted_feature_ranks_first() {
    for seed in 0..5 {
        let x = planted(seed, 300, 10, &[3]);
        let cfg = ForestConfig { seed, ..small_forest() };
        let imp = importance(&fit_forest(&x, &cfg).unwrap()).unwrap();
        assert_eq!(imp.ranking()[0], 3, "seed {seed}");
        assert!((imp.sum() - 1.0).abs() <= 1e-6);
        assert!(imp.values.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn two_planted_features_take_top_two() {
    for seed in 0..5 {
        let x = planted(seed, 400, 10, &[2, 7]);
        let cfg = ForestConfig { seed, ..small_forest() };
        let imp = importance(&fit_forest(&x, &cfg).unwrap()).unwrap();
        let mut top = imp.top_k(2);
        top.sort();
        assert_eq!(top, vec![2, 7], "seed {seed}");
    }
}

fn stump(feature: u32, threshold: f32) -> Tree {
    Tree {
        nodes: vec![
            Node::Split {
                feature,
                threshold,
                left: 1,
                right: 2,
                impurity_decrease: 2.0,
            },
            Node::Leaf { counts: [4, 0] },
            Node::Leaf { counts: [0, 4] },
        ],
        stream: 0,
        samples: 8,
    }
}

#[test]
fn stumps_on_one_feature_own_all_importance() {
    let m = ForestModel {
        trees: (0..5).map(|i| stump(2, i as f32 * 0.1)).collect(),
        d: 4,
        config: ForestConfig::default(),
    };
    m.validate().unwrap();
    assert_eq!(importance(&m).unwrap().values, vec![0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn forest_vote_ties_go_to_class_zero() {
    // stump A says 1 for x > 0, stump B says 1 for x <= 0: always one vote each
    let mut b = stump(0, 0.0);
    b.nodes[1] = Node::Leaf { counts: [0, 4] };
    b.nodes[2] = Node::Leaf { counts: [4, 0] };
    let m = ForestModel {
        trees: vec![stump(0, 0.0), b],
        d: 1,
        config: ForestConfig::default(),
    };
    for v in [-1.0f32, 1.0] {
        assert_eq!(m.votes(&[v]), 1);
        assert_eq!(m.predict_row(&[v]), 0);
    }
    let three = ForestModel {
        trees: vec![stump(0, 0.0), stump(0, 0.0), m.trees[1].clone()],
        ..m
    };
    assert_eq!(three.predict_row(&[1.0]), 1);
    assert_eq!(three.predict_row(&[-1.0]), 0);
}

#[test]
fn forest_predict_is_majority_of_trees() {
    let x = planted(9, 200, 8, &[1]);
    let m = fit_forest(&x, &small_forest()).unwrap();
    for i in 0..x.n() {
        let ones = m.trees.iter().filter(|t| t.predict_row(x.row(i)) == 1).count();
        let expected = (ones * 2 > m.trees.len()) as u8;
        assert_eq!(m.predict_row(x.row(i)), expected);
    }
}

#[test]
fn accuracy_trivial_cases() {
    let x = separable_blobs(7, 10);
    let constant = LogisticModel {
        weights: vec![0.0, 0.0],
        bias: 1.0,
        config: LogisticConfig::default(),
    };
    assert_eq!(constant.accuracy(&x).unwrap(), 0.5);
    let perfect = LogisticModel {
        weights: vec![1.0, 0.0],
        bias: 0.0,
        config: LogisticConfig::default(),
    };
    assert_eq!(perfect.accuracy(&x).unwrap(), 1.0);
    let wide = FeatureMatrix::from_rows(&[vec![0.0; 3]], vec![0], "t").unwrap();
    assert!(matches!(
        perfect.predict(&wide),
        Err(Error::DimensionMismatch { expected: 2, actual: 3 })
    ));
}

#[test]
fn single_class_is_rejected_by_all() {
    let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 0], "t").unwrap();
    for kind in HeadKind::ALL {
        assert!(matches!(
            FittedHead::fit(kind, &x, &HeadsConfig::default(), Execution::Sequential),
            Err(Error::SingleClass)
        ));
    }
}

#[test]
fn column_subset_fit_matches_direct_fit() {
    let x = planted(4, 150, 12, &[5]);
    let cols = [5, 0, 9, 3];
    let selected = x.select_columns(&cols).unwrap();
    assert_eq!(selected.provenance(), &[(5, 0), (0, 0), (9, 0), (3, 0)]);
    let rows: Vec<Vec<f32>> = (0..x.n())
        .map(|i| cols.iter().map(|&c| x.value(i, c)).collect())
        .collect();
    let direct = FeatureMatrix::new(
        x.n(),
        cols.len(),
        rows.concat(),
        x.labels().to_vec(),
        "planted",
        cols.iter().map(|&c| (c as u32, 0)).collect(),
    )
    .unwrap();
    assert_eq!(selected, direct);
    let cfg = HeadsConfig {
        forest: small_forest(),
        ..Default::default()
    };
    for kind in HeadKind::ALL {
        let a = FittedHead::fit(kind, &selected, &cfg, Execution::Sequential).unwrap();
        let b = FittedHead::fit(kind, &direct, &cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn forest_identical_across_execution_modes() {
    let x = planted(2, 200, 16, &[4]);
    let a = fit_forest_with(&x, &small_forest(), Execution::Sequential).unwrap();
    let b = fit_forest_with(&x, &small_forest(), Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn heads_round_trip_through_json() {
    let x = planted(6, 120, 5, &[0]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = HeadsConfig {
        forest: small_forest(),
        ..Default::default()
    };
    for kind in HeadKind::ALL {
        let head = FittedHead::fit(kind, &x, &cfg, Execution::Sequential).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        head.save(&path).unwrap();
        assert_eq!(FittedHead::load(&path).unwrap(), head);
    }
}

#[test]
fn corrupted_forest_json_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    let head = FittedHead::Forest(ForestModel {
        trees: vec![stump(7, 0.0)],
        d: 3,
        config: ForestConfig::default(),
    });
    head.save(&path).unwrap();
    assert!(matches!(FittedHead::load(&path), Err(Error::Format { .. })));
    std::fs::write(&path, "{\"kind\": \"forest\", \"trees\": [").unwrap();
    assert!(matches!(FittedHead::load(&path), Err(Error::Format { .. })));
    assert!(matches!(
        FittedHead::load(dir.path().join("absent.json")),
        Err(Error::MissingFile(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fitters_ignore_row_order(data_seed in 0u64..1000, perm_seed in 0u64..1000) {
        let x = planted(data_seed, 80, 6, &[1]);
        let y = shuffled(&x, perm_seed);
        let cfg = HeadsConfig {
            forest: ForestConfig { n_trees: 5, ..Default::default() },
            logistic: LogisticConfig { iterations: 50, ..Default::default() },
            svm: SvmConfig { epochs: 3, ..Default::default() },
        };
        for kind in HeadKind::ALL {
            let a = FittedHead::fit(kind, &x, &cfg, Execution::Sequential).unwrap();
            let b = FittedHead::fit(kind, &y, &cfg, Execution::Sequential).unwrap();
            prop_assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        }
    }

    #[test]
    fn gini_bounds(c0 in 0u32..500, c1 in 0u32..500) {
        let g = gini([c0, c1]);
        prop_assert!((0.0..=0.5).contains(&g));
    }
}
