mod common;

use dtization::dataset::{
    quartiles, read_csv, train_test_split, Dataset, DatasetError, Target, TaskKind,
};
use dtization::metrics::{classification_metrics, confusion_matrix, regression_metrics};
use dtization::models::{ols_fit, KnnModel};
use dtization::scalers::{FeatureParams, FittedScaler, ScalerMethod};
use dtization::tree::{exponent, grow_importance_tree, FactorMode};
use proptest::collection::vec;
use proptest::prelude::*;

use common::*;

fn labeled(columns: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
    let nf = columns.len();
    Dataset::new(names(nf), columns)
        .unwrap()
        .with_target(
            "y",
            Target::Labels(labels.iter().map(|l| format!("c{l}")).collect()),
        )
        .unwrap()
}

/// `nf` integer-valued columns of length `n` plus labels from three classes.
fn dataset(max_n: usize, max_nf: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_nf).prop_flat_map(|(n, nf)| {
        (vec(vec(-20i32..20, n), nf), vec(0u8..3, n)).prop_map(|(cols, labels)| {
            let cols = cols
                .into_iter()
                .map(|c| c.into_iter().map(f64::from).collect())
                .collect();
            labeled(cols, labels)
        })
    })
}

fn finite_values(max: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-1e6f64..1e6, 1..max)
}

proptest! {
    #[test]
    fn quartiles_match_brute_force(values in finite_values(60)) {
        let q = quartiles(&values).unwrap();
        let (q1, q3) = oracle_quartiles(&values);
        prop_assert_eq!(q.q1.to_bits(), q1.to_bits());
        prop_assert_eq!(q.q3.to_bits(), q3.to_bits());
        prop_assert!(q.q1 <= q.q3);
    }

    #[test]
    fn quartiles_ignore_order(mut values in finite_values(60), seed in any::<u64>()) {
        let before = quartiles(&values).unwrap();
        let n = values.len();
        for i in 0..n {
            values.swap(i, (seed as usize).wrapping_add(i * 7) % n);
        }
        prop_assert_eq!(quartiles(&values).unwrap(), before);
    }

    #[test]
    fn csv_round_trip_is_bitwise(values in vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..30)) {
        let d = Dataset::new(vec!["a".into()], vec![values.clone()]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let (back, _) = read_csv(buf.as_slice(), None, TaskKind::Unlabeled).unwrap();
        prop_assert_eq!(bits(back.column(0)), bits(&values));
    }

    #[test]
    fn split_is_seeded_and_partitions(d in dataset(60, 2), seed in any::<u64>(), frac in 0.1f64..0.9) {
        let a = match train_test_split(&d, frac, seed) {
            Ok(a) => a,
            Err(DatasetError::EmptySplit(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(!a.train_rows.is_empty() && !a.test_rows.is_empty());
        let b = train_test_split(&d, frac, seed).unwrap();
        prop_assert_eq!(&a.test_rows, &b.test_rows);
        let mut all: Vec<usize> = a.train_rows.iter().chain(&a.test_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.n_rows()).collect::<Vec<_>>());
    }

    #[test]
    fn tree_paths_never_repeat_a_feature(d in dataset(80, 6)) {
        let nf = d.n_features();
        let (table, tree) = grow_importance_tree(&d, exponent(nf).unwrap(), FactorMode::AsPublished).unwrap();
        let (again, _) = grow_importance_tree(&d, exponent(nf).unwrap(), FactorMode::AsPublished).unwrap();
        prop_assert_eq!(&table, &again);
        for (i, node) in tree.nodes.iter().enumerate() {
            prop_assert!(node.depth <= nf);
            let mut path = tree.path(i);
            prop_assert_eq!(path.len(), node.depth);
            path.sort_unstable();
            path.dedup();
            prop_assert_eq!(path.len(), node.depth);
        }
        // The recorded depth is the shallowest node splitting on the feature.
        for (j, e) in table.entries.iter().enumerate() {
            let shallowest = tree.nodes.iter().filter(|n| n.feature_index == j).map(|n| n.depth).min();
            prop_assert_eq!(e.first_depth, shallowest);
        }
    }

    #[test]
    fn scalers_leave_input_untouched(d in dataset(40, 4), m in 0usize..5) {
        let method = ScalerMethod::ALL[m];
        let copy = d.clone();
        let s = FittedScaler::fit(&d, method, FactorMode::AsPublished).unwrap();
        let out = s.transform(&d).unwrap();
        prop_assert_eq!(&d, &copy);
        prop_assert_eq!(out.n_rows(), d.n_rows());
        prop_assert!(out.columns().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn dtization_maps_quartiles_to_zero_and_factor(d in dataset(40, 4)) {
        let s = FittedScaler::fit(&d, ScalerMethod::Dtization, FactorMode::Descending).unwrap();
        for p in s.params() {
            if let FeatureParams::Dtization { quartiles, factor } = *p {
                if quartiles.iqr > 0.0 {
                    prop_assert_eq!(p.apply(quartiles.q1), 0.0);
                    prop_assert!((p.apply(quartiles.q3) - factor).abs() <= 1e-12 * factor);
                } else {
                    prop_assert_eq!(p.apply(quartiles.q1 + 1.0), 0.0);
                }
            }
        }
    }

    #[test]
    fn minmax_training_range_is_unit(d in dataset(40, 4)) {
        let s = FittedScaler::fit(&d, ScalerMethod::MinMax, FactorMode::AsPublished).unwrap();
        let out = s.transform(&d).unwrap();
        prop_assert!(out.columns().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn metrics_ignore_label_renaming(pairs in vec((0u8..3, 0u8..3), 1..60)) {
        let t: Vec<String> = pairs.iter().map(|p| format!("c{}", p.0)).collect();
        let p: Vec<String> = pairs.iter().map(|p| format!("c{}", p.1)).collect();
        let rename = |s: &String| format!("z{}", 9 - s[1..].parse::<u8>().unwrap());
        let t2: Vec<String> = t.iter().map(rename).collect();
        let p2: Vec<String> = p.iter().map(rename).collect();
        let a = classification_metrics(&confusion_matrix(&t, &p).unwrap()).unwrap();
        let b = classification_metrics(&confusion_matrix(&t2, &p2).unwrap()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&a.f1));
        prop_assert!((-1.0..=1.0).contains(&a.mcc));
    }

    #[test]
    fn mse_bounds_squared_mae(pairs in vec((-1e3f64..1e3, -1e3f64..1e3), 2..50)) {
        let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = regression_metrics(&y, &yhat).unwrap();
        prop_assert!(r.mae * r.mae <= r.mse * (1.0 + 1e-12));
        prop_assert!(r.r2 <= 1.0);
    }

    #[test]
    fn knn_k1_recalls_training_points(pts in vec(vec(-1e3f64..1e3, 2), 1..30)) {
        let labels: Vec<String> = (0..pts.len()).map(|i| format!("p{i}")).collect();
        let m = KnnModel::new(pts.clone(), labels.clone(), 1).unwrap();
        let pred = m.predict(&pts).unwrap();
        for (i, p) in pred.iter().enumerate() {
            // Duplicate points resolve to the lowest index with that position.
            let first = pts.iter().position(|q| q == &pts[i]).unwrap();
            prop_assert_eq!(p, &labels[first]);
        }
    }

    #[test]
    fn knn_ignores_uniform_scaling(
        pts in vec(vec(-100i32..100, 2), 3..25),
        queries in vec(vec(-100i32..100, 2), 1..10),
        labels in vec(0u8..2, 25),
    ) {
        let to_f = |v: &Vec<Vec<i32>>, s: f64| -> Vec<Vec<f64>> {
            v.iter().map(|r| r.iter().map(|&x| f64::from(x) * s).collect()).collect()
        };
        let labels: Vec<String> = labels[..pts.len()].iter().map(|l| l.to_string()).collect();
        let a = KnnModel::new(to_f(&pts, 1.0), labels.clone(), 3).unwrap();
        let b = KnnModel::new(to_f(&pts, 4.0), labels, 3).unwrap();
        prop_assert_eq!(a.predict(&to_f(&queries, 1.0)).unwrap(), b.predict(&to_f(&queries, 4.0)).unwrap());
    }

    #[test]
    fn ols_residuals_are_orthogonal(rows in vec(vec(-10f64..10.0, 3), 6..40), noise in vec(-1f64..1.0, 40)) {
        let y: Vec<f64> = rows.iter().zip(&noise).map(|(r, e)| 2.0 * r[0] - r[1] + 0.5 * r[2] + 3.0 + e).collect();
        let m = ols_fit(&rows, &y).unwrap();
        let pred = m.predict(&rows).unwrap();
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max) * rows.len() as f64;
        prop_assert!(resid.iter().sum::<f64>().abs() <= 1e-8 * scale);
        for j in 0..3 {
            let dot: f64 = rows.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            prop_assert!(dot.abs() <= 1e-8 * scale * 10.0);
        }
    }

    #[test]
    fn ols_recovers_exact_linear_data(rows in vec(vec(-10f64..10.0, 2), 5..30), b in vec(-5f64..5.0, 3)) {
        let y: Vec<f64> = rows.iter().map(|r| b[0] * r[0] + b[1] * r[1] + b[2]).collect();
        let spread = |j: usize| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)
            - rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        prop_assume!(spread(0) > 1.0 && spread(1) > 1.0);
        let m = ols_fit(&rows, &y).unwrap();
        let pred = m.predict(&rows).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            prop_assert!((p - t).abs() <= 1e-9 * (1.0 + t.abs()));
        }
    }
}

#[test]
fn constant_column_has_zero_iqr() {
    let q = quartiles(&[4.0; 9]).unwrap();
    assert_eq!((q.q1, q.q3, q.iqr), (4.0, 4.0, 0.0));
}

#[test]
fn scaling_is_not_idempotent() {
    let d = labeled(vec![vec![0.0, 3.0, 5.0, 10.0, 20.0]], vec![0, 0, 1, 1, 1]);
    for method in [
        ScalerMethod::Standard,
        ScalerMethod::Log,
        ScalerMethod::Dtization,
    ] {
        let s = FittedScaler::fit(&d, method, FactorMode::AsPublished).unwrap();
        let once = s.transform(&d).unwrap();
        let twice = s.transform(&once).unwrap();
        assert_ne!(bits(once.column(0)), bits(twice.column(0)), "{method}");
    }
}

#[test]
fn fitting_on_train_ignores_test_rows() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
    let d = structured_classification(&mut rng, 120, 4, 0.1);
    let split = train_test_split(&d, 0.25, 7).unwrap();

    // Wild values in the held-out rows must not reach the fitted parameters.
    let poisoned: Vec<Vec<f64>> = d
        .columns()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for &r in &split.test_rows {
                c[r] = -1e9 + r as f64;
            }
            c
        })
        .collect();
    let d2 = d
        .replace_columns(d.feature_names().to_vec(), poisoned)
        .unwrap();
    let split2 = train_test_split(&d2, 0.25, 7).unwrap();
    assert_eq!(split.test_rows, split2.test_rows);
    for method in ScalerMethod::ALL {
        let a = FittedScaler::fit(&split.train, method, FactorMode::AsPublished).unwrap();
        let b = FittedScaler::fit(&split2.train, method, FactorMode::AsPublished).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{method}");
    }
}

#[test]
fn knn_is_invariant_to_training_order_without_ties() {
    let pts: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![(i * i) as f64 * 0.37, (i * 3 % 7) as f64])
        .collect();
    let labels: Vec<String> = (0..20).map(|i| format!("{}", i % 3)).collect();
    let queries: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 * 9.1 + 0.05, 2.3]).collect();
    let a = KnnModel::new(pts.clone(), labels.clone(), 3)
        .unwrap()
        .predict(&queries)
        .unwrap();
    let b = KnnModel::new(
        pts.into_iter().rev().collect(),
        labels.into_iter().rev().collect(),
        3,
    )
    .unwrap()
    .predict(&queries)
    .unwrap();
    assert_eq!(a, b);
}
