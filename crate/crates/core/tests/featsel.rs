mod oracles;

use oracles::*;
use pktseer_core::featsel::*;
use pktseer_core::synth::selection_fixture;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn filters_match_pairwise_oracles_on_fifty_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..50 {
        let cols = random_columns(&mut rng);
        let m = matrix(&cols);
        let scaled = min_max_scale(&m);
        for c in 0..cols.len() {
            let lib = population_variance(&scaled.column(c));
            let oracle = variance_oracle(&scale_oracle(&cols[c]));
            assert!((lib - oracle).abs() < 1e-12, "variance {lib} vs {oracle}");
            for d in 0..c {
                let lib = pearson(&scaled.column(d), &scaled.column(c));
                let oracle = pearson_oracle(&scale_oracle(&cols[d]), &scale_oracle(&cols[c]));
                assert!((lib - oracle).abs() < 1e-9, "pearson {lib} vs {oracle}");
            }
        }
        let expected: Vec<String> = select_oracle(&cols, 0.25, 0.98)
            .into_iter()
            .map(|c| format!("c{c}"))
            .collect();
        match select_features(&m, 0.25, 0.98) {
            Ok((out, report)) => {
                assert_eq!(report.kept, expected);
                assert_eq!(out.column_names(), &expected[..]);
                checked += 1;
            }
            Err(FeatselError::NothingSurvives) => assert!(expected.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
    assert!(checked > 25);
}

#[test]
fn scaling_examples() {
    let m = matrix(&[vec![2.0, 4.0, 6.0], vec![5.0, 5.0, 5.0]]);
    let s = min_max_scale(&m);
    assert_eq!(s.column(0), vec![0.0, 0.5, 1.0]);
    assert_eq!(s.column(1), vec![0.0, 0.0, 0.0]);
}

#[test]
fn random_matrix_scales_into_unit_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..20).map(|_| rng.random_range(-1e3..1e3)).collect())
        .collect();
    let s = min_max_scale(&matrix(&cols));
    for c in 0..4 {
        let col = s.column(c);
        assert_eq!(col.iter().cloned().fold(f64::MAX, f64::min), 0.0);
        assert_eq!(col.iter().cloned().fold(f64::MIN, f64::max), 1.0);
    }
}

#[test]
fn variance_filter_examples() {
    let balanced: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
    let m = matrix(&[vec![3.0; 10], balanced]);
    let r = variance_filter(&min_max_scale(&m), 0.25);
    assert_eq!(r.kept, vec!["c1"]);
    assert_eq!(r.dropped_low_variance, vec![("c0".to_string(), 0.0)]);
    assert_eq!(population_variance(&min_max_scale(&m).column(1)), 0.25);
    assert_eq!(variance_cutoff(0.25), 0.0625);
}

#[test]
fn six_column_hand_matrix() {
    // Scaled variances: c1 0, c2 two spikes in 20 (0.09), c3 one spike in
    // 20 (0.0475, dropped), c4 a 5/15 split (0.1875), c0 and c5 spread.
    let n = 20;
    let cols = vec![
        (0..n).map(|i| ((i * 7) % 11) as f64).collect::<Vec<_>>(),
        vec![1.0; n],
        (0..n).map(|i| if i % 10 == 0 { 1.0 } else { 0.0 }).collect(),
        (0..n).map(|i| if i == 3 { 9.0 } else { 0.0 }).collect(),
        (0..n).map(|i| if i < 5 { 1.0 } else { 2.0 }).collect(),
        (0..n).map(|i| i as f64).collect(),
    ];
    let r = variance_filter(&min_max_scale(&matrix(&cols)), 0.25);
    let oracle: Vec<String> = (0..6)
        .filter(|&c| variance_oracle(&scale_oracle(&cols[c])) >= 0.0625)
        .map(|c| format!("c{c}"))
        .collect();
    assert_eq!(r.kept, oracle);
    assert_eq!(r.kept, vec!["c0", "c2", "c4", "c5"]);
}

#[test]
fn pearson_filter_examples() {
    let x: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let r = pearson_filter(&matrix(&[x.clone(), x.clone()]), 0.98);
    assert_eq!(r.kept, vec!["c0"]);
    assert_eq!(r.dropped_correlated[0].0, "c1");
    assert_eq!(r.dropped_correlated[0].2, 1.0);
    let r = pearson_filter(&matrix(&[x.clone(), neg]), 0.98);
    assert_eq!(r.dropped_correlated.len(), 1);
    assert_eq!(r.dropped_correlated[0].2, -1.0);
}

#[test]
fn one_engineered_pair_at_ninety_nine() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 200;
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut cols: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    cols.insert(1, base.clone());
    // Noise std chosen so r ≈ 0.99.
    let partner: Vec<f64> = base.iter().map(|b| b + 0.07 * rng.random_range(-1.0..1.0)).collect();
    cols.push(partner);
    let m = matrix(&cols);
    let r = pearson_filter(&m, 0.98);
    assert_eq!(r.dropped_correlated.len(), 1);
    let (dropped, partner_name, corr) = &r.dropped_correlated[0];
    assert_eq!((dropped.as_str(), partner_name.as_str()), ("c4", "c1"));
    assert!((corr - pearson_oracle(&cols[1], &cols[4])).abs() < 1e-12);
    assert!(*corr > 0.98 && *corr < 0.995);
}

#[test]
fn all_constant_is_an_error() {
    let m = matrix(&[vec![1.0; 5], vec![2.0; 5], vec![3.0; 5]]);
    assert!(matches!(select_features(&m, 0.25, 0.98), Err(FeatselError::NothingSurvives)));
}

#[test]
fn nothing_to_drop_is_identity() {
    let cols = vec![
        vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
    ];
    let m = matrix(&cols);
    let (out, report) = select_features(&m, 0.25, 0.98).unwrap();
    assert_eq!(out, m);
    assert!(report.dropped_low_variance.is_empty() && report.dropped_correlated.is_empty());
}

#[test]
fn engineered_fixture_reduces_71_to_26() {
    let f = selection_fixture(400, 1);
    assert_eq!(f.matrix.n_cols(), 71);
    let (out, report) = select_features(&f.matrix, DEFAULT_VARIANCE_THRESHOLD, DEFAULT_CORRELATION_THRESHOLD).unwrap();
    assert_eq!(out.n_cols(), 26);
    let mut dropped_var: Vec<String> = report.dropped_low_variance.iter().map(|d| d.0.clone()).collect();
    dropped_var.sort();
    let mut quasi = f.quasi_constant.clone();
    quasi.sort();
    assert_eq!(dropped_var, quasi);
    assert_eq!(report.kept, f.informative);
    for (dup, src) in &f.duplicates {
        assert!(report.dropped_correlated.iter().any(|(d, p, _)| d == dup && p == src));
    }
}

fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3usize..25, 1usize..7).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(
            prop_oneof![
                proptest::collection::vec(-100.0f64..100.0, rows),
                proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], rows),
                Just(vec![4.0; rows]),
            ],
            cols,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn report_partitions_the_columns(cols in arb_matrix()) {
        let m = matrix(&cols);
        let scaled = min_max_scale(&m);
        let var = variance_filter(&scaled, 0.25);
        let corr = pearson_filter(&scaled.select(&var.kept), 0.98);
        let mut all: Vec<String> = corr.kept.clone();
        all.extend(var.dropped_low_variance.iter().map(|d| d.0.clone()));
        all.extend(corr.dropped_correlated.iter().map(|d| d.0.clone()));
        all.sort();
        let mut names = m.column_names().to_vec();
        names.sort();
        prop_assert_eq!(all, names);
    }

    #[test]
    fn selection_is_idempotent(cols in arb_matrix()) {
        if let Ok((out, _)) = select_features(&matrix(&cols), 0.25, 0.98) {
            let (again, report) = select_features(&out, 0.25, 0.98).unwrap();
            prop_assert_eq!(again, out);
            prop_assert!(report.dropped_low_variance.is_empty() && report.dropped_correlated.is_empty());
        }
    }

    #[test]
    fn row_permutation_permutes_rows_only(cols in arb_matrix(), seed in any::<u64>()) {
        let n = cols[0].len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<f64>> = cols.iter().map(|c| perm.iter().map(|&r| c[r]).collect()).collect();
        let a = select_features(&matrix(&cols), 0.25, 0.98);
        let b = select_features(&matrix(&permuted), 0.25, 0.98);
        match (a, b) {
            (Ok((ma, ra)), Ok((mb, rb))) => {
                prop_assert_eq!(&ra.kept, &rb.kept);
                for (i, &r) in perm.iter().enumerate() {
                    prop_assert_eq!(mb.row(i), ma.row(r));
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "permutation changed whether anything survives"),
        }
    }
}
