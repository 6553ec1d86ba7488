//! Loss values versus scalar-loop oracles, and AUC versus the pairwise
//! definition.

mod support;

use proptest::prelude::*;
use support::suites::{auc_pair, closed_form_errors};

#[test]
fn losses_match_oracles_on_1000_instances() {
    let mut worst = ("", 0.0f64);
    for seed in 0..1000 {
        for (name, err) in closed_form_errors(seed) {
            assert!(err < 1e-6, "seed {seed} {name}: {err:e}");
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    eprintln!("largest deviation: {} {:e}", worst.0, worst.1);
}

#[test]
fn auc_of_worked_example() {
    let pred = [0.1, 0.4, 0.35, 0.8];
    let labels = [0, 0, 1, 1];
    assert_eq!(avaew_core::metrics::eval_auc(&pred, &labels).unwrap(), 0.75);
    assert_eq!(support::oracle_auc(&pred, &labels), 0.75);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_equals_pairwise_oracle_exactly(seed in any::<u64>(), n in 2usize..=1000) {
        if let Some((fast, oracle)) = auc_pair(seed, n) {
            prop_assert_eq!(fast.to_bits(), oracle.to_bits(), "n = {}", n);
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(seed in any::<u64>(), n in 2usize..300) {
        let mut r = support::rng(seed);
        let pred: Vec<f64> = (0..n).map(|_| support::normal(&mut r)).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let squashed: Vec<f64> = pred.iter().map(|&x| support::oracle_sigmoid(3.0 * x + 1.0)).collect();
        let a = avaew_core::metrics::eval_auc(&pred, &labels).unwrap();
        let b = avaew_core::metrics::eval_auc(&squashed, &labels).unwrap();
        prop_assert_eq!(a, b);
        let flipped: Vec<f64> = pred.iter().map(|x| -x).collect();
        let c = avaew_core::metrics::eval_auc(&flipped, &labels).unwrap();
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }
}
