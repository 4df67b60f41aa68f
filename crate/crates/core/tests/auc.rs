use dtsurv::evaluate::roc_auc;
use num_rational::Ratio;
use proptest::prelude::*;

/// Pairwise concordance over all (positive, negative) pairs, exact.
fn brute_force(scores: &[f64], labels: &[bool]) -> Ratio<u64> {
    let mut twice = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    Ratio::new(twice, 2 * p * n)
}

fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..500).prop_flat_map(|n| {
        (
            // few distinct values so ties are common
            prop::collection::vec(prop_oneof![(0u8..12).prop_map(|v| v as f64 / 8.0), -1.0f64..1.0], n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
    .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]
    #[test]
    fn rank_auc_equals_pairwise((scores, labels) in labelled()) {
        let exact = brute_force(&scores, &labels);
        let auc = roc_auc(&scores, &labels).unwrap();
        // the rank formula divides integers too; its f64 equals the exact ratio rounded once
        prop_assert_eq!(auc, *exact.numer() as f64 / *exact.denom() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn monotone_transforms_keep_auc((scores, labels) in labelled(), k in 0.1f64..5.0, shift in -3.0f64..3.0) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let t: Vec<f64> = scores.iter().map(|s| (k * s + shift).exp()).collect();
        prop_assert_eq!(roc_auc(&t, &labels).unwrap(), auc);
    }
}
