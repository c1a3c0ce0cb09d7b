use pcib_core::metrics::{auprc, auroc, roc_curve, trapezoid_auc, youden_optimal, RocPoint};
use pcib_core::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIGURE1: &str = include_str!("fixtures/figure1_roc.csv");

fn figure1() -> Vec<(f64, f64)> {
    FIGURE1
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn brute_force(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (sp, lp) in scores.iter().zip(labels) {
        if !lp.is_positive() {
            continue;
        }
        for (sn, ln) in scores.iter().zip(labels) {
            if ln.is_positive() {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn random_instance(rng: &mut ChaCha8Rng, tie_heavy: bool) -> (Vec<f64>, Vec<Label>) {
    let n = rng.random_range(2..=64);
    let mut labels: Vec<Label> = (0..n).map(|_| Label::from(rng.random_bool(0.5))).collect();
    labels[0] = Label::Hallucination;
    labels[1] = Label::Factual;
    let scores = (0..n)
        .map(|_| {
            if tie_heavy {
                rng.random_range(0..4) as f64 / 4.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    (scores, labels)
}

#[test]
fn figure1_fixture_area() {
    let pts = figure1();
    assert_eq!(pts.len(), 50);
    let auc = trapezoid_auc(&pts).unwrap();
    assert!((auc - 0.80).abs() <= 0.02, "auc {auc}");
}

#[test]
fn figure1_fixture_youden() {
    let pts: Vec<RocPoint> = figure1()
        .into_iter()
        .map(|(fpr, tpr)| RocPoint { fpr, tpr, threshold: f64::NAN })
        .collect();
    let best = youden_optimal(&pts).unwrap();
    assert!((best.j - 0.57).abs() < 1e-9, "J {}", best.j);
    assert!((0.15..=0.18).contains(&best.fpr), "fpr {}", best.fpr);
}

#[test]
fn rank_auroc_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..400 {
        let (s, y) = random_instance(&mut rng, i % 2 == 0);
        let fast = auroc(&s, &y).unwrap();
        assert!((fast - brute_force(&s, &y)).abs() <= 1e-12);
    }
}

#[test]
fn balanced_random_baseline() {
    let (mut roc_sum, mut pr_sum) = (0.0, 0.0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Label> = (0..200).map(|i| Label::from(i % 2 == 0)).collect();
        let scores: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        roc_sum += auroc(&scores, &labels).unwrap();
        pr_sum += auprc(&scores, &labels).unwrap();
    }
    assert!((roc_sum / 100.0 - 0.5).abs() <= 0.05);
    assert!((pr_sum / 100.0 - 0.5).abs() <= 0.05);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn to_labels(bits: &[bool]) -> Option<Vec<Label>> {
    if bits.iter().all(|&b| b) || bits.iter().all(|&b| !b) {
        return None;
    }
    Some(bits.iter().map(|&b| Label::from(b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn negation_flips_auroc((s, bits) in instance()) {
        let Some(y) = to_labels(&bits) else { return Ok(()) };
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = auroc(&s, &y).unwrap();
        prop_assert!((auroc(&neg, &y).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_invariance((s, bits) in instance(), scale in 0.1f64..10.0, shift in -3.0f64..3.0) {
        let Some(y) = to_labels(&bits) else { return Ok(()) };
        let mapped: Vec<f64> = s.iter().map(|x| (scale * x + shift).tanh() + x * 1e-3).collect();
        prop_assert!((auroc(&mapped, &y).unwrap() - auroc(&s, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roc_trapezoid_equals_rank_auroc((s, bits) in instance()) {
        let Some(y) = to_labels(&bits) else { return Ok(()) };
        let roc = roc_curve(&s, &y).unwrap();
        prop_assert!(roc.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        let xy: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
        prop_assert!((trapezoid_auc(&xy).unwrap() - auroc(&s, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auprc_in_unit_interval((s, bits) in instance()) {
        let Some(y) = to_labels(&bits) else { return Ok(()) };
        let ap = auprc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}
