use landscape_lab::oddsmodel::{exact_probabilities, simulate_merge, smoothed_odds, MergeScenario};

/// Enumerates all `(p+q)^S` feature draws, each equally likely.
fn enumerate(p: u64, q: u64, s: u32) -> (f64, f64, f64) {
    let n = p + q;
    let total = n.pow(s);
    let (mut a, mut b) = (0u64, 0u64);
    for code in 0..total {
        let mut c = code;
        let mut from_a = 0;
        for _ in 0..s {
            if c % n < p {
                from_a += 1;
            }
            c /= n;
        }
        if from_a == s {
            a += 1;
        } else if from_a == 0 {
            b += 1;
        }
    }
    let t = total as f64;
    (a as f64 / t, b as f64 / t, (total - a - b) as f64 / t)
}

#[test]
fn exact_probabilities_match_enumeration() {
    let (a, b, m) = enumerate(2, 1, 2);
    assert_eq!((a * 9.0, b * 9.0, m * 9.0), (4.0, 1.0, 4.0));
    for (p, q, s) in [(2, 1, 2), (3, 1, 3), (3, 2, 4), (9, 1, 3), (1, 1, 5)] {
        let sc = MergeScenario::new(p, q, s).unwrap();
        let (ea, eb, em) = exact_probabilities(&sc);
        let (oa, ob, om) = enumerate(p, q, s);
        assert!((ea - oa).abs() < 1e-12 && (eb - ob).abs() < 1e-12 && (em - om).abs() < 1e-12);
        assert!((ea / eb - smoothed_odds(&sc)).abs() < 1e-9 * smoothed_odds(&sc));
    }
}

#[test]
fn simulated_counts_are_deterministic_and_add_up() {
    let sc = MergeScenario::new(3, 2, 4).unwrap();
    let a = simulate_merge(&sc, 100_000, 8).unwrap();
    assert_eq!(a, simulate_merge(&sc, 100_000, 8).unwrap());
    assert_eq!(a.trials(), 100_000);
    let (pa, _, _) = exact_probabilities(&sc);
    let se = (pa * (1.0 - pa) / 1e5).sqrt();
    assert!((a.pure_a as f64 / 1e5 - pa).abs() < 4.0 * se);
}

#[test]
fn balanced_odds_are_even() {
    let sc = MergeScenario::new(4, 4, 3).unwrap();
    assert_eq!(smoothed_odds(&sc), 1.0);
}

#[test]
fn huge_odds_saturate() {
    let sc = MergeScenario::new(1000, 1, 200).unwrap();
    assert_eq!(smoothed_odds(&sc), f64::INFINITY);
}
