//! Odds of a merged minimum resolving to each class.
//!
//! A merged minimum built from `p` class-A and `q` class-B minima yields a
//! pure sample only if each of `S` exclusive features is drawn from the same
//! class. With per-feature odds `p : q`, the odds of a pure-A over a pure-B
//! outcome are `(p/q)^S`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// Odds above this are reported as `f64::INFINITY`.
pub const ODDS_SATURATION: f64 = 1e300;
const TRIALS_PER_CHUNK: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergeScenario {
    pub p: u64,
    pub q: u64,
    pub s: u32,
}

impl MergeScenario {
    pub fn new(p: u64, q: u64, s: u32) -> Result<Self> {
        if p == 0 || q == 0 || s == 0 {
            return Err(Error::input(format!("p, q and S must all be >= 1 (got {p}, {q}, {s})")));
        }
        Ok(Self { p, q, s })
    }

    pub fn n(&self) -> u64 {
        self.p + self.q
    }

    fn p_a(&self) -> f64 {
        self.p as f64 / self.n() as f64
    }
}

pub fn initial_odds(s: &MergeScenario) -> f64 {
    s.p as f64 / s.q as f64
}

/// `(p/q)^S`, saturating to infinity above [`ODDS_SATURATION`].
pub fn smoothed_odds(s: &MergeScenario) -> f64 {
    let v = initial_odds(s).powf(s.s as f64);
    if v > ODDS_SATURATION {
        f64::INFINITY
    } else {
        v
    }
}

/// Exact `(P[pure A], P[pure B], P[mixed])`.
pub fn exact_probabilities(s: &MergeScenario) -> (f64, f64, f64) {
    let a = s.p_a().powi(s.s as i32);
    let b = (1.0 - s.p_a()).powi(s.s as i32);
    (a, b, 1.0 - a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergeCounts {
    pub pure_a: u64,
    pub pure_b: u64,
    pub mixed: u64,
}

impl MergeCounts {
    pub fn trials(&self) -> u64 {
        self.pure_a + self.pure_b + self.mixed
    }

    /// `pure_a / pure_b`, conditional on a pure outcome.
    pub fn conditional_odds(&self) -> f64 {
        if self.pure_b == 0 {
            return f64::INFINITY;
        }
        self.pure_a as f64 / self.pure_b as f64
    }
}

/// Monte Carlo of the feature-selection mechanism. Trials are processed in
/// fixed-size chunks with their own RNG streams.
pub fn simulate_merge(s: &MergeScenario, trials: u64, seed: u64) -> Result<MergeCounts> {
    if trials == 0 {
        return Err(Error::input("trials must be >= 1"));
    }
    let p_a = s.p_a();
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng_for(seed, Stream::Trial, chunk);
            let n = TRIALS_PER_CHUNK.min(trials - chunk * TRIALS_PER_CHUNK);
            let mut c = MergeCounts {
                pure_a: 0,
                pure_b: 0,
                mixed: 0,
            };
            for _ in 0..n {
                let from_a = (0..s.s).filter(|_| rng.random::<f64>() < p_a).count() as u32;
                if from_a == s.s {
                    c.pure_a += 1;
                } else if from_a == 0 {
                    c.pure_b += 1;
                } else {
                    c.mixed += 1;
                }
            }
            c
        })
        .reduce(
            || MergeCounts {
                pure_a: 0,
                pure_b: 0,
                mixed: 0,
            },
            |x, y| MergeCounts {
                pure_a: x.pure_a + y.pure_a,
                pure_b: x.pure_b + y.pure_b,
                mixed: x.mixed + y.mixed,
            },
        );
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odds_formulas() {
        let sc = |p, q, s| MergeScenario::new(p, q, s).unwrap();
        assert_eq!(initial_odds(&sc(4, 4, 3)), 1.0);
        assert_eq!(initial_odds(&sc(9, 1, 1)), 9.0);
        assert_eq!(initial_odds(&sc(3, 2, 1)), 1.5);
        assert_eq!(smoothed_odds(&sc(9, 1, 3)), 729.0);
        assert_eq!(smoothed_odds(&sc(2, 1, 2)), 4.0);
        assert_eq!(smoothed_odds(&sc(3, 2, 1)), initial_odds(&sc(3, 2, 1)));
        assert_eq!(smoothed_odds(&sc(10, 1, 400)), f64::INFINITY);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(MergeScenario::new(0, 1, 1).is_err());
        assert!(MergeScenario::new(1, 0, 1).is_err());
        assert!(MergeScenario::new(1, 1, 0).is_err());
        let s = MergeScenario::new(1, 1, 1).unwrap();
        assert!(simulate_merge(&s, 0, 0).is_err());
    }

    #[test]
    fn single_feature_never_mixes() {
        let s = MergeScenario::new(5, 3, 1).unwrap();
        let c = simulate_merge(&s, 20_000, 4).unwrap();
        assert_eq!(c.mixed, 0);
        assert_eq!(c.trials(), 20_000);
    }

    #[test]
    fn balanced_pure_counts_agree() {
        let s = MergeScenario::new(2, 2, 3).unwrap();
        let c = simulate_merge(&s, 100_000, 8).unwrap();
        // each pure outcome has probability 1/8; the difference has sd sqrt(2 n p)
        let sd = (2.0 * 100_000.0 * 0.125_f64).sqrt();
        assert!((c.pure_a as f64 - c.pure_b as f64).abs() < 3.0 * sd);
    }
}
