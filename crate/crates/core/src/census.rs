//! Monte Carlo basin census across abstraction levels.
//!
//! Corrupted queries are drawn in each level's own coordinates around the
//! centroid of the pulled-back memories, flowed to an attractor and
//! classified. Query `j` reuses the same standard-normal draw at every level,
//! so level differences reflect the landscape rather than sampling noise.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionHierarchy, LevelEnergy};
use crate::dynamics::{flow, FlowConfig, FlowResult};
use crate::error::{Error, Result};
use crate::landscape::{EnergyLandscape, MemorySet};
use crate::seed::{rng_for, Rng, Stream};
use crate::vecops;

/// Neighbour counts used for the privacy-proximity statistic.
pub const PRIVACY_KS: [usize; 4] = [1, 2, 5, 10];
/// Reports with a larger share of failed flows are marked invalid.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// How an attractor is turned into a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasinRule {
    /// Label of the base memory nearest to the terminal's pullback.
    NearestMemory,
    /// Class carrying the most landscape weight at the terminal.
    WeightedVote,
}

/// Training-set resampling used for the bias/variance expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// With replacement inside each class; class counts stay fixed.
    Stratified,
    /// With replacement from the whole set.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusConfig {
    pub n_queries: usize,
    /// Std of the corrupted-signal distribution in the level's coordinates;
    /// `None` means 1.5x the radius of the level's pulled-back memories.
    pub query_sigma: Option<f64>,
    pub seed: u64,
    pub levels: Vec<usize>,
    pub probe_sigma: f64,
    pub probes_per_memory: usize,
    pub bootstrap_rounds: usize,
    pub basin_rule: BasinRule,
    pub resampling: Resampling,
    pub flow: FlowConfig,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self {
            n_queries: 1000,
            query_sigma: None,
            seed: 0,
            levels: vec![0],
            probe_sigma: 0.05,
            probes_per_memory: 1,
            bootstrap_rounds: 20,
            basin_rule: BasinRule::WeightedVote,
            resampling: Resampling::Stratified,
            flow: FlowConfig::default(),
        }
    }
}

impl CensusConfig {
    fn validate(&self, hierarchy: &AbstractionHierarchy) -> Result<()> {
        if self.n_queries == 0 {
            return Err(Error::input("n_queries must be >= 1"));
        }
        if self.n_queries < 100 {
            log::warn!("n_queries = {} is below 100; statistics will be noisy", self.n_queries);
        }
        if self.levels.is_empty() {
            return Err(Error::input("census needs at least one level"));
        }
        for &a in &self.levels {
            hierarchy.check_level(a)?;
        }
        if let Some(s) = self.query_sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::input("query_sigma must be positive"));
            }
        }
        self.flow.validate()
    }

    /// Query center and std for one level.
    pub fn query_distribution(&self, level: &LevelEnergy<'_>) -> (Vec<f64>, f64) {
        query_distribution(&level.pulled_back_memories(), self.query_sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub level: usize,
    pub classes: Vec<u32>,
    pub p_data: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub majority_class: u32,
    /// `p_gen(c_maj) - p_data(c_maj)`
    pub amplification: f64,
    /// Binomial standard error of `p_gen(c_maj)`.
    pub amplification_stderr: f64,
    /// Mean pairwise distance between terminals, in the level's coordinates.
    pub diversity_mean_pairwise: f64,
    /// k -> mean distance from terminal pullbacks to their k nearest memories.
    pub privacy_knn_distance: BTreeMap<usize, f64>,
    pub n_queries: usize,
    pub failures: usize,
    pub valid: bool,
}

/// Centroid of `points` and the query std: `sigma` if given, else 1.5x the
/// largest distance from the centroid (1.5 for a single point).
pub fn query_distribution(points: &[Vec<f64>], sigma: Option<f64>) -> (Vec<f64>, f64) {
    let center = vecops::mean_point(points);
    let sigma = sigma.unwrap_or_else(|| {
        let r = points.iter().map(|p| vecops::dist(p, &center)).fold(0.0, f64::max);
        1.5 * if r > 0.0 { r } else { 1.0 }
    });
    (center, sigma)
}

/// Classifies a terminal at `level` under `rule`.
pub fn basin_class(level: &LevelEnergy<'_>, terminal: &[f64], rule: BasinRule) -> Result<u32> {
    let x = level.decode(terminal);
    let memories = level.memories();
    Ok(match rule {
        BasinRule::NearestMemory => memories.label(memories.nearest(&x)),
        BasinRule::WeightedVote => {
            let w = level.landscape().class_weights(&x)?;
            let mut best = 0;
            for k in 1..w.len() {
                if w[k] > w[best] {
                    best = k;
                }
            }
            memories.classes()[best]
        }
    })
}

fn standard_normal_vec(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Standard-normal query noise; draw `j` only depends on `(seed, j)`.
pub fn query_noise(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|j| standard_normal_vec(&mut rng_for(seed, Stream::Query, j as u64), dim))
        .collect()
}

struct LevelOutcome {
    flows: Vec<Option<(FlowResult, u32)>>,
}

fn run_level(level: &LevelEnergy<'_>, noise: &[Vec<f64>], config: &CensusConfig) -> LevelOutcome {
    let (center, sigma) = config.query_distribution(level);
    let flows = noise
        .par_iter()
        .map(|xi| {
            let z = vecops::axpy(&center, sigma, xi);
            match flow(level, &z, &config.flow) {
                Ok(r) if r.converged => basin_class(level, &r.terminal, config.basin_rule)
                    .ok()
                    .map(|c| (r, c)),
                _ => None,
            }
        })
        .collect();
    LevelOutcome { flows }
}

/// Census at every configured level.
pub fn run_census(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    config: &CensusConfig,
) -> Result<Vec<CensusReport>> {
    config.validate(hierarchy)?;
    let memories = landscape.memories();
    let classes = memories.classes();
    let p_data = memories.class_proportions();
    let c_maj = memories.majority_class();
    let maj_idx = classes.binary_search(&c_maj).expect("majority is a class");
    let noise = query_noise(memories.dim(), config.n_queries, config.seed);

    config
        .levels
        .iter()
        .map(|&a| {
            let level = hierarchy.level(landscape, a)?;
            let outcome = run_level(&level, &noise, config);

            let ok: Vec<&(FlowResult, u32)> = outcome.flows.iter().flatten().collect();
            let failures = config.n_queries - ok.len();
            let n_ok = ok.len().max(1) as f64;

            let mut counts = vec![0usize; classes.len()];
            for (_, c) in &ok {
                counts[classes.binary_search(c).expect("known class")] += 1;
            }
            let p_gen: Vec<f64> = counts.iter().map(|&c| c as f64 / n_ok).collect();
            let p_maj = p_gen[maj_idx];

            let terminals: Vec<Vec<f64>> = ok.iter().map(|(r, _)| r.terminal.clone()).collect();
            let pullbacks: Vec<Vec<f64>> = terminals.iter().map(|t| level.decode(t)).collect();
            let privacy_knn_distance = PRIVACY_KS
                .iter()
                .map(|&k| {
                    let d: Vec<f64> = pullbacks.par_iter().map(|x| memories.mean_knn_distance(x, k)).collect();
                    (k, d.iter().sum::<f64>() / n_ok)
                })
                .collect();

            Ok(CensusReport {
                level: a,
                classes: classes.clone(),
                p_data: p_data.clone(),
                p_gen,
                majority_class: c_maj,
                amplification: p_maj - p_data[maj_idx],
                amplification_stderr: (p_maj * (1.0 - p_maj) / n_ok).sqrt(),
                diversity_mean_pairwise: mean_pairwise_distance_par(&terminals),
                privacy_knn_distance,
                n_queries: config.n_queries,
                failures,
                valid: (failures as f64) <= MAX_FAILURE_RATE * config.n_queries as f64,
            })
        })
        .collect()
}

fn mean_pairwise_distance_par(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            points[i + 1..]
                .iter()
                .map(|q| vecops::dist(&points[i], q))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub level: usize,
    pub amplification: f64,
    pub amplification_stderr: f64,
    pub diversity: f64,
    pub privacy_k1: f64,
}

/// Amplification and diversity per level; needs at least three levels.
pub fn amplification_sweep(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    config: &CensusConfig,
) -> Result<Vec<SweepRow>> {
    if hierarchy.top_level() < 2 || config.levels.len() < 3 {
        return Err(Error::input("amplification sweep needs a hierarchy and config with >= 3 levels"));
    }
    Ok(run_census(landscape, hierarchy, config)?
        .into_iter()
        .map(|r| SweepRow {
            level: r.level,
            amplification: r.amplification,
            amplification_stderr: r.amplification_stderr,
            diversity: r.diversity_mean_pairwise,
            privacy_k1: r.privacy_knn_distance[&1],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVarianceReport {
    pub level: usize,
    pub classes: Vec<u32>,
    /// Mean over probes of `E[f_hat(x0)] - f(x0)`, per class.
    pub bias_per_class: Vec<f64>,
    /// Mean over probes of `E|f_hat(x0) - E f_hat(x0)|^2`.
    pub variance_mean: f64,
    pub n_probes: usize,
    pub failures: usize,
}

/// Draws a bootstrap resample and returns per-memory multiplicities.
pub fn bootstrap_counts(memories: &MemorySet, scheme: Resampling, rng: &mut Rng) -> Vec<u32> {
    let n = memories.len();
    let mut counts = vec![0u32; n];
    match scheme {
        Resampling::Plain => {
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
        }
        Resampling::Stratified => {
            for class in memories.classes() {
                let members: Vec<usize> = (0..n).filter(|&i| memories.label(i) == class).collect();
                for _ in 0..members.len() {
                    counts[members[rng.random_range(0..members.len())]] += 1;
                }
            }
        }
    }
    counts
}

/// Landscape over the memories with nonzero multiplicity.
pub fn resampled_landscape(base: &EnergyLandscape, counts: &[u32]) -> Result<EnergyLandscape> {
    let keep: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    let m = base.memories();
    let sub = MemorySet::new(
        keep.iter().map(|&i| m.point(i).to_vec()).collect(),
        keep.iter().map(|&i| m.label(i)).collect(),
    )?;
    let c: Vec<u32> = keep.iter().map(|&i| counts[i]).collect();
    EnergyLandscape::with_multiplicities(sub, &c, base.beta())
}

/// Probe points and their true labels: `x_i + probe_sigma * xi` per memory.
pub fn bias_probes(memories: &MemorySet, probe_sigma: f64, per_memory: usize, seed: u64) -> Vec<(Vec<f64>, u32)> {
    let mut out = Vec::with_capacity(memories.len() * per_memory);
    for i in 0..memories.len() {
        for j in 0..per_memory {
            let mut rng = rng_for(seed, Stream::Probe, (i * per_memory + j) as u64);
            let xi = standard_normal_vec(&mut rng, memories.dim());
            out.push((vecops::axpy(memories.point(i), probe_sigma, &xi), memories.label(i)));
        }
    }
    out
}

/// Bias and variance of the generated class over training-set resamples,
/// for explicit probes and explicit resample multiplicities.
pub fn bias_variance_for(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    level: usize,
    probes: &[(Vec<f64>, u32)],
    resamples: &[Vec<u32>],
    config: &CensusConfig,
) -> Result<BiasVarianceReport> {
    if probes.is_empty() || resamples.is_empty() {
        return Err(Error::input("bias/variance needs probes and resamples"));
    }
    let classes = landscape.memories().classes();
    let k = classes.len();

    // hits[p][c]: how many resamples sent probe p to class c
    let per_round: Vec<Vec<Option<usize>>> = resamples
        .par_iter()
        .map(|counts| {
            let l = resampled_landscape(landscape, counts)?;
            let le = hierarchy.level(&l, level)?;
            Ok(probes
                .iter()
                .map(|(x0, _)| {
                    let z0 = le.encode(x0);
                    match flow(&le, &z0, &config.flow) {
                        Ok(r) if r.converged => basin_class(&le, &r.terminal, config.basin_rule)
                            .ok()
                            .and_then(|c| classes.binary_search(&c).ok()),
                        _ => None,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut bias = vec![0.0; k];
    let mut variance = 0.0;
    let mut failures = 0;
    let mut used = 0usize;
    for (p, (_, truth)) in probes.iter().enumerate() {
        let mut hits = vec![0usize; k];
        let mut n = 0usize;
        for round in &per_round {
            match round[p] {
                Some(c) => {
                    hits[c] += 1;
                    n += 1;
                }
                None => failures += 1,
            }
        }
        if n == 0 {
            continue;
        }
        used += 1;
        let mean: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
        let t = classes.binary_search(truth).expect("probe label is a class");
        for c in 0..k {
            bias[c] += mean[c] - if c == t { 1.0 } else { 0.0 };
        }
        // one-hot outcomes: E|f - Ef|^2 = 1 - sum_c (Ef_c)^2
        variance += 1.0 - mean.iter().map(|m| m * m).sum::<f64>();
    }
    let denom = used.max(1) as f64;
    Ok(BiasVarianceReport {
        level,
        classes,
        bias_per_class: bias.iter().map(|b| b / denom).collect(),
        variance_mean: variance / denom,
        n_probes: probes.len(),
        failures,
    })
}

/// Bias/variance probes at every configured level.
pub fn bias_variance_probes(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    config: &CensusConfig,
) -> Result<Vec<BiasVarianceReport>> {
    config.validate(hierarchy)?;
    if !(config.probe_sigma > 0.0) {
        return Err(Error::input("probe_sigma must be positive"));
    }
    if config.bootstrap_rounds < 10 {
        return Err(Error::input("bootstrap_rounds must be >= 10"));
    }
    if config.probes_per_memory == 0 {
        return Err(Error::input("probes_per_memory must be >= 1"));
    }
    let probes = bias_probes(landscape.memories(), config.probe_sigma, config.probes_per_memory, config.seed);
    let resamples: Vec<Vec<u32>> = (0..config.bootstrap_rounds)
        .map(|b| {
            let mut rng = rng_for(config.seed, Stream::Bootstrap, b as u64);
            bootstrap_counts(landscape.memories(), config.resampling, &mut rng)
        })
        .collect();
    config
        .levels
        .iter()
        .map(|&a| bias_variance_for(landscape, hierarchy, a, &probes, &resamples, config))
        .collect()
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
