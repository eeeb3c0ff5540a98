//! Run configuration: a flat, closed-schema TOML table.
//!
//! Five keys are global (`experiment`, `seed`, `out_dir`, `format`,
//! `workers`); every other key belongs to the chosen experiment's parameter
//! set. Unknown keys are rejected by name.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionHierarchy, DecoderFamily};
use crate::census::{BasinRule, Resampling};
use crate::dynamics::FlowConfig;
use crate::error::{Error, Result};
use crate::landscape::{BlobSpec, EnergyLandscape, MemorySet};
use crate::table::Format;

pub const SEED_ENV: &str = "LANDSCAPE_LAB_SEED";
pub const OUT_DIR_ENV: &str = "LANDSCAPE_LAB_OUT_DIR";
/// Level/temperature coupling used by the experiments: `beta_a = beta * c_a^12`.
pub const DEFAULT_TEMPERATURE_EXPONENT: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Census,
    Smoothness,
    Grid,
    Knn,
    Odds,
    Biasvar,
    Privacy,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Census,
        Experiment::Smoothness,
        Experiment::Grid,
        Experiment::Knn,
        Experiment::Odds,
        Experiment::Biasvar,
        Experiment::Privacy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Census => "census",
            Experiment::Smoothness => "smoothness",
            Experiment::Grid => "grid",
            Experiment::Knn => "knn",
            Experiment::Odds => "odds",
            Experiment::Biasvar => "biasvar",
            Experiment::Privacy => "privacy",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Where the memories come from and how sharp the landscape is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeParams {
    /// CSV of memories (`x_0..,label`); when absent, blobs are generated.
    pub memories: Option<PathBuf>,
    pub class_counts: Vec<usize>,
    pub dim: usize,
    pub separation: f64,
    pub blob_std: f64,
    pub mirror: bool,
    /// Absolute inverse temperature. When absent, `beta_nn_factor * 4 / m^2`
    /// with `m` the median nearest-neighbour distance between memories.
    pub beta: Option<f64>,
    pub beta_nn_factor: f64,
}

impl Default for LandscapeParams {
    fn default() -> Self {
        Self {
            memories: None,
            class_counts: vec![90, 10],
            dim: 2,
            separation: 0.0,
            blob_std: 0.5,
            mirror: false,
            beta: None,
            beta_nn_factor: 4.0,
        }
    }
}

impl LandscapeParams {
    pub fn memory_set(&self, seed: u64) -> Result<MemorySet> {
        match &self.memories {
            Some(path) => MemorySet::load_csv(path),
            None => BlobSpec {
                class_counts: self.class_counts.clone(),
                dim: self.dim,
                separation: self.separation,
                std: self.blob_std,
                mirror: self.mirror,
            }
            .generate(seed),
        }
    }

    pub fn build(&self, seed: u64) -> Result<EnergyLandscape> {
        let m = self.memory_set(seed)?;
        let beta = match self.beta {
            Some(b) => b,
            None => nn_scaled_beta(&m, self.beta_nn_factor)?,
        };
        EnergyLandscape::new(m, beta)
    }
}

/// `factor * 4 / m^2`, `m` the median nearest-neighbour distance. At
/// `factor = 1` two memories `m` apart sit well inside the separated regime.
pub fn nn_scaled_beta(memories: &MemorySet, factor: f64) -> Result<f64> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::input(format!("beta_nn_factor must be positive, got {factor}")));
    }
    if memories.len() < 2 {
        return Ok(4.0 * factor);
    }
    let mut nn: Vec<f64> = (0..memories.len())
        .map(|i| memories.ranked_by_distance(memories.point(i))[1].1)
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn[nn.len() / 2];
    Ok(factor * 4.0 / (m * m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyParams {
    pub family: DecoderFamily,
    /// Geometric factors `c_a = ratio^a` unless `contraction` is given.
    pub contraction_ratio: f64,
    pub top_level: usize,
    pub contraction: Option<Vec<f64>>,
    pub temperature_exponent: f64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            family: DecoderFamily::Diagonal,
            contraction_ratio: 0.9,
            top_level: 4,
            contraction: None,
            temperature_exponent: DEFAULT_TEMPERATURE_EXPONENT,
        }
    }
}

impl HierarchyParams {
    pub fn build(&self, dim: usize) -> Result<AbstractionHierarchy> {
        let h = match &self.contraction {
            Some(c) => AbstractionHierarchy::new(self.family, c.clone(), dim)?,
            None => AbstractionHierarchy::geometric(self.family, self.contraction_ratio, self.top_level, dim)?,
        };
        h.with_temperature_exponent(self.temperature_exponent)
    }

    pub fn levels(&self, requested: &Option<Vec<usize>>) -> Vec<usize> {
        match requested {
            Some(l) => l.clone(),
            None => {
                let top = self.contraction.as_ref().map_or(self.top_level, |c| c.len().saturating_sub(1));
                (0..=top).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensusParams {
    #[serde(flatten)]
    pub landscape: LandscapeParams,
    #[serde(flatten)]
    pub hierarchy: HierarchyParams,
    #[serde(flatten)]
    pub flow: FlowConfig,
    pub n_queries: usize,
    pub query_sigma: Option<f64>,
    pub levels: Option<Vec<usize>>,
    pub basin_rule: BasinRule,
    /// Writes minima.csv from a multistart search at every level.
    pub dump_minima: bool,
    pub minima_starts_per_axis: usize,
    pub merge_epsilon: f64,
    /// Number of queries whose level-0 trajectories go to trajectory.csv.
    pub trajectories: usize,
}

impl Default for CensusParams {
    fn default() -> Self {
        Self {
            landscape: LandscapeParams::default(),
            hierarchy: HierarchyParams::default(),
            flow: FlowConfig::default(),
            n_queries: 2000,
            query_sigma: None,
            levels: None,
            basin_rule: BasinRule::WeightedVote,
            dump_minima: false,
            minima_starts_per_axis: 24,
            merge_epsilon: 0.25,
            trajectories: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacyParams {
    #[serde(flatten)]
    pub landscape: LandscapeParams,
    #[serde(flatten)]
    pub hierarchy: HierarchyParams,
    #[serde(flatten)]
    pub flow: FlowConfig,
    pub n_queries: usize,
    pub query_sigma: Option<f64>,
    pub levels: Option<Vec<usize>>,
    pub basin_rule: BasinRule,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        let c = CensusParams::default();
        Self {
            landscape: c.landscape,
            hierarchy: c.hierarchy,
            flow: c.flow,
            n_queries: c.n_queries,
            query_sigma: None,
            levels: None,
            basin_rule: c.basin_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasVarParams {
    #[serde(flatten)]
    pub landscape: LandscapeParams,
    #[serde(flatten)]
    pub hierarchy: HierarchyParams,
    #[serde(flatten)]
    pub flow: FlowConfig,
    pub levels: Option<Vec<usize>>,
    pub probe_sigma: f64,
    pub probes_per_memory: usize,
    pub bootstrap_rounds: usize,
    pub resampling: Resampling,
    pub basin_rule: BasinRule,
}

impl Default for BiasVarParams {
    fn default() -> Self {
        Self {
            landscape: LandscapeParams::default(),
            hierarchy: HierarchyParams::default(),
            flow: FlowConfig::default(),
            levels: None,
            probe_sigma: 0.05,
            probes_per_memory: 2,
            bootstrap_rounds: 20,
            resampling: Resampling::Stratified,
            basin_rule: BasinRule::WeightedVote,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothnessParams {
    #[serde(flatten)]
    pub landscape: LandscapeParams,
    #[serde(flatten)]
    pub hierarchy: HierarchyParams,
    pub probes: usize,
    pub probe_radius: f64,
}

impl Default for SmoothnessParams {
    fn default() -> Self {
        Self {
            landscape: LandscapeParams::default(),
            hierarchy: HierarchyParams::default(),
            probes: 64,
            probe_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    #[serde(flatten)]
    pub landscape: LandscapeParams,
    #[serde(flatten)]
    pub flow: FlowConfig,
    pub n_queries: usize,
    pub query_sigma: Option<f64>,
    /// Soft k-NN temperature; `2 / beta` when absent.
    pub tau: Option<f64>,
    pub basin_rule: BasinRule,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            landscape: LandscapeParams::default(),
            flow: FlowConfig::default(),
            n_queries: 200,
            query_sigma: None,
            tau: None,
            basin_rule: BasinRule::WeightedVote,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub side: usize,
    pub p_red: Vec<f64>,
    /// Coarsening steps; `log2(side)` when absent.
    pub levels: Option<usize>,
    pub dump_pbm: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            side: 256,
            p_red: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            levels: None,
            dump_pbm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OddsParams {
    /// `[p, q, S]` triples.
    pub scenarios: Vec<[u64; 3]>,
    pub trials: u64,
}

impl Default for OddsParams {
    fn default() -> Self {
        Self {
            scenarios: vec![[2, 1, 2], [3, 1, 3], [3, 2, 4], [9, 1, 3]],
            trials: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Census(CensusParams),
    Smoothness(SmoothnessParams),
    Grid(GridParams),
    Knn(KnnParams),
    Odds(OddsParams),
    Biasvar(BiasVarParams),
    Privacy(PrivacyParams),
}

impl Params {
    pub fn defaults(e: Experiment) -> Params {
        match e {
            Experiment::Census => Params::Census(Default::default()),
            Experiment::Smoothness => Params::Smoothness(Default::default()),
            Experiment::Grid => Params::Grid(Default::default()),
            Experiment::Knn => Params::Knn(Default::default()),
            Experiment::Odds => Params::Odds(Default::default()),
            Experiment::Biasvar => Params::Biasvar(Default::default()),
            Experiment::Privacy => Params::Privacy(Default::default()),
        }
    }

    fn parse(e: Experiment, table: toml::Table) -> Result<Params> {
        Ok(match e {
            Experiment::Census => Params::Census(parse_closed(e, table)?),
            Experiment::Smoothness => Params::Smoothness(parse_closed(e, table)?),
            Experiment::Grid => Params::Grid(parse_closed(e, table)?),
            Experiment::Knn => Params::Knn(parse_closed(e, table)?),
            Experiment::Odds => Params::Odds(parse_closed(e, table)?),
            Experiment::Biasvar => Params::Biasvar(parse_closed(e, table)?),
            Experiment::Privacy => Params::Privacy(parse_closed(e, table)?),
        })
    }
}

/// Keys accepted by a parameter struct: those of its serialized default.
fn known_keys<T: Default + Serialize>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn parse_closed<T: Default + Serialize + DeserializeOwned>(e: Experiment, table: toml::Table) -> Result<T> {
    let known = known_keys::<T>();
    if let Some(bad) = table.keys().find(|k| !known.contains(*k)) {
        let expected: Vec<&str> = known.iter().map(String::as_str).collect();
        return Err(Error::Config(format!(
            "unknown key `{bad}` for experiment {e}; expected one of: {}",
            expected.join(", ")
        )));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|err| Error::Config(format!("experiment {e}: {err}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: Format,
    /// Worker threads; `None` uses every core. Results do not depend on it.
    pub workers: Option<usize>,
    pub params: Params,
}

/// Values that win over the config file, e.g. from flags or the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
}

impl Overrides {
    /// Fills unset fields from `LANDSCAPE_LAB_SEED` / `LANDSCAPE_LAB_OUT_DIR`.
    pub fn with_env(mut self) -> Result<Self> {
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                self.seed = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
                );
            }
        }
        if self.out_dir.is_none() {
            if let Some(v) = std::env::var_os(OUT_DIR_ENV) {
                self.out_dir = Some(PathBuf::from(v));
            }
        }
        Ok(self)
    }
}

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> RunConfig {
        RunConfig {
            experiment,
            seed: 0,
            out_dir: PathBuf::from("out"),
            format: Format::Csv,
            workers: None,
            params: Params::defaults(experiment),
        }
    }

    /// Parses TOML text. `experiment` may come from the file, the caller, or
    /// both (then they must agree).
    pub fn from_toml_str(text: &str, experiment: Option<Experiment>) -> Result<RunConfig> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;

        let from_file = match table.remove("experiment") {
            Some(toml::Value::String(s)) => Some(s.parse::<Experiment>()?),
            Some(other) => return Err(Error::Config(format!("`experiment` must be a string, got {other}"))),
            None => None,
        };
        let experiment = match (from_file, experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for experiment {a} but {b} was requested")))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("no experiment given".into())),
        };

        let mut cfg = RunConfig::defaults(experiment);
        if let Some(v) = table.remove("seed") {
            cfg.seed = match v {
                toml::Value::Integer(i) if i >= 0 => i as u64,
                other => return Err(Error::Config(format!("`seed` must be a non-negative integer, got {other}"))),
            };
        }
        if let Some(v) = table.remove("out_dir") {
            cfg.out_dir = match v {
                toml::Value::String(s) => PathBuf::from(s),
                other => return Err(Error::Config(format!("`out_dir` must be a string, got {other}"))),
            };
        }
        if let Some(v) = table.remove("format") {
            cfg.format = v
                .try_into()
                .map_err(|e| Error::Config(format!("`format`: {e}")))?;
        }
        if let Some(v) = table.remove("workers") {
            cfg.workers = match v {
                toml::Value::Integer(i) if i >= 1 => Some(i as usize),
                other => return Err(Error::Config(format!("`workers` must be a positive integer, got {other}"))),
            };
        }
        cfg.params = Params::parse(experiment, table)?;
        Ok(cfg)
    }

    pub fn load(path: &Path, experiment: Option<Experiment>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text, experiment)
    }

    pub fn apply(mut self, o: &Overrides) -> Result<RunConfig> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        if let Some(w) = o.workers {
            if w == 0 {
                return Err(Error::Config("workers must be >= 1".into()));
            }
            self.workers = Some(w);
        }
        Ok(self)
    }
}
