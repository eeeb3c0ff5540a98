//! Executes a [`RunConfig`]: builds the experiment, writes its tables, the
//! plot data and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::abstraction::{smoothness_report, AbstractionHierarchy};
use crate::census::{
    basin_class, bias_variance_probes, query_distribution, query_noise, run_census, CensusConfig, CensusReport,
    PRIVACY_KS,
};
use crate::config::{
    BiasVarParams, CensusParams, GridParams, KnnParams, OddsParams, Params, PrivacyParams, RunConfig,
    SmoothnessParams,
};
use crate::dynamics::{find_minima, flow, flow_traced, start_grid};
use crate::error::{Error, Result};
use crate::gridsim::{coarsening_stack, share_stderr};
use crate::knn::{knn_predict, soft_knn_predict, SoftWeights};
use crate::landscape::{Energy, EnergyLandscape};
use crate::oddsmodel::{initial_odds, simulate_merge, smoothed_odds, MergeScenario};
use crate::table::{format_float, Cell, Format, Table};
use crate::vecops;

pub const MANIFEST: &str = "manifest.json";
const MAX_MINIMA_STARTS: usize = 50_000;

/// Files written by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<PathBuf>,
    pub plot_data: Vec<PathBuf>,
    pub extra: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Runs on a dedicated pool of `config.workers` threads (or the global pool).
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| run_here(config)),
        None => run_here(config),
    }
}

fn run_here(config: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let dir = config.out_dir.as_path();
    log::info!("running {} with seed {} into {}", config.experiment, config.seed, dir.display());

    let mut extra = Vec::new();
    let (tables, deferred) = match &config.params {
        Params::Census(p) => census(p, config.seed)?,
        Params::Privacy(p) => privacy(p, config.seed)?,
        Params::Biasvar(p) => (biasvar(p, config.seed)?, None),
        Params::Smoothness(p) => (vec![smoothness(p, config.seed)?], None),
        Params::Grid(p) => (vec![grid(p, config.seed, dir, &mut extra)?], None),
        Params::Knn(p) => (vec![knn(p, config.seed)?], None),
        Params::Odds(p) => (vec![odds(p, config.seed)?], None),
    };

    let mut written = Vec::new();
    for t in &tables {
        written.push(t.save(dir, config.format)?);
    }
    let plot_data = if config.format == Format::Csv {
        plotdata_for(dir, &tables, config)?
    } else {
        Vec::new()
    };

    let manifest = dir.join(MANIFEST);
    let names: Vec<String> = written
        .iter()
        .chain(&plot_data)
        .chain(&extra)
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let body = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.experiment,
        "config": config,
        "files": names,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;

    // tables are on disk before a numerical failure is reported
    if let Some(e) = deferred {
        return Err(e);
    }
    Ok(RunOutput {
        tables: written,
        plot_data,
        extra,
        manifest,
    })
}

fn landscape_and_hierarchy(
    l: &crate::config::LandscapeParams,
    h: &crate::config::HierarchyParams,
    seed: u64,
) -> Result<(EnergyLandscape, AbstractionHierarchy)> {
    let landscape = l.build(seed)?;
    let hierarchy = h.build(landscape.dim())?;
    Ok((landscape, hierarchy))
}

fn invalid_reports(reports: &[CensusReport]) -> Option<Error> {
    reports.iter().find(|r| !r.valid).map(|r| Error::Numerical {
        step: 0,
        detail: format!(
            "level {}: {} of {} flows failed or did not converge",
            r.level, r.failures, r.n_queries
        ),
    })
}

fn census(p: &CensusParams, seed: u64) -> Result<(Vec<Table>, Option<Error>)> {
    let (landscape, hierarchy) = landscape_and_hierarchy(&p.landscape, &p.hierarchy, seed)?;
    let cfg = CensusConfig {
        n_queries: p.n_queries,
        query_sigma: p.query_sigma,
        seed,
        levels: p.hierarchy.levels(&p.levels),
        basin_rule: p.basin_rule,
        flow: p.flow,
        ..Default::default()
    };
    let reports = run_census(&landscape, &hierarchy, &cfg)?;

    let mut t = Table::new(
        "census",
        &[
            "level",
            "class",
            "p_data",
            "p_gen",
            "amplification",
            "diversity",
            "privacy_k1",
            "privacy_k2",
            "privacy_k5",
            "privacy_k10",
            "n_queries",
            "failures",
        ],
    );
    for r in &reports {
        for (k, class) in r.classes.iter().enumerate() {
            let mut row: Vec<Cell> = vec![
                r.level.into(),
                (*class).into(),
                r.p_data[k].into(),
                r.p_gen[k].into(),
                r.amplification.into(),
                r.diversity_mean_pairwise.into(),
            ];
            row.extend(PRIVACY_KS.iter().map(|k| Cell::from(r.privacy_knn_distance[k])));
            row.push(r.n_queries.into());
            row.push(r.failures.into());
            t.push(row);
        }
    }
    let mut tables = vec![t];
    if p.dump_minima {
        tables.push(minima_table(&landscape, &hierarchy, &cfg, p)?);
    }
    if p.trajectories > 0 {
        tables.push(trajectory_table(&landscape, &hierarchy, &cfg, p.trajectories)?);
    }
    Ok((tables, invalid_reports(&reports)))
}

fn minima_table(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    cfg: &CensusConfig,
    p: &CensusParams,
) -> Result<Table> {
    let dim = landscape.dim();
    let n_starts = (p.minima_starts_per_axis as f64).powi(dim as i32);
    if p.minima_starts_per_axis < 2 || n_starts > MAX_MINIMA_STARTS as f64 {
        return Err(Error::input(format!(
            "minima_starts_per_axis = {} gives {n_starts} starts in {dim}D (allowed 2..={MAX_MINIMA_STARTS} starts)",
            p.minima_starts_per_axis
        )));
    }
    if !(p.merge_epsilon > 0.0) {
        return Err(Error::input("merge_epsilon must be positive"));
    }
    let mut base_minima = Vec::new();
    let mut t = Table::with_coords("minima", &["level", "min_id"], dim, &["energy", "n_constituents"]);
    for &a in &cfg.levels {
        let level = hierarchy.level(landscape, a)?;
        let (center, sigma) = cfg.query_distribution(&level);
        let starts = start_grid(&center, sigma, p.minima_starts_per_axis);
        let found = find_minima(&level, &starts, &cfg.flow, 1e-3 * sigma.max(1e-9))?;
        if a == 0 {
            base_minima = found.minima.clone();
        }
        for (id, m) in found.minima.iter().enumerate() {
            let constituents = if base_minima.is_empty() {
                0
            } else {
                base_minima
                    .iter()
                    .filter(|b| vecops::dist(&level.encode(b), m) <= p.merge_epsilon)
                    .count()
            };
            let mut row: Vec<Cell> = vec![a.into(), id.into()];
            row.extend(m.iter().map(|v| Cell::from(*v)));
            row.push(level.value(m)?.into());
            row.push(constituents.into());
            t.push(row);
        }
    }
    Ok(t)
}

fn trajectory_table(
    landscape: &EnergyLandscape,
    hierarchy: &AbstractionHierarchy,
    cfg: &CensusConfig,
    n: usize,
) -> Result<Table> {
    let dim = landscape.dim();
    let level = hierarchy.level(landscape, 0)?;
    let (center, sigma) = cfg.query_distribution(&level);
    let noise = query_noise(dim, n, cfg.seed);
    let traces: Vec<_> = noise
        .par_iter()
        .map(|xi| flow_traced(&level, &vecops::axpy(&center, sigma, xi), &cfg.flow).map(|r| r.1))
        .collect::<Result<_>>()?;
    let mut t = Table::with_coords("trajectory", &["start_id", "step"], dim, &["energy"]);
    for (id, trace) in traces.iter().enumerate() {
        for pt in trace {
            let mut row: Vec<Cell> = vec![id.into(), pt.step.into()];
            row.extend(pt.x.iter().map(|v| Cell::from(*v)));
            row.push(pt.energy.into());
            t.push(row);
        }
    }
    Ok(t)
}

fn privacy(p: &PrivacyParams, seed: u64) -> Result<(Vec<Table>, Option<Error>)> {
    let (landscape, hierarchy) = landscape_and_hierarchy(&p.landscape, &p.hierarchy, seed)?;
    let cfg = CensusConfig {
        n_queries: p.n_queries,
        query_sigma: p.query_sigma,
        seed,
        levels: p.hierarchy.levels(&p.levels),
        basin_rule: p.basin_rule,
        flow: p.flow,
        ..Default::default()
    };
    let reports = run_census(&landscape, &hierarchy, &cfg)?;
    let mut t = Table::new("privacy", &["level", "k", "nn_distance", "diversity"]);
    for r in &reports {
        for (k, d) in &r.privacy_knn_distance {
            t.push(vec![r.level.into(), (*k).into(), (*d).into(), r.diversity_mean_pairwise.into()]);
        }
    }
    Ok((vec![t], invalid_reports(&reports)))
}

fn biasvar(p: &BiasVarParams, seed: u64) -> Result<Vec<Table>> {
    let (landscape, hierarchy) = landscape_and_hierarchy(&p.landscape, &p.hierarchy, seed)?;
    let cfg = CensusConfig {
        seed,
        levels: p.hierarchy.levels(&p.levels),
        probe_sigma: p.probe_sigma,
        probes_per_memory: p.probes_per_memory,
        bootstrap_rounds: p.bootstrap_rounds,
        resampling: p.resampling,
        basin_rule: p.basin_rule,
        flow: p.flow,
        ..Default::default()
    };
    let reports = bias_variance_probes(&landscape, &hierarchy, &cfg)?;
    let mut t = Table::new("biasvar", &["level", "class", "bias", "variance_mean"]);
    for r in &reports {
        for (k, class) in r.classes.iter().enumerate() {
            t.push(vec![
                r.level.into(),
                (*class).into(),
                r.bias_per_class[k].into(),
                r.variance_mean.into(),
            ]);
        }
    }
    Ok(vec![t])
}

fn smoothness(p: &SmoothnessParams, seed: u64) -> Result<Table> {
    let (landscape, hierarchy) = landscape_and_hierarchy(&p.landscape, &p.hierarchy, seed)?;
    let reports = smoothness_report(&hierarchy, &landscape, p.probes, p.probe_radius, seed)?;
    let mut t = Table::new(
        "smoothness",
        &["level", "hessian_norm_est", "lipschitz_est", "jacobian_norm_est"],
    );
    for r in reports {
        t.push(vec![
            r.level.into(),
            r.hessian_norm_est.into(),
            r.lipschitz_est.into(),
            r.jacobian_norm_est.into(),
        ]);
    }
    Ok(t)
}

fn grid(p: &GridParams, seed: u64, dir: &Path, extra: &mut Vec<PathBuf>) -> Result<Table> {
    if p.p_red.is_empty() {
        return Err(Error::input("p_red needs at least one value"));
    }
    let levels = p.levels.unwrap_or(p.side.trailing_zeros() as usize);
    let mut t = Table::new("grid", &["p_red_init", "level", "red_share"]);
    for &pr in &p.p_red {
        let stack = coarsening_stack(p.side, pr, levels, seed)?;
        for (level, g) in stack.iter().enumerate() {
            t.push(vec![pr.into(), level.into(), g.red_share().into()]);
            if p.dump_pbm {
                let path = dir.join(format!("grid_p{}_level{level}.pbm", format_float(pr)));
                let mut buf = Vec::new();
                g.write_pbm(&mut buf).map_err(|e| Error::io(&path, e))?;
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                extra.push(path);
            }
        }
    }
    Ok(t)
}

fn knn(p: &KnnParams, seed: u64) -> Result<Table> {
    let landscape = p.landscape.build(seed)?;
    p.flow.validate()?;
    if p.n_queries == 0 {
        return Err(Error::input("n_queries must be >= 1"));
    }
    let memories = landscape.memories();
    let tau = p.tau.unwrap_or(2.0 / landscape.beta());
    let (center, sigma) = query_distribution(memories.points(), p.query_sigma);
    let noise = query_noise(landscape.dim(), p.n_queries, seed);
    let hierarchy = AbstractionHierarchy::new(crate::abstraction::DecoderFamily::Diagonal, vec![1.0], landscape.dim())?;
    let level = hierarchy.level(&landscape, 0)?;

    let rows: Vec<Vec<Cell>> = noise
        .par_iter()
        .enumerate()
        .map(|(id, xi)| {
            let q = vecops::axpy(&center, sigma, xi);
            let (soft, _) = soft_knn_predict(memories, &q, tau)?;
            let hard = knn_predict(memories, &q, 1)?;
            let r = flow(&landscape, &q, &p.flow)?;
            let attendance = SoftWeights {
                weights: landscape.weights(&r.terminal)?,
                tau: 2.0 / landscape.beta(),
            };
            let basin = basin_class(&level, &r.terminal, p.basin_rule)?;
            let soft_class = soft.argmax_class();
            Ok(vec![
                id.into(),
                tau.into(),
                attendance.effective_count().into(),
                soft_class.into(),
                hard.argmax_class().into(),
                basin.into(),
                (soft_class == basin).into(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(
        "knn",
        &[
            "query_id",
            "tau",
            "k_equivalent",
            "soft_argmax_class",
            "hard_1nn_class",
            "basin_class",
            "agreement_flag",
        ],
    );
    for r in rows {
        t.push(r);
    }
    Ok(t)
}

fn odds(p: &OddsParams, seed: u64) -> Result<Table> {
    if p.scenarios.is_empty() {
        return Err(Error::input("scenarios needs at least one [p, q, S] triple"));
    }
    let mut t = Table::new(
        "odds",
        &[
            "p",
            "q",
            "S",
            "lambda_init",
            "lambda_smooth",
            "trials",
            "pure_A",
            "pure_B",
            "mixed",
            "empirical_conditional_odds",
        ],
    );
    for &[pp, q, s] in &p.scenarios {
        let s = u32::try_from(s).map_err(|_| Error::input(format!("S = {s} is too large")))?;
        let sc = MergeScenario::new(pp, q, s)?;
        let c = simulate_merge(&sc, p.trials, seed)?;
        t.push(vec![
            pp.into(),
            q.into(),
            s.into(),
            initial_odds(&sc).into(),
            smoothed_odds(&sc).into(),
            c.trials().into(),
            c.pure_a.into(),
            c.pure_b.into(),
            c.mixed.into(),
            c.conditional_odds().into(),
        ]);
    }
    Ok(t)
}

fn plotdata_for(dir: &Path, tables: &[Table], config: &RunConfig) -> Result<Vec<PathBuf>> {
    let names: Vec<&str> = tables
        .iter()
        .map(|t| t.name.as_str())
        .filter(|n| PLOTTABLE.contains(n))
        .collect();
    if names.is_empty() {
        return Ok(Vec::new());
    }
    let side = match &config.params {
        Params::Grid(g) => Some(g.side),
        _ => None,
    };
    emit_plotdata(dir, &names, side)
}

/// Tables that have a plot-data reshaping.
pub const PLOTTABLE: [&str; 3] = ["census", "grid", "smoothness"];

/// Reshapes result tables in `dir` into long-format `plot_<name>.csv` files
/// with columns `series, x, y, stderr`. `grid_side` supplies the binomial
/// standard error for grid shares; without it that column is left empty.
pub fn emit_plotdata(dir: &Path, tables: &[&str], grid_side: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for &name in tables {
        let path = dir.join(format!("{name}.csv"));
        if !path.is_file() {
            return Err(Error::input(format!("table {} not found", path.display())));
        }
        let t = Table::load_csv(&path)?;
        let mut plot = Table::new(&format!("plot_{name}"), &["series", "x", "y", "stderr"]);
        match name {
            "census" => census_plot(&t, &mut plot)?,
            "grid" => grid_plot(&t, &mut plot, grid_side)?,
            "smoothness" => {
                let level = t.column("level")?;
                for series in ["hessian_norm_est", "lipschitz_est", "jacobian_norm_est"] {
                    let col = t.column(series)?;
                    for r in 0..t.rows.len() {
                        plot.push(vec![series.into(), t.float(r, level)?.into(), t.float(r, col)?.into(), "".into()]);
                    }
                }
            }
            other => return Err(Error::input(format!("no plot data defined for table `{other}`"))),
        }
        out.push(plot.save(dir, Format::Csv)?);
    }
    Ok(out)
}

fn census_plot(t: &Table, plot: &mut Table) -> Result<()> {
    let (level, p_data, p_gen) = (t.column("level")?, t.column("p_data")?, t.column("p_gen")?);
    let (amp, div, priv1) = (t.column("amplification")?, t.column("diversity")?, t.column("privacy_k1")?);
    let (nq, fails) = (t.column("n_queries")?, t.column("failures")?);
    // one row per level: the majority class (largest p_data, first on ties)
    let mut per_level: Vec<(f64, usize)> = Vec::new();
    for r in 0..t.rows.len() {
        let a = t.float(r, level)?;
        match per_level.iter_mut().find(|(l, _)| *l == a) {
            Some(entry) => {
                if t.float(r, p_data)? > t.float(entry.1, p_data)? {
                    entry.1 = r;
                }
            }
            None => per_level.push((a, r)),
        }
    }
    for &(a, r) in &per_level {
        let n = t.float(r, nq)? - t.float(r, fails)?;
        let p = t.float(r, p_gen)?;
        let se = if n > 0.0 { (p * (1.0 - p) / n).sqrt() } else { f64::NAN };
        plot.push(vec!["amplification".into(), a.into(), t.float(r, amp)?.into(), se.into()]);
    }
    for (series, col) in [("diversity", div), ("privacy_k1", priv1)] {
        for &(a, r) in &per_level {
            plot.push(vec![series.into(), a.into(), t.float(r, col)?.into(), "".into()]);
        }
    }
    Ok(())
}

fn grid_plot(t: &Table, plot: &mut Table, side: Option<usize>) -> Result<()> {
    let (p0, level, share) = (t.column("p_red_init")?, t.column("level")?, t.column("red_share")?);
    for r in 0..t.rows.len() {
        let l = t.float(r, level)?;
        let y = t.float(r, share)?;
        let se: Cell = match side {
            Some(s) => {
                let side_l = (s >> (l as u32)).max(1);
                share_stderr(y, side_l * side_l).into()
            }
            None => "".into(),
        };
        let series = format!("p_red={}", format_float(t.float(r, p0)?));
        plot.push(vec![series.as_str().into(), l.into(), y.into(), se]);
    }
    Ok(())
}
