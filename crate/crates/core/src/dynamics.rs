//! Gradient-flow retrieval: queries descend to attractors.
//!
//! The flow `tau dx/dt = -grad E(x)` is integrated with explicit Euler steps.
//! A step that would raise the energy is halved until it does not, so every
//! accepted trajectory is monotone in energy.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::LevelEnergy;
use crate::error::{check_dim, Error, Result};
use crate::landscape::{Energy, EnergyLandscape, MemorySet};
use crate::seed::{rng_for, Stream};
use crate::vecops;

/// Slack allowed on the energy-descent check, to absorb rounding in `E`.
pub const DESCENT_SLACK: f64 = 1e-13;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub step_size: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
    /// Time constant of the flow; only rescales the step.
    pub tau_rate: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            grad_tol: 1e-6,
            max_steps: 10_000,
            tau_rate: 1.0,
        }
    }
}

impl FlowConfig {
    pub fn new(step_size: f64, grad_tol: f64, max_steps: usize, tau_rate: f64) -> Result<Self> {
        let c = Self {
            step_size,
            grad_tol,
            max_steps,
            tau_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("step_size", self.step_size),
            ("grad_tol", self.grad_tol),
            ("tau_rate", self.tau_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::input("max_steps must be >= 1"));
        }
        Ok(())
    }

    pub fn effective_step(&self) -> f64 {
        self.step_size / self.tau_rate
    }

    /// Explicit Euler is stable for `step * L < 2`. Logs a warning and returns
    /// false when the estimated gradient Lipschitz constant violates that.
    pub fn check_stability(&self, lipschitz: f64) -> bool {
        let ok = self.effective_step() * lipschitz < 2.0;
        if !ok {
            log::warn!(
                "flow step {} with Lipschitz estimate {lipschitz} exceeds the explicit-Euler bound; relying on backtracking",
                self.effective_step()
            );
        }
        ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub terminal: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub steps_taken: usize,
    pub converged: bool,
    /// Nearest base memory to the terminal's pullback.
    pub basin_memory_index: Option<usize>,
    pub merged_cluster_id: Option<usize>,
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub x: Vec<f64>,
    pub energy: f64,
}

/// Energies that know which memories they are built from and how to map a
/// point back to base coordinates.
pub trait Retrieval: Energy {
    fn memories(&self) -> &MemorySet;
    fn pullback(&self, z: &[f64]) -> Vec<f64>;
}

impl Retrieval for EnergyLandscape {
    fn memories(&self) -> &MemorySet {
        EnergyLandscape::memories(self)
    }

    fn pullback(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

impl Retrieval for LevelEnergy<'_> {
    fn memories(&self) -> &MemorySet {
        LevelEnergy::memories(self)
    }

    fn pullback(&self, z: &[f64]) -> Vec<f64> {
        self.decode(z)
    }
}

fn flow_impl<E: Energy + ?Sized>(
    energy: &E,
    query: &[f64],
    config: &FlowConfig,
    mut trace: Option<&mut Vec<TrajectoryPoint>>,
) -> Result<FlowResult> {
    config.validate()?;
    check_dim(energy.dim(), query.len())?;

    let numerical = |step: usize, what: &str| Error::Numerical {
        step,
        detail: what.to_string(),
    };

    let mut x = query.to_vec();
    let (mut e, mut g) = energy.value_and_gradient(&x)?;
    if !e.is_finite() {
        return Err(numerical(0, "non-finite energy at the query"));
    }
    if let Some(t) = trace.as_deref_mut() {
        t.push(TrajectoryPoint {
            step: 0,
            x: x.clone(),
            energy: e,
        });
    }

    let base_step = config.effective_step();
    let mut steps = 0;
    let mut gnorm = vecops::norm(&g);
    while gnorm >= config.grad_tol && steps < config.max_steps {
        if !gnorm.is_finite() {
            return Err(numerical(steps, "non-finite gradient"));
        }
        let mut eta = base_step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = vecops::axpy(&x, -eta, &g);
            let (ec, gc) = energy.value_and_gradient(&cand)?;
            if ec.is_finite() && ec <= e + DESCENT_SLACK {
                accepted = Some((cand, ec, gc));
                break;
            }
            eta *= 0.5;
        }
        let Some((xn, en, gn)) = accepted else {
            // no descent direction left at machine precision
            break;
        };
        x = xn;
        e = en;
        steps += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TrajectoryPoint {
                step: steps,
                x: x.clone(),
                energy: e,
            });
        }
        g = gn;
        gnorm = vecops::norm(&g);
    }
    if !gnorm.is_finite() {
        return Err(numerical(steps, "non-finite gradient"));
    }

    Ok(FlowResult {
        terminal: x,
        energy: e,
        grad_norm: gnorm,
        steps_taken: steps,
        converged: gnorm < config.grad_tol,
        basin_memory_index: None,
        merged_cluster_id: None,
    })
}

/// Descends from `query` until the gradient norm drops below `grad_tol`.
pub fn flow<E: Energy + ?Sized>(energy: &E, query: &[f64], config: &FlowConfig) -> Result<FlowResult> {
    flow_impl(energy, query, config, None)
}

/// Like [`flow`] but also returns every accepted iterate.
pub fn flow_traced<E: Energy + ?Sized>(
    energy: &E,
    query: &[f64],
    config: &FlowConfig,
) -> Result<(FlowResult, Vec<TrajectoryPoint>)> {
    let mut trace = Vec::new();
    let r = flow_impl(energy, query, config, Some(&mut trace))?;
    Ok((r, trace))
}

/// [`flow`] plus basin assignment through the energy's pullback.
pub fn retrieve<R: Retrieval + ?Sized>(energy: &R, query: &[f64], config: &FlowConfig) -> Result<FlowResult> {
    let mut r = flow(energy, query, config)?;
    r.basin_memory_index = Some(energy.memories().nearest(&energy.pullback(&r.terminal)));
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaSearch {
    pub minima: Vec<Vec<f64>>,
    /// Starts whose flow returned an error.
    pub failed_starts: usize,
    /// Starts that hit `max_steps` or stalled before the tolerance.
    pub unconverged_starts: usize,
    /// Starts that stopped on a critical point which nearby flows leave
    /// (a saddle or maximum).
    pub unstable_starts: usize,
}

/// Whether flows started `delta` away from `x` along each axis come back to
/// within `delta` of it.
fn is_stable<E: Energy + ?Sized>(energy: &E, x: &[f64], config: &FlowConfig, delta: f64) -> bool {
    (0..x.len()).all(|k| {
        [-delta, delta].iter().all(|&d| {
            let mut p = x.to_vec();
            p[k] += d;
            matches!(flow(energy, &p, config), Ok(r) if r.converged && vecops::dist(&r.terminal, x) < delta)
        })
    })
}

/// Multistart flow; terminals closer than `dedup_radius` to an already kept
/// minimum are folded into it. Only converged terminals are kept, and only
/// if flows started `dedup_radius / 2` away along each axis return to them.
pub fn find_minima<E: Energy + ?Sized>(
    energy: &E,
    starts: &[Vec<f64>],
    config: &FlowConfig,
    dedup_radius: f64,
) -> Result<MinimaSearch> {
    if starts.is_empty() {
        return Err(Error::input("find_minima needs at least one start"));
    }
    if !(dedup_radius > 0.0) {
        return Err(Error::input("dedup radius must be positive"));
    }
    config.validate()?;
    for s in starts {
        check_dim(energy.dim(), s.len())?;
    }
    let results: Vec<Result<FlowResult>> = starts.par_iter().map(|s| flow(energy, s, config)).collect();

    let mut out = MinimaSearch {
        minima: Vec::new(),
        failed_starts: 0,
        unconverged_starts: 0,
        unstable_starts: 0,
    };
    let mut unstable: Vec<Vec<f64>> = Vec::new();
    for r in results {
        match r {
            Err(e) => {
                log::debug!("start skipped: {e}");
                out.failed_starts += 1;
            }
            Ok(r) if !r.converged => out.unconverged_starts += 1,
            Ok(r) => {
                let near = |set: &[Vec<f64>]| set.iter().any(|m| vecops::dist(m, &r.terminal) < dedup_radius);
                if near(&out.minima) {
                    continue;
                }
                if near(&unstable) || !is_stable(energy, &r.terminal, config, 0.5 * dedup_radius) {
                    out.unstable_starts += 1;
                    unstable.push(r.terminal);
                    continue;
                }
                out.minima.push(r.terminal);
            }
        }
    }
    Ok(out)
}

/// `n` evenly spaced points on `[lo, hi]` (inclusive).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Cartesian grid of starts with `per_axis` points per axis in the box
/// `center +- half_width`.
pub fn start_grid(center: &[f64], half_width: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let axis = linspace(-half_width, half_width, per_axis);
    let mut out = vec![Vec::new()];
    for c in center {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(c + a);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedMinimum {
    pub center: Vec<f64>,
    /// Memory indices of the base minima that fell within `epsilon`.
    pub constituent_indices: Vec<usize>,
    pub epsilon: f64,
}

/// Groups base minima under the level minima they fall near.
///
/// `base_minima` pairs a memory index with a level-0 minimum; `encode` maps a
/// base point into the level's coordinates. A level minimum becomes a merged
/// minimum when two or more encoded base minima lie within `epsilon` of it.
/// `epsilon == 0` is degenerate and yields nothing.
pub fn detect_merged(
    level_minima: &[Vec<f64>],
    base_minima: &[(usize, Vec<f64>)],
    encode: impl Fn(&[f64]) -> Vec<f64>,
    epsilon: f64,
) -> Result<Vec<MergedMinimum>> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::input(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(Vec::new());
    }
    let encoded: Vec<(usize, Vec<f64>)> = base_minima.iter().map(|(i, x)| (*i, encode(x))).collect();
    let mut out = Vec::new();
    for center in level_minima {
        let constituents: Vec<usize> = encoded
            .iter()
            .filter(|(_, z)| z.len() == center.len() && vecops::dist(z, center) <= epsilon)
            .map(|(i, _)| *i)
            .collect();
        if constituents.len() >= 2 {
            out.push(MergedMinimum {
                center: center.clone(),
                constituent_indices: constituents,
                epsilon,
            });
        }
    }
    Ok(out)
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn combine(alpha: &[f64], vertices: &[Vec<f64>]) -> Vec<f64> {
    let mut x = vec![0.0; vertices[0].len()];
    for (a, v) in alpha.iter().zip(vertices) {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += a * vi;
        }
    }
    x
}

/// Minimizes the energy over the convex hull of `constituents`.
///
/// Projected gradient descent on the convex weights, started from every
/// vertex, the barycenter and `restarts` random Dirichlet(1) weights. Returns
/// the lowest-energy point found.
pub fn merged_minimum_locate<E: Energy + ?Sized>(
    energy: &E,
    constituents: &[Vec<f64>],
    iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = constituents.len();
    if n < 2 {
        return Err(Error::input("merged minimum needs at least two constituents"));
    }
    for c in constituents {
        check_dim(energy.dim(), c.len())?;
    }

    let mut starts: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    starts.push(vec![1.0 / n as f64; n]);
    for r in 0..restarts {
        let mut rng = rng_for(seed, Stream::Restart, r as u64);
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        starts.push(e.iter().map(|v| v / s).collect());
    }

    let descend = |mut alpha: Vec<f64>| -> Result<(f64, Vec<f64>)> {
        let mut x = combine(&alpha, constituents);
        let mut f = energy.value(&x)?;
        let mut step = 1.0;
        for _ in 0..iters {
            let g = energy.gradient(&x)?;
            let ga: Vec<f64> = constituents.iter().map(|v| vecops::dot(v, &g)).collect();
            let mut improved = false;
            for _ in 0..40 {
                let cand = project_to_simplex(&vecops::axpy(&alpha, -step, &ga));
                let xc = combine(&cand, constituents);
                let fc = energy.value(&xc)?;
                if fc < f {
                    alpha = cand;
                    x = xc;
                    f = fc;
                    improved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Ok((f, x))
    };

    let results: Vec<(f64, Vec<f64>)> = starts.into_par_iter().map(descend).collect::<Result<_>>()?;
    let best = results
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("at least n + 1 starts");
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point(beta: f64) -> EnergyLandscape {
        let m = MemorySet::new(vec![vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        EnergyLandscape::new(m, beta).unwrap()
    }

    #[test]
    fn quadratic_bowl_converges_to_memory() {
        let m = MemorySet::new(vec![vec![0.5, -2.0]], vec![0]).unwrap();
        let l = EnergyLandscape::new(m, 1.0).unwrap();
        let cfg = FlowConfig {
            grad_tol: 1e-8,
            step_size: 0.3,
            ..Default::default()
        };
        let r = retrieve(&l, &[10.0, 4.0], &cfg).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.terminal[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.terminal[1], -2.0, epsilon = 1e-6);
        assert_eq!(r.basin_memory_index, Some(0));
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::new(0.0, 1e-6, 10, 1.0).is_err());
        assert!(FlowConfig::new(1.0, -1.0, 10, 1.0).is_err());
        assert!(FlowConfig::new(1.0, 1e-6, 0, 1.0).is_err());
        assert!(FlowConfig::new(1.0, 1e-6, 10, f64::NAN).is_err());
        let c = FlowConfig::new(1.0, 1e-6, 10, 1.0).unwrap();
        assert!(c.check_stability(1.5));
        assert!(!c.check_stability(2.5));
    }

    #[test]
    fn steps_bounded_by_max_steps() {
        let cfg = FlowConfig {
            step_size: 1e-3,
            max_steps: 7,
            ..Default::default()
        };
        let r = flow(&two_point(4.0), &[0.3], &cfg).unwrap();
        assert_eq!(r.steps_taken, 7);
        assert!(!r.converged);
    }

    #[test]
    fn tau_rate_changes_time_not_terminal() {
        let l = two_point(4.0);
        let a = flow(&l, &[0.3], &FlowConfig::default()).unwrap();
        let b = flow(
            &l,
            &[0.3],
            &FlowConfig {
                tau_rate: 3.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(a.terminal[0], b.terminal[0], epsilon = 1e-5);
        assert!(b.steps_taken > a.steps_taken);
    }

    #[test]
    fn trajectory_energy_never_increases() {
        let m = MemorySet::new(vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.4, 1.0]], vec![0, 1, 0]).unwrap();
        let l = EnergyLandscape::new(m, 6.0).unwrap();
        let cfg = FlowConfig {
            step_size: 1.9,
            ..Default::default()
        };
        let (_, trace) = flow_traced(&l, &[2.0, -1.5], &cfg).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
        }
    }

    #[test]
    fn non_finite_query_is_numerical_error() {
        let err = flow(&two_point(1.0), &[f64::INFINITY], &FlowConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical { step: 0, .. }));
    }

    #[test]
    fn single_memory_has_one_minimum() {
        let m = MemorySet::new(vec![vec![0.2]], vec![0]).unwrap();
        let l = EnergyLandscape::new(m, 2.0).unwrap();
        let starts: Vec<Vec<f64>> = linspace(-2.0, 2.0, 20).into_iter().map(|v| vec![v]).collect();
        let s = find_minima(&l, &starts, &FlowConfig::default(), 0.1).unwrap();
        assert_eq!(s.minima.len(), 1);
        assert!(find_minima(&l, &[], &FlowConfig::default(), 0.1).is_err());
    }

    #[test]
    fn detect_merged_cases() {
        let base = vec![(0, vec![-1.0]), (1, vec![1.0])];
        let id = |x: &[f64]| x.to_vec();
        assert!(detect_merged(&[vec![-1.0], vec![1.0]], &base, id, 0.1).unwrap().is_empty());
        let merged = detect_merged(&[vec![0.0]], &base, id, 1.5).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].constituent_indices, vec![0, 1]);
        assert!(detect_merged(&[vec![0.0]], &base, id, 0.0).unwrap().is_empty());
        assert!(detect_merged(&[vec![0.0]], &base, id, -1.0).is_err());
    }

    #[test]
    fn simplex_projection() {
        let p = project_to_simplex(&[0.2, 0.3, 0.5]);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-15);
        let p = project_to_simplex(&[2.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
        let p = project_to_simplex(&[-1.0, 0.5, 0.7]);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(p[0], 0.0);
        assert_abs_diff_eq!(p[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn merged_minimum_of_symmetric_pair_is_midpoint() {
        let x = merged_minimum_locate(&two_point(0.5), &[vec![-1.0], vec![1.0]], 500, 4, 1).unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-3);
    }

    #[test]
    fn merged_minimum_needs_two_constituents() {
        assert!(matches!(
            merged_minimum_locate(&two_point(0.5), &[vec![1.0]], 10, 1, 1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn start_grid_shape() {
        let g = start_grid(&[0.0, 1.0], 1.0, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 2.0]);
    }
}
