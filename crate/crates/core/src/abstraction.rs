//! Abstraction hierarchies and per-level energies.
//!
//! A hierarchy is a family of componentwise decoders `psi_a: Z_a -> H`, with
//! `psi_0` the identity and `|J_psi_a| <= c_a`. The energy seen at level `a`
//! is the base energy pulled back through the decoder, `E_a(z) = E(psi_a(z))`,
//! so its Hessian picks up a `J^T H J` factor and shrinks roughly like `c_a^2`.
//!
//! Optionally the hierarchy also couples the level to the landscape's
//! temperature: `beta_a = beta * c_a^k`. A pure reparametrization (`k = 0`)
//! never changes how many minima there are; coupling is what lets nearby
//! minima merge as the level rises.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::landscape::{hessian_fd, symmetric_spectral_norm, Energy, EnergyLandscape, MemorySet};
use crate::seed::{rng_for, Stream};
use crate::vecops;

/// Clamp used when inverting `tanh` decoders outside their image.
const TANH_EDGE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderFamily {
    /// `psi_a(z) = c_a * z`
    Diagonal,
    /// `psi_a(z) = c_a * tanh(z)` componentwise
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionHierarchy {
    family: DecoderFamily,
    contraction: Vec<f64>,
    temperature_exponent: f64,
    dim: usize,
}

impl AbstractionHierarchy {
    /// `contraction[0]` must be 1 and the rest strictly decreasing inside (0, 1].
    pub fn new(family: DecoderFamily, contraction: Vec<f64>, dim: usize) -> Result<Self> {
        if contraction.is_empty() {
            return Err(Error::input("hierarchy needs at least level 0"));
        }
        if contraction[0] != 1.0 {
            return Err(Error::input("contraction factor of level 0 must be exactly 1"));
        }
        for w in contraction.windows(2) {
            if !(w[1] < w[0]) || !(w[1] > 0.0) {
                return Err(Error::input(format!(
                    "contraction factors must be strictly decreasing in (0, 1], got {contraction:?}"
                )));
            }
        }
        if dim == 0 {
            return Err(Error::input("hierarchy dimension must be >= 1"));
        }
        Ok(Self {
            family,
            contraction,
            temperature_exponent: 0.0,
            dim,
        })
    }

    /// `c_a = ratio^a` for `a = 0..=top_level`.
    pub fn geometric(family: DecoderFamily, ratio: f64, top_level: usize, dim: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::input(format!("geometric ratio must lie in (0, 1), got {ratio}")));
        }
        let c = (0..=top_level).map(|a| ratio.powi(a as i32)).collect();
        Self::new(family, c, dim)
    }

    /// Couple level and temperature: `beta_a = beta * c_a^exponent`.
    pub fn with_temperature_exponent(mut self, exponent: f64) -> Result<Self> {
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(Error::input("temperature exponent must be finite and >= 0"));
        }
        self.temperature_exponent = exponent;
        Ok(self)
    }

    pub fn family(&self) -> DecoderFamily {
        self.family
    }

    /// Highest level index `A`.
    pub fn top_level(&self) -> usize {
        self.contraction.len() - 1
    }

    pub fn contraction_factors(&self) -> &[f64] {
        &self.contraction
    }

    pub fn contraction(&self, a: usize) -> Result<f64> {
        self.check_level(a)?;
        Ok(self.contraction[a])
    }

    pub fn temperature_exponent(&self) -> f64 {
        self.temperature_exponent
    }

    pub fn beta_scale(&self, a: usize) -> Result<f64> {
        Ok(self.contraction(a)?.powf(self.temperature_exponent))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_level(&self, a: usize) -> Result<()> {
        if a > self.top_level() {
            return Err(Error::input(format!(
                "level {a} out of range 0..={}",
                self.top_level()
            )));
        }
        Ok(())
    }

    /// `psi_a(z)`
    pub fn decode(&self, a: usize, z: &[f64]) -> Result<Vec<f64>> {
        let c = self.contraction(a)?;
        if a == 0 {
            return Ok(z.to_vec());
        }
        Ok(match self.family {
            DecoderFamily::Diagonal => z.iter().map(|v| c * v).collect(),
            DecoderFamily::Tanh => z.iter().map(|v| c * v.tanh()).collect(),
        })
    }

    /// Diagonal of the decoder Jacobian at `z`.
    pub fn decoder_jacobian_diag(&self, a: usize, z: &[f64]) -> Result<Vec<f64>> {
        let c = self.contraction(a)?;
        if a == 0 {
            return Ok(vec![1.0; z.len()]);
        }
        Ok(match self.family {
            DecoderFamily::Diagonal => vec![c; z.len()],
            DecoderFamily::Tanh => z
                .iter()
                .map(|v| {
                    let s = 1.0 / v.cosh();
                    c * s * s
                })
                .collect(),
        })
    }

    /// Encoder `phi_a = psi_a^{-1}`. For `tanh` decoders points outside the
    /// image are clamped just inside it.
    pub fn encode(&self, a: usize, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.contraction(a)?;
        if a == 0 {
            return Ok(x.to_vec());
        }
        Ok(match self.family {
            DecoderFamily::Diagonal => x.iter().map(|v| v / c).collect(),
            DecoderFamily::Tanh => x
                .iter()
                .map(|v| (v / c).clamp(-TANH_EDGE, TANH_EDGE).atanh())
                .collect(),
        })
    }

    /// Energy of `base` seen at level `a`.
    pub fn level<'h>(&'h self, base: &EnergyLandscape, a: usize) -> Result<LevelEnergy<'h>> {
        self.check_level(a)?;
        check_dim(self.dim, base.dim())?;
        let landscape = if self.temperature_exponent == 0.0 {
            base.clone()
        } else {
            base.with_beta(base.beta() * self.beta_scale(a)?)?
        };
        Ok(LevelEnergy {
            hierarchy: self,
            level: a,
            landscape,
        })
    }
}

/// `E_a = E_{beta_a} o psi_a` on the level's coordinates.
#[derive(Debug, Clone)]
pub struct LevelEnergy<'h> {
    hierarchy: &'h AbstractionHierarchy,
    level: usize,
    landscape: EnergyLandscape,
}

impl LevelEnergy<'_> {
    pub fn level(&self) -> usize {
        self.level
    }

    /// Base-space landscape at this level's temperature.
    pub fn landscape(&self) -> &EnergyLandscape {
        &self.landscape
    }

    pub fn memories(&self) -> &MemorySet {
        self.landscape.memories()
    }

    pub fn hierarchy(&self) -> &AbstractionHierarchy {
        self.hierarchy
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.hierarchy.decode(self.level, z).expect("level validated")
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.hierarchy.encode(self.level, x).expect("level validated")
    }

    /// Memories mapped into this level's coordinates.
    pub fn pulled_back_memories(&self) -> Vec<Vec<f64>> {
        self.memories().points().iter().map(|p| self.encode(p)).collect()
    }
}

impl Energy for LevelEnergy<'_> {
    fn dim(&self) -> usize {
        self.landscape.dim()
    }

    fn value(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        self.landscape.energy(&self.decode(z))
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        let g = self.landscape.grad_energy(&self.decode(z))?;
        let j = self.hierarchy.decoder_jacobian_diag(self.level, z)?;
        Ok(g.iter().zip(&j).map(|(gi, ji)| gi * ji).collect())
    }

    fn value_and_gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), z.len())?;
        let (e, g) = self.landscape.energy_and_grad(&self.decode(z))?;
        let j = self.hierarchy.decoder_jacobian_diag(self.level, z)?;
        Ok((e, g.iter().zip(&j).map(|(gi, ji)| gi * ji).collect()))
    }
}

/// `E_a(z)` for one point.
pub fn level_energy(
    hierarchy: &AbstractionHierarchy,
    base: &EnergyLandscape,
    a: usize,
    z: &[f64],
) -> Result<f64> {
    hierarchy.level(base, a)?.value(z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub level: usize,
    /// Max spectral norm of the finite-difference Hessian over the probes.
    pub hessian_norm_est: f64,
    /// Max `|g(z1) - g(z2)| / |z1 - z2|` over all probe pairs.
    pub lipschitz_est: f64,
    /// Max decoder Jacobian operator norm over the same probes.
    pub jacobian_norm_est: f64,
}

/// Uniform point in the unit ball of `dim` dimensions.
fn unit_ball_point(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = vecops::norm(&g);
        if n > 0.0 {
            let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
            return g.iter().map(|v| v * r / n).collect();
        }
    }
}

fn probe_offsets(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| unit_ball_point(&mut rng_for(seed, Stream::Probe, j as u64), dim))
        .collect()
}

/// Sampled smoothness of every level.
///
/// The probe ball is `probe_radius` wide in base coordinates around the
/// memory centroid; at level `a` it is pulled back to the ball of radius
/// `probe_radius / c_a` around the encoded centroid. Probe offsets are shared
/// across levels, so the estimates differ only through the level energies.
pub fn smoothness_report(
    hierarchy: &AbstractionHierarchy,
    base: &EnergyLandscape,
    probes: usize,
    probe_radius: f64,
    seed: u64,
) -> Result<Vec<SmoothnessReport>> {
    if probes < 2 {
        return Err(Error::input("smoothness report needs at least 2 probes"));
    }
    if !(probe_radius > 0.0) {
        return Err(Error::input("probe radius must be positive"));
    }
    let dim = base.dim();
    let offsets = probe_offsets(probes, dim, seed);
    let centroid = base.memories().centroid();

    (0..=hierarchy.top_level())
        .map(|a| {
            let energy = hierarchy.level(base, a)?;
            let c = hierarchy.contraction(a)?;
            let center = hierarchy.encode(a, &centroid)?;
            let radius = probe_radius / c;
            let h = 1e-4 * radius.max(1.0);
            let points: Vec<Vec<f64>> = offsets.iter().map(|u| vecops::axpy(&center, radius, u)).collect();

            let per_probe: Vec<(f64, Vec<f64>, f64)> = points
                .par_iter()
                .map(|z| {
                    let hess = hessian_fd(&energy, z, h)?;
                    let jac = jacobian_fd(hierarchy, a, z)?;
                    Ok((symmetric_spectral_norm(&hess), energy.gradient(z)?, operator_norm(&jac)))
                })
                .collect::<Result<_>>()?;

            let hessian_norm_est = per_probe.iter().map(|p| p.0).fold(0.0, f64::max);
            let jacobian_norm_est = per_probe.iter().map(|p| p.2).fold(0.0, f64::max);
            let lipschitz_est = (0..points.len())
                .into_par_iter()
                .map(|i| {
                    let mut best: f64 = 0.0;
                    for j in (i + 1)..points.len() {
                        let dz = vecops::dist(&points[i], &points[j]);
                        if dz > 0.0 {
                            best = best.max(vecops::dist(&per_probe[i].1, &per_probe[j].1) / dz);
                        }
                    }
                    best
                })
                .reduce(|| 0.0, f64::max);

            Ok(SmoothnessReport {
                level: a,
                hessian_norm_est,
                lipschitz_est,
                jacobian_norm_est,
            })
        })
        .collect()
}

/// Central-difference Jacobian of the level-`a` decoder at `z`.
pub fn jacobian_fd(hierarchy: &AbstractionHierarchy, a: usize, z: &[f64]) -> Result<DMatrix<f64>> {
    let d = z.len();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(d, d);
    let mut zp = z.to_vec();
    for j in 0..d {
        zp[j] = z[j] + h;
        let fp = hierarchy.decode(a, &zp)?;
        zp[j] = z[j] - h;
        let fm = hierarchy.decode(a, &zp)?;
        zp[j] = z[j];
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0_f64, |acc, v| acc.max(*v))
}

/// Largest finite-difference Jacobian operator norm of `psi_a` over probe
/// points drawn uniformly from the unit ball around the origin.
pub fn jacobian_norm_probe(
    hierarchy: &AbstractionHierarchy,
    a: usize,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    hierarchy.check_level(a)?;
    if probes == 0 {
        return Err(Error::input("jacobian probe needs at least one probe"));
    }
    probe_offsets(probes, hierarchy.dim(), seed)
        .par_iter()
        .map(|z| Ok(operator_norm(&jacobian_fd(hierarchy, a, z)?)))
        .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))
}

/// Dense row-major real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "grid data has {} cells, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Half-sample symmetric reflection: `-1 -> 0`, `n -> n-1`.
    fn reflected(&self, r: isize, c: isize) -> f64 {
        self.get(reflect(r, self.rows), reflect(c, self.cols))
    }

    /// Sum of absolute values of the 5-point Laplacian under reflected boundaries.
    pub fn total_curvature(&self) -> f64 {
        let mut total = 0.0;
        for r in 0..self.rows as isize {
            for c in 0..self.cols as isize {
                let lap = self.reflected(r - 1, c)
                    + self.reflected(r + 1, c)
                    + self.reflected(r, c - 1)
                    + self.reflected(r, c + 1)
                    - 4.0 * self.reflected(r, c);
                total += lap.abs();
            }
        }
        total
    }

    /// Cells strictly below all of their (up to 8) in-grid neighbours.
    pub fn strict_local_minima(&self) -> usize {
        let mut count = 0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.get(r, c);
                let mut is_min = true;
                'nb: for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
                            continue;
                        }
                        if self.get(nr as usize, nc as usize) <= v {
                            is_min = false;
                            break 'nb;
                        }
                    }
                }
                if is_min {
                    count += 1;
                }
            }
        }
        count
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable truncated-Gaussian smoothing with reflected boundaries.
pub fn grid_smooth(grid: &RealGrid, sigma: f64) -> Result<RealGrid> {
    if grid.rows < 3 || grid.cols < 3 {
        return Err(Error::input("grid smoothing needs at least 3 cells per side"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::input("sigma must be positive and finite"));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;

    let pass = |src: &RealGrid, along_rows: bool| -> RealGrid {
        RealGrid::from_fn(src.rows, src.cols, |r, c| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let off = k as isize - radius;
                    if along_rows {
                        w * src.reflected(r as isize + off, c as isize)
                    } else {
                        w * src.reflected(r as isize, c as isize + off)
                    }
                })
                .sum()
        })
    };
    Ok(pass(&pass(grid, false), true))
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
    fn hierarchy_validation() {
        assert!(AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![], 1).is_err());
        assert!(AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![0.9, 0.8], 1).is_err());
        assert!(AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.8, 0.8], 1).is_err());
        assert!(AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.0], 1).is_err());
        assert!(AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.8, 0.5], 1).is_ok());
        assert!(AbstractionHierarchy::geometric(DecoderFamily::Tanh, 1.0, 3, 2).is_err());
    }

    #[test]
    fn level_zero_is_base_energy_bit_for_bit() {
        let base = two_point(4.0);
        for fam in [DecoderFamily::Diagonal, DecoderFamily::Tanh] {
            let h = AbstractionHierarchy::geometric(fam, 0.5, 2, 1)
                .unwrap()
                .with_temperature_exponent(2.0)
                .unwrap();
            for z in [-1.3, 0.0, 0.2, 7.0] {
                assert_eq!(
                    level_energy(&h, &base, 0, &[z]).unwrap().to_bits(),
                    base.energy(&[z]).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn diagonal_level_energy_closed_form() {
        let m = MemorySet::new(vec![vec![0.0, 0.0]], vec![0]).unwrap();
        let base = EnergyLandscape::new(m, 1.0).unwrap();
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.5], 2).unwrap();
        assert_abs_diff_eq!(level_energy(&h, &base, 1, &[2.0, 0.0]).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn level_energy_at_origin_matches_base() {
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.5], 1).unwrap();
        let e = level_energy(&h, &two_point(4.0), 1, &[0.0]).unwrap();
        assert_abs_diff_eq!(e, 0.5 - std::f64::consts::LN_2 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn level_out_of_range() {
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.5], 1).unwrap();
        assert!(matches!(level_energy(&h, &two_point(1.0), 2, &[0.0]), Err(Error::Input(_))));
        assert!(jacobian_norm_probe(&h, 2, 4, 0).is_err());
    }

    #[test]
    fn level_gradient_matches_finite_difference() {
        let base = two_point(2.0);
        let h = AbstractionHierarchy::geometric(DecoderFamily::Tanh, 0.8, 3, 1)
            .unwrap()
            .with_temperature_exponent(1.0)
            .unwrap();
        for a in 0..=3 {
            let e = h.level(&base, a).unwrap();
            for z in [-0.7, 0.1, 0.45] {
                let step = 1e-6;
                let fd = (e.value(&[z + step]).unwrap() - e.value(&[z - step]).unwrap()) / (2.0 * step);
                assert_abs_diff_eq!(e.gradient(&[z]).unwrap()[0], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn encode_inverts_decode() {
        for fam in [DecoderFamily::Diagonal, DecoderFamily::Tanh] {
            let h = AbstractionHierarchy::geometric(fam, 0.7, 3, 2).unwrap();
            let z = [0.3, -1.1];
            for a in 0..=3 {
                let back = h.encode(a, &h.decode(a, &z).unwrap()).unwrap();
                assert_abs_diff_eq!(back[0], z[0], epsilon = 1e-12);
                assert_abs_diff_eq!(back[1], z[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_memory_hessian_scales_with_c_squared() {
        let m = MemorySet::new(vec![vec![0.0, 0.0]], vec![0]).unwrap();
        let base = EnergyLandscape::new(m, 1.0).unwrap();
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.8, 0.6], 2).unwrap();
        let r = smoothness_report(&h, &base, 16, 1.0, 5).unwrap();
        for (row, expected) in r.iter().zip([1.0, 0.64, 0.36]) {
            assert_abs_diff_eq!(row.hessian_norm_est, expected, epsilon = 1e-3);
            assert_abs_diff_eq!(row.lipschitz_est, expected, epsilon = 1e-3);
        }
    }

    #[test]
    fn smoothness_rejects_single_probe() {
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0], 1).unwrap();
        assert!(smoothness_report(&h, &two_point(1.0), 1, 1.0, 0).is_err());
    }

    #[test]
    fn diagonal_and_identity_jacobian_norms() {
        let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.7], 3).unwrap();
        assert_abs_diff_eq!(jacobian_norm_probe(&h, 1, 32, 1).unwrap(), 0.7, epsilon = 1e-4);
        assert_abs_diff_eq!(jacobian_norm_probe(&h, 0, 32, 1).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn tanh_jacobian_norm_bounded_by_sup_derivative() {
        let c = 0.6;
        let h = AbstractionHierarchy::new(DecoderFamily::Tanh, vec![1.0, c], 2).unwrap();
        let j = jacobian_norm_probe(&h, 1, 64, 3).unwrap();
        // d/dz c tanh(z) = c sech^2 z, maximal (= c) at z = 0
        assert!(j <= c + 1e-9, "{j}");
        assert!(j > 0.5 * c);
        let at_zero = jacobian_fd(&h, 1, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(operator_norm(&at_zero), c, epsilon = 1e-8);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
        assert_eq!(reflect(-7, 3), 0);
    }

    #[test]
    fn smoothing_constant_grid_is_identity() {
        let g = RealGrid::from_fn(5, 6, |_, _| 2.5);
        let s = grid_smooth(&g, 1.3).unwrap();
        for v in s.data() {
            assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn spike_center_equals_kernel_center_weight() {
        let g = RealGrid::from_fn(9, 9, |r, c| if r == 4 && c == 4 { 1.0 } else { 0.0 });
        let s = grid_smooth(&g, 1.0).unwrap();
        // independent 7x7 kernel, normalized in 2-D directly
        let mut total = 0.0;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                total += (-((i * i + j * j) as f64) / 2.0).exp();
            }
        }
        assert_abs_diff_eq!(s.get(4, 4), 1.0 / total, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_grids_rejected() {
        let g = RealGrid::from_fn(2, 5, |_, _| 0.0);
        assert!(grid_smooth(&g, 1.0).is_err());
        let g = RealGrid::from_fn(3, 3, |_, _| 0.0);
        assert!(grid_smooth(&g, 0.0).is_err());
        assert!(RealGrid::new(2, 2, vec![0.0; 3]).is_err());
    }
}
