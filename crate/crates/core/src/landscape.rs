//! Labeled memory sets and the log-sum-exp energy they induce.
//!
//! The energy of a point is a soft minimum of squared distances to the
//! stored memories,
//!
//! ```text
//! E(x) = -(1/beta) * ln sum_i exp(-beta * |x - x_i|^2 / 2)
//! ```
//!
//! Its gradient is the residual `x - sum_i w_i(x) x_i`, where `w` is the
//! softmax of `-beta * |x - x_i|^2 / 2`. Those are the same weights a soft
//! k-NN uses with temperature `2 / beta`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::seed::{rng_for, Stream};
use crate::vecops;

/// Anything that can be descended: value and gradient on a fixed-dimension space.
pub trait Energy: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }
}

/// Labeled points standing in for the training data a model implicitly stores.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySet {
    points: Vec<Vec<f64>>,
    labels: Vec<u32>,
    dim: usize,
}

impl MemorySet {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("memory set must contain at least one point"));
        }
        if points.len() != labels.len() {
            return Err(Error::input(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::input("memory points must have dimension >= 1"));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            check_dim(dim, p.len())?;
            if !vecops::all_finite(p) {
                return Err(Error::input(format!("memory {i} has a non-finite coordinate")));
            }
            // -0.0 and 0.0 are the same point.
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::input(format!("memory {i} duplicates an earlier point")));
            }
        }
        Ok(Self {
            points,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Position of `label` within [`classes`](Self::classes).
    pub fn class_index(&self, label: u32) -> Option<usize> {
        self.classes().binary_search(&label).ok()
    }

    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for &l in &self.labels {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    }

    /// Training proportions, ordered like [`classes`](Self::classes).
    pub fn class_proportions(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().values().map(|&c| c as f64 / n).collect()
    }

    /// Most frequent label; ties go to the smaller label.
    pub fn majority_class(&self) -> u32 {
        let mut best = (0usize, 0u32);
        for (&label, &count) in &self.class_counts() {
            if count > best.0 {
                best = (count, label);
            }
        }
        best.1
    }

    pub fn centroid(&self) -> Vec<f64> {
        vecops::mean_point(&self.points)
    }

    /// Largest distance from the centroid to a memory.
    pub fn radius(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| vecops::dist(p, &c))
            .fold(0.0, f64::max)
    }

    /// Largest pairwise distance between memories.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(vecops::dist(&self.points[i], &self.points[j]));
            }
        }
        d
    }

    /// Index of the closest memory; distance ties go to the lower index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let d = vecops::sq_dist(x, p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Memory indices sorted by distance to `x`, ties by index.
    pub fn ranked_by_distance(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, vecops::sq_dist(x, p)))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.into_iter().map(|(i, s)| (i, s.sqrt())).collect()
    }

    /// Mean distance from `x` to its `k` nearest memories (k clamped to N).
    pub fn mean_knn_distance(&self, x: &[f64], k: usize) -> f64 {
        let ranked = self.ranked_by_distance(x);
        let k = k.clamp(1, ranked.len());
        ranked[..k].iter().map(|(_, d)| d).sum::<f64>() / k as f64
    }

    /// Applies `f` to every point, keeping labels.
    pub fn map_points(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<MemorySet> {
        MemorySet::new(
            self.points.iter().map(|p| f(p)).collect(),
            self.labels.clone(),
        )
    }

    pub fn translated(&self, shift: &[f64]) -> Result<MemorySet> {
        check_dim(self.dim, shift.len())?;
        self.map_points(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
    }

    /// Reads `x_0,...,x_{d-1},label` CSV (header required).
    pub fn read_csv<R: Read>(reader: R) -> Result<MemorySet> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        if ncol < 2 || &headers[ncol - 1] != "label" {
            return Err(Error::input("memory CSV needs columns x_0..x_{d-1},label"));
        }
        for (i, h) in headers.iter().take(ncol - 1).enumerate() {
            if h != format!("x_{i}") {
                return Err(Error::input(format!(
                    "memory CSV column {i} should be x_{i}, found {h:?}"
                )));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut p = Vec::with_capacity(ncol - 1);
            for field in rec.iter().take(ncol - 1) {
                p.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::input(format!("row {}: bad coordinate {field:?}", row + 1))
                })?);
            }
            let l = rec[ncol - 1].trim();
            labels.push(l.parse::<u32>().map_err(|_| {
                Error::input(format!("row {}: label must be a non-negative integer, got {l:?}", row + 1))
            })?);
            points.push(p);
        }
        MemorySet::new(points, labels)
    }

    pub fn load_csv(path: &Path) -> Result<MemorySet> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MemorySet::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x_{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (p, l) in self.points.iter().zip(&self.labels) {
            let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<memory csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Synthetic memory-set recipe: one Gaussian blob per class.
///
/// Class `c` is centered at `separation * (c - (K-1)/2)` along axis 0. With
/// `mirror` set (two equally sized classes only) class 1 is the point
/// reflection of class 0 through the origin, which makes the set exactly
/// class-symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub class_counts: Vec<usize>,
    pub dim: usize,
    pub separation: f64,
    pub std: f64,
    #[serde(default)]
    pub mirror: bool,
}

impl BlobSpec {
    pub fn generate(&self, seed: u64) -> Result<MemorySet> {
        if self.dim == 0 || self.class_counts.is_empty() || self.class_counts.iter().all(|&c| c == 0) {
            return Err(Error::input("blob spec needs dim >= 1 and at least one point"));
        }
        if !(self.std > 0.0) || !self.separation.is_finite() {
            return Err(Error::input("blob std must be positive and separation finite"));
        }
        let k = self.class_counts.len();
        if self.mirror && (k != 2 || self.class_counts[0] != self.class_counts[1]) {
            return Err(Error::input("mirror requires exactly two classes of equal size"));
        }
        let mut rng = rng_for(seed, Stream::Generator, 0);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in self.class_counts.iter().enumerate() {
            if self.mirror && c == 1 {
                let reflected: Vec<Vec<f64>> =
                    points.iter().map(|p: &Vec<f64>| p.iter().map(|v| -v).collect()).collect();
                points.extend(reflected);
                labels.extend(std::iter::repeat(1).take(n));
                continue;
            }
            let offset = self.separation * (c as f64 - (k as f64 - 1.0) / 2.0);
            for _ in 0..n {
                let mut p: Vec<f64> = (0..self.dim)
                    .map(|_| self.std * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect();
                p[0] += offset;
                points.push(p);
                labels.push(c as u32);
            }
        }
        MemorySet::new(points, labels)
    }
}

/// `n` memories uniform in `[-half_width, half_width]^dim`, labels cycling over `n_classes`.
pub fn uniform_memory_set(
    n: usize,
    dim: usize,
    half_width: f64,
    n_classes: u32,
    seed: u64,
) -> Result<MemorySet> {
    if n == 0 || dim == 0 || n_classes == 0 {
        return Err(Error::input("uniform memory set needs n, dim, n_classes >= 1"));
    }
    let mut rng = rng_for(seed, Stream::Generator, 1);
    let points = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-half_width..half_width))
                .collect()
        })
        .collect();
    let labels = (0..n as u32).map(|i| i % n_classes).collect();
    MemorySet::new(points, labels)
}

/// Log-sum-exp energy over a memory set at inverse temperature `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLandscape {
    memories: MemorySet,
    beta: f64,
    /// `ln m_i` for memories carrying a multiplicity; `None` means all ones.
    log_multiplicity: Option<Vec<f64>>,
}

impl EnergyLandscape {
    pub fn new(memories: MemorySet, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::input(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self {
            memories,
            beta,
            log_multiplicity: None,
        })
    }

    /// Memory `i` counts `counts[i]` times, exactly as if it were duplicated.
    pub fn with_multiplicities(memories: MemorySet, counts: &[u32], beta: f64) -> Result<Self> {
        if counts.len() != memories.len() {
            return Err(Error::input("one multiplicity per memory required"));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::input("multiplicities must be >= 1"));
        }
        let mut l = EnergyLandscape::new(memories, beta)?;
        if counts.iter().any(|&c| c != 1) {
            l.log_multiplicity = Some(counts.iter().map(|&c| (c as f64).ln()).collect());
        }
        Ok(l)
    }

    pub fn memories(&self) -> &MemorySet {
        &self.memories
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Same memories, different sharpness.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut l = EnergyLandscape::new(self.memories.clone(), beta)?;
        l.log_multiplicity = self.log_multiplicity.clone();
        Ok(l)
    }

    pub fn dim(&self) -> usize {
        self.memories.dim()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut l: Vec<f64> = self
            .memories
            .points()
            .iter()
            .map(|p| -0.5 * self.beta * vecops::sq_dist(x, p))
            .collect();
        if let Some(lm) = &self.log_multiplicity {
            l.iter_mut().zip(lm).for_each(|(v, m)| *v += m);
        }
        l
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let logits = self.logits(x);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        Ok(-(m + s.ln()) / self.beta)
    }

    /// Softmax weights `w_i(x)`; non-negative, summing to one.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(softmax(&self.logits(x)))
    }

    /// `sum_i w_i(x) x_i`
    pub fn weighted_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let mut m = vec![0.0; self.dim()];
        for (wi, p) in w.iter().zip(self.memories.points()) {
            for (mj, pj) in m.iter_mut().zip(p) {
                *mj += wi * pj;
            }
        }
        Ok(m)
    }

    pub fn grad_energy(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.weighted_mean(x)?;
        Ok(x.iter().zip(&m).map(|(a, b)| a - b).collect())
    }

    /// `energy` and `grad_energy` from one pass over the memories; same
    /// arithmetic, so the results are bit-identical to the separate calls.
    pub fn energy_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        let logits = self.logits(x);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        let energy = -(m + s.ln()) / self.beta;
        w.iter_mut().for_each(|v| *v /= s);
        let mut mean = vec![0.0; self.dim()];
        for (wi, p) in w.iter().zip(self.memories.points()) {
            for (mj, pj) in mean.iter_mut().zip(p) {
                *mj += wi * pj;
            }
        }
        Ok((energy, x.iter().zip(&mean).map(|(a, b)| a - b).collect()))
    }

    /// Class-aggregated weights at `x`, ordered like `memories().classes()`.
    pub fn class_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let classes = self.memories.classes();
        let mut out = vec![0.0; classes.len()];
        for (wi, &l) in w.iter().zip(self.memories.labels()) {
            let k = classes.binary_search(&l).expect("label present");
            out[k] += wi;
        }
        Ok(out)
    }

    pub fn hessian_fd(&self, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
        hessian_fd(self, x, h)
    }
}

impl Energy for EnergyLandscape {
    fn dim(&self) -> usize {
        self.memories.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.energy(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grad_energy(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.energy_and_grad(x)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// Central differences of the gradient, column by column, before symmetrization.
pub fn hessian_fd_raw<E: Energy + ?Sized>(energy: &E, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::input(format!("finite-difference step must be positive, got {h}")));
    }
    let d = energy.dim();
    check_dim(d, x.len())?;
    let mut hess = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        let gp = energy.gradient(&xp)?;
        xp[j] = x[j] - h;
        let gm = energy.gradient(&xp)?;
        xp[j] = x[j];
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(hess)
}

/// Symmetric finite-difference Hessian `(H + H^T) / 2`.
pub fn hessian_fd<E: Energy + ?Sized>(energy: &E, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let raw = hessian_fd_raw(energy, x, h)?;
    Ok((&raw + raw.transpose()) * 0.5)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
