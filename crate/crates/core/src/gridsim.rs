//! Two-class grids coarsened by 2x2 majority vote.
//!
//! Each coarsening replaces a 2x2 block by its majority class, with a fair
//! coin on 2-2 ties. For iid cells with majority share `p` the expected share
//! after one step is `m(p) = p^4 + 4p^3(1-p) + 3p^2(1-p)^2`, and `m(p) > p`
//! on `(1/2, 1)`: the majority grows with every level.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, derive_seed2, rng_for, Rng, Stream};
use rand::SeedableRng;

pub const BLUE: u8 = 0;
pub const RED: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGrid {
    side: usize,
    cells: Vec<u8>,
}

impl ClassGrid {
    pub fn new(side: usize, cells: Vec<u8>) -> Result<Self> {
        check_side(side)?;
        if cells.len() != side * side {
            return Err(Error::input(format!("expected {} cells, got {}", side * side, cells.len())));
        }
        if cells.iter().any(|&c| c > RED) {
            return Err(Error::input("grid cells must be 0 (blue) or 1 (red)"));
        }
        Ok(Self { side, cells })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.side + c]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn red_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == RED).count()
    }

    pub fn red_share(&self) -> f64 {
        self.red_count() as f64 / self.cells.len() as f64
    }

    /// Plain-text PBM (P1); red cells are drawn black.
    pub fn write_pbm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "P1")?;
        writeln!(w, "{} {}", self.side, self.side)?;
        for row in self.cells.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|&c| if c == RED { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::input(format!("grid side must be a power of two, got {side}")));
    }
    Ok(())
}

/// iid Bernoulli(`p_red`) cells; each row has its own RNG stream.
pub fn init_grid(side: usize, p_red: f64, seed: u64) -> Result<ClassGrid> {
    check_side(side)?;
    if side < 2 {
        return Err(Error::input("grid side must be >= 2"));
    }
    if !(0.0..=1.0).contains(&p_red) {
        return Err(Error::input(format!("p_red must lie in [0, 1], got {p_red}")));
    }
    let cells: Vec<u8> = (0..side)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut rng = rng_for(seed, Stream::GridInit, r as u64);
            (0..side)
                .map(|_| if rng.random::<f64>() < p_red { RED } else { BLUE })
                .collect::<Vec<_>>()
        })
        .collect();
    ClassGrid::new(side, cells)
}

/// One 2x2 majority step. Ties draw from a stream keyed by block coordinates.
pub fn coarsen(grid: &ClassGrid, seed: u64) -> Result<ClassGrid> {
    if grid.side < 2 {
        return Err(Error::input("cannot coarsen a 1x1 grid"));
    }
    let half = grid.side / 2;
    let cells: Vec<u8> = (0..half * half)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / half, k % half);
            let reds = grid.get(2 * i, 2 * j) as u32
                + grid.get(2 * i, 2 * j + 1) as u32
                + grid.get(2 * i + 1, 2 * j) as u32
                + grid.get(2 * i + 1, 2 * j + 1) as u32;
            match reds {
                3 | 4 => RED,
                0 | 1 => BLUE,
                _ => {
                    let mut rng = Rng::seed_from_u64(derive_seed2(seed, Stream::GridTie, i as u64, j as u64));
                    if rng.random::<bool>() {
                        RED
                    } else {
                        BLUE
                    }
                }
            }
        })
        .collect();
    ClassGrid::new(half, cells)
}

/// Expected red share after one step from iid cells with red share `p`.
pub fn one_step_map(p: f64) -> f64 {
    let q = 1.0 - p;
    p.powi(4) + 4.0 * p.powi(3) * q + 3.0 * p * p * q * q
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub level: usize,
    pub red_share: f64,
    pub side: usize,
}

/// The initial grid followed by `levels` coarsenings of it.
pub fn coarsening_stack(side: usize, p_red: f64, levels: usize, seed: u64) -> Result<Vec<ClassGrid>> {
    check_side(side)?;
    if levels > side.trailing_zeros() as usize {
        return Err(Error::input(format!(
            "{levels} levels exceed log2(side) = {}",
            side.trailing_zeros()
        )));
    }
    let mut out = vec![init_grid(side, p_red, seed)?];
    for level in 1..=levels {
        let next = coarsen(&out[level - 1], derive_seed(seed, Stream::GridTie, level as u64))?;
        out.push(next);
    }
    Ok(out)
}

/// Red share at levels `0..=levels`, coarsening once per level.
pub fn amplification_curve(side: usize, p_red: f64, levels: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    Ok(coarsening_stack(side, p_red, levels, seed)?
        .iter()
        .enumerate()
        .map(|(level, g)| CurvePoint {
            level,
            red_share: g.red_share(),
            side: g.side(),
        })
        .collect())
}

/// Binomial standard error of a share measured over `cells` cells.
pub fn share_stderr(p: f64, cells: usize) -> f64 {
    (p * (1.0 - p) / cells as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_validation() {
        assert!(init_grid(6, 0.5, 0).is_err());
        assert!(init_grid(1, 0.5, 0).is_err());
        assert!(init_grid(8, 1.5, 0).is_err());
        let g = ClassGrid::new(1, vec![1]).unwrap();
        assert!(coarsen(&g, 0).is_err());
        assert!(amplification_curve(8, 0.5, 4, 0).is_err());
    }

    #[test]
    fn all_red_stays_red() {
        let g = init_grid(16, 1.0, 3).unwrap();
        assert_eq!(g.red_share(), 1.0);
        let c = coarsen(&g, 9).unwrap();
        assert_eq!(c.side(), 8);
        assert_eq!(c.red_share(), 1.0);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        assert_eq!(init_grid(64, 0.3, 11).unwrap(), init_grid(64, 0.3, 11).unwrap());
        assert_ne!(init_grid(64, 0.3, 11).unwrap(), init_grid(64, 0.3, 12).unwrap());
    }

    #[test]
    fn majority_rule_per_block() {
        let g = ClassGrid::new(2, vec![1, 1, 0, 1]).unwrap();
        assert_eq!(coarsen(&g, 0).unwrap().cells(), &[RED]);
        let g = ClassGrid::new(2, vec![0, 1, 0, 0]).unwrap();
        assert_eq!(coarsen(&g, 0).unwrap().cells(), &[BLUE]);
    }

    #[test]
    fn pbm_dump() {
        let g = ClassGrid::new(2, vec![1, 0, 0, 1]).unwrap();
        let mut buf = Vec::new();
        g.write_pbm(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "P1\n2 2\n1 0\n0 1\n");
    }
}
