//! Associative-memory energy landscapes and the class amplification that
//! appears when they are viewed at coarser levels of abstraction.

pub mod abstraction;
pub mod census;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gridsim;
pub mod knn;
pub mod landscape;
pub mod oddsmodel;
pub mod runner;
pub mod seed;
pub mod table;
pub mod vecops;

pub use error::{Error, Result};
pub use landscape::{Energy, EnergyLandscape, MemorySet};
