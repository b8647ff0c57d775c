//! Jitter-aware geostatistical inference for prevalence data.

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod fem;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod jitter;
pub mod mesh;
pub mod raster;
pub mod spde;
pub mod simulate;
pub mod sparse;
pub mod special;

pub use error::{Error, Result};
