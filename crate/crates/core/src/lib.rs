//! Power-flow balancing on line graphs.
//!
//! The crate covers the full pipeline: reading grid cases, solving AC and DC
//! power flow, turning solved grids into line-graph learning samples,
//! generating randomized datasets, and training/evaluating graph neural
//! network and MLP regressors that predict branch power and current.

pub mod ac;
pub mod case_io;
pub mod cases;
pub mod dc;
pub mod error;
pub mod grid;
pub mod line_graph;
pub mod metrics;
pub mod models;
pub mod sampler;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{Branch, BranchFlow, Bus, BusType, Generator, Grid};
