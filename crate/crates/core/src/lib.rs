//! Reservoir computing for basin-of-attraction prediction in multistable
//! dynamical systems.

pub mod classify;
pub mod error;
pub mod experiment;
pub mod reservoir;
pub mod systems;
pub mod timeseries;
pub mod training;

pub use error::{Error, Result};
pub use reservoir::{build_reservoir, Reservoir, ReservoirSpec};
pub use timeseries::{Standardizer, TimeSeries};
pub use training::{train, Readout, TrainConfig};
