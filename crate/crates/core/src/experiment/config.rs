use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ConvergenceCriteria;
use crate::error::{Error, Result};
use crate::reservoir::ReservoirSpec;
use crate::systems::{self, SystemDef};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemChoice {
    Duffing { f0: f64 },
    MultiWell,
    MagneticPendulum,
    Lorenz,
}

impl SystemChoice {
    pub fn build(&self) -> SystemDef {
        match *self {
            SystemChoice::Duffing { f0 } => systems::duffing(f0),
            SystemChoice::MultiWell => systems::multi_well(),
            SystemChoice::MagneticPendulum => systems::magnetic_pendulum(),
            SystemChoice::Lorenz => systems::multistable_lorenz(),
        }
    }

    pub fn is_chaotic(&self) -> bool {
        matches!(self, SystemChoice::Lorenz)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemChoice::Duffing { .. } => "duffing",
            SystemChoice::MultiWell => "multi-well",
            SystemChoice::MagneticPendulum => "magnetic-pendulum",
            SystemChoice::Lorenz => "lorenz",
        }
    }

    pub fn from_name(name: &str, f0: f64) -> Option<Self> {
        Some(match name {
            "duffing" => SystemChoice::Duffing { f0 },
            "multi-well" | "wells" => SystemChoice::MultiWell,
            "magnetic-pendulum" | "pendulum" => SystemChoice::MagneticPendulum,
            "lorenz" => SystemChoice::Lorenz,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub reservoir: u64,
    pub sampling: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            reservoir: 1,
            sampling: 2,
            noise: 3,
        }
    }
}

/// Square grid of initial conditions in the plane spanned by two state
/// components; all other components are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub half_width: f64,
    pub axes: [usize; 2],
}

impl GridSpec {
    /// Coordinate of grid index `i` along either axis, from −half_width to
    /// +half_width inclusive.
    pub fn coordinate(&self, i: usize) -> f64 {
        if self.resolution == 1 {
            return 0.0;
        }
        -self.half_width + 2.0 * self.half_width * i as f64 / (self.resolution - 1) as f64
    }

    /// Cell `k` in row-major order: `k = row · resolution + col`, with the
    /// column along `axes[0]` and the row along `axes[1]`.
    pub fn cell(&self, k: usize) -> [f64; 2] {
        [self.coordinate(k % self.resolution), self.coordinate(k / self.resolution)]
    }

    pub fn n_cells(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn embed(&self, plane: [f64; 2], dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        x[self.axes[0]] = plane[0];
        x[self.axes[1]] = plane[1];
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemChoice,
    /// Observed state components, in the order they reach the reservoir.
    pub observed: Vec<usize>,
    pub reservoir: ReservoirSpec,
    pub train: TrainConfig,
    pub n_train: usize,
    /// Samples kept from each training trajectory.
    pub train_len: usize,
    pub train_half_width: f64,
    pub restrict_to_basin: Option<usize>,
    /// Samples integrated when checking a candidate's basin.
    pub check_len: usize,
    /// Rejection sampling gives up after `attempt_factor · n_train` draws.
    pub attempt_factor: usize,
    pub grid: GridSpec,
    pub n_test: usize,
    /// Total samples from the initial condition to the end of the forecast.
    pub horizon: usize,
    pub criteria: ConvergenceCriteria,
    pub seeds: Seeds,
}

fn reservoir_spec(n_r: usize, sigma: f64, n_in: usize) -> ReservoirSpec {
    ReservoirSpec {
        n_r,
        mean_degree: 10.0,
        spectral_radius: 0.4,
        input_strength: sigma,
        bias_strength: 0.5,
        leakage: 1.0,
        n_in,
        seed: 1,
    }
}

fn train_config(n_trans: usize, alpha: f64, eta: f64) -> TrainConfig {
    TrainConfig {
        n_trans,
        alpha,
        eta,
        ..TrainConfig::default()
    }
}

impl ExperimentConfig {
    /// Default settings for `system`, with all components observed.
    pub fn for_system(system: SystemChoice) -> Self {
        let seeds = Seeds::default();
        let mut cfg = match system {
            SystemChoice::Duffing { f0 } => ExperimentConfig {
                system,
                observed: vec![0, 1],
                reservoir: reservoir_spec(200, 1.0, 2),
                train: train_config(5, 1e-12, 1e-5),
                n_train: 10,
                train_len: 500,
                train_half_width: 10.0,
                restrict_to_basin: Some(0),
                check_len: 4000,
                attempt_factor: 1000,
                grid: GridSpec {
                    resolution: 50,
                    half_width: 10.0,
                    axes: [0, 1],
                },
                n_test: 10,
                horizon: 2000,
                criteria: ConvergenceCriteria {
                    energy_barrier: if f0 == 0.0 { Some(0.0) } else { None },
                    ..ConvergenceCriteria::fixed_point(0.5)
                },
                seeds,
            },
            SystemChoice::MultiWell => ExperimentConfig {
                system,
                observed: vec![0, 1],
                reservoir: reservoir_spec(200, 1.0, 2),
                train: train_config(5, 1e-12, 1e-5),
                n_train: 25,
                train_len: 500,
                train_half_width: 4.0,
                restrict_to_basin: None,
                check_len: 4000,
                attempt_factor: 1000,
                grid: GridSpec {
                    resolution: 10,
                    half_width: 4.0,
                    axes: [0, 1],
                },
                n_test: 5,
                horizon: 2000,
                criteria: ConvergenceCriteria::fixed_point(0.5),
                seeds,
            },
            SystemChoice::MagneticPendulum => ExperimentConfig {
                system,
                observed: vec![0, 1],
                reservoir: reservoir_spec(2500, 5.0, 2),
                train: train_config(25, 1e-10, 1e-3),
                n_train: 100,
                train_len: 500,
                train_half_width: 1.5,
                restrict_to_basin: Some(0),
                check_len: 4000,
                attempt_factor: 1000,
                grid: GridSpec {
                    resolution: 60,
                    half_width: 1.5,
                    axes: [0, 1],
                },
                n_test: 100,
                horizon: 2000,
                criteria: ConvergenceCriteria::fixed_point(0.25),
                seeds,
            },
            SystemChoice::Lorenz => ExperimentConfig {
                system,
                observed: vec![0, 1, 2],
                reservoir: reservoir_spec(500, 0.5, 3),
                train: train_config(5, 1e-10, 1e-3),
                n_train: 1,
                train_len: 5000,
                train_half_width: 20.0,
                restrict_to_basin: Some(0),
                check_len: 5000,
                attempt_factor: 1000,
                grid: GridSpec {
                    resolution: 100,
                    half_width: 20.0,
                    axes: [1, 2],
                },
                n_test: 50,
                horizon: 5000,
                criteria: ConvergenceCriteria::chaotic(1.0),
                seeds,
            },
        };
        cfg.apply_seeds(seeds);
        cfg
    }

    /// Observes only `components`, resizing the reservoir input to match.
    pub fn with_observed(mut self, components: Vec<usize>) -> Self {
        self.reservoir.n_in = components.len();
        self.observed = components;
        self
    }

    pub fn apply_seeds(&mut self, seeds: Seeds) {
        self.seeds = seeds;
        self.reservoir.seed = seeds.reservoir;
        self.train.seed = seeds.noise;
    }

    pub fn validate(&self) -> Result<()> {
        let dim = match self.system {
            SystemChoice::Duffing { .. } | SystemChoice::MultiWell => 2,
            SystemChoice::MagneticPendulum => 4,
            SystemChoice::Lorenz => 3,
        };
        if self.observed.is_empty() || self.observed.iter().any(|&j| j >= dim) {
            return Err(Error::invalid("observed", format!("components must be in 0..{dim}")));
        }
        if self.reservoir.n_in != self.observed.len() {
            return Err(Error::invalid(
                "reservoir.n_in",
                format!("must equal the number of observed components ({})", self.observed.len()),
            ));
        }
        self.reservoir.validate()?;
        self.train.validate()?;
        self.criteria.validate()?;
        if self.n_train == 0 {
            return Err(Error::invalid("n_train", "must be >= 1"));
        }
        if self.train_len < self.train.n_trans + 2 {
            return Err(Error::invalid("train_len", "too short for the transient"));
        }
        if self.grid.resolution < 1 {
            return Err(Error::invalid("grid.resolution", "must be >= 1"));
        }
        if self.grid.axes.iter().any(|&a| a >= dim) || self.grid.axes[0] == self.grid.axes[1] {
            return Err(Error::invalid("grid.axes", "must be two distinct state components"));
        }
        if !(self.grid.half_width > 0.0) || !(self.train_half_width > 0.0) {
            return Err(Error::invalid("half_width", "must be > 0"));
        }
        if self.n_test < 1 {
            return Err(Error::invalid("n_test", "must be >= 1"));
        }
        if self.horizon <= self.n_test {
            return Err(Error::InvalidWindow {
                n_test: self.n_test,
                horizon: self.horizon,
            });
        }
        if self.attempt_factor == 0 {
            return Err(Error::invalid("attempt_factor", "must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
