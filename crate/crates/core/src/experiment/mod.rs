//! End-to-end basin experiments: training-set sampling, truth labeling,
//! prediction on a grid of initial conditions, sweeps and persistence.

mod config;
mod persist;
mod render;
mod sweep;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, GridSpec, Seeds, SystemChoice};
pub use persist::{meta_path, ModelBundle, BASIN_SCHEMA_VERSION, BUNDLE_SCHEMA_VERSION};
pub use render::{outcome_color, render_basin_map, write_ppm, PALETTE_BASINS, SPURIOUS_COLOR, UNRESOLVED_COLOR, WRONG_COLOR};
pub use sweep::{run_sweep, SweepAxes, SweepRow, SweepTable};

use crate::classify::{
    classify_chaotic_with, classify_fixed_point, score, Assignment, BasinOutcome, KernelMixture, Metrics,
};
use crate::error::{Error, Result};
use crate::reservoir::{build_reservoir, Reservoir};
use crate::systems::SystemDef;
use crate::timeseries::TimeSeries;
use crate::training::{train_with_report, Readout};

/// Truth integration is extended up to this many horizons before falling
/// back to the nearest attractor.
pub const TRUTH_EXTENSION_FACTOR: usize = 10;

/// Which signal is about to enter the reservoir, for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalRole {
    Training(usize),
    Test(usize),
}

/// System plus the precomputed pieces needed to label its trajectories.
pub struct Labeler {
    pub sys: SystemDef,
    refs: Vec<KernelMixture>,
    full: Vec<usize>,
}

impl Labeler {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let sys = cfg.system.build();
        let refs = sys
            .attractors
            .iter()
            .filter_map(|a| a.reference())
            .map(|r| cfg.criteria.kl.mixture(r.values(), r.dim()))
            .collect::<Result<Vec<_>>>()?;
        let full = (0..sys.dim()).collect();
        Ok(Labeler { sys, refs, full })
    }

    pub fn n_basins(&self) -> usize {
        self.sys.attractors.len()
    }

    fn is_chaotic(&self) -> bool {
        !self.refs.is_empty()
    }

    /// Assigns a trajectory made of the `observed` components.
    pub fn assign(&self, traj: &TimeSeries, cfg: &ExperimentConfig, observed: &[usize]) -> Result<Assignment> {
        if self.is_chaotic() {
            if observed != self.full.as_slice() {
                return Err(Error::invalid("observed", "chaotic references need the full state"));
            }
            classify_chaotic_with(traj, &self.refs, &cfg.criteria)
        } else {
            classify_fixed_point(traj, &self.sys, &cfg.criteria, observed)
        }
    }

    /// Full-state trajectory of `n` samples from `x0` and the basin it ends
    /// in. Undecided trajectories are continued, then assigned to the
    /// nearest attractor.
    pub fn truth(&self, x0: &[f64], n: usize, cfg: &ExperimentConfig) -> Result<(TimeSeries, usize)> {
        let traj = self.sys.trajectory(x0, n)?;
        if let Assignment::Attractor(a) = self.assign(&traj, cfg, &self.full)? {
            return Ok((traj, a));
        }
        let mut end = traj.last().to_vec();
        let mut tail = traj.clone();
        for _ in 1..TRUTH_EXTENSION_FACTOR {
            tail = self.sys.trajectory(&end, n)?;
            if let Assignment::Attractor(a) = self.assign(&tail, cfg, &self.full)? {
                return Ok((traj, a));
            }
            end = tail.last().to_vec();
        }
        Ok((traj, self.nearest(&tail)))
    }

    fn nearest(&self, traj: &TimeSeries) -> usize {
        if self.is_chaotic() {
            // Lobe whose reference mean is closest to the tail mean.
            let mean = |s: &TimeSeries| -> Vec<f64> {
                let mut m = vec![0.0; s.dim()];
                for r in s.rows() {
                    m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                m.iter_mut().for_each(|a| *a /= s.len() as f64);
                m
            };
            let t = mean(traj);
            let means: Vec<Vec<f64>> = self
                .sys
                .attractors
                .iter()
                .filter_map(|a| a.reference())
                .map(mean)
                .collect();
            crate::classify::nearest_index(&t, means.iter().map(Vec::as_slice)).unwrap_or(0)
        } else {
            crate::classify::nearest_index(traj.last(), self.sys.fixed_points()).unwrap_or(0)
        }
    }
}

/// Uniform draw on the training square in the grid plane.
fn draw_ic<R: Rng>(rng: &mut R, cfg: &ExperimentConfig, half_width: f64, dim: usize) -> Vec<f64> {
    let a = rng.random_range(-half_width..=half_width);
    let b = rng.random_range(-half_width..=half_width);
    cfg.grid.embed([a, b], dim)
}

/// Full-state training trajectories; rejection sampling when restricted to a basin.
pub fn generate_training_trajectories(cfg: &ExperimentConfig, labeler: &Labeler) -> Result<Vec<TimeSeries>> {
    let sys = &labeler.sys;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.sampling);
    let cap = cfg.attempt_factor.saturating_mul(cfg.n_train);
    let mut out = Vec::with_capacity(cfg.n_train);
    let mut attempts = 0;
    while out.len() < cfg.n_train {
        if attempts >= cap {
            return Err(Error::SamplingExhausted {
                attempts,
                accepted: out.len(),
                wanted: cfg.n_train,
            });
        }
        attempts += 1;
        let x0 = draw_ic(&mut rng, cfg, cfg.train_half_width, sys.dim());
        let candidate = match cfg.restrict_to_basin {
            Some(basin) => labeler
                .truth(&x0, cfg.check_len.max(cfg.train_len), cfg)
                .map(|(traj, label)| (label == basin).then_some(traj)),
            None => sys.trajectory(&x0, cfg.train_len).map(Some),
        };
        // Escaping trajectories belong to no basin and are redrawn.
        let traj = match candidate {
            Ok(Some(traj)) => traj,
            Ok(None) | Err(Error::NonFinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        out.push(traj.slice(0, cfg.train_len)?);
    }
    Ok(out)
}

/// Training signals: the observed components of each training trajectory.
pub fn generate_training_set(cfg: &ExperimentConfig) -> Result<Vec<TimeSeries>> {
    cfg.validate()?;
    let labeler = Labeler::new(cfg)?;
    observe_all(&generate_training_trajectories(cfg, &labeler)?, &cfg.observed)
}

fn observe_all(trajs: &[TimeSeries], observed: &[usize]) -> Result<Vec<TimeSeries>> {
    trajs.iter().map(|t| t.select(observed)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub reservoir: Reservoir,
    pub readout: Readout,
    pub training_mse: f64,
}

impl TrainedModel {
    /// Forecast continuing from the end of `test_signal`; a blow-up yields `None`.
    pub fn predict(&self, test_signal: &TimeSeries, n_steps: usize) -> Result<Option<TimeSeries>> {
        match self.reservoir.forecast(&self.readout, test_signal, n_steps) {
            Ok(f) => Ok(Some(f)),
            Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub fn fit_model(cfg: &ExperimentConfig, signals: &[TimeSeries]) -> Result<TrainedModel> {
    let reservoir = build_reservoir(&cfg.reservoir)?;
    let report = train_with_report(&reservoir, signals, &cfg.train)?;
    Ok(TrainedModel {
        reservoir,
        readout: report.readout,
        training_mse: report.training_mse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinCell {
    pub ic: [f64; 2],
    pub truth: usize,
    pub outcome: BasinOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinMap {
    pub config: ExperimentConfig,
    pub n_basins: usize,
    pub cells: Vec<BasinCell>,
    pub metrics: Metrics,
}

impl BasinMap {
    pub fn resolution(&self) -> usize {
        self.config.grid.resolution
    }

    pub fn recompute_metrics(&self) -> Result<Metrics> {
        let outcomes: Vec<BasinOutcome> = self.cells.iter().map(|c| c.outcome).collect();
        let truth: Vec<usize> = self.cells.iter().map(|c| c.truth).collect();
        score(&outcomes, &truth, self.n_basins)
    }
}

/// Outcome for one initial condition: truth label plus the forecast from
/// its first `n_test` observed samples.
pub struct CellResult {
    pub truth: usize,
    pub outcome: BasinOutcome,
    pub test_signal: TimeSeries,
    pub forecast: Option<TimeSeries>,
}

pub fn evaluate_ic(
    cfg: &ExperimentConfig,
    labeler: &Labeler,
    model: &TrainedModel,
    x0: &[f64],
) -> Result<CellResult> {
    let (traj, truth) = labeler.truth(x0, cfg.horizon, cfg)?;
    let test_signal = traj.slice(0, cfg.n_test)?.select(&cfg.observed)?;
    let forecast = model.predict(&test_signal, cfg.horizon - cfg.n_test)?;
    let assignment = match &forecast {
        Some(f) => labeler.assign(f, cfg, &cfg.observed)?,
        None => Assignment::Unresolved,
    };
    Ok(CellResult {
        truth,
        outcome: BasinOutcome::compare(assignment, truth),
        test_signal,
        forecast,
    })
}

/// Truth labels of every grid cell; never touches a reservoir.
pub fn truth_grid(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let labeler = Labeler::new(cfg)?;
    (0..cfg.grid.n_cells())
        .into_par_iter()
        .map(|k| {
            let x0 = cfg.grid.embed(cfg.grid.cell(k), labeler.sys.dim());
            labeler.truth(&x0, cfg.horizon, cfg).map(|(_, t)| t)
        })
        .collect()
}

pub fn run_basin_experiment(cfg: &ExperimentConfig) -> Result<BasinMap> {
    run_basin_experiment_with_hook(cfg, &|_, _| {})
}

/// As [`run_basin_experiment`], calling `hook` on every signal before it
/// enters the reservoir.
pub fn run_basin_experiment_with_hook(
    cfg: &ExperimentConfig,
    hook: &(dyn Fn(SignalRole, &TimeSeries) + Sync),
) -> Result<BasinMap> {
    cfg.validate()?;
    let labeler = Labeler::new(cfg)?;
    let signals = observe_all(&generate_training_trajectories(cfg, &labeler)?, &cfg.observed)?;
    for (i, s) in signals.iter().enumerate() {
        hook(SignalRole::Training(i), s);
    }
    let model = fit_model(cfg, &signals)?;
    evaluate_grid(cfg, &labeler, &model, hook)
}

pub fn evaluate_grid(
    cfg: &ExperimentConfig,
    labeler: &Labeler,
    model: &TrainedModel,
    hook: &(dyn Fn(SignalRole, &TimeSeries) + Sync),
) -> Result<BasinMap> {
    let dim = labeler.sys.dim();
    let cells = (0..cfg.grid.n_cells())
        .into_par_iter()
        .map(|k| {
            let ic = cfg.grid.cell(k);
            let r = evaluate_ic(cfg, labeler, model, &cfg.grid.embed(ic, dim))?;
            hook(SignalRole::Test(k), &r.test_signal);
            Ok(BasinCell {
                ic,
                truth: r.truth,
                outcome: r.outcome,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_basins = labeler.n_basins();
    let outcomes: Vec<BasinOutcome> = cells.iter().map(|c| c.outcome).collect();
    let truth: Vec<usize> = cells.iter().map(|c| c.truth).collect();
    let metrics = score(&outcomes, &truth, n_basins)?;
    Ok(BasinMap {
        config: cfg.clone(),
        n_basins,
        cells,
        metrics,
    })
}

/// Draws initial conditions on the grid square until `per_basin` fall in
/// each basin; returns them grouped by basin.
pub fn sample_basin_ics(
    cfg: &ExperimentConfig,
    labeler: &Labeler,
    per_basin: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = labeler.n_basins();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = vec![Vec::new(); n];
    let cap = cfg.attempt_factor.saturating_mul(per_basin * n);
    let mut attempts = 0;
    while groups.iter().any(|g| g.len() < per_basin) {
        if attempts >= cap {
            return Err(Error::SamplingExhausted {
                attempts,
                accepted: groups.iter().map(Vec::len).sum(),
                wanted: per_basin * n,
            });
        }
        attempts += 1;
        let x0 = draw_ic(&mut rng, cfg, cfg.grid.half_width, labeler.sys.dim());
        let label = match labeler.truth(&x0, cfg.check_len, cfg) {
            Ok((_, label)) => label,
            Err(Error::NonFinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        if groups[label].len() < per_basin {
            groups[label].push(x0);
        }
    }
    Ok(groups)
}
