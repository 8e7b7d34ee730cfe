//! Sectioned TOML run configuration. Every key is optional except
//! `system.kind`; omitted keys take the per-system defaults.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use basin_rc::experiment::{ExperimentConfig, Seeds, SweepAxes, SystemChoice};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub criteria: CriteriaSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    pub simulate: Option<SimulateSection>,
    pub predict: Option<PredictSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: String,
    #[serde(default)]
    pub f0: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub components: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_r: Option<usize>,
    pub mean_degree: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub input_strength: Option<f64>,
    pub bias_strength: Option<f64>,
    pub leakage: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub n_trans: Option<usize>,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub batch_max_states: Option<usize>,
    pub standardize: Option<bool>,
    pub n_train: Option<usize>,
    pub length: Option<usize>,
    pub half_width: Option<f64>,
    /// Negative means "no restriction".
    pub restrict_to_basin: Option<i64>,
    pub check_len: Option<usize>,
    pub attempt_factor: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub resolution: Option<usize>,
    pub half_width: Option<f64>,
    pub axes: Option<[usize; 2]>,
    pub n_test: Option<usize>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSection {
    pub eps_c: Option<f64>,
    pub tail_len: Option<usize>,
    pub energy_barrier: Option<f64>,
    pub kl_threshold: Option<f64>,
    pub kl_tail: Option<usize>,
    pub kl_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub reservoir: Option<u64>,
    pub sampling: Option<u64>,
    pub noise: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub ic: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub ic: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_train: Vec<usize>,
    pub half_train: Vec<f64>,
    pub half_test: Vec<f64>,
    pub realizations: usize,
}

/// Seed values given on the command line; they win over the file.
#[derive(Debug, Default, Clone, Copy)]
pub struct SeedOverrides {
    pub reservoir: Option<u64>,
    pub sampling: Option<u64>,
    pub noise: Option<u64>,
}

pub fn read(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn parse(text: &str) -> Result<FileConfig> {
    toml::from_str(text).map_err(|e| anyhow!("{e}"))
}

impl FileConfig {
    pub fn system(&self) -> Result<SystemChoice> {
        SystemChoice::from_name(&self.system.kind, self.system.f0).ok_or_else(|| {
            anyhow!(
                "system.kind: unknown system `{}` (expected duffing, multi-well, magnetic-pendulum or lorenz)",
                self.system.kind
            )
        })
    }

    /// Defaults for the chosen system with every given key applied, then validated.
    pub fn experiment(&self, seeds: SeedOverrides) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::for_system(self.system()?);
        if let Some(c) = &self.observation.components {
            cfg = cfg.with_observed(c.clone());
        }
        let r = &self.reservoir;
        set(&mut cfg.reservoir.n_r, r.n_r);
        set(&mut cfg.reservoir.mean_degree, r.mean_degree);
        set(&mut cfg.reservoir.spectral_radius, r.spectral_radius);
        set(&mut cfg.reservoir.input_strength, r.input_strength);
        set(&mut cfg.reservoir.bias_strength, r.bias_strength);
        set(&mut cfg.reservoir.leakage, r.leakage);

        let t = &self.train;
        set(&mut cfg.train.n_trans, t.n_trans);
        set(&mut cfg.train.alpha, t.alpha);
        set(&mut cfg.train.eta, t.eta);
        set(&mut cfg.train.batch_max_states, t.batch_max_states);
        set(&mut cfg.train.standardize, t.standardize);
        set(&mut cfg.n_train, t.n_train);
        set(&mut cfg.train_len, t.length);
        set(&mut cfg.train_half_width, t.half_width);
        set(&mut cfg.check_len, t.check_len);
        set(&mut cfg.attempt_factor, t.attempt_factor);
        if let Some(b) = t.restrict_to_basin {
            cfg.restrict_to_basin = usize::try_from(b).ok();
        }

        let g = &self.test;
        set(&mut cfg.grid.resolution, g.resolution);
        set(&mut cfg.grid.half_width, g.half_width);
        set(&mut cfg.grid.axes, g.axes);
        set(&mut cfg.n_test, g.n_test);
        set(&mut cfg.horizon, g.horizon);

        let c = &self.criteria;
        set(&mut cfg.criteria.eps_c, c.eps_c);
        set(&mut cfg.criteria.tail_len, c.tail_len);
        set(&mut cfg.criteria.kl_threshold, c.kl_threshold);
        set(&mut cfg.criteria.kl_tail, c.kl_tail);
        set(&mut cfg.criteria.kl.n_samples, c.kl_samples);
        if c.energy_barrier.is_some() {
            cfg.criteria.energy_barrier = c.energy_barrier;
        }

        let s = &self.seeds;
        let base = Seeds::default();
        cfg.apply_seeds(Seeds {
            reservoir: seeds.reservoir.or(s.reservoir).unwrap_or(base.reservoir),
            sampling: seeds.sampling.or(s.sampling).unwrap_or(base.sampling),
            noise: seeds.noise.or(s.noise).unwrap_or(base.noise),
        });
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn simulate(&self) -> Result<&SimulateSection> {
        self.simulate.as_ref().ok_or_else(|| anyhow!("missing section [simulate] (fields ic, steps)"))
    }

    pub fn predict(&self) -> Result<&PredictSection> {
        self.predict.as_ref().ok_or_else(|| anyhow!("missing section [predict] (field ic)"))
    }

    pub fn sweep(&self) -> Result<(SweepAxes, usize)> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| anyhow!("missing section [sweep] (fields n_train, half_train, half_test, realizations)"))?;
        if s.realizations == 0 {
            bail!("sweep.realizations: must be >= 1");
        }
        Ok((
            SweepAxes {
                n_train: s.n_train.clone(),
                half_train: s.half_train.clone(),
                half_test: s.half_test.clone(),
            },
            s.realizations,
        ))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
