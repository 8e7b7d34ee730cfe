use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persist::write_file;
use super::{run_basin_experiment, ExperimentConfig, Seeds};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub n_train: Vec<usize>,
    pub half_train: Vec<f64>,
    pub half_test: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n_train: usize,
    pub half_train: f64,
    pub half_test: f64,
    pub realization: usize,
    /// NaN for a failed cell.
    pub f_c: f64,
    pub f_spurious: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "n_train,half_train,half_test,realization,f_c,f_spurious";

/// Seeds for realization `r`: the reservoir and sampling streams advance
/// with `r`, the noise stream stays fixed.
pub fn realization_seeds(base: Seeds, r: usize) -> Seeds {
    Seeds {
        reservoir: base.reservoir.wrapping_add(r as u64),
        sampling: base.sampling.wrapping_add(r as u64),
        noise: base.noise,
    }
}

/// Full factorial over `axes`, `realizations` independent runs per cell.
pub fn run_sweep(cfg: &ExperimentConfig, axes: &SweepAxes, realizations: usize) -> Result<SweepTable> {
    if axes.n_train.is_empty() || axes.half_train.is_empty() || axes.half_test.is_empty() || realizations == 0 {
        return Err(Error::invalid("axes", "every axis and the realization count must be nonempty"));
    }
    let mut jobs = Vec::new();
    for &n_train in &axes.n_train {
        for &half_train in &axes.half_train {
            for &half_test in &axes.half_test {
                for realization in 0..realizations {
                    jobs.push((n_train, half_train, half_test, realization));
                }
            }
        }
    }
    let rows = jobs
        .into_par_iter()
        .map(|(n_train, half_train, half_test, realization)| {
            let mut c = cfg.clone();
            c.n_train = n_train;
            c.train_half_width = half_train;
            c.grid.half_width = half_test;
            c.apply_seeds(realization_seeds(cfg.seeds, realization));
            let (f_c, f_spurious, error) = match run_basin_experiment(&c) {
                Ok(map) => (map.metrics.f_c, map.metrics.f_spurious, None),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            SweepRow {
                n_train,
                half_train,
                half_test,
                realization,
                f_c,
                f_spurious,
                error,
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.n_train, r.half_train, r.half_test, r.realization, r.f_c, r.f_spurious
            )
            .unwrap();
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SweepTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != SWEEP_HEADER {
            return Err(Error::SchemaMismatch {
                expected: SWEEP_HEADER.into(),
                found: header.into(),
            });
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::parse(path, format!("bad sweep row {}", i + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(bad());
                }
                let f_c: f64 = f[4].parse().map_err(|_| bad())?;
                Ok(SweepRow {
                    n_train: f[0].parse().map_err(|_| bad())?,
                    half_train: f[1].parse().map_err(|_| bad())?,
                    half_test: f[2].parse().map_err(|_| bad())?,
                    realization: f[3].parse().map_err(|_| bad())?,
                    f_c,
                    f_spurious: f[5].parse().map_err(|_| bad())?,
                    error: f_c.is_nan().then(|| "failed".to_string()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepTable { rows })
    }

    /// Mean f_c over the successful realizations of one cell.
    pub fn mean_f_c(&self, n_train: usize, half_train: f64, half_test: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n_train == n_train && r.half_train == half_train && r.half_test == half_test)
            .filter(|r| r.error.is_none())
            .map(|r| r.f_c)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_seeds_differ() {
        let base = Seeds::default();
        let a = realization_seeds(base, 0);
        let b = realization_seeds(base, 1);
        assert_eq!(a, base);
        assert_ne!(a.reservoir, b.reservoir);
        assert_ne!(a.sampling, b.sampling);
    }

    #[test]
    fn csv_round_trip() {
        let table = SweepTable {
            rows: vec![SweepRow {
                n_train: 2,
                half_train: 4.0,
                half_test: 10.0,
                realization: 1,
                f_c: 0.75,
                f_spurious: 0.0625,
                error: None,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        table.save(&p).unwrap();
        assert_eq!(SweepTable::load(&p).unwrap(), table);
        assert_eq!(table.mean_f_c(2, 4.0, 10.0), Some(0.75));
    }

    #[test]
    fn empty_axes_rejected() {
        let cfg = ExperimentConfig::for_system(super::super::SystemChoice::MultiWell);
        let axes = SweepAxes {
            n_train: vec![],
            half_train: vec![1.0],
            half_test: vec![1.0],
        };
        assert!(run_sweep(&cfg, &axes, 1).is_err());
    }
}
