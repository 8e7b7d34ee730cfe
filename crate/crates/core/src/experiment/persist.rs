//! Basin maps are stored as a CSV of cells plus a `.meta` sidecar of
//! `key = value` lines; model bundles are a single JSON document.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BasinCell, BasinMap, ExperimentConfig, TrainedModel};
use crate::classify::BasinOutcome;
use crate::error::{Error, Result};
use crate::reservoir::Reservoir;

pub const BASIN_SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

const CELL_HEADER: &str = "ic_0,ic_1,true_label,pred_label,outcome";

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut os = csv.as_os_str().to_owned();
    os.push(".meta");
    PathBuf::from(os)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_outcome(name: &str, pred: i64) -> Option<BasinOutcome> {
    Some(match name {
        "correct" => BasinOutcome::Correct(usize::try_from(pred).ok()?),
        "wrong" => BasinOutcome::Wrong(usize::try_from(pred).ok()?),
        "spurious" if pred < 0 => BasinOutcome::Spurious,
        "unresolved" if pred < 0 => BasinOutcome::Unresolved,
        _ => return None,
    })
}

impl BasinMap {
    pub fn cells_csv(&self) -> String {
        let mut s = String::with_capacity(self.cells.len() * 48);
        s.push_str(CELL_HEADER);
        s.push('\n');
        for c in &self.cells {
            let pred = c.outcome.predicted().map_or(-1, |p| p as i64);
            writeln!(s, "{},{},{},{},{}", c.ic[0], c.ic[1], c.truth, pred, c.outcome.name()).unwrap();
        }
        s
    }

    pub fn meta_text(&self) -> String {
        let m = &self.metrics;
        let cfg = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("schema_version", BASIN_SCHEMA_VERSION.to_string());
        kv("system", cfg.system.name().into());
        kv("config_hash", cfg.hash());
        kv("seed_reservoir", cfg.seeds.reservoir.to_string());
        kv("seed_sampling", cfg.seeds.sampling.to_string());
        kv("seed_noise", cfg.seeds.noise.to_string());
        kv("n_basins", self.n_basins.to_string());
        kv("total", m.total.to_string());
        kv("f_c", m.f_c.to_string());
        kv("f_wrong", m.f_wrong.to_string());
        kv("f_spurious", m.f_spurious.to_string());
        kv("f_unresolved", m.f_unresolved.to_string());
        for (b, p) in m.per_basin.iter().enumerate() {
            kv(&format!("basin_{b}_count"), p.count.to_string());
            kv(&format!("basin_{b}_f_c"), p.f_c.to_string());
            kv(&format!("basin_{b}_fnr"), p.false_negative_rate.to_string());
            kv(&format!("basin_{b}_fpr"), p.false_positive_rate.to_string());
        }
        kv("config", serde_json::to_string(cfg).expect("config serializes"));
        s
    }

    /// Writes `path` (cells) and `path.meta` (provenance and metrics).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_file(path, &self.cells_csv())?;
        write_file(&meta_path(path), &self.meta_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BasinMap> {
        let path = path.as_ref();
        let meta_file = meta_path(path);
        let meta = read_file(&meta_file)?;
        let lookup = |key: &str| -> Result<&str> {
            meta.lines()
                .filter_map(|l| l.split_once(" = "))
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::parse(&meta_file, format!("missing key {key}")))
        };
        let version = lookup("schema_version")?;
        if version != BASIN_SCHEMA_VERSION.to_string() {
            return Err(Error::SchemaMismatch {
                expected: BASIN_SCHEMA_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let config: ExperimentConfig =
            serde_json::from_str(lookup("config")?).map_err(|e| Error::parse(&meta_file, e.to_string()))?;
        if lookup("config_hash")? != config.hash() {
            return Err(Error::parse(&meta_file, "config hash does not match the stored config"));
        }
        let n_basins: usize = lookup("n_basins")?
            .parse()
            .map_err(|_| Error::parse(&meta_file, "bad n_basins"))?;

        let text = read_file(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(CELL_HEADER) {
            return Err(Error::SchemaMismatch {
                expected: CELL_HEADER.into(),
                found: text.lines().next().unwrap_or("").into(),
            });
        }
        let mut cells = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = || Error::parse(path, format!("bad cell row {}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let ic0: f64 = f[0].parse().map_err(|_| bad())?;
            let ic1: f64 = f[1].parse().map_err(|_| bad())?;
            let truth: usize = f[2].parse().map_err(|_| bad())?;
            let pred: i64 = f[3].parse().map_err(|_| bad())?;
            let outcome = parse_outcome(f[4], pred).ok_or_else(bad)?;
            cells.push(BasinCell {
                ic: [ic0, ic1],
                truth,
                outcome,
            });
        }
        let mut map = BasinMap {
            config,
            n_basins,
            cells,
            metrics: crate::classify::score(&[], &[], n_basins)?,
        };
        map.metrics = map.recompute_metrics()?;
        if lookup("f_c")? != map.metrics.f_c.to_string() {
            return Err(Error::parse(&meta_file, "stored f_c disagrees with the cells"));
        }
        Ok(map)
    }
}

/// Trained reservoir, readout and the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn new(config: ExperimentConfig, model: TrainedModel) -> Self {
        ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        let path = path.as_ref();
        let text = read_file(path)?;
        let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let version = probe.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(BUNDLE_SCHEMA_VERSION as u64) {
            return Err(Error::SchemaMismatch {
                expected: BUNDLE_SCHEMA_VERSION.to_string(),
                found: version.map_or("none".into(), |v| v.to_string()),
            });
        }
        let mut bundle: ModelBundle = serde_json::from_value(probe).map_err(|e| Error::parse(path, e.to_string()))?;
        let r = &bundle.model.reservoir;
        bundle.model.reservoir =
            Reservoir::from_stored(r.spec().clone(), r.w_r().clone(), r.w_in().to_vec(), r.bias().to_vec())?;
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::score;
    use crate::experiment::SystemChoice;

    fn toy_map() -> BasinMap {
        let mut config = ExperimentConfig::for_system(SystemChoice::MultiWell);
        config.grid.resolution = 2;
        let cells = vec![
            BasinCell { ic: [-2.0, -2.0], truth: 0, outcome: BasinOutcome::Correct(0) },
            BasinCell { ic: [2.0, -2.0], truth: 1, outcome: BasinOutcome::Wrong(3) },
            BasinCell { ic: [-2.0, 2.0], truth: 2, outcome: BasinOutcome::Spurious },
            BasinCell { ic: [0.1, 1.0 / 3.0], truth: 3, outcome: BasinOutcome::Unresolved },
        ];
        let outcomes: Vec<_> = cells.iter().map(|c| c.outcome).collect();
        let truth: Vec<_> = cells.iter().map(|c| c.truth).collect();
        BasinMap {
            metrics: score(&outcomes, &truth, 4).unwrap(),
            config,
            n_basins: 4,
            cells,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let map = toy_map();
        map.save(&a).unwrap();
        let loaded = BasinMap::load(&a).unwrap();
        assert_eq!(loaded, map);
        loaded.save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read(meta_path(&a)).unwrap(), fs::read(meta_path(&b)).unwrap());
        assert_eq!(loaded.recompute_metrics().unwrap(), map.metrics);
    }

    #[test]
    fn schema_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        toy_map().save(&a).unwrap();
        let meta = fs::read_to_string(meta_path(&a)).unwrap();
        fs::write(meta_path(&a), meta.replace("schema_version = 1", "schema_version = 99")).unwrap();
        assert!(matches!(BasinMap::load(&a), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn tampered_cells_detected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        toy_map().save(&a).unwrap();
        let csv = fs::read_to_string(&a).unwrap();
        fs::write(&a, csv.replace("1,3,wrong", "1,1,correct")).unwrap();
        assert!(BasinMap::load(&a).is_err());
    }

    #[test]
    fn bundle_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, r#"{"schema_version": 7}"#).unwrap();
        assert!(matches!(ModelBundle::load(&p), Err(Error::SchemaMismatch { .. })));
    }
}
