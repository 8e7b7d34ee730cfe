//! Uniformly sampled multivariate signals and the preprocessing applied to
//! them before they reach a reservoir: max-abs standardization and additive
//! white training noise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A signal sampled at `t0 + k * dt`, stored row-major (one row per sample).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    dim: usize,
    dt: f64,
    t0: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dim: usize, dt: f64, t0: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSeries("zero components".into()));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidSeries(format!(
                "{} values cannot form rows of width {dim}",
                values.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSeries(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidSeries("t0 is not finite".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value in row {}",
                pos / dim
            )));
        }
        Ok(TimeSeries { values, dim, dt, t0 })
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64, t0: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidSeries("ragged rows".into()));
        }
        Self::new(rows.concat(), dim, dt, t0)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.row(0)
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Samples `start..end` as a new series whose `t0` is the time of `start`.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidSeries(format!(
                "slice {start}..{end} out of range for length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            values: self.values[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            t0: self.time(start),
        })
    }

    /// Keeps only the listed components, in the given order.
    pub fn select(&self, components: &[usize]) -> Result<TimeSeries> {
        if components.is_empty() {
            return Err(Error::InvalidSeries("empty component selection".into()));
        }
        if let Some(&bad) = components.iter().find(|&&c| c >= self.dim) {
            return Err(Error::DimensionMismatch {
                context: "component selection",
                expected: self.dim,
                found: bad + 1,
            });
        }
        let values = self
            .rows()
            .flat_map(|r| components.iter().map(move |&c| r[c]))
            .collect();
        Ok(TimeSeries {
            values,
            dim: components.len(),
            dt: self.dt,
            t0: self.t0,
        })
    }

    /// Applies `f` to every row. The output must stay finite.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<TimeSeries> {
        let mut values = vec![0.0; self.values.len()];
        for (src, dst) in self.rows().zip(values.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        TimeSeries::new(values, self.dim, self.dt, self.t0)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// CSV with header `t,u0,u1,...`; every value carries 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 0..self.dim {
            write!(out, ",u{j}").unwrap();
        }
        out.push('\n');
        for (k, row) in self.rows().enumerate() {
            write!(out, "{:.16e}", self.time(k)).unwrap();
            for v in row {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|reason| Error::parse(path, reason))
    }

    pub fn parse_csv(text: &str) -> std::result::Result<TimeSeries, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty file")?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(format!("bad header {header:?}"));
        }
        for (j, c) in cols[1..].iter().enumerate() {
            if *c != format!("u{j}") {
                return Err(format!("bad column name {c:?}"));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(format!("line {}: expected {} fields", lineno + 2, dim + 1));
            }
            let mut parsed = fields.iter().map(|f| f.trim().parse::<f64>());
            let t = parsed
                .next()
                .unwrap()
                .map_err(|e| format!("line {}: {e}", lineno + 2))?;
            times.push(t);
            for v in parsed {
                values.push(v.map_err(|e| format!("line {}: {e}", lineno + 2))?);
            }
        }
        let t0 = *times.first().ok_or("no samples")?;
        // A single sample carries no step information.
        let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        TimeSeries::new(values, dim, dt, t0).map_err(|e| e.to_string())
    }
}

/// Per-component affine map `(u - shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// The map that leaves signals untouched (raw-input mode).
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn from_parts(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if shift.len() != scale.len() || shift.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "standardizer parts",
                expected: shift.len(),
                found: scale.len(),
            });
        }
        if let Some(j) = scale.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::ZeroRange { component: j });
        }
        Ok(Standardizer { shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn forward_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn inverse_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = *v * s + m;
        }
    }

    pub fn apply(&self, signal: &TimeSeries) -> Result<TimeSeries> {
        self.check_dim(signal)?;
        signal.map_rows(|src, dst| {
            dst.copy_from_slice(src);
            self.forward_in_place(dst);
        })
    }

    pub fn invert(&self, signal: &TimeSeries) -> Result<TimeSeries> {
        self.check_dim(signal)?;
        signal.map_rows(|src, dst| {
            dst.copy_from_slice(src);
            self.inverse_in_place(dst);
        })
    }

    fn check_dim(&self, signal: &TimeSeries) -> Result<()> {
        if signal.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "standardizer",
                expected: self.dim(),
                found: signal.dim(),
            });
        }
        Ok(())
    }
}

fn common_dim(signals: &[TimeSeries]) -> Result<usize> {
    let dim = signals
        .first()
        .ok_or_else(|| Error::InvalidSeries("no signals".into()))?
        .dim();
    if let Some(bad) = signals.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            context: "signal collection",
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(dim)
}

/// Mean-zero, max-abs-one standardization measured over the union of all
/// `signals`.
pub fn fit_standardizer(signals: &[TimeSeries]) -> Result<Standardizer> {
    let dim = common_dim(signals)?;
    let total: usize = signals.iter().map(TimeSeries::len).sum();
    let mut shift = vec![0.0; dim];
    for row in signals.iter().flat_map(TimeSeries::rows) {
        for (m, v) in shift.iter_mut().zip(row) {
            *m += v;
        }
    }
    shift.iter_mut().for_each(|m| *m /= total as f64);

    let mut scale = vec![0.0f64; dim];
    for row in signals.iter().flat_map(TimeSeries::rows) {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&shift) {
            *s = s.max((v - m).abs());
        }
    }
    if let Some(component) = scale.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroRange { component });
    }
    Ok(Standardizer { shift, scale })
}

/// Root-mean-square of component `j` over every sample of every signal.
pub fn component_rms(signals: &[TimeSeries], j: usize) -> Result<f64> {
    let dim = common_dim(signals)?;
    if j >= dim {
        return Err(Error::DimensionMismatch {
            context: "component_rms",
            expected: dim,
            found: j + 1,
        });
    }
    let (sum, count) = signals
        .iter()
        .flat_map(|s| s.component(j))
        .fold((0.0, 0usize), |(acc, n), v| (acc + v * v, n + 1));
    Ok((sum / count as f64).sqrt())
}

/// Adds independent `N(0, (eta * rms[j])^2)` draws to every component of
/// every sample. Zero noise returns an exact copy.
pub fn add_training_noise<R: Rng + ?Sized>(
    signal: &TimeSeries,
    eta: f64,
    rms: &[f64],
    rng: &mut R,
) -> Result<TimeSeries> {
    if rms.len() != signal.dim() {
        return Err(Error::DimensionMismatch {
            context: "noise rms",
            expected: signal.dim(),
            found: rms.len(),
        });
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid("eta", format!("must be >= 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(signal.clone());
    }
    signal.map_rows(|src, dst| {
        for ((d, s), r) in dst.iter_mut().zip(src).zip(rms) {
            let xi: f64 = rng.sample(StandardNormal);
            *d = s + eta * r * xi;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(vals: &[f64]) -> TimeSeries {
        TimeSeries::new(vals.to_vec(), 1, 0.1, 0.0).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new(vec![], 1, 0.1, 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0, 3.0], 2, 0.1, 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0], 1, 0.0, 0.0).is_err());
        assert!(TimeSeries::new(vec![f64::NAN], 1, 0.1, 0.0).is_err());
    }

    #[test]
    fn standardizer_single_signal() {
        let s = fit_standardizer(&[series(&[-2.0, 0.0, 2.0])]).unwrap();
        assert_eq!(s.shift(), &[0.0]);
        assert_eq!(s.scale(), &[2.0]);
        let out = s.apply(&series(&[-2.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.values(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardizer_union_of_two() {
        let a = series(&[0.0, 2.0]);
        let b = series(&[0.0, 4.0]);
        let s = fit_standardizer(&[a.clone(), b.clone()]).unwrap();
        assert!((s.shift()[0] - 1.5).abs() < 1e-15);
        assert!((s.scale()[0] - 2.5).abs() < 1e-15);
        let sa = s.apply(&a).unwrap();
        let sb = s.apply(&b).unwrap();
        for (got, want) in sa.values().iter().zip([-0.6, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in sb.values().iter().zip([-0.6, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_component_is_zero_range() {
        let err = fit_standardizer(&[series(&[5.0, 5.0, 5.0])]).unwrap_err();
        assert!(matches!(err, Error::ZeroRange { component: 0 }));
    }

    #[test]
    fn rms_examples() {
        assert!((component_rms(&[series(&[3.0; 4])], 0).unwrap() - 3.0).abs() < 1e-15);
        let r = component_rms(&[series(&[3.0, 4.0])], 0).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(component_rms(&[series(&[0.0; 3])], 0).unwrap(), 0.0);
        assert!(component_rms(&[series(&[1.0])], 1).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = series(&[1.0, 2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(add_training_noise(&s, 0.0, &[1.0], &mut rng).unwrap(), s);
    }

    #[test]
    fn zero_rms_component_unchanged() {
        let s = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0], 2, 0.1, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = add_training_noise(&s, 0.5, &[0.0, 1.0], &mut rng).unwrap();
        assert_eq!(out.row(0)[0], 1.0);
        assert_eq!(out.row(1)[0], 3.0);
        assert_ne!(out.row(0)[1], 2.0);
    }

    #[test]
    fn noise_has_requested_std() {
        let n = 100_000;
        let s = series(&vec![0.0; n]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = add_training_noise(&s, 1e-3, &[1.0], &mut rng).unwrap();
        let mean = out.values().iter().sum::<f64>() / n as f64;
        let var = out.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((std - 1e-3).abs() < 0.05e-3, "std = {std}");
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let s = series(&[1.0, 2.0, 3.0]);
        let a = add_training_noise(&s, 0.1, &[1.0], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = add_training_noise(&s, 0.1, &[1.0], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = TimeSeries::new(
            vec![0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI],
            2,
            0.02,
            0.5,
        )
        .unwrap();
        let back = TimeSeries::parse_csv(&s.to_csv()).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.t0(), s.t0());
        assert!(s.to_csv().starts_with("t,u0,u1\n"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn standardize_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 2..60)) {
                prop_assume!(vals.iter().any(|v| *v != vals[0]));
                let s = series(&vals);
                let st = fit_standardizer(std::slice::from_ref(&s)).unwrap();
                let back = st.invert(&st.apply(&s).unwrap()).unwrap();
                let scale = st.scale()[0];
                for (a, b) in back.values().iter().zip(s.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn standardized_union_is_centered_and_unit(
                a in prop::collection::vec(-1e3f64..1e3, 2..40),
                b in prop::collection::vec(-1e3f64..1e3, 1..40),
            ) {
                let sigs = [series(&a), series(&b)];
                prop_assume!(a.iter().chain(&b).any(|v| *v != a[0]));
                let st = fit_standardizer(&sigs).unwrap();
                let out: Vec<f64> = sigs
                    .iter()
                    .flat_map(|s| st.apply(s).unwrap().values().to_vec())
                    .collect();
                let mean = out.iter().sum::<f64>() / out.len() as f64;
                let maxabs = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_assert!(mean.abs() <= 1e-12);
                prop_assert!((maxabs - 1.0).abs() <= 1e-12);
            }
        }
    }
}
