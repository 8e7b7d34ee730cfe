//! Ridge-regression readout over many disjoint training signals.
//!
//! States are never stored for the whole training set: they are streamed in
//! batches into the fixed-size products `Y·Rᵀ` (N_in × N_r) and `R·Rᵀ`
//! (N_r × N_r), whose sizes do not depend on how many signals there are.

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::Reservoir;
use crate::timeseries::{add_training_noise, component_rms, fit_standardizer, Standardizer, TimeSeries};

pub const DEFAULT_BATCH_MAX_STATES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Reservoir states discarded at the start of every signal.
    pub n_trans: usize,
    pub alpha: f64,
    pub eta: f64,
    pub batch_max_states: usize,
    pub seed: u64,
    /// Max-abs standardization of inputs; off means raw inputs.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trans: 5,
            alpha: 1e-12,
            eta: 1e-5,
            batch_max_states: DEFAULT_BATCH_MAX_STATES,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", format!("must be >= 0, got {}", self.eta)));
        }
        if self.batch_max_states == 0 {
            return Err(Error::invalid("batch_max_states", "must be >= 1"));
        }
        Ok(())
    }

    /// Fit pairs contributed by a signal of `len` samples.
    pub fn pairs_for(&self, len: usize) -> usize {
        len.saturating_sub(self.n_trans + 1)
    }
}

/// Trained linear output map plus the input standardization it was fitted
/// under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// `n_in × n_r`, row-major.
    w_out: Vec<f64>,
    n_in: usize,
    n_r: usize,
    standardizer: Standardizer,
    n_fit: usize,
}

impl Readout {
    pub fn new(
        w_out: Vec<f64>,
        n_in: usize,
        n_r: usize,
        standardizer: Standardizer,
        n_fit: usize,
    ) -> Result<Self> {
        if w_out.len() != n_in * n_r {
            return Err(Error::DimensionMismatch {
                context: "w_out",
                expected: n_in * n_r,
                found: w_out.len(),
            });
        }
        if standardizer.dim() != n_in {
            return Err(Error::DimensionMismatch {
                context: "readout standardizer",
                expected: n_in,
                found: standardizer.dim(),
            });
        }
        if w_out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Readout {
            w_out,
            n_in,
            n_r,
            standardizer,
            n_fit,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// `out = W_out · state`, in standardized coordinates.
    pub fn output(&self, state: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(self.w_out.chunks_exact(self.n_r)) {
            *o = w.iter().zip(state).map(|(a, b)| a * b).sum();
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.w_out.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

const TILE_I: usize = 4;
const TILE_J: usize = 8;
const STATE_BLOCK: usize = 128;

/// Adds `Σ_s r_s r_sᵀ` into the upper triangle of the column-major `gram`.
/// Every entry receives its terms one at a time in state order, so the
/// result is bitwise independent of how the states are split into batches.
fn add_gram_upper(gram: &mut [f64], states: &[f64], n_r: usize) {
    let rows = states.len() / n_r;
    for s0 in (0..rows).step_by(STATE_BLOCK) {
        let block = &states[s0 * n_r..(s0 + STATE_BLOCK).min(rows) * n_r];
        for j0 in (0..n_r).step_by(TILE_J) {
            let tj = TILE_J.min(n_r - j0);
            for i0 in (0..(j0 + tj).min(n_r)).step_by(TILE_I) {
                let ti = TILE_I.min(n_r - i0);
                if ti == TILE_I && tj == TILE_J {
                    full_tile(gram, block, n_r, i0, j0);
                } else {
                    for jj in 0..tj {
                        for ii in 0..ti {
                            let (i, j) = (i0 + ii, j0 + jj);
                            let mut t = gram[i + j * n_r];
                            for r in block.chunks_exact(n_r) {
                                t += r[i] * r[j];
                            }
                            gram[i + j * n_r] = t;
                        }
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn full_tile(gram: &mut [f64], block: &[f64], n_r: usize, i0: usize, j0: usize) {
    let mut t = [[0.0f64; TILE_I]; TILE_J];
    for (jj, col) in t.iter_mut().enumerate() {
        let base = (j0 + jj) * n_r + i0;
        col.copy_from_slice(&gram[base..base + TILE_I]);
    }
    for r in block.chunks_exact(n_r) {
        let a: &[f64; TILE_I] = r[i0..i0 + TILE_I].try_into().unwrap();
        let b: &[f64; TILE_J] = r[j0..j0 + TILE_J].try_into().unwrap();
        for jj in 0..TILE_J {
            for ii in 0..TILE_I {
                t[jj][ii] += a[ii] * b[jj];
            }
        }
    }
    for (jj, col) in t.iter().enumerate() {
        let base = (j0 + jj) * n_r + i0;
        gram[base..base + TILE_I].copy_from_slice(col);
    }
}

/// Running sums `Y·Rᵀ`, `R·Rᵀ` and `Σ‖y‖²` over fit pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalAccumulator {
    n_in: usize,
    n_r: usize,
    yrt: DMatrix<f64>,
    rrt: DMatrix<f64>,
    yy: f64,
    n_fit: usize,
}

impl NormalAccumulator {
    pub fn new(n_in: usize, n_r: usize) -> Self {
        NormalAccumulator {
            n_in,
            n_r,
            yrt: DMatrix::zeros(n_in, n_r),
            rrt: DMatrix::zeros(n_r, n_r),
            yy: 0.0,
            n_fit: 0,
        }
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    pub fn yrt(&self) -> &DMatrix<f64> {
        &self.yrt
    }

    pub fn rrt(&self) -> &DMatrix<f64> {
        &self.rrt
    }

    /// Adds a batch of pairs. `states` holds rows of length n_r, `targets`
    /// the matching rows of length n_in.
    pub fn accumulate(&mut self, states: &[f64], targets: &[f64]) -> Result<()> {
        if states.len() % self.n_r != 0 {
            return Err(Error::DimensionMismatch {
                context: "accumulate states",
                expected: self.n_r,
                found: states.len() % self.n_r,
            });
        }
        let rows = states.len() / self.n_r;
        if targets.len() != rows * self.n_in {
            return Err(Error::DimensionMismatch {
                context: "accumulate targets",
                expected: rows * self.n_in,
                found: targets.len(),
            });
        }
        if rows == 0 {
            return Ok(());
        }
        let (n_r, n_in) = (self.n_r, self.n_in);
        add_gram_upper(self.rrt.as_mut_slice(), states, n_r);
        for (r, y) in states.chunks_exact(n_r).zip(targets.chunks_exact(n_in)) {
            for (j, &rj) in r.iter().enumerate() {
                for (o, &yo) in y.iter().enumerate() {
                    self.yrt[(o, j)] += yo * rj;
                }
            }
        }
        for j in 0..n_r {
            for i in j + 1..n_r {
                self.rrt[(i, j)] = self.rrt[(j, i)];
            }
        }
        self.yy += targets.iter().map(|v| v * v).sum::<f64>();
        self.n_fit += rows;
        Ok(())
    }

    /// Sums another accumulator into this one.
    pub fn merge(&mut self, other: &NormalAccumulator) -> Result<()> {
        if other.n_r != self.n_r || other.n_in != self.n_in {
            return Err(Error::DimensionMismatch {
                context: "accumulator merge",
                expected: self.n_r,
                found: other.n_r,
            });
        }
        self.rrt += &other.rrt;
        self.yrt += &other.yrt;
        self.yy += other.yy;
        self.n_fit += other.n_fit;
        Ok(())
    }

    /// Mean over pairs of `‖W·r − y‖²`, from the accumulated sums.
    pub fn mean_squared_residual(&self, w_out: &[f64]) -> f64 {
        if self.n_fit == 0 {
            return 0.0;
        }
        let w = DMatrix::from_row_slice(self.n_in, self.n_r, w_out);
        let cross = w.component_mul(&self.yrt).sum();
        let quad = (&w * &self.rrt).component_mul(&w).sum();
        ((self.yy - 2.0 * cross + quad) / self.n_fit as f64).max(0.0)
    }
}

/// `W_out = Y·Rᵀ (R·Rᵀ + α·N_fit·I)⁻¹` via a Cholesky solve, with an SVD
/// fallback when the factorization fails. Returns row-major `n_in × n_r`.
pub fn solve_readout(acc: &NormalAccumulator, alpha: f64) -> Result<Vec<f64>> {
    if acc.n_fit == 0 {
        return Err(Error::EmptyFit);
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be >= 0, got {alpha}")));
    }
    let n = acc.n_r;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] = 0.5 * (acc.rrt[(i, j)] + acc.rrt[(j, i)]);
        }
    }
    let ridge = alpha * acc.n_fit as f64;
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let rhs = acc.yrt.transpose();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    if max_diag == 0.0 {
        if alpha == 0.0 {
            return Err(Error::SingularSystem);
        }
        return Ok(vec![0.0; acc.n_in * n]);
    }

    let solved = match a.clone().cholesky() {
        Some(chol) => {
            let l = chol.l_dirty();
            let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            // Loss of definiteness to round-off; only an error when unregularized.
            if alpha == 0.0 && min_pivot <= n as f64 * f64::EPSILON * max_diag {
                return Err(Error::SingularSystem);
            }
            chol.solve(&rhs)
        }
        None => {
            let svd = SVD::new(a, true, true);
            let smax = svd.singular_values.max();
            let cutoff = n as f64 * f64::EPSILON * smax;
            if alpha == 0.0 && svd.singular_values.min() <= cutoff {
                return Err(Error::SingularSystem);
            }
            svd.solve(&rhs, cutoff).map_err(|_| Error::SingularSystem)?
        }
    };
    // solved is n_r × n_in; W_out is its transpose, emitted row-major.
    let w_out: Vec<f64> = (0..acc.n_in)
        .flat_map(|o| (0..n).map(move |j| (o, j)))
        .map(|(o, j)| solved[(j, o)])
        .collect();
    if w_out.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(w_out)
}

/// Everything produced by a training run besides the readout itself.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub readout: Readout,
    pub accumulator: NormalAccumulator,
    pub training_mse: f64,
    pub peak_batch_states: usize,
}

pub fn train(res: &Reservoir, signals: &[TimeSeries], cfg: &TrainConfig) -> Result<Readout> {
    train_with_report(res, signals, cfg).map(|r| r.readout)
}

/// Standardize → add noise → drive each signal from the zero state → drop
/// the transient → pair the state after consuming `ũ(n)` with `ũ(n+1)` →
/// accumulate in bounded batches → ridge solve.
pub fn train_with_report(
    res: &Reservoir,
    signals: &[TimeSeries],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if signals.is_empty() {
        return Err(Error::InvalidSeries("no training signals".into()));
    }
    let n_in = res.n_in();
    let n_r = res.n_r();
    for (index, s) in signals.iter().enumerate() {
        if s.dim() != n_in {
            return Err(Error::DimensionMismatch {
                context: "training signal",
                expected: n_in,
                found: s.dim(),
            });
        }
        if s.len() < cfg.n_trans + 2 {
            return Err(Error::TooShort {
                index,
                len: s.len(),
                required: cfg.n_trans + 2,
            });
        }
    }

    let standardizer = if cfg.standardize {
        fit_standardizer(signals)?
    } else {
        Standardizer::identity(n_in)
    };
    let standardized: Vec<TimeSeries> = signals
        .iter()
        .map(|s| standardizer.apply(s))
        .collect::<Result<_>>()?;
    let rms: Vec<f64> = (0..n_in)
        .map(|j| component_rms(&standardized, j))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acc = NormalAccumulator::new(n_in, n_r);
    let total_pairs: usize = signals.iter().map(|s| cfg.pairs_for(s.len())).sum();
    let batch_cap = cfg.batch_max_states.min(total_pairs).max(1);
    let mut state_buf: Vec<f64> = Vec::with_capacity(batch_cap * n_r);
    let mut target_buf: Vec<f64> = Vec::with_capacity(batch_cap * n_in);
    let mut peak = 0usize;
    let zero = vec![0.0; n_r];

    for signal in &standardized {
        let noisy = add_training_noise(signal, cfg.eta, &rms, &mut rng)?;
        let last = noisy.len() - 1;
        let mut failure = None;
        res.drive_with(&noisy, &zero, |k, state| {
            if failure.is_some() || k < cfg.n_trans || k >= last {
                return;
            }
            state_buf.extend_from_slice(state);
            target_buf.extend_from_slice(noisy.row(k + 1));
            peak = peak.max(state_buf.len() / n_r);
            if state_buf.len() / n_r == cfg.batch_max_states {
                if let Err(e) = acc.accumulate(&state_buf, &target_buf) {
                    failure = Some(e);
                }
                state_buf.clear();
                target_buf.clear();
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
    }
    acc.accumulate(&state_buf, &target_buf)?;
    debug_assert_eq!(acc.n_fit(), total_pairs);

    let w_out = solve_readout(&acc, cfg.alpha)?;
    let training_mse = acc.mean_squared_residual(&w_out) / n_in as f64;
    let readout = Readout::new(w_out, n_in, n_r, standardizer, acc.n_fit())?;
    Ok(TrainReport {
        readout,
        accumulator: acc,
        training_mse,
        peak_batch_states: peak,
    })
}
