//! Fixed-step RK4, adaptive Dormand–Prince 5(4) with dense output, and
//! Euler–Maruyama for additive process noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SystemDef;
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

fn check_state(sys: &SystemDef, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            context: "initial condition",
            expected: sys.dim(),
            found: x0.len(),
        });
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// One classical RK4 step of size `h`, in place.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, sys: &SystemDef, x: &mut [f64], h: f64) {
        let n = x.len();
        sys.eval(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.eval(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.eval(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.eval(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// `n` RK4 steps of size `dt`; returns `n + 1` samples starting at `x0`.
pub fn integrate_rk4(sys: &SystemDef, x0: &[f64], dt: f64, n: usize) -> Result<TimeSeries> {
    integrate_rk4_sampled(sys, x0, dt, 1, n)
}

/// RK4 with step `dt`, recording every `substeps`-th state: `n` samples
/// after `x0`, spaced `dt * substeps` apart.
pub fn integrate_rk4_sampled(
    sys: &SystemDef,
    x0: &[f64],
    dt: f64,
    substeps: usize,
    n: usize,
) -> Result<TimeSeries> {
    check_state(sys, x0)?;
    check_positive("dt", dt)?;
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be >= 1"));
    }
    let dim = sys.dim();
    let mut out = Vec::with_capacity((n + 1) * dim);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(dim);
    for k in 0..n {
        for _ in 0..substeps {
            rk.step(sys, &mut x, dt);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        out.extend_from_slice(&x);
    }
    TimeSeries::new(out, dim, dt * substeps as f64, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

// Dormand–Prince 5(4) tableau; node times are unused for autonomous fields.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Shampine).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates to `t_end` with step-size control and samples the dense
/// output at `0, sample_dt, 2·sample_dt, …` (every sample ≤ `t_end`).
pub fn integrate_adaptive(
    sys: &SystemDef,
    x0: &[f64],
    t_end: f64,
    sample_dt: f64,
    opts: AdaptiveOptions,
) -> Result<TimeSeries> {
    check_state(sys, x0)?;
    check_positive("rel_tol", opts.rel_tol)?;
    check_positive("abs_tol", opts.abs_tol)?;
    check_positive("sample_dt", sample_dt)?;
    if !(t_end >= 0.0) {
        return Err(Error::invalid("t_end", format!("must be >= 0, got {t_end}")));
    }
    let n_samples = (t_end / sample_dt + 1e-9).floor() as usize + 1;
    let t_last = (n_samples - 1) as f64 * sample_dt;
    let n = sys.dim();

    let mut out = Vec::with_capacity(n_samples * n);
    out.extend_from_slice(x0);
    let mut next_sample = 1usize;

    let mut y = x0.to_vec();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    sys.eval(&y, &mut k[0]);

    let mut t = 0.0f64;
    let mut h = initial_step(sys, &y, &k[0], opts, t_last.max(sample_dt));
    let mut steps = 0usize;
    let mut rejected_last = false;

    while next_sample < n_samples {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepSizeUnderflow { t });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }
        if t + h > t_last {
            h = t_last - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k[0][i];
        }
        sys.eval(&tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        sys.eval(&tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        sys.eval(&tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        sys.eval(&tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        sys.eval(&tmp, &mut k[5]);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        sys.eval(&y_new, &mut k[6]);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = h * k[0][i] - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = bspl;
                rcont[3][i] = dy - h * k[6][i] - bspl;
                rcont[4][i] = h
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let t_new = t + h;
            while next_sample < n_samples {
                let ts = next_sample as f64 * sample_dt;
                if ts > t_new + 1e-12 * t_new.abs().max(1.0) {
                    break;
                }
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    let v = rcont[0][i]
                        + theta
                            * (rcont[1][i]
                                + theta1 * (rcont[2][i] + theta * (rcont[3][i] + theta1 * rcont[4][i])));
                    out.push(v);
                }
                next_sample += 1;
            }
            t = t_new;
            y.copy_from_slice(&y_new);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: next_sample });
            }
            let (a, b) = k.split_at_mut(6);
            a[0].copy_from_slice(&b[0]);
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    TimeSeries::new(out, n, sample_dt, 0.0)
}

fn initial_step(sys: &SystemDef, y: &[f64], f0: &[f64], opts: AdaptiveOptions, span: f64) -> f64 {
    let n = y.len() as f64;
    let sc = |i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.eval(&y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / sc(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Euler–Maruyama: `x ← x + f(x)·dt + √dt·η_p·ξ`, `ξ` standard normal per
/// component per step. `n` steps, `n + 1` samples.
pub fn integrate_with_process_noise(
    sys: &SystemDef,
    x0: &[f64],
    dt: f64,
    n: usize,
    eta_p: f64,
    seed: u64,
) -> Result<TimeSeries> {
    check_state(sys, x0)?;
    check_positive("dt", dt)?;
    if !(eta_p >= 0.0 && eta_p.is_finite()) {
        return Err(Error::invalid("eta_p", format!("must be >= 0, got {eta_p}")));
    }
    let dim = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = dt.sqrt() * eta_p;
    let mut out = Vec::with_capacity((n + 1) * dim);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut f = vec![0.0; dim];
    for k in 0..n {
        sys.eval(&x, &mut f);
        for (xi, fi) in x.iter_mut().zip(&f) {
            let xi_noise: f64 = StandardNormal.sample(&mut rng);
            *xi += fi * dt + amp * xi_noise;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        out.extend_from_slice(&x);
    }
    TimeSeries::new(out, dim, dt, 0.0)
}
