//! Benchmark multistable systems and their integrators.

mod integrate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use integrate::{
    integrate_adaptive, integrate_rk4, integrate_rk4_sampled, integrate_with_process_noise,
    AdaptiveOptions, Rk4,
};

use crate::error::Result;
use crate::timeseries::TimeSeries;

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type EnergyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub enum AttractorKind {
    FixedPoint(Vec<f64>),
    /// On-attractor reference trajectory.
    Chaotic(Arc<TimeSeries>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractorDescriptor {
    pub kind: AttractorKind,
    pub label: String,
}

impl AttractorDescriptor {
    pub fn location(&self) -> Option<&[f64]> {
        match &self.kind {
            AttractorKind::FixedPoint(p) => Some(p),
            AttractorKind::Chaotic(_) => None,
        }
    }

    pub fn reference(&self) -> Option<&TimeSeries> {
        match &self.kind {
            AttractorKind::Chaotic(r) => Some(r),
            AttractorKind::FixedPoint(_) => None,
        }
    }
}

/// How trajectories of a system are produced at its sampling interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Integration {
    /// RK4 with step `dt`, sampled every `substeps` steps.
    Rk4 { dt: f64, substeps: usize },
    /// Dormand–Prince with dense output at `sample_dt`.
    Adaptive {
        sample_dt: f64,
        rel_tol: f64,
        abs_tol: f64,
    },
}

impl Integration {
    pub fn sample_dt(&self) -> f64 {
        match *self {
            Integration::Rk4 { dt, substeps } => dt * substeps as f64,
            Integration::Adaptive { sample_dt, .. } => sample_dt,
        }
    }
}

#[derive(Clone)]
pub struct SystemDef {
    name: String,
    dim: usize,
    field: VectorField,
    pub params: Vec<(String, f64)>,
    pub attractors: Vec<AttractorDescriptor>,
    pub energy: Option<EnergyFn>,
    /// Potential barrier separating the attractors, when the energy test applies.
    pub energy_barrier: Option<f64>,
    pub unstable_points: Vec<Vec<f64>>,
    pub integration: Integration,
}

impl fmt::Debug for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("attractors", &self.attractors.len())
            .field("integration", &self.integration)
            .finish()
    }
}

impl SystemDef {
    /// A bare system with no attractors, integrated by RK4 at dt = 0.01.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        SystemDef {
            name: name.into(),
            dim,
            field: Arc::new(field),
            params: Vec::new(),
            attractors: Vec::new(),
            energy: None,
            energy_barrier: None,
            unstable_points: Vec::new(),
            integration: Integration::Rk4 { dt: 0.01, substeps: 1 },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], dx: &mut [f64]) {
        (self.field)(x, dx)
    }

    pub fn field_at(&self, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.dim];
        self.eval(x, &mut dx);
        dx
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn energy_at(&self, x: &[f64]) -> Option<f64> {
        self.energy.as_ref().map(|e| e(x))
    }

    pub fn fixed_points(&self) -> Vec<&[f64]> {
        self.attractors.iter().filter_map(|a| a.location()).collect()
    }

    pub fn sample_dt(&self) -> f64 {
        self.integration.sample_dt()
    }

    /// `n_samples` samples from `x0` at the system's sampling interval,
    /// produced by its configured integrator.
    pub fn trajectory(&self, x0: &[f64], n_samples: usize) -> Result<TimeSeries> {
        let steps = n_samples.saturating_sub(1);
        match self.integration {
            Integration::Rk4 { dt, substeps } => integrate_rk4_sampled(self, x0, dt, substeps, steps),
            Integration::Adaptive {
                sample_dt,
                rel_tol,
                abs_tol,
            } => integrate_adaptive(
                self,
                x0,
                steps as f64 * sample_dt,
                sample_dt,
                AdaptiveOptions {
                    rel_tol,
                    abs_tol,
                    ..Default::default()
                },
            ),
        }
    }

    /// Forward-difference Jacobian, row-major `dim × dim`.
    pub fn numerical_jacobian(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim;
        let f0 = self.field_at(x);
        let mut jac = vec![0.0; n * n];
        let mut xp = x.to_vec();
        for j in 0..n {
            let step = h * x[j].abs().max(1.0);
            xp[j] = x[j] + step;
            let fp = self.field_at(&xp);
            xp[j] = x[j];
            for i in 0..n {
                jac[i * n + j] = (fp[i] - f0[i]) / step;
            }
        }
        jac
    }
}

const DUFFING_A: f64 = -0.5;
const DUFFING_B: f64 = -1.0;
const DUFFING_C: f64 = 0.1;

fn fixed(p: Vec<f64>, label: &str) -> AttractorDescriptor {
    AttractorDescriptor {
        kind: AttractorKind::FixedPoint(p),
        label: label.into(),
    }
}

/// Real roots of `F0 − b·x − c·x³ = 0`, ascending, by bisection on the
/// monotone pieces of the cubic.
fn duffing_equilibria(f0: f64) -> Vec<f64> {
    let g = |x: f64| f0 - DUFFING_B * x - DUFFING_C * x * x * x;
    // g'(x) = −b − 3c x² vanishes at ±√(−b / 3c).
    let turn = (-DUFFING_B / (3.0 * DUFFING_C)).sqrt();
    let bound = 10.0 + f0.abs() * 10.0;
    let pieces = [(-bound, -turn), (-turn, turn), (turn, bound)];
    let mut roots = Vec::new();
    for (lo, hi) in pieces {
        let (mut a, mut b) = (lo, hi);
        let (ga, gb) = (g(a), g(b));
        if ga == 0.0 {
            roots.push(a);
            continue;
        }
        if ga.signum() == gb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m).signum() == ga.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// `ẋ = y`, `ẏ = F0 + a·y − b·x − c·x³` with a = −1/2, b = −1, c = 1/10.
pub fn duffing(f0: f64) -> SystemDef {
    let (a, b, c) = (DUFFING_A, DUFFING_B, DUFFING_C);
    let mut sys = SystemDef::custom(if f0 == 0.0 { "duffing" } else { "duffing-forced" }, 2, move |x, dx| {
        dx[0] = x[1];
        dx[1] = f0 + a * x[1] - b * x[0] - c * x[0] * x[0] * x[0];
    });
    sys.params = vec![
        ("a".into(), a),
        ("b".into(), b),
        ("c".into(), c),
        ("F0".into(), f0),
    ];
    let roots = duffing_equilibria(f0);
    // Outer roots are the stable wells, the middle one is a saddle.
    if let [lo, mid, hi] = roots[..] {
        sys.attractors = vec![fixed(vec![lo, 0.0], "A-"), fixed(vec![hi, 0.0], "A+")];
        sys.unstable_points = vec![vec![mid, 0.0]];
    }
    if f0 == 0.0 {
        sys.energy = Some(Arc::new(move |x: &[f64]| {
            0.5 * x[1] * x[1] + 0.5 * b * x[0] * x[0] + 0.25 * c * x[0].powi(4)
        }));
        sys.energy_barrier = Some(0.0);
    }
    sys
}

/// Decoupled `ẋ = x(1 − x²)/2`, `ẏ = y(1 − y²)/2`.
pub fn multi_well() -> SystemDef {
    let mut sys = SystemDef::custom("multi-well", 2, |x, dx| {
        dx[0] = 0.5 * x[0] * (1.0 - x[0] * x[0]);
        dx[1] = 0.5 * x[1] * (1.0 - x[1] * x[1]);
    });
    sys.attractors = vec![
        fixed(vec![-1.0, -1.0], "(-1,-1)"),
        fixed(vec![1.0, -1.0], "(1,-1)"),
        fixed(vec![-1.0, 1.0], "(-1,1)"),
        fixed(vec![1.0, 1.0], "(1,1)"),
    ];
    sys.unstable_points = vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ];
    sys
}

pub const PENDULUM_OMEGA0: f64 = 0.5;
pub const PENDULUM_GAMMA: f64 = 0.2;
pub const PENDULUM_HEIGHT: f64 = 0.2;

pub fn magnet_positions() -> [[f64; 2]; 3] {
    let s3 = 3f64.sqrt();
    [
        [1.0 / s3, 0.0],
        [-1.0 / (2.0 * s3), -0.5],
        [-1.0 / (2.0 * s3), 0.5],
    ]
}

/// Bob-to-magnet distance including the height offset.
pub fn magnet_distance(x: f64, y: f64, magnet: [f64; 2], d: f64) -> f64 {
    ((magnet[0] - x).powi(2) + (magnet[1] - y).powi(2) + d * d).sqrt()
}

fn pendulum_field(omega0: f64, gamma: f64, d: f64) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    let magnets = magnet_positions();
    move |s, ds| {
        let (x, y, vx, vy) = (s[0], s[1], s[2], s[3]);
        let mut ax = -omega0 * omega0 * x - gamma * vx;
        let mut ay = -omega0 * omega0 * y - gamma * vy;
        for m in magnets {
            let dist = magnet_distance(x, y, m, d);
            let inv3 = 1.0 / (dist * dist * dist);
            ax += (m[0] - x) * inv3;
            ay += (m[1] - y) * inv3;
        }
        ds[0] = vx;
        ds[1] = vy;
        ds[2] = ax;
        ds[3] = ay;
    }
}

/// Damped relaxation from rest directly above `magnet`, finished with
/// Newton iterations on the static force balance.
fn relax_pendulum_equilibrium(sys: &SystemDef, magnet: [f64; 2]) -> Vec<f64> {
    let mut s = vec![magnet[0], magnet[1], 0.0, 0.0];
    let mut rk = Rk4::new(4);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for _ in 0..200_000 {
        if norm(&sys.field_at(&s)) <= 1e-10 {
            break;
        }
        rk.step(sys, &mut s, 0.005);
    }
    // Newton on (ax, ay) = 0 with zero velocity.
    for _ in 0..20 {
        let f = sys.field_at(&s);
        if norm(&f) <= 1e-15 {
            break;
        }
        let jac = sys.numerical_jacobian(&s, 1e-7);
        // Rows 2,3 / columns 0,1 of the Jacobian.
        let (a, b, c, d) = (jac[8], jac[9], jac[12], jac[13]);
        let det = a * d - b * c;
        let dx = (d * f[2] - b * f[3]) / det;
        let dy = (-c * f[2] + a * f[3]) / det;
        s[0] -= dx;
        s[1] -= dy;
        s[2] = 0.0;
        s[3] = 0.0;
    }
    s
}

/// Bob above three magnets: 4-dimensional state (x, y, ẋ, ẏ).
pub fn magnetic_pendulum() -> SystemDef {
    let (omega0, gamma, d) = (PENDULUM_OMEGA0, PENDULUM_GAMMA, PENDULUM_HEIGHT);
    let mut sys = SystemDef::custom("magnetic-pendulum", 4, pendulum_field(omega0, gamma, d));
    sys.params = vec![
        ("omega0".into(), omega0),
        ("gamma".into(), gamma),
        ("d".into(), d),
    ];
    sys.integration = Integration::Adaptive {
        sample_dt: 0.02,
        rel_tol: 1e-9,
        abs_tol: 1e-12,
    };
    let labels = ["magnet-1", "magnet-2", "magnet-3"];
    sys.attractors = magnet_positions()
        .iter()
        .zip(labels)
        .map(|(&m, label)| fixed(relax_pendulum_equilibrium(&sys, m), label))
        .collect();
    sys.unstable_points = vec![vec![0.0; 4]];
    sys
}

pub const LORENZ_A: f64 = -10.0;
pub const LORENZ_B: f64 = -4.0;
pub const LORENZ_C: f64 = 18.1;

/// Samples kept in each chaotic reference after discarding the first half.
pub const LORENZ_REFERENCE_STEPS: usize = 10_000;

/// Seed for the first reference trajectory; the second is its mirror image
/// under `(x, y, z) → (x, −y, −z)`, which maps the system onto itself.
pub const LORENZ_REFERENCE_SEED: [f64; 3] = [1.0, 1.0, 1.0];

fn lorenz_field(a: f64, b: f64, c: f64) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    let k = -(a * b) / (a + b);
    move |s, ds| {
        ds[0] = k * s[0] - s[1] * s[2] + c;
        ds[1] = a * s[1] + s[0] * s[2];
        ds[2] = b * s[2] + s[0] * s[1];
    }
}

/// Lorenz-like system with two coexisting chaotic attractors.
pub fn multistable_lorenz() -> SystemDef {
    let (a, b, c) = (LORENZ_A, LORENZ_B, LORENZ_C);
    let mut sys = SystemDef::custom("multistable-lorenz", 3, lorenz_field(a, b, c));
    sys.params = vec![("a".into(), a), ("b".into(), b), ("c".into(), c)];
    sys.integration = Integration::Rk4 { dt: 0.01, substeps: 2 };
    let full = sys
        .trajectory(&LORENZ_REFERENCE_SEED, LORENZ_REFERENCE_STEPS)
        .expect("reference integration is finite");
    let tail = full
        .slice(LORENZ_REFERENCE_STEPS / 2, LORENZ_REFERENCE_STEPS)
        .expect("reference slice in range");
    let mirror = tail
        .map_rows(|s, d| {
            d[0] = s[0];
            d[1] = -s[1];
            d[2] = -s[2];
        })
        .expect("mirror is finite");
    // Order the lobes by the sign of their mean y.
    let mean_y = tail.component(1).sum::<f64>() / tail.len() as f64;
    let (lo, hi) = if mean_y < 0.0 { (tail, mirror) } else { (mirror, tail) };
    sys.attractors = vec![
        AttractorDescriptor {
            kind: AttractorKind::Chaotic(Arc::new(lo)),
            label: "A1".into(),
        },
        AttractorDescriptor {
            kind: AttractorKind::Chaotic(Arc::new(hi)),
            label: "A2".into(),
        },
    ];
    sys
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    #[test]
    fn duffing_unforced_attractors() {
        let sys = duffing(0.0);
        let pts = sys.fixed_points();
        assert!((pts[0][0] + 10f64.sqrt()).abs() < 1e-12);
        assert!((pts[1][0] - 10f64.sqrt()).abs() < 1e-12);
        assert!((pts[1][0] - 3.16).abs() < 0.01);
        assert!(sys.unstable_points[0][0].abs() < 1e-12);
        for p in pts {
            assert!(norm(&sys.field_at(p)) <= 1e-9);
        }
    }

    #[test]
    fn duffing_forced_attractors() {
        let sys = duffing(1.0);
        let pts = sys.fixed_points();
        assert!((pts[0][0] + 2.42).abs() < 0.005, "{}", pts[0][0]);
        assert!((pts[1][0] - 3.58).abs() < 0.005, "{}", pts[1][0]);
        assert!(sys.energy.is_none());
    }

    #[test]
    fn duffing_energy_at_attractor() {
        let sys = duffing(0.0);
        let e = sys.energy_at(&[10f64.sqrt(), 0.0]).unwrap();
        assert!((e + 2.5).abs() < 1e-12);
        assert_eq!(sys.energy_barrier, Some(0.0));
        assert_eq!(sys.energy_at(&[0.0, 0.0]), Some(0.0));
    }

    #[test]
    fn multi_well_field() {
        let sys = multi_well();
        assert_eq!(sys.field_at(&[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(sys.field_at(&[2.0, 0.0]), vec![-3.0, 0.0]);
    }

    #[test]
    fn pendulum_distance_at_magnet() {
        for m in magnet_positions() {
            assert!((magnet_distance(m[0], m[1], m, PENDULUM_HEIGHT) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn pendulum_equilibria() {
        let sys = magnetic_pendulum();
        let pts = sys.fixed_points();
        assert_eq!(pts.len(), 3);
        for (p, m) in pts.iter().zip(magnet_positions()) {
            assert!(norm(&sys.field_at(p)) <= 1e-9);
            // Near, but not on, the magnet.
            let off = ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt();
            assert!(off < 0.1 && off > 0.0, "offset {off}");
        }
        // 120° rotation maps magnet 1 → 3 → 2 → 1.
        let rot = |p: &[f64]| {
            let (c, s) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
            [c * p[0] - s * p[1], s * p[0] + c * p[1]]
        };
        let r0 = rot(pts[0]);
        assert!((r0[0] - pts[2][0]).abs() < 1e-8 && (r0[1] - pts[2][1]).abs() < 1e-8);
        let r2 = rot(pts[2]);
        assert!((r2[0] - pts[1][0]).abs() < 1e-8 && (r2[1] - pts[1][1]).abs() < 1e-8);
    }

    #[test]
    fn lorenz_field_values() {
        let sys = multistable_lorenz();
        let f = sys.field_at(&[0.0, 0.0, 0.0]);
        assert_eq!(f, vec![18.1, 0.0, 0.0]);
        // dx/dx coefficient is −ab/(a+b) = +20/7.
        let f1 = sys.field_at(&[1.0, 0.0, 0.0]);
        assert!((f1[0] - 18.1 - 20.0 / 7.0).abs() < 1e-12);
    }
}
