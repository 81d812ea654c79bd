//! Method-of-steps simulation on the difference variable `w = z - A_{-1} z(t-h)`.
//!
//! `w` is advanced by explicit Euler; the functional terms use trapezoid
//! quadrature over the stored history (exact per-interval kernel masses),
//! history derivatives are finite differences, and atoms snap to the nearest
//! node. `z` is then recovered exactly from `w` and the delayed sample.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NtsError, Result};
use crate::linalg::RMat;
use crate::sysmodel::{DelayKernel, NeutralSystem};

pub const MIN_GRID_POINTS: usize = 8;

/// Samples of `φ` on `θ_j = -h + j h/m`, `j = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    h: f64,
    m: usize,
    values: Vec<Vec<f64>>,
}

impl HistorySegment {
    pub fn new(h: f64, m: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != m + 1 {
            return Err(NtsError::Domain(format!(
                "history needs {} samples, got {}",
                m + 1,
                values.len()
            )));
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(NtsError::Domain("history contains non-finite values".into()));
        }
        Ok(Self { h, m, values })
    }

    pub fn from_fn(h: f64, m: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let dt = h / m as f64;
        let values = (0..=m).map(|j| f(-h + j as f64 * dt)).collect();
        Self { h, m, values }
    }

    pub fn zero(n: usize, h: f64, m: usize) -> Self {
        Self::from_fn(h, m, |_| vec![0.0; n])
    }

    /// Smooth seeded history: a few random Fourier modes per component.
    pub fn random_smooth(n: usize, h: f64, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<[(f64, f64); 4]> = (0..n)
            .map(|_| std::array::from_fn(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        Self::from_fn(h, m, |theta| {
            coef.iter()
                .map(|modes| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let x = std::f64::consts::PI * k as f64 * theta / h;
                            a * x.cos() + b * x.sin()
                        })
                        .sum()
                })
                .collect()
        })
    }

    /// Seeded piecewise-constant history with `pieces` equal steps per delay.
    ///
    /// The jumps excite the high-frequency root chains, which smooth data
    /// barely reaches.
    pub fn random_steps(n: usize, h: f64, m: usize, pieces: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels: Vec<Vec<f64>> = (0..pieces.max(1))
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let count = levels.len();
        Self::from_fn(h, m, |theta| {
            let k = (((theta + h) / h * count as f64).floor().max(0.0) as usize).min(count - 1);
            levels[k].clone()
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.h / self.m as f64
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.m).map(|j| -self.h + j as f64 * self.dt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub z_values: Vec<Vec<f64>>,
    pub m2_norm: Vec<f64>,
}

impl Trajectory {
    /// CSV with columns `t, z_1, …, z_n, m2_norm`.
    pub fn to_csv(&self) -> String {
        let n = self.z_values.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.push("m2_norm".into());
        w.write_record(&header).expect("in-memory write");
        for ((t, z), norm) in self.times.iter().zip(&self.z_values).zip(&self.m2_norm) {
            let mut row = vec![format!("{t:.12e}")];
            row.extend(z.iter().map(|x| format!("{x:.12e}")));
            row.push(format!("{norm:.12e}"));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// `(t, m2_norm)` pairs.
pub fn norm_profile(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.times.iter().copied().zip(traj.m2_norm.iter().copied()).collect()
}

/// Control input, sampled at the left end of every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSpec {
    Zero,
    /// `values[i]` is applied on `[times[i], times[i+1])`; the last value
    /// holds afterwards. Before `times[0]` the control is zero.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
    /// `amplitude * sin(2π frequency t)` on every channel.
    Sine { amplitude: f64, frequency: f64 },
}

impl ControlSpec {
    pub fn sample(&self, t: f64, r: usize) -> Vec<f64> {
        match self {
            Self::Zero => vec![0.0; r],
            Self::Table { times, values } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    vec![0.0; r]
                } else {
                    values[i - 1].clone()
                }
            }
            Self::Sine { amplitude, frequency } => {
                vec![amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(); r]
            }
        }
    }

    pub fn check(&self, r: usize) -> Result<()> {
        if let Self::Table { times, values } = self {
            if times.len() != values.len() || times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(NtsError::Domain("control table needs increasing times, one row each".into()));
            }
            if values.iter().any(|v| v.len() != r) {
                return Err(NtsError::Domain(format!("control table rows must have {r} entries")));
            }
        }
        Ok(())
    }
}

/// Per-node quadrature weights `W_k` with `∫ K(θ) f(t+θ) dθ ≈ Σ_k W_k f(t+θ_k)`.
fn node_weights(kernel: &DelayKernel, n: usize, h: f64, m: usize) -> Vec<(usize, RMat)> {
    let dt = h / m as f64;
    let mut interval = vec![RMat::zeros(n, n); m];
    for (a, b, mat) in kernel.nonzero_segments() {
        let first = (((a + h) / dt).floor().max(0.0) as usize).min(m - 1);
        let last = (((b + h) / dt).ceil() as usize).min(m);
        for (j, acc) in interval.iter_mut().enumerate().take(last).skip(first) {
            let lo = -h + j as f64 * dt;
            let overlap = b.min(lo + dt) - a.max(lo);
            if overlap > 0.0 {
                *acc += mat * overlap;
            }
        }
    }
    let mut nodes = vec![RMat::zeros(n, n); m + 1];
    for (j, mj) in interval.iter().enumerate() {
        nodes[j] += mj * 0.5;
        nodes[j + 1] += mj * 0.5;
    }
    for atom in kernel.atoms() {
        let k = (((atom.theta + h) / dt).round().max(0.0) as usize).min(m);
        nodes[k] += &atom.matrix;
    }
    nodes
        .into_iter()
        .enumerate()
        .filter(|(_, w)| w.iter().any(|&x| x != 0.0))
        .collect()
}

/// Raw samples of a run: `z` at every node from `-h` on and `w` at every step.
pub(crate) struct RunData {
    pub z: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
}

/// Steps the scheme `steps` times. `control(i)` gives `u` on step `i`, or
/// `None` for zero.
pub(crate) fn run(
    sys: &NeutralSystem,
    phi: &HistorySegment,
    steps: usize,
    mut control: impl FnMut(usize) -> Option<DVector<f64>>,
) -> Result<RunData> {
    let (n, m, h) = (sys.n(), phi.m(), sys.h());
    if m < MIN_GRID_POINTS {
        return Err(NtsError::Domain(format!("grid needs m >= {MIN_GRID_POINTS}, got {m}")));
    }
    if ((phi.h() - h) / h).abs() > 1e-12 {
        return Err(NtsError::Domain("history delay does not match the system".into()));
    }
    if phi.values().iter().any(|v| v.len() != n) {
        return Err(NtsError::Domain(format!("history samples must have {n} entries")));
    }
    let dt = phi.dt();
    let w3 = node_weights(sys.a3(), n, h, m);
    let w2 = node_weights(sys.a2(), n, h, m);
    let a = sys.a_minus1();
    let b = sys.b();

    let mut z: Vec<DVector<f64>> = Vec::with_capacity(m + 1 + steps);
    z.extend(phi.values().iter().map(|v| DVector::from_column_slice(v)));
    let mut w = Vec::with_capacity(steps + 1);
    w.push(&z[m] - a * &z[0]);

    let mut f = DVector::zeros(n);
    for step in 0..steps {
        let base = step;
        f.fill(0.0);
        for (k, wk) in &w3 {
            f.gemv(1.0, wk, &z[base + k], 1.0);
        }
        for (k, wk) in &w2 {
            let i = base + k;
            let dz = if *k == 0 {
                (&z[i + 1] - &z[i]) / dt
            } else if *k == m {
                (&z[i] - &z[i - 1]) / dt
            } else {
                (&z[i + 1] - &z[i - 1]) / (2.0 * dt)
            };
            f.gemv(1.0, wk, &dz, 1.0);
        }
        if let Some(u) = control(step) {
            f.gemv(1.0, b, &u, 1.0);
        }
        let next_w = &w[step] + &f * dt;
        let next_z = &next_w + a * &z[base + 1];
        if next_w.iter().chain(next_z.iter()).any(|x| !x.is_finite()) {
            return Err(NtsError::BlowUp {
                time: (step + 1) as f64 * dt,
            });
        }
        w.push(next_w);
        z.push(next_z);
    }
    Ok(RunData { z, w })
}

/// `(|w|^2 + ∫_{-h}^0 |z(t+θ)|^2 dθ)^{1/2}` with the trapezoid rule.
fn m2_norm(w: &DVector<f64>, window: &[DVector<f64>], dt: f64) -> f64 {
    let last = window.len() - 1;
    let integral: f64 = window
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let weight = if i == 0 || i == last { 0.5 } else { 1.0 };
            weight * v.norm_squared()
        })
        .sum::<f64>()
        * dt;
    (w.norm_squared() + integral).sqrt()
}

/// Integrates the system on `[0, T]` with `m` points per delay (`dt = h/m`).
///
/// The number of steps is `T/dt` rounded to the nearest integer.
pub fn simulate(
    sys: &NeutralSystem,
    phi: &HistorySegment,
    u: &dyn Fn(f64) -> Vec<f64>,
    t_final: f64,
    m: usize,
) -> Result<Trajectory> {
    if !(t_final > 0.0) {
        return Err(NtsError::Domain(format!("final time must be positive, got {t_final}")));
    }
    if phi.m() != m {
        return Err(NtsError::Domain(format!(
            "history grid has m = {}, expected {m}",
            phi.m()
        )));
    }
    let dt = sys.h() / m as f64;
    let steps = (t_final / dt).round().max(1.0) as usize;
    let r = sys.r();
    let data = run(sys, phi, steps, |i| {
        if r == 0 {
            return None;
        }
        let v = u(i as f64 * dt);
        Some(DVector::from_column_slice(&v[..r]))
    })?;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let z_values = (0..=steps).map(|i| data.z[i + m].iter().copied().collect()).collect();
    let norms = (0..=steps)
        .map(|i| m2_norm(&data.w[i], &data.z[i..=i + m], dt))
        .collect();
    Ok(Trajectory {
        dt,
        times,
        z_values,
        m2_norm: norms,
    })
}
