//! Discretized steering operator: control samples on `[0, T]` to the terminal
//! state `(y(T), z(T + ·))`, reached from zero history.
//!
//! Columns are responses to unit piecewise-constant controls. The system is
//! time invariant, so one impulse-response run per input channel gives every
//! column by superposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NtsError, Result};
use crate::linalg::singular_values_real;
use crate::simulate::{run, HistorySegment};
use crate::sysmodel::NeutralSystem;

pub const DEFAULT_RANK_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// History grid points per delay.
    pub m: usize,
    /// Control intervals per delay length; the horizon `T` gets
    /// `round(q T / h)` of them (at least one).
    pub q: usize,
    /// Relative cutoff `tau * sigma_1` for the effective rank.
    pub tau: f64,
    /// Leading singular values kept in profiles.
    pub leading: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            m: 200,
            q: 200,
            tau: DEFAULT_RANK_TAU,
            leading: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringProbe {
    pub t_final: f64,
    pub control_dim: usize,
    pub state_dim: usize,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub tau: f64,
    pub effective_rank: usize,
}

/// Number of control intervals used for horizon `t_final`.
pub fn control_intervals(h: f64, t_final: f64, q: usize) -> usize {
    ((q as f64 * t_final / h).round() as usize).max(1)
}

/// Terminal state in discrete graph-norm coordinates: `y`, the oldest sample
/// `z(T - h)` and the scaled differences `(z_{j+1} - z_j)/√dt`.
///
/// This is an invertible change of the plain samples, so ranks are unchanged,
/// but the norm is the discrete `H^1` norm matching the domain of the generator.
fn terminal_state(w: &DVector<f64>, window: &[DVector<f64>], dt: f64) -> DVector<f64> {
    let n = w.len();
    let mut out = DVector::zeros(n * (window.len() + 1));
    out.rows_mut(0, n).copy_from(w);
    out.rows_mut(n, n).copy_from(&window[0]);
    let scale = dt.sqrt().recip();
    for (j, pair) in window.windows(2).enumerate() {
        out.rows_mut(n * (j + 2), n).copy_from(&((&pair[1] - &pair[0]) * scale));
    }
    out
}

pub fn build_steering_probe(sys: &NeutralSystem, t_final: f64, opts: &ProbeOptions) -> Result<SteeringProbe> {
    if !(t_final > 0.0) {
        return Err(NtsError::Domain(format!("horizon must be positive, got {t_final}")));
    }
    let (n, r, h, m) = (sys.n(), sys.r(), sys.h(), opts.m);
    let dt = h / m as f64;
    let steps = (t_final / dt).round().max(1.0) as usize;
    let q = control_intervals(h, t_final, opts.q);
    let state_dim = n * (m + 2);
    let mut matrix = DMatrix::zeros(state_dim, r * q);
    let zero = HistorySegment::zero(n, h, m);
    for i in 0..r {
        let data = run(sys, &zero, steps, |step| {
            (step == 0).then(|| DVector::from_fn(r, |k, _| if k == i { 1.0 } else { 0.0 }))
        })?;
        // A unit pulse on step s is seen at the end after `steps - s` steps.
        let response = |k: usize| terminal_state(&data.w[k], &data.z[k..=k + m], dt);
        for s in 0..steps {
            let interval = (s * q / steps).min(q - 1);
            let len = t_final / q as f64;
            let col = response(steps - s) / len.sqrt();
            let mut target = matrix.column_mut(interval * r + i);
            target += col;
        }
    }
    let singular_values = singular_values_real(&matrix);
    let top = singular_values.first().copied().unwrap_or(0.0);
    let effective_rank = singular_values.iter().filter(|&&s| s > opts.tau * top).count();
    Ok(SteeringProbe {
        t_final,
        control_dim: r * q,
        state_dim,
        matrix,
        singular_values,
        tau: opts.tau,
        effective_rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub t_final: f64,
    pub leading_singular_values: Vec<f64>,
    /// Smallest of the leading singular values.
    pub sigma_min_leading: f64,
    /// Smallest singular value counted in the effective rank.
    pub sigma_at_rank: f64,
    pub effective_rank: usize,
    /// `effective_rank / (n (m + 1))`; the terminal `y` is fixed by the
    /// history samples, so `n (m + 1)` is the largest attainable rank.
    pub rank_fraction: f64,
    pub saturated: bool,
    pub control_dim: usize,
    pub state_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub tau: f64,
    pub entries: Vec<ProfileEntry>,
    /// Effective rank is non-decreasing along the horizons.
    pub monotone: bool,
}

impl RankProfile {
    /// CSV with columns `T, sigma_1, …, sigma_k, effective_rank`.
    pub fn to_csv(&self) -> String {
        let k = self.entries.iter().map(|e| e.leading_singular_values.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["T".to_string()];
        header.extend((1..=k).map(|i| format!("sigma_{i}")));
        header.push("effective_rank".into());
        w.write_record(&header).expect("in-memory write");
        for e in &self.entries {
            let mut row = vec![format!("{:.12e}", e.t_final)];
            row.extend((0..k).map(|i| {
                e.leading_singular_values
                    .get(i)
                    .map_or_else(String::new, |s| format!("{s:.12e}"))
            }));
            row.push(e.effective_rank.to_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

pub fn rank_profile(sys: &NeutralSystem, t_list: &[f64], opts: &ProbeOptions) -> Result<RankProfile> {
    if t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NtsError::Domain("horizons must be strictly increasing".into()));
    }
    let entries = t_list
        .iter()
        .map(|&t| {
            let probe = build_steering_probe(sys, t, opts)?;
            let leading: Vec<f64> = probe.singular_values.iter().copied().take(opts.leading).collect();
            let full = sys.n() * (opts.m + 1);
            Ok(ProfileEntry {
                t_final: t,
                sigma_min_leading: leading.last().copied().unwrap_or(0.0),
                sigma_at_rank: probe
                    .effective_rank
                    .checked_sub(1)
                    .map_or(0.0, |i| probe.singular_values[i]),
                leading_singular_values: leading,
                effective_rank: probe.effective_rank,
                rank_fraction: probe.effective_rank as f64 / full as f64,
                saturated: probe.effective_rank >= full,
                control_dim: probe.control_dim,
                state_dim: probe.state_dim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = entries.windows(2).all(|w| w[0].effective_rank <= w[1].effective_rank);
    Ok(RankProfile {
        tau: opts.tau,
        entries,
        monotone,
    })
}
