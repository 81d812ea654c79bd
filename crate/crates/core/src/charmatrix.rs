//! Characteristic matrix `Δ(λ)`, its determinant and derivative, kernel
//! vectors, and the asymptotic eigenvalue-chain geometry.
//!
//! ```text
//! Δ(λ) = -λI + λ e^{-λh} A_{-1} + λ ∫ e^{λs} A2(s) ds + ∫ e^{λs} A3(s) ds + Σ_j e^{λθ_j} A3_j
//! ```
//!
//! Every segment integral is evaluated in closed form (or by its convergent
//! power series near the origin), so there is no quadrature error anywhere.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NtsError, Result};
use crate::linalg::{
    det_complex, op_norm, right_singular_pairs_ascending, to_complex, vec_norm, CMat, ComplexValue,
};
use crate::stability::{matrix_spectral_structure, DEFAULT_CLUSTER_TOL};
use crate::sysmodel::NeutralSystem;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `e^z - 1` without cancellation for small `|z|`.
pub fn expm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

/// Power-series evaluation of `∫_a^b s^j e^{λs} ds`, used when `|λ| max(|a|,|b|) < 1`.
fn moment_series(a: f64, b: f64, lambda: Complex64, j: i32) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut lam_pow_over_fact = ONE;
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    for k in 0..60 {
        let p = k + j + 1;
        let diff = b.powi(p) - a.powi(p);
        let term = lam_pow_over_fact * (diff / p as f64);
        sum += term;
        if k > 2 && lam_pow_over_fact.norm() * scale.powi(p) < 1e-18 * sum.norm().max(1e-300) {
            break;
        }
        lam_pow_over_fact *= lambda / (k as f64 + 1.0);
    }
    sum
}

/// `∫_a^b e^{λs} ds`.
pub fn segment_integral(a: f64, b: f64, lambda: Complex64) -> Complex64 {
    let scale = a.abs().max(b.abs());
    if lambda.norm() * scale < 1.0 {
        return moment_series(a, b, lambda, 0);
    }
    (lambda * a).exp() * expm1(lambda * (b - a)) / lambda
}

/// `∫_a^b s e^{λs} ds`.
pub fn segment_first_moment(a: f64, b: f64, lambda: Complex64) -> Complex64 {
    let scale = a.abs().max(b.abs());
    if lambda.norm() * scale < 1.0 {
        return moment_series(a, b, lambda, 1);
    }
    let m0 = segment_integral(a, b, lambda);
    ((lambda * b).exp() * b - (lambda * a).exp() * a) / lambda - m0 / lambda
}

/// `λ ∫_a^b e^{λs} ds = e^{λb} - e^{λa}`, exact at `λ = 0`.
fn lambda_segment_integral(a: f64, b: f64, lambda: Complex64) -> Complex64 {
    (lambda * a).exp() * expm1(lambda * (b - a))
}

fn add_scaled(acc: &mut CMat, m: &crate::linalg::RMat, c: Complex64) {
    for (dst, &src) in acc.iter_mut().zip(m.iter()) {
        *dst += c * src;
    }
}

/// Characteristic matrix at `λ`.
pub fn delta(sys: &NeutralSystem, lambda: Complex64) -> CMat {
    let n = sys.n();
    let h = sys.h();
    let mut out = CMat::identity(n, n) * (-lambda);
    add_scaled(&mut out, sys.a_minus1(), lambda * (-lambda * h).exp());
    for (a, b, m) in sys.a2().nonzero_segments() {
        add_scaled(&mut out, m, lambda_segment_integral(a, b, lambda));
    }
    for (a, b, m) in sys.a3().nonzero_segments() {
        add_scaled(&mut out, m, segment_integral(a, b, lambda));
    }
    for atom in sys.a3().atoms() {
        add_scaled(&mut out, &atom.matrix, (lambda * atom.theta).exp());
    }
    out
}

/// Sum of the magnitudes of the terms of one row of `Δ(λ)`, maximized over
/// rows. Serves as the natural size of `Δ(λ)` when judging near-singularity,
/// including at points where `Δ(λ)` itself vanishes.
pub fn delta_scale(sys: &NeutralSystem, lambda: Complex64) -> f64 {
    let h = sys.h();
    let mut s = lambda.norm() * (1.0 + (-lambda * h).exp().norm() * sys.a_minus1().norm());
    for (a, b, m) in sys.a2().nonzero_segments() {
        s += lambda_segment_integral(a, b, lambda).norm() * m.norm();
    }
    for (a, b, m) in sys.a3().nonzero_segments() {
        s += segment_integral(a, b, lambda).norm() * m.norm();
    }
    for atom in sys.a3().atoms() {
        s += (lambda * atom.theta).exp().norm() * atom.matrix.norm();
    }
    s.max(f64::MIN_POSITIVE)
}

/// `dΔ/dλ`, differentiated term by term.
pub fn delta_derivative(sys: &NeutralSystem, lambda: Complex64) -> CMat {
    let n = sys.n();
    let h = sys.h();
    let mut out = -CMat::identity(n, n);
    add_scaled(
        &mut out,
        sys.a_minus1(),
        (ONE - lambda * h) * (-lambda * h).exp(),
    );
    for (a, b, m) in sys.a2().nonzero_segments() {
        let d = (lambda * b).exp() * b - (lambda * a).exp() * a;
        add_scaled(&mut out, m, d);
    }
    for (a, b, m) in sys.a3().nonzero_segments() {
        add_scaled(&mut out, m, segment_first_moment(a, b, lambda));
    }
    for atom in sys.a3().atoms() {
        add_scaled(&mut out, &atom.matrix, (lambda * atom.theta).exp() * atom.theta);
    }
    out
}

pub fn det_delta(sys: &NeutralSystem, lambda: Complex64) -> Complex64 {
    det_complex(&delta(sys, lambda))
}

/// `trace(Δ(λ)^{-1} Δ'(λ))`, the logarithmic derivative of `det Δ`.
///
/// `None` when `Δ(λ)` is numerically singular.
pub fn log_derivative(sys: &NeutralSystem, lambda: Complex64) -> Option<Complex64> {
    let d = delta(sys, lambda);
    let dp = delta_derivative(sys, lambda);
    let lu = d.lu();
    if lu.determinant().norm() == 0.0 {
        return None;
    }
    let x = lu.solve(&dp)?;
    let tr = x.trace();
    tr.is_finite().then_some(tr)
}

/// `d(det Δ)/dλ` by Jacobi's formula.
pub fn det_delta_derivative(sys: &NeutralSystem, lambda: Complex64) -> Complex64 {
    match log_derivative(sys, lambda) {
        Some(ld) => det_delta(sys, lambda) * ld,
        None => {
            // Singular point: fall back to a complex-step-free central difference.
            let eps = 1e-7 * (1.0 + lambda.norm());
            let e = Complex64::new(eps, 0.0);
            (det_delta(sys, lambda + e) - det_delta(sys, lambda - e)) / (2.0 * eps)
        }
    }
}

/// Kernel vector of `Δ(λ)` with the head of the corresponding generator
/// eigenvector. The history part is `θ ↦ e^{λθ} C`.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvectorCandidate {
    pub lambda: ComplexValue,
    #[serde(serialize_with = "ser_cvec")]
    pub c: Vec<Complex64>,
    #[serde(serialize_with = "ser_cvec")]
    pub head: Vec<Complex64>,
    /// `‖Δ(λ) C‖` relative to `max(‖Δ(λ)‖, delta_scale)`.
    pub relative_residual: f64,
}

fn ser_cvec<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&ComplexValue::from(*z))?;
    }
    seq.end()
}

impl EigenvectorCandidate {
    pub fn lambda(&self) -> Complex64 {
        self.lambda.into()
    }

    /// History value `e^{λθ} C`.
    pub fn history(&self, theta: f64) -> Vec<Complex64> {
        let f = (self.lambda() * theta).exp();
        self.c.iter().map(|&c| c * f).collect()
    }
}

/// Default relative singular-value cutoff for `Ker Δ(λ)` at a refined root.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

/// Orthonormal basis of the numerical kernel of `Δ(λ)`.
///
/// Singular vectors with `σ ≤ tol · max(σ_max, delta_scale)` are kept; the smallest one is always
/// returned so a single candidate is available even at a slightly inexact root.
pub fn eigenvector_candidates(
    sys: &NeutralSystem,
    lambda: Complex64,
    tol: f64,
) -> Vec<EigenvectorCandidate> {
    let d = delta(sys, lambda);
    let norm = op_norm(&d).max(delta_scale(sys, lambda));
    let pairs = right_singular_pairs_ascending(&d);
    let a = to_complex(sys.a_minus1());
    let shift = (-lambda * sys.h()).exp();
    pairs
        .into_iter()
        .enumerate()
        .filter(|(i, (s, _))| *i == 0 || *s <= tol * norm)
        .map(|(_, (_, c))| {
            let cv = nalgebra::DVector::from_vec(c.clone());
            let residual = vec_norm((&d * &cv).as_slice()) / norm;
            let ac = &a * &cv;
            let head = c
                .iter()
                .zip(ac.iter())
                .map(|(&ci, &aci)| ci - shift * aci)
                .collect();
            EigenvectorCandidate {
                lambda: lambda.into(),
                c,
                head,
                relative_residual: residual,
            }
        })
        .collect()
}

/// Principal angle between the complex lines spanned by `u` and `v`.
pub fn line_angle(u: &[Complex64], v: &[Complex64]) -> f64 {
    let inner: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
    let c = inner.norm() / (vec_norm(u) * vec_norm(v));
    c.clamp(0.0, 1.0).acos()
}

/// One nonzero eigenvalue `μ_m` of `A_{-1}` with its root-space dimension.
#[derive(Debug, Clone, Serialize)]
pub struct Chain {
    /// 1-based chain label.
    pub m: usize,
    pub mu: ComplexValue,
    pub p: usize,
    /// Asymptotic real part `ln|μ_m| / h` of the chain.
    pub abscissa: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainCenter {
    pub m: usize,
    pub k: i64,
    pub center: ComplexValue,
}

/// Circle centers `λ_m^(k) = (ln|μ_m| + i(arg μ_m + 2πk)) / h` and a common radius.
#[derive(Debug, Clone, Serialize)]
pub struct ChainGrid {
    pub h: f64,
    pub chains: Vec<Chain>,
    /// Total dimension of the root spaces of the zero eigenvalue (no chain).
    pub zero_multiplicity: usize,
    pub centers: Vec<ChainCenter>,
    pub r0: f64,
    pub radius: f64,
}

impl ChainGrid {
    pub fn chain(&self, m: usize) -> Option<&Chain> {
        self.chains.iter().find(|c| c.m == m)
    }

    pub fn center(&self, m: usize, k: i64) -> Option<Complex64> {
        self.chain(m).map(|c| chain_center(c.mu.into(), k, self.h))
    }

    /// Largest asymptotic real part over all chains.
    pub fn max_abscissa(&self) -> f64 {
        self.chains
            .iter()
            .map(|c| c.abscissa)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `arg μ` on the branch `(-π, π]`.
pub fn principal_arg(mu: Complex64) -> f64 {
    let a = mu.im.atan2(mu.re);
    if a <= -PI || (mu.im == 0.0 && mu.re < 0.0) {
        PI
    } else {
        a
    }
}

pub fn chain_center(mu: Complex64, k: i64, h: f64) -> Complex64 {
    Complex64::new(
        mu.norm().ln() / h,
        (principal_arg(mu) + 2.0 * PI * k as f64) / h,
    )
}

/// `r_0`: a third of the smallest distance between two distinct centers,
/// minimized analytically over all `k`.
fn chain_r0(mus: &[Complex64], h: f64) -> f64 {
    let mut best = 2.0 * PI / h;
    for (i, &a) in mus.iter().enumerate() {
        for &b in &mus[i + 1..] {
            let dre = (a.norm().ln() - b.norm().ln()) / h;
            let mut dphi = (principal_arg(a) - principal_arg(b)).rem_euclid(2.0 * PI);
            if dphi > PI {
                dphi = 2.0 * PI - dphi;
            }
            best = best.min(dre.hypot(dphi / h));
        }
    }
    best / 3.0
}

pub fn chain_grid(
    sys: &NeutralSystem,
    k_min: i64,
    k_max: i64,
    radius_fraction: f64,
) -> Result<ChainGrid> {
    if !(radius_fraction > 0.0 && radius_fraction <= 1.0) {
        return Err(NtsError::Domain(format!(
            "radius_fraction {radius_fraction} not in (0, 1]"
        )));
    }
    if k_min > k_max {
        return Err(NtsError::Domain(format!("empty k range [{k_min}, {k_max}]")));
    }
    let h = sys.h();
    let structure = matrix_spectral_structure(sys.a_minus1(), DEFAULT_CLUSTER_TOL);
    let zero_tol = DEFAULT_CLUSTER_TOL * structure.spectral_radius.max(1.0);
    let mut chains = Vec::new();
    let mut zero_multiplicity = 0;
    for entry in &structure.entries {
        let mu: Complex64 = entry.mu.into();
        if mu.norm() <= zero_tol {
            zero_multiplicity += entry.p;
            continue;
        }
        chains.push(Chain {
            m: chains.len() + 1,
            mu: entry.mu,
            p: entry.p,
            abscissa: mu.norm().ln() / h,
        });
    }
    if chains.is_empty() {
        return Err(NtsError::NoChains);
    }
    let mus: Vec<Complex64> = chains.iter().map(|c| c.mu.into()).collect();
    let r0 = chain_r0(&mus, h);
    let centers = chains
        .iter()
        .flat_map(|c| {
            (k_min..=k_max).map(move |k| ChainCenter {
                m: c.m,
                k,
                center: chain_center(c.mu.into(), k, h).into(),
            })
        })
        .collect();
    Ok(ChainGrid {
        h,
        chains,
        zero_multiplicity,
        centers,
        r0,
        radius: radius_fraction * r0,
    })
}
