//! Counting, locating and clustering the roots of `det Δ(λ)`.
//!
//! Counts come from the argument principle (see [`crate::contour`]). Regions
//! are quadrisected until every cell with a nonzero count is small enough for
//! Newton's method on `det Δ`, whose derivative is obtained from Jacobi's
//! formula `det Δ · trace(Δ^{-1} Δ')`. Multiplicities are counts in a tight
//! circle around each converged root.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charmatrix::{chain_grid, det_delta, log_derivative, ChainGrid};
use crate::contour::{winding_number, winding_number_strict, CharDet, Contour, CountOptions, Rect};
use crate::error::{NtsError, Result};
use crate::linalg::ComplexValue;
use crate::sysmodel::NeutralSystem;

/// Split fractions tried in turn when a child edge lands on a root. Kept off
/// the exact midpoint so symmetric windows never split along the real axis.
const SPLIT_FRACTIONS: [f64; 6] = [0.5137, 0.4821, 0.5329, 0.4613, 0.5501, 0.4417];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootOptions {
    pub count: CountOptions,
    /// Cells are split while larger than this and still unresolved.
    pub localization_tol: f64,
    /// Roots closer than this are merged.
    pub merge_tol: f64,
    pub max_subdivision_depth: usize,
    /// Cells at most this wide (relative to `1 + |center|`) are seeded with Newton.
    pub newton_cell: f64,
    pub newton_max_iter: usize,
    /// Radius of the circle used to count the multiplicity of a converged root.
    pub multiplicity_radius: f64,
    /// Acceptance bound `|det Δ(λ)| <= residual_tol (1 + |λ|)^n`.
    pub residual_tol: f64,
    /// Radius of chain circles as a fraction of `r_0` when labeling clusters.
    pub cluster_radius_fraction: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            count: CountOptions::default(),
            localization_tol: 1e-8,
            merge_tol: 1e-6,
            max_subdivision_depth: 40,
            newton_cell: 0.5,
            newton_max_iter: 100,
            multiplicity_radius: 1e-3,
            residual_tol: 1e-9,
            cluster_radius_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub lambda: ComplexValue,
    pub multiplicity: usize,
    /// `|det Δ(λ)|`.
    pub residual: f64,
}

impl Root {
    pub fn value(&self) -> Complex64 {
        self.lambda.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLabel {
    pub m: usize,
    pub k: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCluster {
    pub center: ComplexValue,
    pub radius: f64,
    pub count: usize,
    pub roots: Vec<Root>,
    pub chain_label: Option<ChainLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedCell {
    pub rect: Rect,
    pub count: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Window actually scanned (after any boundary inflation).
    pub window: Rect,
    /// Roots of `det Δ` in the window, with multiplicity.
    pub total_count: usize,
    pub clusters: Vec<RootCluster>,
    pub unclustered_roots: Vec<Root>,
    pub unresolved_cells: Vec<UnresolvedCell>,
    pub completeness_note: String,
}

impl SpectrumReport {
    /// All located roots sorted by `(Re, Im)`.
    pub fn roots(&self) -> Vec<Root> {
        let mut all: Vec<Root> = self
            .clusters
            .iter()
            .flat_map(|c| c.roots.iter().copied())
            .chain(self.unclustered_roots.iter().copied())
            .collect();
        sort_roots(&mut all);
        all
    }

    /// Roots with their chain label, if any.
    pub fn labeled_roots(&self) -> Vec<(Root, Option<ChainLabel>)> {
        let mut all: Vec<(Root, Option<ChainLabel>)> = self
            .clusters
            .iter()
            .flat_map(|c| c.roots.iter().map(move |r| (*r, c.chain_label)))
            .chain(self.unclustered_roots.iter().map(|r| (*r, None)))
            .collect();
        all.sort_by(|a, b| cmp_complex(a.0.value(), b.0.value()));
        all
    }

    pub fn is_complete(&self) -> bool {
        self.unresolved_cells.is_empty()
    }

    /// Largest real part among located roots.
    pub fn max_real_part(&self) -> Option<f64> {
        self.roots()
            .iter()
            .map(|r| r.lambda.re)
            .max_by(|a, b| a.total_cmp(b))
    }

    /// CSV with columns `re, im, multiplicity, residual, chain_m, chain_k`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["re", "im", "multiplicity", "residual", "chain_m", "chain_k"])
            .expect("in-memory write");
        for (root, label) in self.labeled_roots() {
            let (m, k) = label
                .map(|l| (l.m.to_string(), l.k.to_string()))
                .unwrap_or_default();
            w.write_record([
                format!("{:.17e}", root.lambda.re),
                format!("{:.17e}", root.lambda.im),
                root.multiplicity.to_string(),
                format!("{:.6e}", root.residual),
                m,
                k,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn cmp_complex(a: Complex64, b: Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn sort_roots(roots: &mut [Root]) {
    roots.sort_by(|a, b| cmp_complex(a.value(), b.value()));
}

/// Number of roots of `det Δ` (with multiplicity) enclosed by `contour`.
pub fn count_roots_in_contour(
    sys: &NeutralSystem,
    contour: &Contour,
    opts: &CountOptions,
) -> Result<usize> {
    Ok(winding_number(&CharDet(sys), contour, opts)?.count)
}

fn residual_bound(opts: &RootOptions, n: usize, lambda: Complex64) -> f64 {
    opts.residual_tol * (1.0 + lambda.norm()).powi(n as i32)
}

/// Newton iteration on `det Δ` with step `mult / trace(Δ^{-1}Δ')`.
///
/// Falls back to a secant step when `Δ` is singular at an iterate. Returns the
/// iterate with the smallest residual.
pub fn newton_refine(
    sys: &NeutralSystem,
    start: Complex64,
    mult: usize,
    max_iter: usize,
) -> (Complex64, f64) {
    let mut z = start;
    let mut f = det_delta(sys, z);
    let mut best = (z, f.norm());
    let mut prev: Option<(Complex64, Complex64)> = None;
    let mut stall = 0;
    for _ in 0..max_iter {
        if f.norm() == 0.0 {
            return (z, 0.0);
        }
        let step = match log_derivative(sys, z) {
            Some(ld) if ld.norm() > 0.0 => mult as f64 / ld,
            _ => match prev {
                Some((zp, fp)) if (f - fp).norm() > 0.0 => f * (z - zp) / (f - fp),
                _ => Complex64::new(1e-8 * (1.0 + z.norm()), 0.0),
            },
        };
        if !step.is_finite() {
            break;
        }
        prev = Some((z, f));
        z -= step;
        f = det_delta(sys, z);
        if !f.is_finite() {
            break;
        }
        if f.norm() < best.1 {
            best = (z, f.norm());
            stall = 0;
        } else {
            stall += 1;
        }
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + z.norm()) || stall >= 6 {
            break;
        }
    }
    best
}

/// Multiplicity of an isolated root: count in a circle of the given radius.
pub fn root_multiplicity(
    sys: &NeutralSystem,
    lambda: Complex64,
    radius: f64,
    opts: &CountOptions,
) -> Result<usize> {
    count_roots_in_contour(sys, &Contour::circle(lambda, radius), opts)
}

enum CellOutcome {
    Resolved(Vec<Root>),
    Split(Vec<(Rect, usize)>),
    Unresolved(UnresolvedCell),
}

fn try_resolve(sys: &NeutralSystem, rect: &Rect, count: usize, opts: &RootOptions) -> Option<Vec<Root>> {
    let n = sys.n();
    let c = rect.center();
    let (w, h) = (rect.width(), rect.height());
    let starts = [
        c,
        c + Complex64::new(0.25 * w, 0.21 * h),
        c + Complex64::new(-0.23 * w, 0.24 * h),
        c + Complex64::new(-0.22 * w, -0.25 * h),
        c + Complex64::new(0.24 * w, -0.2 * h),
    ];
    let mut found: Vec<Root> = Vec::new();
    for s in starts {
        let (z0, _) = newton_refine(sys, s, 1, opts.newton_max_iter);
        if !rect.contains(z0) || found.iter().any(|r| (r.value() - z0).norm() < opts.merge_tol) {
            continue;
        }
        let nearest = found
            .iter()
            .map(|r| (r.value() - z0).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = opts.multiplicity_radius.min(0.4 * nearest);
        let mult = match root_multiplicity(sys, z0, radius, &opts.count) {
            Ok(m) if m >= 1 => m,
            _ => continue,
        };
        let (z, res) = if mult > 1 {
            let polished = newton_refine(sys, z0, mult, 20);
            if (polished.0 - z0).norm() < radius && rect.contains(polished.0) {
                polished
            } else {
                (z0, det_delta(sys, z0).norm())
            }
        } else {
            (z0, det_delta(sys, z0).norm())
        };
        if res > residual_bound(opts, n, z) {
            continue;
        }
        found.push(Root {
            lambda: z.into(),
            multiplicity: mult,
            residual: res,
        });
        let total: usize = found.iter().map(|r| r.multiplicity).sum();
        if total >= count {
            break;
        }
    }
    let total: usize = found.iter().map(|r| r.multiplicity).sum();
    (total == count).then_some(found)
}

fn split_cell(sys: &NeutralSystem, rect: &Rect, count: usize, opts: &RootOptions) -> Option<Vec<(Rect, usize)>> {
    'fractions: for (i, &fx) in SPLIT_FRACTIONS.iter().enumerate() {
        let fy = SPLIT_FRACTIONS[(i + 1) % SPLIT_FRACTIONS.len()];
        let mut kids = Vec::with_capacity(4);
        for kid in rect.quadrisect(fx, fy) {
            match winding_number_strict(&CharDet(sys), &Contour::Rect(kid), &opts.count) {
                Ok(Some(k)) => kids.push((kid, k)),
                _ => continue 'fractions,
            }
        }
        if kids.iter().map(|k| k.1).sum::<usize>() == count {
            kids.retain(|k| k.1 > 0);
            return Some(kids);
        }
    }
    None
}

fn process_cell(
    sys: &NeutralSystem,
    rect: &Rect,
    count: usize,
    depth: usize,
    opts: &RootOptions,
) -> CellOutcome {
    let scale = 1.0 + rect.center().norm();
    if rect.diameter() <= opts.newton_cell * scale || depth >= opts.max_subdivision_depth {
        if let Some(roots) = try_resolve(sys, rect, count, opts) {
            return CellOutcome::Resolved(roots);
        }
    }
    if rect.diameter() <= opts.localization_tol || depth >= opts.max_subdivision_depth {
        return CellOutcome::Unresolved(UnresolvedCell {
            rect: *rect,
            count,
            reason: "Newton did not converge to the counted roots".into(),
        });
    }
    match split_cell(sys, rect, count, opts) {
        Some(kids) => CellOutcome::Split(kids),
        None => CellOutcome::Unresolved(UnresolvedCell {
            rect: *rect,
            count,
            reason: "child counts inconsistent with parent".into(),
        }),
    }
}

/// Locates all roots of `det Δ` inside `rect`.
pub fn find_roots_in_region(
    sys: &NeutralSystem,
    rect: &Rect,
    opts: &RootOptions,
) -> Result<SpectrumReport> {
    if rect.is_degenerate() {
        return Err(NtsError::Domain(format!("degenerate rectangle {rect:?}")));
    }
    let top = winding_number(&CharDet(sys), &Contour::Rect(*rect), &opts.count)?;
    let window = match top.contour {
        Contour::Rect(r) => r,
        Contour::Circle { .. } => unreachable!("rectangle stays a rectangle"),
    };
    let total_count = top.count;

    let mut roots: Vec<Root> = Vec::new();
    let mut unresolved = Vec::new();
    let mut level: Vec<(Rect, usize)> = if total_count > 0 {
        vec![(window, total_count)]
    } else {
        Vec::new()
    };
    let mut depth = 0;
    while !level.is_empty() {
        let outcomes: Vec<CellOutcome> = level
            .par_iter()
            .map(|(r, c)| process_cell(sys, r, *c, depth, opts))
            .collect();
        let mut next = Vec::new();
        for outcome in outcomes {
            match outcome {
                CellOutcome::Resolved(rs) => roots.extend(rs),
                CellOutcome::Split(kids) => next.extend(kids),
                CellOutcome::Unresolved(cell) => unresolved.push(cell),
            }
        }
        level = next;
        depth += 1;
    }

    let roots = merge_roots(roots, opts.merge_tol);
    let grid = chain_grid(sys, 0, 0, opts.cluster_radius_fraction).ok();
    let (clusters, unclustered_roots) = cluster_roots(&roots, grid.as_ref());
    let mut note = format!(
        "window [{:.6}, {:.6}] x [{:.6}, {:.6}]: {} roots with multiplicity",
        window.re_min, window.re_max, window.im_min, window.im_max, total_count
    );
    if top.inflations > 0 {
        let _ = write!(note, " (window inflated {} time(s) off a root)", top.inflations);
    }
    note.push_str("; the spectrum is infinite and roots outside the window are not reported");
    if !unresolved.is_empty() {
        let missing: usize = unresolved.iter().map(|c: &UnresolvedCell| c.count).sum();
        let _ = write!(note, "; {missing} counted roots lie in unresolved cells");
    }
    Ok(SpectrumReport {
        window,
        total_count,
        clusters,
        unclustered_roots,
        unresolved_cells: unresolved,
        completeness_note: note,
    })
}

fn merge_roots(mut roots: Vec<Root>, tol: f64) -> Vec<Root> {
    sort_roots(&mut roots);
    let mut out: Vec<Root> = Vec::with_capacity(roots.len());
    for r in roots {
        if let Some(prev) = out.iter_mut().find(|p| (p.value() - r.value()).norm() < tol) {
            if r.residual < prev.residual {
                prev.lambda = r.lambda;
                prev.residual = r.residual;
            }
            prev.multiplicity = prev.multiplicity.max(r.multiplicity);
        } else {
            out.push(r);
        }
    }
    out
}

/// Groups roots by the chain circle that contains them.
fn cluster_roots(roots: &[Root], grid: Option<&ChainGrid>) -> (Vec<RootCluster>, Vec<Root>) {
    let Some(grid) = grid else {
        return (Vec::new(), roots.to_vec());
    };
    let mut clusters: Vec<RootCluster> = Vec::new();
    let mut loose = Vec::new();
    for root in roots {
        let z = root.value();
        let label = grid.chains.iter().find_map(|chain| {
            let k = ((z.im * grid.h - crate::charmatrix::principal_arg(chain.mu.into()))
                / (2.0 * std::f64::consts::PI))
                .round() as i64;
            let center = grid.center(chain.m, k)?;
            ((z - center).norm() < grid.radius).then_some((ChainLabel { m: chain.m, k }, center))
        });
        match label {
            Some((label, center)) => {
                if let Some(cl) = clusters.iter_mut().find(|c| c.chain_label == Some(label)) {
                    cl.roots.push(*root);
                    cl.count += root.multiplicity;
                } else {
                    clusters.push(RootCluster {
                        center: center.into(),
                        radius: grid.radius,
                        count: root.multiplicity,
                        roots: vec![*root],
                        chain_label: Some(label),
                    });
                }
            }
            None => loose.push(*root),
        }
    }
    clusters.sort_by(|a, b| cmp_complex(a.center.into(), b.center.into()));
    (clusters, loose)
}

/// Scan options for windowed spectrum searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub re_floor: f64,
    /// Explicit right edge; `None` uses the chain-derived ceiling.
    pub re_ceiling: Option<f64>,
    pub im_cap: f64,
    pub roots: RootOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            re_floor: -2.0,
            re_ceiling: None,
            im_cap: 40.0,
            roots: RootOptions::default(),
        }
    }
}

/// Right edge of the rightmost-root window.
///
/// Starts from `max(1, max_m ln|μ_m|/h + 1)` and widens it to an explicit
/// bound on roots in the right half-plane: for `Re λ >= x` with
/// `q = e^{-xh}‖A_{-1}‖ < 1`, a root must satisfy `|λ| <= K / (1 - q)`, where
/// `K` bounds the kernel terms of `Δ` on `Re λ >= 0`.
pub fn default_re_ceiling(sys: &NeutralSystem) -> f64 {
    let chains = chain_grid(sys, 0, 0, 1.0).ok();
    let heuristic = chains
        .as_ref()
        .map_or(1.0, |g| (g.max_abscissa() + 1.0).max(1.0));
    let a_norm = sys.a_minus1().clone().singular_values().max();
    let k_bound: f64 = sys
        .a2()
        .nonzero_segments()
        .map(|(_, _, m)| 2.0 * m.norm())
        .chain(sys.a3().nonzero_segments().map(|(a, b, m)| (b - a) * m.norm()))
        .chain(sys.a3().atoms().iter().map(|a| a.matrix.norm()))
        .sum();
    let x_star = if a_norm > 0.0 {
        ((2.0 * a_norm).ln() / sys.h()).max(0.0)
    } else {
        0.0
    };
    let q = (-x_star * sys.h()).exp() * a_norm;
    let bound = x_star.max(k_bound / (1.0 - q));
    heuristic.max(bound + 0.5)
}

/// Spectrum in `[re_floor, re_ceiling] × [-im_cap, im_cap]`.
pub fn rightmost_root_scan(
    sys: &NeutralSystem,
    re_floor: f64,
    im_cap: f64,
    opts: &RootOptions,
) -> Result<SpectrumReport> {
    scan_window(
        sys,
        &ScanOptions {
            re_floor,
            re_ceiling: None,
            im_cap,
            roots: *opts,
        },
    )
}

pub fn scan_window(sys: &NeutralSystem, scan: &ScanOptions) -> Result<SpectrumReport> {
    let ceiling = scan.re_ceiling.unwrap_or_else(|| default_re_ceiling(sys));
    if !(scan.re_floor < ceiling && scan.im_cap > 0.0) {
        return Err(NtsError::Domain(format!(
            "scan needs re_floor < re_ceiling and im_cap > 0 (got {}, {}, {})",
            scan.re_floor, ceiling, scan.im_cap
        )));
    }
    let mut report =
        find_roots_in_region(sys, &Rect::symmetric(scan.re_floor, ceiling, scan.im_cap), &scan.roots)?;
    if let Ok(grid) = chain_grid(sys, 0, 0, 1.0) {
        let below: Vec<String> = grid
            .chains
            .iter()
            .filter(|c| c.abscissa < scan.re_floor)
            .map(|c| format!("m={} (ln|mu|/h = {:.4})", c.m, c.abscissa))
            .collect();
        if !below.is_empty() {
            let _ = write!(
                report.completeness_note,
                "; chains left of the floor ({}) cluster near their own abscissa for large |Im| and add no roots to the window edges",
                below.join(", ")
            );
        }
        let _ = write!(
            report.completeness_note,
            "; beyond |Im| = {} roots cluster around the chain circles of radius r0 = {:.4}",
            scan.im_cap, grid.r0
        );
    }
    Ok(report)
}

/// Outcome of checking the cluster multiplicity on one chain circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterCheck {
    pub m: usize,
    pub k: i64,
    pub count: usize,
    pub expected: usize,
    pub matches: bool,
}

/// Counts roots in the chain circle `L_m^(k)` and compares with `p_m`.
pub fn verify_cluster_multiplicity(
    sys: &NeutralSystem,
    grid: &ChainGrid,
    k: i64,
    m: usize,
    opts: &CountOptions,
) -> Result<ClusterCheck> {
    let chain = grid
        .chain(m)
        .ok_or_else(|| NtsError::Domain(format!("chain m = {m} not in grid")))?;
    let center = grid
        .center(m, k)
        .ok_or_else(|| NtsError::Domain(format!("center ({m}, {k}) not in grid")))?;
    let count = count_roots_in_contour(sys, &Contour::circle(center, grid.radius), opts)?;
    Ok(ClusterCheck {
        m,
        k,
        count,
        expected: chain.p,
        matches: count == chain.p,
    })
}

/// Smallest `N` such that every circle with `N <= |k| <= k_max` on chain `m`
/// holds exactly `p_m` roots; `None` if even `|k| = k_max` fails.
pub fn clustering_onset(
    sys: &NeutralSystem,
    grid: &ChainGrid,
    m: usize,
    k_max: i64,
    opts: &CountOptions,
) -> Result<Option<i64>> {
    let mut onset = None;
    for k_abs in (0..=k_max).rev() {
        let ok_pos = verify_cluster_multiplicity(sys, grid, k_abs, m, opts)?.matches;
        let ok_neg = verify_cluster_multiplicity(sys, grid, -k_abs, m, opts)?.matches;
        if ok_pos && ok_neg {
            onset = Some(k_abs);
        } else {
            break;
        }
    }
    Ok(onset)
}
