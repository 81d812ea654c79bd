//! Eigenstructure of the difference matrix and stability verdicts.
//!
//! Exponential stability needs both a root-free closed right half-plane and
//! `ρ(A_{-1}) < 1`. When the spectrum is in the open left half-plane but
//! `A_{-1}` has eigenvalues on the unit circle, the Jordan structure of those
//! eigenvalues decides between three mutually exclusive cases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{singular_values_complex, ComplexValue, RMat};
use crate::rootfinder::{scan_window, ScanOptions, SpectrumReport};
use crate::sysmodel::NeutralSystem;

/// Eigenvalues of `A_{-1}` closer than this (times `max(1, ‖A‖)`) are one cluster.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
/// `||μ| - 1| <= DEFAULT_UNIT_TOL` puts `μ` on the unit circle.
pub const DEFAULT_UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenEntry {
    pub mu: ComplexValue,
    pub algebraic: usize,
    pub geometric: usize,
    /// Root-space dimension, equal to the algebraic multiplicity.
    pub p: usize,
    pub jordan_block: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpectralStructure {
    pub entries: Vec<EigenEntry>,
    pub spectral_radius: f64,
    /// Entries with `||μ| - 1| <= unit_tol`.
    pub unit_circle: Vec<EigenEntry>,
    pub cluster_tol: f64,
    pub unit_tol: f64,
}

impl MatrixSpectralStructure {
    pub fn has_unit_jordan_block(&self) -> bool {
        self.unit_circle.iter().any(|e| e.jordan_block)
    }
}

pub fn matrix_spectral_structure(a: &RMat, tol: f64) -> MatrixSpectralStructure {
    matrix_spectral_structure_with(a, tol, DEFAULT_UNIT_TOL)
}

pub fn matrix_spectral_structure_with(a: &RMat, tol: f64, unit_tol: f64) -> MatrixSpectralStructure {
    let n = a.nrows();
    let norm = a.clone().singular_values().max().max(1.0);
    let eig: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    let cutoff = tol * norm;

    // Single-linkage clustering of the eigenvalues.
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eig[i] - eig[j]).norm() <= cutoff {
                let (ri, rj) = (root(&mut label, i), root(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut group_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = root(&mut label, i);
        let g = match group_of[r] {
            Some(g) => g,
            None => {
                groups.push(Vec::new());
                group_of[r] = Some(groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[g].push(eig[i]);
    }

    let ac = a.map(|x| Complex64::new(x, 0.0));
    let mut entries: Vec<EigenEntry> = groups
        .into_iter()
        .map(|g| {
            let algebraic = g.len();
            let mut mu = g.iter().sum::<Complex64>() / algebraic as f64;
            if mu.im.abs() <= cutoff {
                mu.im = 0.0;
            }
            let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * mu;
            let sv = singular_values_complex(&shifted);
            let rank = sv.iter().filter(|&&s| s > cutoff).count();
            let geometric = (n - rank).clamp(1, algebraic);
            EigenEntry {
                mu: mu.into(),
                algebraic,
                geometric,
                p: algebraic,
                jordan_block: geometric < algebraic,
            }
        })
        .collect();
    entries.sort_by(|x, y| x.mu.re.total_cmp(&y.mu.re).then(x.mu.im.total_cmp(&y.mu.im)));
    let spectral_radius = entries
        .iter()
        .map(|e| Complex64::from(e.mu).norm())
        .fold(0.0, f64::max);
    let unit_circle = entries
        .iter()
        .filter(|e| (Complex64::from(e.mu).norm() - 1.0).abs() <= unit_tol)
        .cloned()
        .collect();
    MatrixSpectralStructure {
        entries,
        spectral_radius,
        unit_circle,
        cluster_tol: tol,
        unit_tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentialVerdict {
    Stable,
    NotStable,
    UndeterminedWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticCase {
    ExpRegime,
    CaseIStable,
    CaseIiUnstable,
    CaseIiiIndeterminate,
    #[serde(rename = "spectrum_in_RHP_unstable")]
    SpectrumInRhpUnstable,
}

impl AsymptoticCase {
    pub fn code(&self) -> &'static str {
        match self {
            AsymptoticCase::ExpRegime => "exp_regime",
            AsymptoticCase::CaseIStable => "case_i_stable",
            AsymptoticCase::CaseIiUnstable => "case_ii_unstable",
            AsymptoticCase::CaseIiiIndeterminate => "case_iii_indeterminate",
            AsymptoticCase::SpectrumInRhpUnstable => "spectrum_in_RHP_unstable",
        }
    }
}

/// Options for the stability analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub scan: ScanOptions,
    pub cluster_tol: f64,
    pub unit_tol: f64,
    /// Roots with `Re λ > -margin` are too close to the axis to call exponential stability.
    pub margin: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            scan: ScanOptions {
                re_floor: -1.0,
                ..ScanOptions::default()
            },
            cluster_tol: DEFAULT_CLUSTER_TOL,
            unit_tol: DEFAULT_UNIT_TOL,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub window: crate::contour::Rect,
    pub total_count: usize,
    pub rightmost: Option<ComplexValue>,
    pub rhp_roots: Vec<ComplexValue>,
    pub complete: bool,
    pub note: String,
}

impl ScanSummary {
    fn from_report(rep: &SpectrumReport) -> Self {
        let roots = rep.roots();
        let rightmost = roots
            .iter()
            .max_by(|a, b| a.lambda.re.total_cmp(&b.lambda.re))
            .map(|r| r.lambda);
        Self {
            window: rep.window,
            total_count: rep.total_count,
            rightmost,
            rhp_roots: roots.iter().filter(|r| r.lambda.re >= 0.0).map(|r| r.lambda).collect(),
            complete: rep.is_complete(),
            note: rep.completeness_note.clone(),
        }
    }

    fn has_rhp_root(&self) -> bool {
        !self.rhp_roots.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub scan: ScanSummary,
    pub structure: MatrixSpectralStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialReport {
    pub exponential: ExponentialVerdict,
    pub explanation: String,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub exponential: ExponentialVerdict,
    pub asymptotic_case: AsymptoticCase,
    pub case_code: String,
    pub explanation: String,
    /// Set when the verdict depends on the spectrum being root-free outside
    /// the scanned window.
    pub conditional_on_window: bool,
    pub evidence: Evidence,
}

fn scan_for_stability(sys: &NeutralSystem, opts: &StabilityOptions) -> Result<(Evidence, f64)> {
    let structure = matrix_spectral_structure_with(sys.a_minus1(), opts.cluster_tol, opts.unit_tol);
    let chain_abscissa = if structure.spectral_radius > 0.0 {
        structure
            .entries
            .iter()
            .map(|e| Complex64::from(e.mu).norm())
            .filter(|&r| r > 0.0)
            .map(|r| r.ln() / sys.h())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NEG_INFINITY
    };
    // Floor sits just left of the rightmost chain so its roots stay in view,
    // but never right of the requested floor.
    let floor = opts.scan.re_floor.max(chain_abscissa - 1.0).min(-opts.margin.max(1e-3));
    let scan = ScanOptions {
        re_floor: floor,
        ..opts.scan
    };
    let report = scan_window(sys, &scan)?;
    Ok((
        Evidence {
            scan: ScanSummary::from_report(&report),
            structure,
        },
        chain_abscissa,
    ))
}

fn exponential_from(evidence: &Evidence, chain_abscissa: f64, opts: &StabilityOptions) -> (ExponentialVerdict, String) {
    let rho = evidence.structure.spectral_radius;
    if rho >= 1.0 - opts.unit_tol {
        return (
            ExponentialVerdict::NotStable,
            format!("spectral radius of A_minus1 is {rho:.12} >= 1: root chains approach or cross the imaginary axis"),
        );
    }
    if evidence.scan.has_rhp_root() {
        return (
            ExponentialVerdict::NotStable,
            format!(
                "{} root(s) with Re >= 0 found in the scanned window",
                evidence.scan.rhp_roots.len()
            ),
        );
    }
    if !evidence.scan.complete {
        return (
            ExponentialVerdict::UndeterminedWindow,
            "root scan left unresolved cells".into(),
        );
    }
    let rightmost = evidence.scan.rightmost.map_or(f64::NEG_INFINITY, |z| z.re);
    if rightmost > -opts.margin || chain_abscissa > -opts.margin {
        return (
            ExponentialVerdict::UndeterminedWindow,
            format!("rightmost located root at Re = {rightmost:.3e} is within the margin of the axis"),
        );
    }
    (
        ExponentialVerdict::Stable,
        format!(
            "spectral radius {rho:.6} < 1, no root with Re >= 0 in the window, rightmost Re = {:.6}",
            rightmost.max(chain_abscissa)
        ),
    )
}

/// Exponential stability: `ρ(A_{-1}) < 1` and no root of `det Δ` in `Re λ >= 0`.
pub fn exponential_stability(sys: &NeutralSystem, opts: &StabilityOptions) -> Result<ExponentialReport> {
    let (evidence, abscissa) = scan_for_stability(sys, opts)?;
    let (exponential, explanation) = exponential_from(&evidence, abscissa, opts);
    Ok(ExponentialReport {
        exponential,
        explanation,
        evidence,
    })
}

/// Full asymptotic classification.
pub fn classify_asymptotic(sys: &NeutralSystem, opts: &StabilityOptions) -> Result<StabilityVerdict> {
    let (evidence, abscissa) = scan_for_stability(sys, opts)?;
    let (exponential, exp_explanation) = exponential_from(&evidence, abscissa, opts);
    let sigma1 = &evidence.structure.unit_circle;
    let (case, explanation, conditional) = if evidence.scan.has_rhp_root() {
        (
            AsymptoticCase::SpectrumInRhpUnstable,
            format!(
                "unstable: {} root(s) of det Delta with Re >= 0, e.g. {}",
                evidence.scan.rhp_roots.len(),
                evidence.scan.rhp_roots[0]
            ),
            false,
        )
    } else if sigma1.is_empty() {
        (
            AsymptoticCase::ExpRegime,
            format!("no eigenvalue of A_minus1 on the unit circle; exponential analysis applies: {exp_explanation}"),
            exponential != ExponentialVerdict::NotStable,
        )
    } else if let Some(e) = sigma1.iter().find(|e| e.jordan_block) {
        (
            AsymptoticCase::CaseIiUnstable,
            format!(
                "unstable: eigenvalue {} of A_minus1 on the unit circle has a Jordan block (algebraic {}, geometric {})",
                e.mu, e.algebraic, e.geometric
            ),
            true,
        )
    } else if let Some(e) = sigma1.iter().find(|e| e.geometric >= 2) {
        (
            AsymptoticCase::CaseIiiIndeterminate,
            format!(
                "indeterminate: eigenvalue {} on the unit circle is semisimple with a {}-dimensional eigenspace; \
                 systems with this spectrum can be stable or unstable, so spectral data cannot decide",
                e.mu, e.geometric
            ),
            true,
        )
    } else {
        (
            AsymptoticCase::CaseIStable,
            "asymptotically stable (not exponentially): unit-circle eigenvalues of A_minus1 are all simple; \
             conditional on the spectrum being in Re < 0 outside the scanned window"
                .into(),
            true,
        )
    };
    Ok(StabilityVerdict {
        exponential,
        asymptotic_case: case,
        case_code: case.code().into(),
        explanation,
        conditional_on_window: conditional,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn jordan_block_detected() {
        let s = matrix_spectral_structure(&RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DEFAULT_CLUSTER_TOL);
        assert_eq!(s.entries.len(), 1);
        let e = &s.entries[0];
        assert_eq!((e.algebraic, e.geometric, e.p), (2, 1, 2));
        assert!(e.jordan_block);
        assert_eq!(s.unit_circle.len(), 1);
    }

    #[test]
    fn semisimple_double_eigenvalue() {
        let s = matrix_spectral_structure(&RMat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]), DEFAULT_CLUSTER_TOL);
        assert_eq!(s.entries.len(), 1);
        let e = &s.entries[0];
        assert_eq!((e.algebraic, e.geometric), (2, 2));
        assert!(!e.jordan_block);
        assert_eq!(e.mu, ComplexValue { re: -1.0, im: 0.0 });
    }

    #[test]
    fn simple_eigenvalues_and_radius() {
        let s = matrix_spectral_structure(&RMat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.3]), DEFAULT_CLUSTER_TOL);
        assert_eq!(s.entries.len(), 2);
        assert!(s.entries.iter().all(|e| e.algebraic == 1 && e.geometric == 1));
        assert!((s.spectral_radius - 0.5).abs() < 1e-15);
        assert!(s.unit_circle.is_empty());
    }

    #[test]
    fn rotation_has_simple_unit_eigenvalues() {
        let s = matrix_spectral_structure(&RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), DEFAULT_CLUSTER_TOL);
        assert_eq!(s.unit_circle.len(), 2);
        assert!(s.unit_circle.iter().all(|e| e.algebraic == 1));
    }

    #[test]
    fn scalar_decay_is_exponentially_stable() {
        let v = classify_asymptotic(&fixtures::scalar_decay(), &StabilityOptions::default()).unwrap();
        assert_eq!(v.exponential, ExponentialVerdict::Stable);
        assert_eq!(v.asymptotic_case, AsymptoticCase::ExpRegime);
    }

    #[test]
    fn example_one_is_not_exponentially_stable() {
        for (a, b) in [(-1.0, -2.0), (1.0, 2.0)] {
            let r = exponential_stability(&fixtures::example1(a, b), &StabilityOptions::default()).unwrap();
            assert_eq!(r.exponential, ExponentialVerdict::NotStable);
        }
    }

    #[test]
    fn case_codes_serialize() {
        let json = serde_json::to_string(&AsymptoticCase::SpectrumInRhpUnstable).unwrap();
        assert_eq!(json, "\"spectrum_in_RHP_unstable\"");
        assert_eq!(AsymptoticCase::CaseIiiIndeterminate.code(), "case_iii_indeterminate");
    }
}
