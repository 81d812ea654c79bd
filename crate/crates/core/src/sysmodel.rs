//! Neutral system data model, delay kernels, validation and JSON ingestion.
//!
//! A system is `d/dt[z(t) - A_{-1} z(t-h)] = ∫ A2(θ) ż(t+θ) dθ + ∫ A3(θ) z(t+θ) dθ + B u(t)`
//! with both integrals over `[-h, 0]`. Kernels are piecewise-constant matrix
//! densities; `A3` may additionally carry point atoms.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NtsError, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows, RMat};

/// Point term `M z(t + theta)` of a delay kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub theta: f64,
    pub matrix: RMat,
}

/// Matrix-valued piecewise-constant density on `[-h, 0]` plus point atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayKernel {
    breakpoints: Vec<f64>,
    segments: Vec<RMat>,
    atoms: Vec<Atom>,
}

impl DelayKernel {
    /// Validated constructor; `n` and `h` are the owning system's dimension and delay.
    pub fn new(
        n: usize,
        h: f64,
        breakpoints: Vec<f64>,
        segments: Vec<RMat>,
        atoms: Vec<Atom>,
    ) -> Result<Self> {
        let kernel = Self {
            breakpoints,
            segments,
            atoms,
        };
        let mut issues = Vec::new();
        kernel.check(n, h, "kernel", &mut issues);
        match issues.into_iter().find(|i| i.severity == Severity::Error) {
            Some(issue) => Err(NtsError::Validation(issue.message)),
            None => Ok(kernel),
        }
    }

    pub fn zero(n: usize, h: f64) -> Self {
        Self {
            breakpoints: vec![-h, 0.0],
            segments: vec![RMat::zeros(n, n)],
            atoms: Vec::new(),
        }
    }

    /// Zero density with the given atoms.
    pub fn atoms_only(n: usize, h: f64, atoms: Vec<Atom>) -> Self {
        Self {
            atoms,
            ..Self::zero(n, h)
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_matrices(&self) -> &[RMat] {
        &self.segments
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `(a, b, M)` for every density segment `[a, b)`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &RMat)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(self.segments.iter())
            .map(|(w, m)| (w[0], w[1], m))
    }

    /// Segments whose matrix is not identically zero.
    pub fn nonzero_segments(&self) -> impl Iterator<Item = (f64, f64, &RMat)> + '_ {
        self.segments().filter(|(_, _, m)| m.iter().any(|&x| x != 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero_segments().next().is_none()
            && self.atoms.iter().all(|a| a.matrix.iter().all(|&x| x == 0.0))
    }

    fn h(&self) -> f64 {
        -self.breakpoints[0]
    }

    /// Density value at `theta`; atoms are not included.
    ///
    /// Segments are half-open `[θ_i, θ_{i+1})`, the last one closed.
    pub fn eval(&self, theta: f64) -> Result<RMat> {
        let h = self.h();
        let slack = 1e-12 * h;
        if !(theta >= -h - slack && theta <= slack) {
            return Err(NtsError::Domain(format!(
                "theta = {theta} outside [{}, 0]",
                -h
            )));
        }
        let last = self.segments.len() - 1;
        let idx = self.breakpoints[1..self.breakpoints.len() - 1]
            .partition_point(|&b| b <= theta)
            .min(last);
        Ok(self.segments[idx].clone())
    }

    /// `∫_{-h}^0 density(s) ds + Σ atoms`.
    pub fn total_mass(&self, n: usize) -> RMat {
        let mut acc = RMat::zeros(n, n);
        for (a, b, m) in self.segments() {
            acc += m * (b - a);
        }
        for atom in &self.atoms {
            acc += &atom.matrix;
        }
        acc
    }

    fn similarity(&self, s: &RMat, s_inv: &RMat) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            segments: self.segments.iter().map(|m| s * m * s_inv).collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    theta: a.theta,
                    matrix: s * &a.matrix * s_inv,
                })
                .collect(),
        }
    }

    fn check(&self, n: usize, h: f64, name: &str, issues: &mut Vec<Issue>) {
        let bp = &self.breakpoints;
        if bp.len() < 2 {
            issues.push(Issue::error(format!("{name}: needs at least two breakpoints")));
            return;
        }
        if bp.iter().any(|x| !x.is_finite()) {
            issues.push(Issue::error(format!("{name}: non-finite breakpoint")));
        }
        if bp.windows(2).any(|w| w[0] >= w[1]) {
            issues.push(Issue::error(format!(
                "{name}: breakpoints must be strictly increasing"
            )));
        }
        let tol = 1e-12 * h.max(1.0);
        if (bp[0] + h).abs() > tol {
            issues.push(Issue::error(format!(
                "{name}: first breakpoint {} must equal -h = {}",
                bp[0], -h
            )));
        }
        if bp[bp.len() - 1].abs() > tol {
            issues.push(Issue::error(format!("{name}: last breakpoint must be 0")));
        }
        if self.segments.len() + 1 != bp.len() {
            issues.push(Issue::error(format!(
                "{name}: {} segments for {} breakpoints",
                self.segments.len(),
                bp.len()
            )));
        }
        for (i, m) in self.segments.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                issues.push(Issue::error(format!(
                    "{name}: segment {i} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                issues.push(Issue::error(format!("{name}: segment {i} has non-finite entries")));
            }
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if !(a.theta >= -h - tol && a.theta <= tol) {
                issues.push(Issue::error(format!(
                    "{name}: atom {i} at theta = {} outside [-h, 0]",
                    a.theta
                )));
            }
            if a.matrix.nrows() != n || a.matrix.ncols() != n {
                issues.push(Issue::error(format!(
                    "{name}: atom {i} is {}x{}, expected {n}x{n}",
                    a.matrix.nrows(),
                    a.matrix.ncols()
                )));
            }
            if a.matrix.iter().any(|x| !x.is_finite()) {
                issues.push(Issue::error(format!("{name}: atom {i} has non-finite entries")));
            }
        }
    }
}

/// Linear neutral-type system with one delay `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralSystem {
    n: usize,
    r: usize,
    h: f64,
    a_minus1: RMat,
    a2: DelayKernel,
    a3: DelayKernel,
    b: RMat,
}

impl NeutralSystem {
    pub fn new(
        h: f64,
        a_minus1: RMat,
        a2: DelayKernel,
        a3: DelayKernel,
        b: RMat,
    ) -> Result<Self> {
        let sys = Self {
            n: a_minus1.nrows(),
            r: b.ncols(),
            h,
            a_minus1,
            a2,
            a3,
            b,
        };
        let report = sys.validate();
        match report.first_error() {
            Some(msg) => Err(NtsError::Validation(msg.to_string())),
            None => Ok(sys),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn a_minus1(&self) -> &RMat {
        &self.a_minus1
    }
    pub fn a2(&self) -> &DelayKernel {
        &self.a2
    }
    pub fn a3(&self) -> &DelayKernel {
        &self.a3
    }
    pub fn b(&self) -> &RMat {
        &self.b
    }

    /// Same dynamics with a different input matrix.
    pub fn with_input(&self, b: RMat) -> Result<Self> {
        Self::new(self.h, self.a_minus1.clone(), self.a2.clone(), self.a3.clone(), b)
    }

    /// Change of state coordinates `z -> S z`.
    pub fn similarity_transform(&self, s: &RMat) -> Result<Self> {
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| NtsError::Domain("similarity matrix is singular".into()))?;
        Self::new(
            self.h,
            s * &self.a_minus1 * &s_inv,
            self.a2.similarity(s, &s_inv),
            self.a3.similarity(s, &s_inv),
            s * &self.b,
        )
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let n = self.n;
        if n == 0 {
            issues.push(Issue::error("state dimension n must be positive".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            issues.push(Issue::error(format!("delay h = {} must be positive", self.h)));
            return ValidationReport::from_issues(issues);
        }
        if self.a_minus1.nrows() != self.a_minus1.ncols() {
            issues.push(Issue::error(format!(
                "A_minus1 is {}x{}, expected square",
                self.a_minus1.nrows(),
                self.a_minus1.ncols()
            )));
        }
        if self.a_minus1.iter().any(|x| !x.is_finite()) {
            issues.push(Issue::error("A_minus1 has non-finite entries".into()));
        }
        if self.b.nrows() != n {
            issues.push(Issue::error(format!(
                "B has {} rows, expected {n}",
                self.b.nrows()
            )));
        }
        if self.b.iter().any(|x| !x.is_finite()) {
            issues.push(Issue::error("B has non-finite entries".into()));
        }
        self.a2.check(n, self.h, "A2", &mut issues);
        self.a3.check(n, self.h, "A3", &mut issues);
        if !self.a2.atoms.is_empty() {
            issues.push(Issue::error("A2 must not carry atoms".into()));
        }
        if self.r == 0 {
            issues.push(Issue::warning(
                "r = 0: controllability analyses are unavailable".into(),
            ));
        }
        ValidationReport::from_issues(issues)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl Issue {
    fn error(message: String) -> Self {
        Self {
            severity: Severity::Error,
            message,
        }
    }
    fn warning(message: String) -> Self {
        Self {
            severity: Severity::Warning,
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<Issue>) -> Self {
        Self {
            ok: issues.iter().all(|i| i.severity != Severity::Error),
            issues,
        }
    }

    pub fn first_error(&self) -> Option<&str> {
        self.issues
            .iter()
            .find(|i| i.severity == Severity::Error)
            .map(|i| i.message.as_str())
    }
}

// ---------------------------------------------------------------------------
// JSON file schema

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub theta: f64,
    pub matrix: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomFile>>,
}

/// On-disk system document. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub n: usize,
    pub r: usize,
    pub h: f64,
    #[serde(rename = "A_minus1")]
    pub a_minus1: Rows,
    #[serde(rename = "A2")]
    pub a2: KernelFile,
    #[serde(rename = "A3")]
    pub a3: KernelFile,
    #[serde(rename = "B")]
    pub b: Rows,
}

fn rows_to_matrix(rows: &Rows, nrows: usize, ncols: usize, what: &str) -> Result<RMat> {
    // An n x 0 matrix may be written as [] as well as n empty rows.
    if ncols == 0 && rows.is_empty() {
        return Ok(RMat::zeros(nrows, 0));
    }
    matrix_from_rows(rows, nrows, ncols).ok_or_else(|| {
        let got_cols = rows.first().map_or(0, Vec::len);
        NtsError::Validation(format!(
            "{what} is {}x{got_cols}, expected {nrows}x{ncols}",
            rows.len()
        ))
    })
}

fn kernel_from_file(k: &KernelFile, n: usize, what: &str) -> Result<DelayKernel> {
    let segments = k
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| rows_to_matrix(s, n, n, &format!("{what} segment {i}")))
        .collect::<Result<Vec<_>>>()?;
    let atoms = k
        .atoms
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, a)| {
            Ok(Atom {
                theta: a.theta,
                matrix: rows_to_matrix(&a.matrix, n, n, &format!("{what} atom {i}"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DelayKernel {
        breakpoints: k.breakpoints.clone(),
        segments,
        atoms,
    })
}

fn kernel_to_file(k: &DelayKernel, with_atoms: bool) -> KernelFile {
    KernelFile {
        breakpoints: k.breakpoints.clone(),
        segments: k.segments.iter().map(matrix_to_rows).collect(),
        atoms: with_atoms.then(|| {
            k.atoms
                .iter()
                .map(|a| AtomFile {
                    theta: a.theta,
                    matrix: matrix_to_rows(&a.matrix),
                })
                .collect()
        }),
    }
}

impl SystemFile {
    pub fn into_system(self) -> Result<NeutralSystem> {
        let n = self.n;
        if n == 0 {
            return Err(NtsError::Validation("n must be positive".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(NtsError::Validation(format!(
                "delay h = {} must be positive",
                self.h
            )));
        }
        let a_minus1 = rows_to_matrix(&self.a_minus1, n, n, "A_minus1")?;
        let b = rows_to_matrix(&self.b, n, self.r, "B")?;
        let a2 = kernel_from_file(&self.a2, n, "A2")?;
        let a3 = kernel_from_file(&self.a3, n, "A3")?;
        NeutralSystem::new(self.h, a_minus1, a2, a3, b)
    }

    pub fn from_system(sys: &NeutralSystem) -> Self {
        Self {
            n: sys.n,
            r: sys.r,
            h: sys.h,
            a_minus1: matrix_to_rows(&sys.a_minus1),
            a2: kernel_to_file(&sys.a2, false),
            a3: kernel_to_file(&sys.a3, true),
            b: matrix_to_rows(&sys.b),
        }
    }
}

pub fn parse_system(text: &str) -> Result<NeutralSystem> {
    let file: SystemFile =
        serde_json::from_str(text).map_err(|e| NtsError::Parse(e.to_string()))?;
    file.into_system()
}

pub fn load_system(path: impl AsRef<Path>) -> Result<NeutralSystem> {
    let text = fs::read_to_string(path)?;
    parse_system(&text)
}

pub fn serialize_system(sys: &NeutralSystem) -> String {
    serde_json::to_string_pretty(&SystemFile::from_system(sys)).expect("system serializes")
}

pub fn kernel_eval(k: &DelayKernel, theta: f64) -> Result<RMat> {
    k.eval(theta)
}
