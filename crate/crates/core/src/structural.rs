//! Rank conditions for stabilizability and null-controllability, controllability
//! indices and the controllability-time bounds built from them.
//!
//! Conditions quantified over all `λ` are checked only at located roots of
//! `det Δ`: away from them `Δ(λ)` alone has rank `n`. Reports carry the scan
//! window so the residual risk stays visible.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charmatrix::{delta, delta_scale};
use crate::contour::Rect;
use crate::error::{NtsError, Result};
use crate::linalg::{rank_real, singular_values_complex, to_complex, CMat, ComplexValue, RMat, DEFAULT_RANK_FACTOR};
use crate::rootfinder::{scan_window, Root, ScanOptions};
use crate::stability::{matrix_spectral_structure_with, DEFAULT_CLUSTER_TOL, DEFAULT_UNIT_TOL};
use crate::sysmodel::NeutralSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    /// Factor in the cutoff `max(rows, cols) * sigma_1 * factor`.
    pub rank_factor: f64,
    /// Extra relative cutoff used at numerically located roots, where `Δ`
    /// is only singular up to the root's accuracy.
    pub root_rank_tol: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            rank_factor: DEFAULT_RANK_FACTOR,
            root_rank_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    pub test_point: ComplexValue,
    pub matrix_shape: (usize, usize),
    /// The `n`-th largest singular value (zero when fewer exist).
    pub min_singular_value: f64,
    pub largest_singular_value: f64,
    pub cutoff: f64,
    pub rank: usize,
    pub passes: bool,
}

fn rank_test(point: Complex64, m: &CMat, n: usize, factor: f64, floor: f64) -> RankTestResult {
    let sv = singular_values_complex(m);
    let top = sv.first().copied().unwrap_or(0.0);
    let cutoff = (m.nrows().max(m.ncols()) as f64 * top * factor).max(floor);
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    RankTestResult {
        test_point: point.into(),
        matrix_shape: (m.nrows(), m.ncols()),
        min_singular_value: if n == 0 { top } else { sv.get(n - 1).copied().unwrap_or(0.0) },
        largest_singular_value: top,
        cutoff,
        rank,
        passes: rank == n,
    }
}

fn hstack(left: &CMat, right: &RMat) -> CMat {
    let n = left.nrows();
    let mut out = CMat::zeros(n, left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(&to_complex(right));
    out
}

/// Rank of `[Δ(λ) | B]`.
pub fn hautus_at(sys: &NeutralSystem, lambda: Complex64, opts: &RankOptions) -> RankTestResult {
    let block = hstack(&delta(sys, lambda), sys.b());
    rank_test(lambda, &block, sys.n(), opts.rank_factor, 0.0)
}

/// Rank of `[Δ(λ) | B]` at a located root of `det Δ`.
///
/// Singular values below `root_rank_tol * max(sigma_1, scale of Δ(λ))` are
/// treated as zero, since the root itself is only known to that accuracy.
pub fn hautus_at_root(sys: &NeutralSystem, lambda: Complex64, opts: &RankOptions) -> RankTestResult {
    let d = delta(sys, lambda);
    let block = hstack(&d, sys.b());
    let top = singular_values_complex(&block).first().copied().unwrap_or(0.0);
    let floor = opts.root_rank_tol * top.max(delta_scale(sys, lambda));
    rank_test(lambda, &block, sys.n(), opts.rank_factor, floor)
}

/// Rank of `[μI - A | B]`.
pub fn hautus_matrix_pair(a: &RMat, b: &RMat, mu: Complex64, opts: &RankOptions) -> RankTestResult {
    let n = a.nrows();
    let shifted = CMat::from_diagonal_element(n, n, mu) - to_complex(a);
    rank_test(mu, &hstack(&shifted, b), n, opts.rank_factor, 0.0)
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn kalman_matrix(a: &RMat, b: &RMat) -> RMat {
    let (n, s) = (a.nrows(), b.ncols());
    let mut out = RMat::zeros(n, n * s);
    let mut block = b.clone();
    for i in 0..n {
        out.columns_mut(i * s, s).copy_from(&block);
        block = a * &block;
    }
    out
}

pub fn kalman_rank(a: &RMat, b: &RMat) -> usize {
    kalman_rank_with(a, b, DEFAULT_RANK_FACTOR)
}

pub fn kalman_rank_with(a: &RMat, b: &RMat, factor: f64) -> usize {
    if b.ncols() == 0 {
        return 0;
    }
    rank_real(&kalman_matrix(a, b), factor)
}

fn kalman_test(a: &RMat, b: &RMat, factor: f64) -> RankTestResult {
    let k = to_complex(&kalman_matrix(a, b));
    rank_test(Complex64::new(0.0, 0.0), &k, a.nrows(), factor, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralOptions {
    pub scan: ScanOptions,
    pub rank: RankOptions,
    pub cluster_tol: f64,
    pub unit_tol: f64,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        Self {
            scan: ScanOptions::default(),
            rank: RankOptions::default(),
            cluster_tol: DEFAULT_CLUSTER_TOL,
            unit_tol: DEFAULT_UNIT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub holds: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tests: Vec<RankTestResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizabilityVerdict {
    /// All four conditions hold (condition 3 on the scanned window).
    RegularlyStabilizableWithinWindow,
    /// Condition 1 or 2 fails, so the sufficient test does not apply.
    HypothesesFail,
    /// Hypotheses hold but a rank condition fails; the test is inconclusive.
    RankConditionFails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizabilityReport {
    pub condition_1: ConditionOutcome,
    pub condition_2: ConditionOutcome,
    pub condition_3: ConditionOutcome,
    pub condition_4: ConditionOutcome,
    pub verdict: StabilizabilityVerdict,
    pub window: Rect,
    pub scan_complete: bool,
    pub explanation: String,
}

fn scanned_roots(sys: &NeutralSystem, scan: &ScanOptions) -> Result<(Vec<Root>, Rect, bool, String)> {
    let report = scan_window(sys, scan)?;
    let mut roots = report.roots();
    roots.sort_by(|a, b| a.value().norm().total_cmp(&b.value().norm()).then(a.lambda.im.total_cmp(&b.lambda.im)));
    Ok((roots, report.window, report.is_complete(), report.completeness_note))
}

/// Conditions for regular stabilizability:
/// 1) `|μ| <= 1` on the spectrum of `A_{-1}`;
/// 2) unit-circle eigenvalues are simple;
/// 3) `rank[Δ(λ) B] = n` for `Re λ >= 0`;
/// 4) `rank[μI - A_{-1}, B] = n` for `|μ| = 1`.
pub fn check_stabilizability(sys: &NeutralSystem, opts: &StructuralOptions) -> Result<StabilizabilityReport> {
    let structure = matrix_spectral_structure_with(sys.a_minus1(), opts.cluster_tol, opts.unit_tol);
    let rho = structure.spectral_radius;
    let c1 = ConditionOutcome {
        holds: rho <= 1.0 + opts.unit_tol,
        detail: format!("spectral radius of A_minus1 = {rho:.12}"),
        tests: Vec::new(),
    };
    let non_simple: Vec<String> = structure
        .unit_circle
        .iter()
        .filter(|e| e.algebraic > 1)
        .map(|e| format!("{:.6}{:+.6}i (algebraic {})", e.mu.re, e.mu.im, e.algebraic))
        .collect();
    let c2 = ConditionOutcome {
        holds: non_simple.is_empty(),
        detail: if non_simple.is_empty() {
            format!("{} unit-circle eigenvalue(s), all simple", structure.unit_circle.len())
        } else {
            format!("non-simple unit-circle eigenvalues: {}", non_simple.join(", "))
        },
        tests: Vec::new(),
    };

    let (roots, window, complete, note) = scanned_roots(sys, &opts.scan)?;
    let rhp: Vec<Complex64> = roots.iter().map(Root::value).filter(|z| z.re >= 0.0).collect();
    let t3: Vec<RankTestResult> = rhp.par_iter().map(|&z| hautus_at_root(sys, z, &opts.rank)).collect();
    let c3 = ConditionOutcome {
        holds: t3.iter().all(|t| t.passes),
        detail: format!(
            "checked at {} root(s) with Re >= 0 in the window; elsewhere Delta is invertible; {note}",
            t3.len()
        ),
        tests: t3,
    };

    let t4: Vec<RankTestResult> = structure
        .unit_circle
        .iter()
        .map(|e| hautus_matrix_pair(sys.a_minus1(), sys.b(), e.mu.into(), &opts.rank))
        .collect();
    let c4 = ConditionOutcome {
        holds: t4.iter().all(|t| t.passes),
        detail: format!("checked at {} unit-circle eigenvalue(s) of A_minus1", t4.len()),
        tests: t4,
    };

    let (verdict, explanation) = if !(c1.holds && c2.holds) {
        (
            StabilizabilityVerdict::HypothesesFail,
            "difference-operator hypotheses fail; the rank test does not apply".to_string(),
        )
    } else if c3.holds && c4.holds {
        (
            StabilizabilityVerdict::RegularlyStabilizableWithinWindow,
            "regularly stabilizable: all four conditions hold, condition 3 on the scanned window".to_string(),
        )
    } else {
        (
            StabilizabilityVerdict::RankConditionFails,
            "a rank condition fails; the sufficient test is inconclusive".to_string(),
        )
    };
    Ok(StabilizabilityReport {
        condition_1: c1,
        condition_2: c2,
        condition_3: c3,
        condition_4: c4,
        verdict,
        window,
        scan_complete: complete,
        explanation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullControllable {
    Yes,
    No,
    YesWithinWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullControllabilityCheck {
    pub condition_i: Vec<RankTestResult>,
    pub condition_i_note: String,
    pub condition_ii: RankTestResult,
    pub null_controllable: NullControllable,
    pub witness: Option<RankTestResult>,
    pub window: Option<Rect>,
}

/// Null-controllability: `rank[Δ(λ) B] = n` for all `λ` and
/// `rank[B, A_{-1}B, …, A_{-1}^{n-1}B] = n`.
pub fn check_null_controllability(sys: &NeutralSystem, opts: &StructuralOptions) -> Result<NullControllabilityCheck> {
    if sys.r() == 0 {
        return Err(NtsError::Domain("null-controllability needs r >= 1".into()));
    }
    let n = sys.n();
    let cond_ii = kalman_test(sys.a_minus1(), sys.b(), opts.rank.rank_factor);
    if rank_real(sys.b(), opts.rank.rank_factor) == n {
        return Ok(NullControllabilityCheck {
            condition_i: Vec::new(),
            condition_i_note: "rank B = n, so the rank condition holds at every point".into(),
            null_controllable: if cond_ii.passes { NullControllable::Yes } else { NullControllable::No },
            condition_ii: cond_ii,
            witness: None,
            window: None,
        });
    }
    let (roots, window, complete, note) = scanned_roots(sys, &opts.scan)?;
    let tests: Vec<RankTestResult> = roots
        .par_iter()
        .map(|r| hautus_at_root(sys, r.value(), &opts.rank))
        .collect();
    let witness = tests.iter().find(|t| !t.passes).cloned();
    let mut cond_i_note = format!(
        "checked at {} located root(s) in Re [{:.4}, {:.4}], |Im| <= {:.4}; Delta is invertible elsewhere",
        tests.len(),
        window.re_min,
        window.re_max,
        window.im_max
    );
    if !complete {
        cond_i_note.push_str("; scan incomplete");
    }
    let _ = write!(cond_i_note, "; {note}");
    let verdict = if witness.is_some() || !cond_ii.passes {
        NullControllable::No
    } else {
        NullControllable::YesWithinWindow
    };
    Ok(NullControllabilityCheck {
        condition_i: tests,
        condition_i_note: cond_i_note,
        condition_ii: cond_ii,
        null_controllable: verdict,
        witness,
        window: Some(window),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub policy: String,
    /// Column order into the fixed column basis (empty for random bases).
    pub order: Vec<usize>,
    pub basis: Vec<Vec<f64>>,
    /// `n_0, …, n_r`.
    pub n: Vec<usize>,
    /// `m_1, …, m_r`.
    pub m: Vec<usize>,
}

/// Independent columns of `B` spanning its image, chosen greedily left to right.
pub fn column_basis(b: &RMat, factor: f64) -> RMat {
    let mut chosen: Vec<usize> = Vec::new();
    for j in 0..b.ncols() {
        let mut trial = chosen.clone();
        trial.push(j);
        if rank_real(&b.select_columns(&trial), factor) == trial.len() {
            chosen = trial;
        }
    }
    b.select_columns(&chosen)
}

/// Indices for an ordered basis `β = (b_1, …, b_r)` of `Im B`.
///
/// `n_i` is the Kalman rank of `B_i = (b_{i+1}, …, b_r)`, with `n_r = 0`, and
/// `m_i = n_{i-1} - n_i`.
pub fn controllability_indices(sys: &NeutralSystem, basis: &RMat) -> Result<(Vec<usize>, Vec<usize>)> {
    controllability_indices_with(sys, basis, DEFAULT_RANK_FACTOR)
}

pub fn controllability_indices_with(sys: &NeutralSystem, basis: &RMat, factor: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = sys.n();
    if basis.nrows() != n {
        return Err(NtsError::InvalidBasis(format!("basis has {} rows, expected {n}", basis.nrows())));
    }
    let s = basis.ncols();
    if rank_real(basis, factor) != s {
        return Err(NtsError::InvalidBasis("basis vectors are linearly dependent".into()));
    }
    let rank_b = rank_real(sys.b(), factor);
    let mut joint = RMat::zeros(n, sys.r() + s);
    joint.columns_mut(0, sys.r()).copy_from(sys.b());
    joint.columns_mut(sys.r(), s).copy_from(basis);
    if rank_real(&joint, factor) != rank_b {
        return Err(NtsError::InvalidBasis("basis is not contained in Im B".into()));
    }
    if s != rank_b {
        return Err(NtsError::InvalidBasis(format!("basis has {s} vectors but dim Im B = {rank_b}")));
    }
    Ok(indices_unchecked(sys.a_minus1(), basis, factor))
}

fn indices_unchecked(a: &RMat, basis: &RMat, factor: f64) -> (Vec<usize>, Vec<usize>) {
    let s = basis.ncols();
    let n_list: Vec<usize> = (0..=s)
        .map(|i| kalman_rank_with(a, &basis.columns(i, s - i).into_owned(), factor))
        .collect();
    let m_list = n_list.windows(2).map(|w| w[0].saturating_sub(w[1])).collect();
    (n_list, m_list)
}

/// All orderings of `0..k`, lexicographic.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..k).collect(), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasisPolicy {
    Permutations,
    /// Permutations plus `k` random invertible recombinations.
    Random { k: usize, seed: u64 },
}

impl FromStr for BasisPolicy {
    type Err = NtsError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "permutations" {
            return Ok(Self::Permutations);
        }
        if let Some(k) = s.strip_prefix("random:") {
            let k = k
                .parse()
                .map_err(|_| NtsError::Parse(format!("bad count in basis policy {s:?}")))?;
            return Ok(Self::Random { k, seed: 0 });
        }
        Err(NtsError::Parse(format!("unknown basis policy {s:?} (use permutations or random:K)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBounds {
    pub policy: String,
    pub bases: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub time_lower: f64,
    pub time_sufficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub permutations: PolicyBounds,
    /// Present under the random policy; computed over permutations and the
    /// random recombinations together.
    pub augmented: Option<PolicyBounds>,
    pub indices: Vec<IndexRecord>,
    pub single_input_exact: bool,
    pub statement: String,
}

fn bounds_over(records: &[IndexRecord], policy: &str, h: f64) -> PolicyBounds {
    let m_min = records.iter().map(|r| r.m.first().copied().unwrap_or(0)).max().unwrap_or(0);
    let m_max = records
        .iter()
        .map(|r| r.m.iter().copied().max().unwrap_or(0))
        .min()
        .unwrap_or(0);
    PolicyBounds {
        policy: policy.into(),
        bases: records.len(),
        m_min,
        m_max,
        time_lower: m_min as f64 * h,
        time_sufficient: m_max as f64 * h,
    }
}

fn record(policy: &str, order: Vec<usize>, basis: &RMat, a: &RMat, factor: f64) -> IndexRecord {
    let (n, m) = indices_unchecked(a, basis, factor);
    IndexRecord {
        policy: policy.into(),
        order,
        basis: (0..basis.ncols()).map(|j| basis.column(j).iter().copied().collect()).collect(),
        n,
        m,
    }
}

/// `m_min = max_β m_1`, `m_max = min_β max_i m_i` over the policy's bases.
///
/// Refuses when `verdict` is `No`: no finite controllability time exists.
pub fn controllability_time_bounds(
    sys: &NeutralSystem,
    verdict: &NullControllabilityCheck,
    policy: BasisPolicy,
    factor: f64,
) -> Result<TimeBounds> {
    if sys.r() == 0 {
        return Err(NtsError::Domain("controllability time needs r >= 1".into()));
    }
    if verdict.null_controllable == NullControllable::No {
        let why = match &verdict.witness {
            Some(w) => format!(
                "rank[Delta(lambda) B] = {} < {} at lambda = {:.12}{:+.12}i",
                w.rank,
                sys.n(),
                w.test_point.re,
                w.test_point.im
            ),
            None => format!(
                "Kalman rank of (A_minus1, B) is {} < {}",
                verdict.condition_ii.rank,
                sys.n()
            ),
        };
        return Err(NtsError::NotControllable(why));
    }
    let a = sys.a_minus1();
    let basis = column_basis(sys.b(), factor);
    let s = basis.ncols();
    let mut records: Vec<IndexRecord> = permutations(s)
        .into_iter()
        .map(|p| {
            let ordered = basis.select_columns(&p);
            record("permutation", p, &ordered, a, factor)
        })
        .collect();
    let perm = bounds_over(&records, "permutations", sys.h());
    let augmented = match policy {
        BasisPolicy::Permutations => None,
        BasisPolicy::Random { k, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut added = 0;
            while added < k {
                let g = DMatrix::from_fn(s, s, |_, _| rng.gen_range(-1.0..1.0));
                if rank_real(&g, factor) < s {
                    continue;
                }
                records.push(record("random", Vec::new(), &(&basis * g), a, factor));
                added += 1;
            }
            Some(bounds_over(&records, &format!("random:{k}"), sys.h()))
        }
    };
    let single = s == 1;
    let statement = if single {
        format!(
            "single input: null-controllable for T > {:.6} and not at T = {:.6}",
            perm.time_sufficient, perm.time_sufficient
        )
    } else {
        let best = augmented.as_ref().unwrap_or(&perm);
        format!(
            "null-controllable for T > {:.6}, not for T < {:.6}; T in [{:.6}, {:.6}] is undecided",
            best.time_sufficient, best.time_lower, best.time_lower, best.time_sufficient
        )
    };
    Ok(TimeBounds {
        permutations: perm,
        augmented,
        indices: records,
        single_input_exact: single,
        statement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub condition_i: Vec<RankTestResult>,
    pub condition_i_note: String,
    pub condition_ii: RankTestResult,
    pub null_controllable: NullControllable,
    pub witness: Option<RankTestResult>,
    pub indices: Vec<IndexRecord>,
    pub m_min: Option<usize>,
    pub m_max: Option<usize>,
    pub time_lower: Option<f64>,
    pub time_sufficient: Option<f64>,
    pub single_input_exact: bool,
    pub augmented: Option<PolicyBounds>,
    pub statement: String,
}

impl ControllabilityReport {
    /// Plain-text summary naming the condition behind each verdict.
    pub fn summary(&self) -> String {
        let mut s = format!("null-controllable: {:?}\n", self.null_controllable);
        let _ = writeln!(
            s,
            "  Kalman condition rank[B, A_minus1 B, ...] = {} ({})",
            self.condition_ii.rank,
            if self.condition_ii.passes { "holds" } else { "fails" }
        );
        let _ = writeln!(s, "  rank[Delta(lambda) B] = n: {}", self.condition_i_note);
        if let Some(w) = &self.witness {
            let _ = writeln!(
                s,
                "  witness lambda = {:.12}{:+.12}i, rank {}",
                w.test_point.re, w.test_point.im, w.rank
            );
        }
        if let (Some(lo), Some(hi)) = (self.m_min, self.m_max) {
            let _ = writeln!(s, "  m_min = {lo}, m_max = {hi}");
        }
        let _ = writeln!(s, "  {}", self.statement);
        s
    }
}

/// Verdict, indices and time bounds together.
pub fn controllability_report(
    sys: &NeutralSystem,
    opts: &StructuralOptions,
    policy: BasisPolicy,
) -> Result<ControllabilityReport> {
    let check = check_null_controllability(sys, opts)?;
    let bounds = match controllability_time_bounds(sys, &check, policy, opts.rank.rank_factor) {
        Ok(b) => Some(b),
        Err(NtsError::NotControllable(_)) => None,
        Err(e) => return Err(e),
    };
    let statement = match &bounds {
        Some(b) => b.statement.clone(),
        None => "not null-controllable: no finite controllability time".into(),
    };
    Ok(ControllabilityReport {
        condition_i: check.condition_i,
        condition_i_note: check.condition_i_note,
        condition_ii: check.condition_ii,
        null_controllable: check.null_controllable,
        witness: check.witness,
        m_min: bounds.as_ref().map(|b| b.permutations.m_min),
        m_max: bounds.as_ref().map(|b| b.permutations.m_max),
        time_lower: bounds.as_ref().map(|b| b.permutations.time_lower),
        time_sufficient: bounds.as_ref().map(|b| b.permutations.time_sufficient),
        single_input_exact: bounds.as_ref().is_some_and(|b| b.single_input_exact),
        augmented: bounds.as_ref().and_then(|b| b.augmented.clone()),
        indices: bounds.map(|b| b.indices).unwrap_or_default(),
        statement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example1_with_input, example2, point_system};
    use crate::rootfinder::newton_refine;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn m(rows: &[&[f64]]) -> RMat {
        let c = rows.first().map_or(0, |r| r.len());
        RMat::from_fn(rows.len(), c, |i, j| rows[i][j])
    }

    fn example1_root() -> Complex64 {
        // A root of 1 - λ + λ e^{-λ} near the first chain point 2πi.
        let sys = example1_with_input(1.0, 1.0, &[0.0, 1.0]);
        let g = |z: Complex64| 1.0 - z + z * (-z).exp();
        let (z, _) = newton_refine(&sys, Complex64::new(0.0, 2.0 * std::f64::consts::PI), 2, 100);
        assert!(g(z).norm() < 1e-10, "{z}");
        z
    }

    #[test]
    fn hautus_at_example_one_root() {
        let z = example1_root();
        let opts = RankOptions::default();
        let good = hautus_at_root(&example1_with_input(1.0, 1.0, &[0.0, 1.0]), z, &opts);
        assert!(good.passes && good.rank == 2);
        let bad = hautus_at_root(&example1_with_input(1.0, 1.0, &[1.0, 0.0]), z, &opts);
        assert!(!bad.passes && bad.rank == 1, "{bad:?}");
    }

    #[test]
    fn hautus_passes_off_roots_and_with_identity_input() {
        let sys = example1_with_input(1.0, 1.0, &[1.0, 0.0]);
        for z in [Complex64::new(0.3, 1.0), Complex64::new(-1.0, 7.0), Complex64::new(2.0, -3.0)] {
            assert!(hautus_at(&sys, z, &RankOptions::default()).passes);
        }
        let full = point_system(1.0, m(&[&[1.0, 1.0], &[0.0, 1.0]]), RMat::identity(2, 2), RMat::identity(2, 2));
        assert!(hautus_at(&full, Complex64::new(0.0, 0.0), &RankOptions::default()).passes);
    }

    #[test]
    fn hautus_matrix_pair_examples() {
        let o = RankOptions::default();
        let one = Complex64::new(1.0, 0.0);
        let t = hautus_matrix_pair(&(-RMat::identity(2, 2)), &m(&[&[0.0], &[1.0]]), -one, &o);
        assert_eq!((t.rank, t.passes), (1, false));
        let t = hautus_matrix_pair(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), &m(&[&[0.0], &[1.0]]), one, &o);
        assert_eq!((t.rank, t.passes), (2, true));
        assert_eq!(t.matrix_shape, (2, 3));
    }

    #[test]
    fn kalman_rank_examples() {
        assert_eq!(kalman_rank(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), &m(&[&[0.0], &[1.0]])), 2);
        assert_eq!(kalman_rank(&RMat::zeros(3, 3), &RMat::identity(3, 3).columns(0, 2).into_owned()), 2);
        assert_eq!(kalman_rank(&RMat::zeros(3, 3), &RMat::zeros(3, 0)), 0);
        let a = m(&[&[0.2, -1.0, 0.0], &[3.0, 0.1, 0.5], &[0.0, 0.4, -2.0]]);
        assert_eq!(kalman_rank(&a, &RMat::identity(3, 3)), 3);
    }

    #[test]
    fn index_examples() {
        let z3 = point_system(1.0, RMat::zeros(3, 3), RMat::zeros(3, 3), RMat::identity(3, 3));
        let (n, mm) = controllability_indices(&z3, &RMat::identity(3, 3)).unwrap();
        assert_eq!((n, mm), (vec![3, 2, 1, 0], vec![1, 1, 1]));

        let nil = point_system(1.0, m(&[&[0.0, 1.0], &[0.0, 0.0]]), RMat::zeros(2, 2), RMat::identity(2, 2));
        let (n, mm) = controllability_indices(&nil, &RMat::identity(2, 2)).unwrap();
        assert_eq!((n, mm), (vec![2, 2, 0], vec![0, 2]));
        let swapped = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(controllability_indices(&nil, &swapped).unwrap().1, vec![1, 1]);

        let single = example1_with_input(1.0, 1.0, &[0.0, 1.0]);
        assert_eq!(controllability_indices(&single, single.b()).unwrap().1, vec![2]);
    }

    #[test]
    fn index_basis_errors() {
        let sys = example1_with_input(1.0, 1.0, &[0.0, 1.0]);
        assert!(matches!(
            controllability_indices(&sys, &m(&[&[1.0], &[0.0]])),
            Err(NtsError::InvalidBasis(_))
        ));
        let full = point_system(1.0, RMat::zeros(2, 2), RMat::zeros(2, 2), RMat::identity(2, 2));
        assert!(matches!(
            controllability_indices(&full, &m(&[&[1.0, 2.0], &[1.0, 2.0]])),
            Err(NtsError::InvalidBasis(_))
        ));
    }

    #[test]
    fn time_bounds_examples() {
        let opts = StructuralOptions::default();
        let z3 = point_system(1.0, RMat::zeros(3, 3), RMat::zeros(3, 3), RMat::identity(3, 3));
        let rep = controllability_report(&z3, &opts, BasisPolicy::Permutations).unwrap();
        assert_eq!(rep.null_controllable, NullControllable::Yes);
        assert_eq!((rep.m_min, rep.m_max), (Some(1), Some(1)));
        assert_eq!(rep.indices.len(), 6);

        let nil = point_system(2.0, m(&[&[0.0, 1.0], &[0.0, 0.0]]), RMat::zeros(2, 2), RMat::identity(2, 2));
        let rep = controllability_report(&nil, &opts, BasisPolicy::Random { k: 5, seed: 3 }).unwrap();
        assert_eq!((rep.m_min, rep.m_max), (Some(1), Some(1)));
        assert_eq!(rep.time_sufficient, Some(2.0));
        assert_eq!(rep.indices.len(), 7);
        assert!(rep.augmented.is_some());
    }

    #[test]
    fn refuses_time_when_not_controllable() {
        let sys = point_system(1.0, RMat::zeros(2, 2), RMat::zeros(2, 2), m(&[&[1.0], &[0.0]]));
        let check = check_null_controllability(&sys, &StructuralOptions::default()).unwrap();
        assert_eq!(check.null_controllable, NullControllable::No);
        assert!(matches!(
            controllability_time_bounds(&sys, &check, BasisPolicy::Permutations, DEFAULT_RANK_FACTOR),
            Err(NtsError::NotControllable(_))
        ));
    }

    #[test]
    fn stabilizability_example_two_fails_hypothesis() {
        let sys = example2(1.0).with_input(RMat::identity(2, 2)).unwrap();
        let rep = check_stabilizability(&sys, &StructuralOptions::default()).unwrap();
        assert!(rep.condition_1.holds);
        assert!(!rep.condition_2.holds);
        assert_eq!(rep.verdict, StabilizabilityVerdict::HypothesesFail);
    }

    #[test]
    fn stabilizability_simple_unit_eigenvalue() {
        let sys = point_system(
            1.0,
            RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5])),
            RMat::zeros(2, 2),
            m(&[&[1.0], &[1.0]]),
        );
        let rep = check_stabilizability(&sys, &StructuralOptions::default()).unwrap();
        assert!(rep.condition_1.holds && rep.condition_2.holds);
        assert!(rep.condition_4.holds);
        assert_eq!(rep.condition_4.tests[0].rank, 2);
        assert!(rep.condition_3.holds, "{:?}", rep.condition_3);
        assert_eq!(rep.verdict, StabilizabilityVerdict::RegularlyStabilizableWithinWindow);

        let big = point_system(1.0, m(&[&[1.5]]), RMat::zeros(1, 1), m(&[&[1.0]]));
        let rep = check_stabilizability(&big, &StructuralOptions::default()).unwrap();
        assert!(!rep.condition_1.holds);
    }

    #[test]
    fn basis_policy_parsing() {
        assert_eq!("permutations".parse::<BasisPolicy>().unwrap(), BasisPolicy::Permutations);
        assert_eq!("random:4".parse::<BasisPolicy>().unwrap(), BasisPolicy::Random { k: 4, seed: 0 });
        assert!("random:x".parse::<BasisPolicy>().is_err());
        assert!("all".parse::<BasisPolicy>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn telescoping_and_kalman_invariance(
            n in 1usize..5,
            r in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = RMat::from_fn(n, n, |_, _| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) });
            let b = RMat::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
            let basis = column_basis(&b, DEFAULT_RANK_FACTOR);
            let k0 = kalman_rank(&a, &b);
            for p in permutations(basis.ncols()) {
                let (nl, ml) = indices_unchecked(&a, &basis.select_columns(&p), DEFAULT_RANK_FACTOR);
                prop_assert_eq!(ml.iter().sum::<usize>(), nl[0]);
                prop_assert!(nl.windows(2).all(|w| w[0] >= w[1]));
                prop_assert_eq!(nl[0], k0);
            }
            let g = RMat::from_fn(r, r, |i, j| if i == j { 2.0 } else { 0.3 });
            prop_assert_eq!(kalman_rank(&a, &(&b * g)), k0);
        }
    }
}
