//! Acceptance suite. Runs without the libtest harness so that one PASS/FAIL
//! line per criterion is always printed; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nts_core::charmatrix::{
    chain_grid, delta, delta_derivative, det_delta, eigenvector_candidates, line_angle, DEFAULT_KERNEL_TOL,
};
use nts_core::contour::{winding_number, CharDet, Contour, CountOptions, Rect};
use nts_core::fixtures::{
    distributed_fixture, example1, example1_with_input, example2, point_system, reach_fixture, scalar_decay,
    shift_chain,
};
use nts_core::linalg::RMat;
use nts_core::reachability::{build_steering_probe, rank_profile, ProbeOptions};
use nts_core::rootfinder::{find_roots_in_region, verify_cluster_multiplicity, RootOptions};
use nts_core::simulate::{norm_profile, simulate, HistorySegment};
use nts_core::stability::{classify_asymptotic, exponential_stability, ExponentialVerdict, StabilityOptions};
use nts_core::structural::{
    check_null_controllability, column_basis, controllability_indices, controllability_report, BasisPolicy,
    NullControllable, StructuralOptions,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t <= limit, || format!("took {t:?}, limit {limit:?}"))
}

fn random_disk_point(rng: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    loop {
        let z = Complex64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius));
        if z.norm() <= radius {
            return z;
        }
    }
}

/// 1. `det Δ` against the factored closed forms.
fn det_fidelity() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let ex1 = example1(1.0, 2.0);
    let ex2 = example2(1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let z = random_disk_point(&mut rng, 20.0);
        let e = z * (-z).exp();
        let closed1 = (1.0 - z + e) * (2.0 - z + e);
        let closed2 = (z + e + 1.0).powi(2);
        for (sys, closed) in [(&ex1, closed1), (&ex2, closed2)] {
            let err = (det_delta(sys, z) - closed).norm() / closed.norm();
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1e-10, || format!("max relative error {worst:.3e}"))?;
    within(Duration::from_secs(1), started)?;
    Ok(format!("max relative error {worst:.2e} over 200 evaluations"))
}

/// 2. Two roots in every chain circle of radius `r0/2` for `5 <= |k| <= 30`.
fn cluster_multiplicity() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for (name, sys) in [("example 1", example1(1.0, 2.0)), ("example 2", example2(1.0)), ("example 2 (gamma 0)", example2(0.0))] {
        let grid = chain_grid(&sys, -30, 30, 0.5).map_err(|e| e.to_string())?;
        for chain in &grid.chains {
            ensure(chain.p == 2, || format!("{name}: p_m = {}", chain.p))?;
            for k in (-30i64..=30).filter(|k| k.abs() >= 5) {
                let c = verify_cluster_multiplicity(&sys, &grid, k, chain.m, &CountOptions::default())
                    .map_err(|e| format!("{name} k={k}: {e}"))?;
                ensure(c.count == 2, || format!("{name} k={k}: count {}", c.count))?;
                checked += 1;
            }
        }
    }
    within(Duration::from_secs(30), started)?;
    Ok(format!("{checked} circles hold exactly p_m = 2 roots"))
}

/// 3. Kernels of the two roots in `L^(k)` become collinear.
fn eigenvector_collinearity() -> Outcome {
    let (alpha, beta) = (1.0, 2.0);
    let sys = example1(alpha, beta);
    let grid = chain_grid(&sys, 0, 30, 0.5).map_err(|e| e.to_string())?;
    let mut angles = Vec::new();
    for k in [5i64, 10, 20, 30] {
        let center = grid.center(1, k).ok_or("missing center")?;
        let r = grid.radius;
        let window = Rect::new(center.re - r, center.re + r, center.im - r, center.im + r);
        let rep = find_roots_in_region(&sys, &window, &RootOptions::default()).map_err(|e| e.to_string())?;
        let roots: Vec<Complex64> = rep
            .roots()
            .iter()
            .map(|x| x.value())
            .filter(|z| (z - center).norm() < r)
            .collect();
        ensure(roots.len() == 2, || format!("k={k}: {} roots in circle", roots.len()))?;
        let kernels: Vec<Vec<Complex64>> = roots
            .iter()
            .map(|&z| eigenvector_candidates(&sys, z, DEFAULT_KERNEL_TOL)[0].c.clone())
            .collect();
        let angle = line_angle(&kernels[0], &kernels[1]);
        // Oracle: at the root of β - λ + λe^{-λ} the kernel is
        // (λe^{-λ}, β - α) against e_1 at the other root.
        let beta_root = roots
            .iter()
            .copied()
            .min_by(|a, b| {
                let g = |z: Complex64| (beta - z + z * (-z).exp()).norm();
                g(*a).total_cmp(&g(*b))
            })
            .unwrap();
        let oracle = ((alpha - beta) / (beta_root * (-beta_root).exp())).norm().atan();
        ensure((angle - oracle).abs() <= 1e-6 * oracle.max(1e-3), || {
            format!("k={k}: angle {angle:.6e} vs oracle {oracle:.6e}")
        })?;
        angles.push(angle);
    }
    ensure(angles.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {angles:?}"))?;
    ensure(angles[3] < 0.05, || format!("angle at k=30 is {:.4}", angles[3]))?;
    Ok(format!(
        "angles at k = 5, 10, 20, 30: {}",
        angles.iter().map(|a| format!("{a:.3e}")).collect::<Vec<_>>().join(", ")
    ))
}

/// 4. Trichotomy labels.
fn trichotomy() -> Outcome {
    let opts = StabilityOptions::default();
    let code = |sys| classify_asymptotic(&sys, &opts).map(|v| v.case_code).map_err(|e| e.to_string());
    let e1 = code(example1(-1.0, -2.0))?;
    ensure(e1 == "case_ii_unstable", || format!("example 1: {e1}"))?;
    for g in [0.0, 1.0] {
        let e2 = code(example2(g))?;
        ensure(e2 == "case_iii_indeterminate", || format!("example 2 gamma {g}: {e2}"))?;
    }
    let scalar = exponential_stability(&scalar_decay(), &opts).map_err(|e| e.to_string())?;
    ensure(scalar.exponential == ExponentialVerdict::Stable, || format!("scalar: {:?}", scalar.exponential))?;
    Ok("example 1 case_ii_unstable, example 2 case_iii_indeterminate (both gamma), scalar stable".into())
}

fn example2_ratio(gamma: f64) -> Result<f64, String> {
    let m = 1000;
    let phi = HistorySegment::random_steps(2, 1.0, m, 20, 2);
    let traj = simulate(&example2(gamma), &phi, &|_| Vec::new(), 150.0, m).map_err(|e| e.to_string())?;
    let profile = norm_profile(&traj);
    let at = |t: f64| profile[(t / traj.dt).round() as usize].1;
    Ok(at(150.0) / at(15.0))
}

/// 5. Norm growth separates γ = 0 from γ = 1.
fn example2_dynamics() -> Outcome {
    let started = Instant::now();
    let stable = example2_ratio(0.0)?;
    let unstable = example2_ratio(1.0)?;
    ensure(stable <= 1.0, || format!("gamma 0 ratio {stable:.4}"))?;
    ensure(unstable >= 2.0, || format!("gamma 1 ratio {unstable:.4}"))?;
    within(Duration::from_secs(60), started)?;
    Ok(format!("norm(150)/norm(15): gamma 0 -> {stable:.3}, gamma 1 -> {unstable:.3}"))
}

/// 6. Null-controllability verdicts for Example 1.
fn controllability_verdicts() -> Outcome {
    let opts = StructuralOptions::default();
    let good = check_null_controllability(&example1_with_input(1.0, 1.0, &[0.0, 1.0]), &opts).map_err(|e| e.to_string())?;
    ensure(good.null_controllable == NullControllable::YesWithinWindow, || {
        format!("B = e2: {:?}", good.null_controllable)
    })?;
    let sys = example1_with_input(1.0, 1.0, &[1.0, 0.0]);
    let bad = check_null_controllability(&sys, &opts).map_err(|e| e.to_string())?;
    ensure(bad.null_controllable == NullControllable::No, || format!("B = e1: {:?}", bad.null_controllable))?;
    let w = bad.witness.as_ref().ok_or("no witness recorded")?;
    ensure(w.rank == 1, || format!("witness rank {}", w.rank))?;
    let lam = Complex64::new(w.test_point.re, w.test_point.im);
    let residual = (1.0 - lam + lam * (-lam).exp()).norm();
    ensure(residual < 1e-8, || format!("witness is not a root: residual {residual:.2e}"))?;
    Ok(format!(
        "B = e2: yes_within_window ({} roots checked); B = e1: no, witness {} with rank 1",
        good.condition_i.len(),
        w.test_point
    ))
}

/// 7. Indices and times.
fn indices_and_times() -> Outcome {
    let opts = StructuralOptions::default();
    let mut lines = Vec::new();
    for (name, sys) in [
        ("example 1, B = e2", example1_with_input(1.0, 1.0, &[0.0, 1.0])),
        ("scalar", scalar_decay()),
        ("shift chain n = 3", shift_chain(3)),
    ] {
        let n = sys.n();
        let rep = controllability_report(&sys, &opts, BasisPolicy::Permutations).map_err(|e| e.to_string())?;
        ensure(rep.m_min == Some(n) && rep.m_max == Some(n), || {
            format!("{name}: m_min {:?}, m_max {:?}", rep.m_min, rep.m_max)
        })?;
        let nh = n as f64 * sys.h();
        ensure(rep.time_lower == Some(nh) && rep.time_sufficient == Some(nh), || {
            format!("{name}: times {:?} {:?}", rep.time_lower, rep.time_sufficient)
        })?;
        ensure(rep.single_input_exact, || format!("{name}: sharpness flag missing"))?;
        lines.push(format!("{name}: m = {n}"));
    }
    let z3 = point_system(1.0, RMat::zeros(3, 3), RMat::zeros(3, 3), RMat::identity(3, 3));
    let rep = controllability_report(&z3, &opts, BasisPolicy::Permutations).map_err(|e| e.to_string())?;
    ensure(rep.m_min == Some(1) && rep.m_max == Some(1), || format!("A = 0, B = I: {:?} {:?}", rep.m_min, rep.m_max))?;
    lines.push("A = 0, B = I: m_min = m_max = 1".into());
    Ok(lines.join("; "))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// 8. Telescoping identity over random pairs and every permutation basis.
fn telescoping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut bases = 0;
    for trial in 0..200 {
        let n = rng.gen_range(1..=6);
        let r = rng.gen_range(1..=3);
        let sparse = rng.gen_bool(0.5);
        let a = DMatrix::from_fn(n, n, |_, _| {
            if sparse && rng.gen_bool(0.6) {
                0.0
            } else {
                rng.gen_range(-2.0..2.0)
            }
        });
        let b = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let sys = point_system(1.0, a, RMat::zeros(n, n), b);
        let basis = column_basis(sys.b(), 1.1e-15);
        for p in permutations(basis.ncols()) {
            let (nl, ml) = controllability_indices(&sys, &basis.select_columns(&p)).map_err(|e| e.to_string())?;
            ensure(ml.iter().sum::<usize>() == nl[0], || format!("trial {trial}: sum m = {:?}, n = {:?}", ml, nl))?;
            ensure(nl.windows(2).all(|w| w[0] >= w[1]), || format!("trial {trial}: n not monotone {nl:?}"))?;
            ensure(*nl.last().unwrap() == 0, || format!("trial {trial}: n_r = {nl:?}"))?;
            bases += 1;
        }
    }
    Ok(format!("0 violations over 200 systems, {bases} ordered bases"))
}

/// 9. Probe rank jumps between 1.5h and 2.5h and is monotone.
fn reachability_transition() -> Outcome {
    let started = Instant::now();
    let sys = reach_fixture();
    let h = sys.h();
    let opts = ProbeOptions::default();
    let early = build_steering_probe(&sys, 1.5 * h, &opts).map_err(|e| e.to_string())?;
    let late = build_steering_probe(&sys, 2.5 * h, &opts).map_err(|e| e.to_string())?;
    ensure(late.effective_rank > early.effective_rank, || {
        format!("rank {} at 2.5h vs {} at 1.5h", late.effective_rank, early.effective_rank)
    })?;
    let prof = rank_profile(&sys, &[0.5 * h, 1.5 * h, 2.5 * h, 3.5 * h], &opts).map_err(|e| e.to_string())?;
    ensure(prof.monotone, || "rank profile not monotone".into())?;
    within(Duration::from_secs(300), started)?;
    let ranks: Vec<String> = prof.entries.iter().map(|e| e.effective_rank.to_string()).collect();
    Ok(format!("effective ranks at 0.5h, 1.5h, 2.5h, 3.5h: {}", ranks.join(", ")))
}

fn scalar_error(m: usize) -> Result<f64, String> {
    let phi = HistorySegment::from_fn(1.0, m, |_| vec![1.0]);
    let traj = simulate(&scalar_decay(), &phi, &|_| vec![0.0], 5.0, m).map_err(|e| e.to_string())?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.z_values)
        .map(|(t, z)| (z[0] - (-t).exp()).abs())
        .fold(0.0, f64::max))
}

/// 10. Derivative, convergence order and additivity.
fn numerical_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    // The difference quotient carries roundoff of order eps |Δ| / step, which
    // exceeds 1e-6 once |Δ| ~ 1e5 (Re λ near -10), so errors are measured in
    // units of max(1, |Δ(λ)|).
    let (mut worst, mut worst_abs): (f64, f64) = (0.0, 0.0);
    for sys in [distributed_fixture(), example1(1.0, 2.0)] {
        for _ in 0..100 {
            let z = random_disk_point(&mut rng, 10.0);
            let step = 1e-5;
            let fd = (delta(&sys, z + step) - delta(&sys, z - step)) / Complex64::new(2.0 * step, 0.0);
            let err = (delta_derivative(&sys, z) - fd).norm();
            worst_abs = worst_abs.max(err);
            worst = worst.max(err / delta(&sys, z).norm().max(1.0));
        }
    }
    ensure(worst <= 1e-6, || format!("derivative error {worst:.3e}"))?;
    // Exact derivative of a point system: -I + A_{-1} (1 - λ) e^{-λ}.
    let ex1 = example1(1.0, 2.0);
    let mut worst_exact: f64 = 0.0;
    for _ in 0..100 {
        let z = random_disk_point(&mut rng, 10.0);
        let d = delta_derivative(&ex1, z);
        let g = (1.0 - z) * (-z).exp();
        let exact = [[g - 1.0, g], [Complex64::new(0.0, 0.0), g - 1.0]];
        for (i, row) in exact.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst_exact = worst_exact.max((d[(i, j)] - v).norm() / (1.0 + v.norm()));
            }
        }
    }
    ensure(worst_exact <= 1e-12, || format!("closed-form derivative error {worst_exact:.3e}"))?;

    let (e1, e2) = (scalar_error(200)?, scalar_error(400)?);
    let order = (e1 / e2).log2();
    ensure((0.8..=1.2).contains(&order), || format!("convergence order {order:.3}"))?;

    let sys = example1(1.0, 2.0);
    let f = CharDet(&sys);
    let opts = CountOptions::default();
    let mut splits = 0;
    while splits < 50 {
        let re0 = rng.gen_range(-3.0..0.0);
        let re1 = rng.gen_range(0.5..3.0);
        let im0 = rng.gen_range(-30.0..0.0);
        let im1 = rng.gen_range(0.5..30.0);
        let whole = Rect::new(re0, re1, im0, im1);
        let t = rng.gen_range(0.2..0.8);
        let parts = if rng.gen_bool(0.5) {
            let cut = re0 + t * (re1 - re0);
            [Rect::new(re0, cut, im0, im1), Rect::new(cut, re1, im0, im1)]
        } else {
            let cut = im0 + t * (im1 - im0);
            [Rect::new(re0, re1, im0, cut), Rect::new(re0, re1, cut, im1)]
        };
        let w = winding_number(&f, &Contour::Rect(whole), &opts).map_err(|e| e.to_string())?;
        let a = winding_number(&f, &Contour::Rect(parts[0]), &opts).map_err(|e| e.to_string())?;
        let b = winding_number(&f, &Contour::Rect(parts[1]), &opts).map_err(|e| e.to_string())?;
        if w.inflations + a.inflations + b.inflations > 0 {
            continue;
        }
        ensure(w.count == a.count + b.count, || {
            format!("split {splits}: {} != {} + {}", w.count, a.count, b.count)
        })?;
        splits += 1;
    }
    Ok(format!(
        "derivative error {worst:.2e} relative (raw {worst_abs:.2e}), closed form {worst_exact:.2e}; convergence order {order:.3}; 50 additive splits"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "characteristic determinant fidelity", det_fidelity),
        (2, "cluster multiplicity", cluster_multiplicity),
        (3, "eigenvector near-collinearity", eigenvector_collinearity),
        (4, "stability trichotomy fixtures", trichotomy),
        (5, "example 2 dynamic evidence", example2_dynamics),
        (6, "controllability verdicts", controllability_verdicts),
        (7, "indices and times", indices_and_times),
        (8, "telescoping identity", telescoping),
        (9, "reachability phase transition", reachability_transition),
        (10, "numerical hygiene", numerical_hygiene),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || id.to_string() == *f) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({secs:.2} s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name} ({secs:.2} s): {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
