//! Command-line front end.
//!
//! Every command loads a system file, runs one analysis and writes JSON/CSV.
//! With `--out DIR` files go to `DIR` and a short summary goes to stdout;
//! without it the primary output is printed to stdout. Diagnostics are
//! single-line JSON records on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::charmatrix::chain_grid;
use crate::error::NtsError;
use crate::reachability::{rank_profile, ProbeOptions, RankProfile};
use crate::rootfinder::{verify_cluster_multiplicity, ClusterCheck, ScanOptions, SpectrumReport, scan_window};
use crate::simulate::{simulate, ControlSpec, HistorySegment, Trajectory};
use crate::stability::{classify_asymptotic, AsymptoticCase, ExponentialVerdict, StabilityOptions, StabilityVerdict};
use crate::structural::{
    check_stabilizability, controllability_report, BasisPolicy, ControllabilityReport, StabilizabilityReport,
    StructuralOptions,
};
use crate::sysmodel::{load_system, NeutralSystem, Severity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nts", version, about = "Analyze linear neutral-type delay systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Spectrum,
    Stability,
    Stabilizability,
    Controllability,
    Simulate,
    Reach,
    Report,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roots of det Δ in a window, with chain labels.
    Spectrum(Opts),
    /// Exponential and asymptotic stability verdicts.
    Stability(Opts),
    /// Rank conditions for regular stabilizability.
    Stabilizability(Opts),
    /// Null-controllability, controllability indices and time bounds.
    Controllability(Opts),
    /// Method-of-steps trajectory.
    Simulate(Opts),
    /// Steering-operator rank profile.
    Reach(Opts),
    /// Everything above into one directory.
    Report(Opts),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Opts {
    /// System JSON file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub re_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub re_max: Option<f64>,
    #[arg(long)]
    pub im_max: Option<f64>,
    /// Relative rank factor (cutoff `max(rows, cols) * sigma_1 * factor`).
    #[arg(long)]
    pub tol_rank: Option<f64>,
    /// Root localization tolerance.
    #[arg(long)]
    pub tol_root: Option<f64>,
    /// Final time for `simulate`; comma-separated horizons for `reach`.
    #[arg(long = "T", value_delimiter = ',')]
    pub t: Vec<f64>,
    /// Grid points per delay.
    #[arg(long)]
    pub grid_m: Option<usize>,
    /// Control intervals per delay for `reach`.
    #[arg(long)]
    pub grid_q: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Chain index range `a:b` whose circles are checked for `p_m` roots.
    #[arg(long, allow_hyphen_values = true)]
    pub k_range: Option<String>,
    /// `permutations` or `random:K`.
    #[arg(long, default_value = "permutations")]
    pub basis_policy: String,
    /// `zero`, `sine:AMPLITUDE:FREQUENCY` or `table:FILE` (JSON `{"times": [...], "values": [[...]]}`).
    #[arg(long, default_value = "zero")]
    pub control: String,
    /// Initial history: `steps` (seeded piecewise constant), `smooth`, `ones` or `zero`.
    #[arg(long, default_value = "steps")]
    pub history: String,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub opts: Opts,
}

impl From<Command> for RunConfig {
    fn from(c: Command) -> Self {
        let (command, opts) = match c {
            Command::Spectrum(o) => (CommandKind::Spectrum, o),
            Command::Stability(o) => (CommandKind::Stability, o),
            Command::Stabilizability(o) => (CommandKind::Stabilizability, o),
            Command::Controllability(o) => (CommandKind::Controllability, o),
            Command::Simulate(o) => (CommandKind::Simulate, o),
            Command::Reach(o) => (CommandKind::Reach, o),
            Command::Report(o) => (CommandKind::Report, o),
        };
        Self { command, opts }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Numerical(m) | Self::Io(m) => m,
        }
    }
}

impl From<NtsError> for Failure {
    fn from(e: NtsError) -> Self {
        match e {
            NtsError::Io(_) => Self::Io(e.to_string()),
            NtsError::Parse(_)
            | NtsError::Validation(_)
            | NtsError::Domain(_)
            | NtsError::InvalidBasis(_)
            | NtsError::NotControllable(_) => Self::Usage(e.to_string()),
            NtsError::NoChains
            | NtsError::RootOnContour { .. }
            | NtsError::PhaseTracking { .. }
            | NtsError::NonIntegerWinding { .. }
            | NtsError::BlowUp { .. } => Self::Numerical(e.to_string()),
        }
    }
}

fn diag(level: &str, message: &str) {
    eprintln!("{}", json!({ "level": level, "message": message }));
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

/// Where results go: a directory, or stdout.
struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    fn new(dir: Option<&Path>) -> CliResult<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| Failure::Io(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    /// Writes `name` into the directory, or prints it when `primary` and
    /// there is no directory.
    fn put(&mut self, name: &str, body: &str, primary: bool) -> CliResult<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, body).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
                self.written.push(name.into());
            }
            None if primary => print!("{body}"),
            None => {}
        }
        Ok(())
    }

    fn summary(&self, text: &str) {
        if self.dir.is_some() {
            println!("{text}");
        }
    }
}

fn parse_k_range(s: &str) -> CliResult<(i64, i64)> {
    let bad = || Failure::Usage(format!("bad --k-range {s:?}, expected a:b"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn parse_control(s: &str, r: usize) -> CliResult<ControlSpec> {
    let spec = if s == "zero" {
        ControlSpec::Zero
    } else if let Some(rest) = s.strip_prefix("sine:") {
        let parts: Vec<f64> = rest
            .split(':')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Failure::Usage(format!("bad sine control {s:?}")))?;
        match parts[..] {
            [amplitude, frequency] => ControlSpec::Sine { amplitude, frequency },
            _ => return Err(Failure::Usage(format!("sine control needs amplitude and frequency, got {s:?}"))),
        }
    } else if let Some(path) = s.strip_prefix("table:") {
        let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {path}: {e}")))?;
        #[derive(serde::Deserialize)]
        struct Table {
            times: Vec<f64>,
            values: Vec<Vec<f64>>,
        }
        let t: Table = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad control table: {e}")))?;
        ControlSpec::Table {
            times: t.times,
            values: t.values,
        }
    } else {
        return Err(Failure::Usage(format!("unknown control {s:?}")));
    };
    spec.check(r)?;
    Ok(spec)
}

fn history(opts: &Opts, sys: &NeutralSystem, m: usize) -> CliResult<HistorySegment> {
    let (n, h) = (sys.n(), sys.h());
    Ok(match opts.history.as_str() {
        "steps" => HistorySegment::random_steps(n, h, m, 20, opts.seed),
        "smooth" => HistorySegment::random_smooth(n, h, m, opts.seed),
        "ones" => HistorySegment::from_fn(h, m, |_| vec![1.0; n]),
        "zero" => HistorySegment::zero(n, h, m),
        other => return Err(Failure::Usage(format!("unknown history {other:?}"))),
    })
}

fn scan_options(opts: &Opts) -> ScanOptions {
    let mut scan = ScanOptions::default();
    if let Some(x) = opts.re_min {
        scan.re_floor = x;
    }
    scan.re_ceiling = opts.re_max;
    if let Some(x) = opts.im_max {
        scan.im_cap = x;
    }
    if let Some(x) = opts.tol_root {
        scan.roots.localization_tol = x;
    }
    scan
}

fn stability_options(opts: &Opts) -> StabilityOptions {
    let mut s = StabilityOptions::default();
    let scan = scan_options(opts);
    s.scan = ScanOptions {
        re_floor: opts.re_min.unwrap_or(s.scan.re_floor),
        ..scan
    };
    s
}

fn structural_options(opts: &Opts) -> StructuralOptions {
    let mut s = StructuralOptions {
        scan: scan_options(opts),
        ..StructuralOptions::default()
    };
    if let Some(x) = opts.tol_rank {
        s.rank.rank_factor = x;
    }
    s
}

fn basis_policy(opts: &Opts) -> CliResult<BasisPolicy> {
    let mut p: BasisPolicy = opts.basis_policy.parse()?;
    if let BasisPolicy::Random { seed, .. } = &mut p {
        *seed = opts.seed;
    }
    Ok(p)
}

#[derive(Debug, Serialize)]
struct SpectrumOutput<'a> {
    report: &'a SpectrumReport,
    chain_checks: Vec<ClusterCheck>,
}

fn run_spectrum(sys: &NeutralSystem, opts: &Opts, sink: &mut Sink) -> CliResult<SpectrumReport> {
    let report = scan_window(sys, &scan_options(opts))?;
    let mut checks = Vec::new();
    if let Some(range) = &opts.k_range {
        let (a, b) = parse_k_range(range)?;
        let grid = chain_grid(sys, a, b, 0.5)?;
        for chain in &grid.chains {
            for k in a..=b {
                checks.push(verify_cluster_multiplicity(sys, &grid, k, chain.m, &Default::default())?);
            }
        }
    }
    sink.put("roots.csv", &report.to_csv(), true)?;
    let mismatches = checks.iter().filter(|c| !c.matches).count();
    sink.put(
        "spectrum.json",
        &to_json(&SpectrumOutput {
            report: &report,
            chain_checks: checks,
        }),
        false,
    )?;
    sink.summary(&format!(
        "spectrum: {} root(s) with multiplicity in Re [{:.4}, {:.4}], |Im| <= {:.4}; {} located, {} unresolved cell(s), {} chain-circle mismatch(es)",
        report.total_count,
        report.window.re_min,
        report.window.re_max,
        report.window.im_max,
        report.roots().len(),
        report.unresolved_cells.len(),
        mismatches
    ));
    Ok(report)
}

fn run_stability(sys: &NeutralSystem, opts: &Opts, sink: &mut Sink) -> CliResult<StabilityVerdict> {
    let v = classify_asymptotic(sys, &stability_options(opts))?;
    sink.put("stability.json", &to_json(&v), true)?;
    sink.summary(&format!("stability: {} ({:?}); {}", v.case_code, v.exponential, v.explanation));
    Ok(v)
}

fn run_stabilizability(
    sys: &NeutralSystem,
    opts: &Opts,
    sink: &mut Sink,
) -> CliResult<StabilizabilityReport> {
    let rep = check_stabilizability(sys, &structural_options(opts))?;
    sink.put("stabilizability.json", &to_json(&rep), true)?;
    sink.summary(&format!("stabilizability: {:?}; {}", rep.verdict, rep.explanation));
    Ok(rep)
}

fn run_controllability(
    sys: &NeutralSystem,
    opts: &Opts,
    sink: &mut Sink,
) -> CliResult<ControllabilityReport> {
    let rep = controllability_report(sys, &structural_options(opts), basis_policy(opts)?)?;
    sink.put("controllability.json", &to_json(&rep), true)?;
    sink.put("controllability.txt", &rep.summary(), false)?;
    sink.summary(rep.summary().trim_end());
    Ok(rep)
}

fn run_simulate(sys: &NeutralSystem, opts: &Opts, sink: &mut Sink) -> CliResult<Trajectory> {
    let m = opts.grid_m.unwrap_or(200);
    let t_final = match opts.t[..] {
        [] => 10.0 * sys.h(),
        [t] => t,
        _ => return Err(Failure::Usage("simulate takes a single --T".into())),
    };
    let control = parse_control(&opts.control, sys.r())?;
    let phi = history(opts, sys, m)?;
    let r = sys.r();
    let traj = simulate(sys, &phi, &|t| control.sample(t, r), t_final, m)?;
    sink.put("trajectory.csv", &traj.to_csv(), true)?;
    let first = traj.m2_norm.first().copied().unwrap_or(0.0);
    let last = traj.m2_norm.last().copied().unwrap_or(0.0);
    sink.summary(&format!(
        "simulate: {} steps of {:.3e}; M2 norm {first:.6e} -> {last:.6e}",
        traj.times.len() - 1,
        traj.dt
    ));
    Ok(traj)
}

fn run_reach(sys: &NeutralSystem, opts: &Opts, sink: &mut Sink) -> CliResult<RankProfile> {
    let h = sys.h();
    let t_list = if opts.t.is_empty() {
        vec![0.5 * h, 1.5 * h, 2.5 * h, 3.5 * h]
    } else {
        opts.t.clone()
    };
    let defaults = ProbeOptions::default();
    let probe = ProbeOptions {
        m: opts.grid_m.unwrap_or(defaults.m),
        q: opts.grid_q.unwrap_or(defaults.q),
        ..defaults
    };
    let prof = rank_profile(sys, &t_list, &probe)?;
    sink.put("rank_profile.csv", &prof.to_csv(), true)?;
    sink.put("rank_profile.json", &to_json(&prof), false)?;
    let ranks: Vec<String> = prof
        .entries
        .iter()
        .map(|e| format!("T={:.4}: {}", e.t_final, e.effective_rank))
        .collect();
    sink.summary(&format!(
        "reach: effective rank at tau = {:.1e}: {}; monotone = {}",
        prof.tau,
        ranks.join(", "),
        prof.monotone
    ));
    if !prof.monotone {
        diag("warning", "effective rank is not monotone in T");
    }
    Ok(prof)
}

#[derive(Debug, Serialize)]
struct ConsistencyCheck {
    name: String,
    ok: bool,
    detail: String,
}

fn cross_check(
    stability: Option<&StabilityVerdict>,
    stabilizability: Option<&StabilizabilityReport>,
    controllability: Option<&ControllabilityReport>,
    reach: Option<&RankProfile>,
) -> Vec<ConsistencyCheck> {
    let mut out = Vec::new();
    if let Some(v) = stability {
        let ok = v.exponential != ExponentialVerdict::Stable || v.asymptotic_case == AsymptoticCase::ExpRegime;
        out.push(ConsistencyCheck {
            name: "exponential_implies_exp_regime".into(),
            ok,
            detail: format!("{:?} / {}", v.exponential, v.case_code),
        });
        let rhp = !v.evidence.scan.rhp_roots.is_empty();
        out.push(ConsistencyCheck {
            name: "rhp_roots_imply_unstable".into(),
            ok: !rhp || (v.asymptotic_case == AsymptoticCase::SpectrumInRhpUnstable && v.exponential == ExponentialVerdict::NotStable),
            detail: format!("{} root(s) with Re >= 0", v.evidence.scan.rhp_roots.len()),
        });
    }
    if let (Some(v), Some(s)) = (stability, stabilizability) {
        let rho = v.evidence.structure.spectral_radius;
        out.push(ConsistencyCheck {
            name: "spectral_radius_matches_condition_1".into(),
            ok: (rho <= 1.0 + 1e-9) == s.condition_1.holds,
            detail: format!("rho = {rho:.12}"),
        });
    }
    if let Some(c) = controllability {
        let refused = c.m_min.is_none() && c.time_sufficient.is_none();
        let no = c.null_controllable == crate::structural::NullControllable::No;
        out.push(ConsistencyCheck {
            name: "no_time_without_controllability".into(),
            ok: no == refused,
            detail: format!("{:?}", c.null_controllable),
        });
        if let (Some(lo), Some(hi)) = (c.m_min, c.m_max) {
            out.push(ConsistencyCheck {
                name: "m_min_le_m_max".into(),
                ok: lo <= hi,
                detail: format!("m_min = {lo}, m_max = {hi}"),
            });
        }
    }
    if let Some(p) = reach {
        out.push(ConsistencyCheck {
            name: "reach_rank_monotone".into(),
            ok: p.monotone,
            detail: format!("{} horizon(s)", p.entries.len()),
        });
    }
    out
}

fn run_report(sys: &NeutralSystem, opts: &Opts, sink: &mut Sink) -> CliResult<bool> {
    let Some(dir) = sink.dir.clone() else {
        return Err(Failure::Usage("report needs --out DIR".into()));
    };
    let started = Instant::now();
    let mut sections = serde_json::Map::new();
    let mut numerical_failure = false;
    let mut note = |name: &str, r: CliResult<()>, sections: &mut serde_json::Map<String, serde_json::Value>| {
        let value = match r {
            Ok(()) => json!({ "status": "ok" }),
            Err(f) => {
                diag("error", &format!("{name}: {}", f.message()));
                if matches!(f, Failure::Io(_)) {
                    return Err(f);
                }
                numerical_failure |= matches!(f, Failure::Numerical(_));
                json!({ "status": "failed", "exit_code": f.code(), "message": f.message() })
            }
        };
        sections.insert(name.into(), value);
        Ok(())
    };

    let spectrum = run_spectrum(sys, opts, sink);
    let unresolved = matches!(&spectrum, Ok(r) if !r.is_complete());
    note("spectrum", spectrum.map(|_| ()), &mut sections)?;
    let stability = run_stability(sys, opts, sink);
    let stability = match stability {
        Ok(v) => {
            note("stability", Ok(()), &mut sections)?;
            Some(v)
        }
        Err(f) => {
            note("stability", Err(f), &mut sections)?;
            None
        }
    };
    let stabilizability = match run_stabilizability(sys, opts, sink) {
        Ok(v) => {
            note("stabilizability", Ok(()), &mut sections)?;
            Some(v)
        }
        Err(f) => {
            note("stabilizability", Err(f), &mut sections)?;
            None
        }
    };
    let controllability = if sys.r() == 0 {
        sections.insert("controllability".into(), json!({ "status": "skipped", "message": "r = 0" }));
        None
    } else {
        match run_controllability(sys, opts, sink) {
            Ok(v) => {
                note("controllability", Ok(()), &mut sections)?;
                Some(v)
            }
            Err(f) => {
                note("controllability", Err(f), &mut sections)?;
                None
            }
        }
    };
    let sim = run_simulate(sys, opts, sink).map(|_| ());
    note("simulate", sim, &mut sections)?;
    let reach = if sys.r() == 0 {
        sections.insert("reach".into(), json!({ "status": "skipped", "message": "r = 0" }));
        None
    } else {
        match run_reach(sys, opts, sink) {
            Ok(v) => {
                note("reach", Ok(()), &mut sections)?;
                Some(v)
            }
            Err(f) => {
                note("reach", Err(f), &mut sections)?;
                None
            }
        }
    };

    let checks = cross_check(
        stability.as_ref(),
        stabilizability.as_ref(),
        controllability.as_ref(),
        reach.as_ref(),
    );
    let consistent = checks.iter().all(|c| c.ok);
    let index = json!({
        "input": opts.input,
        "files": sink.written,
        "sections": sections,
        "consistency": { "ok": consistent, "checks": checks },
        "config": RunConfig { command: CommandKind::Report, opts: opts.clone() },
    });
    sink.put("index.json", &to_json(&index), false)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    fs::write(dir.join("meta.json"), to_json(&meta)).map_err(|e| Failure::Io(e.to_string()))?;
    if !consistent {
        diag("error", "report sections are inconsistent; see index.json");
    }
    sink.summary(&format!("report: {} file(s) in {}; consistent = {consistent}", sink.written.len(), dir.display()));
    Ok(!(numerical_failure || unresolved) && consistent)
}

fn load(opts: &Opts) -> CliResult<NeutralSystem> {
    let sys = load_system(&opts.input).map_err(|e| match e {
        NtsError::Io(io) => Failure::Io(format!("cannot read {}: {io}", opts.input.display())),
        other => Failure::from(other),
    })?;
    for issue in sys.validate().issues {
        if issue.severity == Severity::Warning {
            diag("warning", &issue.message);
        }
    }
    Ok(sys)
}

/// Runs one configured command and returns the exit code.
pub fn run(config: &RunConfig) -> i32 {
    match run_inner(config) {
        Ok(code) => code,
        Err(f) => {
            diag("error", f.message());
            f.code()
        }
    }
}

fn run_inner(config: &RunConfig) -> CliResult<i32> {
    let opts = &config.opts;
    let sys = load(opts)?;
    let mut sink = Sink::new(opts.out.as_deref())?;
    match config.command {
        CommandKind::Spectrum => {
            let rep = run_spectrum(&sys, opts, &mut sink)?;
            if !rep.is_complete() {
                diag("error", &format!("{} unresolved cell(s)", rep.unresolved_cells.len()));
                return Ok(EXIT_NUMERICAL);
            }
        }
        CommandKind::Stability => {
            run_stability(&sys, opts, &mut sink)?;
        }
        CommandKind::Stabilizability => {
            run_stabilizability(&sys, opts, &mut sink)?;
        }
        CommandKind::Controllability => {
            run_controllability(&sys, opts, &mut sink)?;
        }
        CommandKind::Simulate => {
            run_simulate(&sys, opts, &mut sink)?;
        }
        CommandKind::Reach => {
            run_reach(&sys, opts, &mut sink)?;
        }
        CommandKind::Report => {
            if !run_report(&sys, opts, &mut sink)? {
                return Ok(EXIT_NUMERICAL);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&RunConfig::from(cli.command)),
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                EXIT_OK
            } else {
                let msg = e.to_string();
                diag("error", msg.lines().next().unwrap_or("usage error"));
                EXIT_USAGE
            }
        }
    }
}
