//! Execute one experiment: integrate, analyse, write files, evaluate checks.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bdlab_core::diagnostics::holder_slack;
use bdlab_core::selfsim::target_pairing;
use bdlab_core::{
    comparison_defect, default_grid, duhamel_reconstruct, fundamental_columns, inhomogeneity, inhomogeneity_sum,
    integrate_diffusion, integrate_observed, kon_equilibrium, moment, profile_error, q_functional, rescale,
    run_to_quasi_stationarity, tails, target_profile, test_battery, weak_pairing, DiffusionState, IntegratorConfig,
    Method, PhiColumn, PhiMatrix, QuasiStationarity, RateModel, RescaledProfile, SimState, SolverStats, StopReason,
};
use serde_json::json;

use crate::checks::CheckResult;
use crate::config::{ExperimentConfig, NormName, RunMode, SeriesName, SnapshotSelection};
use crate::error::CliError;
use crate::output::{cluster_csv, csv, fmt_f64, tag, OutputSink};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ProfileRecord {
    pub profile: RescaledProfile,
    pub errors: Vec<(NormName, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingRecord {
    pub t: f64,
    pub function: String,
    pub value: f64,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct DuhamelRecord {
    pub t: f64,
    pub direct: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub max_error: f64,
}

#[derive(Debug, Clone)]
pub struct KonRecord {
    pub f_star: f64,
    pub c_star: Vec<f64>,
    pub residual: f64,
}

/// Everything a check can look at.
#[derive(Debug, Clone)]
pub struct RunData {
    pub model: RateModel,
    pub rho: f64,
    /// Initial state followed by every sample reached.
    pub samples: Vec<SimState>,
    pub mass_drift: Vec<f64>,
    /// Diffusion system at the same times (empty unless requested).
    pub diffusion: Vec<DiffusionState>,
    pub profiles: Vec<ProfileRecord>,
    pub pairings: Vec<PairingRecord>,
    pub phi: Vec<Vec<PhiColumn>>,
    pub duhamel: Option<DuhamelRecord>,
    pub kon: Option<KonRecord>,
    pub small_cluster_max: usize,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl RunData {
    /// `max_{n ≤ n_max} c_n`.
    pub fn small_clusters(&self, s: &SimState) -> f64 {
        s.c.iter().take(self.small_cluster_max).copied().fold(0.0, f64::max)
    }

    /// `max_k (C_k - C̃_k)` at each common sample.
    pub fn comparison_defects(&self) -> Vec<f64> {
        self.samples
            .iter()
            .zip(&self.diffusion)
            .filter_map(|(a, b)| comparison_defect(&tails(&a.c), &tails(&b.c)).ok())
            .map(|e| e.into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// `(t, error)` in rescaling-time order.
    pub fn profile_errors(&self, norm: NormName, s: f64) -> Vec<(f64, f64)> {
        self.profiles
            .iter()
            .filter(|p| same_time(p.profile.s, s))
            .filter_map(|p| p.errors.iter().find(|e| e.0 == norm).map(|e| (p.profile.t, e.1)))
            .collect()
    }

    /// Distinct slice parameters `s` present in the profiles.
    pub fn slice_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for p in &self.profiles {
            if !out.iter().any(|s| same_time(*s, p.profile.s)) {
                out.push(p.profile.s);
            }
        }
        out
    }

    pub fn sample_at(&self, t: f64) -> Option<&SimState> {
        self.samples.iter().find(|s| same_time(s.t, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub status: RunStatus,
    pub errors: Vec<String>,
    pub checks: Vec<CheckResult>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// 0 all checks pass, 1 some check failed, 3 the solver or an analysis failed.
    pub fn exit_code(&self) -> i32 {
        if self.status == RunStatus::Partial {
            3
        } else if self.all_pass() {
            0
        } else {
            1
        }
    }
}

fn method_label(m: Option<Method>) -> &'static str {
    match m {
        Some(Method::ExplicitAdaptive) => "explicit-adaptive",
        Some(Method::LinearlyImplicit) => "linearly-implicit",
        Some(Method::Auto) => "auto",
        None => "none",
    }
}

fn stats_json(stats: &SolverStats, method: Option<Method>) -> serde_json::Value {
    json!({
        "method": method_label(method),
        "accepted_steps": stats.accepted,
        "rejected_steps": stats.rejected,
        "rhs_evaluations": stats.rhs_evals,
        "factorizations": stats.factorizations,
        "clipped_entries": stats.clipped_entries,
        "max_window": stats.window,
    })
}

struct Solved {
    samples: Vec<SimState>,
    drift: Vec<f64>,
    diffusion: Vec<DiffusionState>,
    full_stats: (SolverStats, Option<Method>),
    diff_stats: Option<(SolverStats, Option<Method>)>,
    stop: Option<StopReason>,
    errors: Vec<String>,
}

fn solve(model: &RateModel, state0: &SimState, cfg: &ExperimentConfig, icfg: &IntegratorConfig) -> Solved {
    let rho = state0.accounted_mass();
    let mut samples = vec![state0.clone()];
    let mut errors = Vec::new();
    let mut stop = None;
    let diff0 = DiffusionState::from_cluster_state(state0);
    let mut full_stats = (SolverStats::default(), None);
    let mut diff_result = None;
    match cfg.run {
        RunMode::Trajectory => {
            let schedule: Vec<f64> = cfg.schedule_times().into_iter().filter(|t| *t > state0.t).collect();
            let (full, diff) = rayon::join(
                || {
                    let mut got = Vec::new();
                    let r = integrate_observed(model, state0, icfg, &schedule, |s| got.push(s.clone()));
                    (got, r)
                },
                || cfg.analyses.comparison.then(|| integrate_diffusion(model, &diff0, icfg, &schedule)),
            );
            let (got, r) = full;
            samples.extend(got);
            match r {
                Ok((stats, method)) => full_stats = (stats, Some(method)),
                Err(e) => errors.push(format!("cluster system: {e}")),
            }
            diff_result = diff;
        }
        RunMode::QuasiStationarity { slope_threshold, horizon, check_interval } => {
            let crit = QuasiStationarity { slope_threshold, horizon, check_interval };
            match run_to_quasi_stationarity(model, state0, icfg, crit) {
                Ok(traj) => {
                    samples = traj.samples;
                    full_stats = (traj.stats, traj.method);
                    stop = traj.stop;
                }
                Err(e) => errors.push(format!("cluster system: {e}")),
            }
            if cfg.analyses.comparison {
                let schedule: Vec<f64> = samples.iter().skip(1).map(|s| s.t).collect();
                diff_result = Some(integrate_diffusion(model, &diff0, icfg, &schedule));
            }
        }
    }
    let mut diffusion = Vec::new();
    let diff_stats = match diff_result {
        Some(Ok(d)) => {
            diffusion.push(diff0);
            diffusion.extend(d.samples);
            Some((d.stats, d.method))
        }
        Some(Err(e)) => {
            errors.push(format!("diffusion system: {e}"));
            None
        }
        None => None,
    };
    let drift = samples.iter().map(|s| s.accounted_mass() - rho).collect();
    Solved { samples, drift, diffusion, full_stats, diff_stats, stop, errors }
}

fn analyse(cfg: &ExperimentConfig, icfg: &IntegratorConfig, data: &mut RunData, errors: &mut Vec<String>) {
    let a = &cfg.analyses;
    if let Some(ss) = &a.selfsim {
        let battery = test_battery();
        for &t in &ss.times {
            for &s in &ss.s {
                let Some(sample) = data.sample_at(t * s) else {
                    errors.push(format!("selfsim: no sample at t·s = {}", t * s));
                    continue;
                };
                let tl = tails(&sample.c);
                match rescale(&tl, t, s, &default_grid(t, ss.m)) {
                    Ok(profile) => {
                        let mut errs = Vec::new();
                        for &norm in &ss.norms {
                            match profile_error(&profile, &data.model, data.rho, norm.to_core(), ss.m) {
                                Ok(e) => errs.push((norm, e)),
                                Err(e) => errors.push(format!("selfsim: {e}")),
                            }
                        }
                        data.profiles.push(ProfileRecord { profile, errors: errs });
                    }
                    Err(e) => errors.push(format!("selfsim: {e}")),
                }
                if ss.pairings && same_time(s, 1.0) {
                    for u in &battery {
                        data.pairings.push(PairingRecord {
                            t,
                            function: u.name.to_string(),
                            value: weak_pairing(&tl, u, t),
                            target: target_pairing(&data.model, data.rho, 1.0, u),
                        });
                    }
                }
            }
        }
    }
    if let Some(fs) = &a.fundamental {
        let fcfg = IntegratorConfig { rel_tol: fs.rel_tol, abs_tol: fs.abs_tol, ..icfg.clone() };
        match fundamental_columns(&fs.l, &fs.times, fs.n, &fcfg) {
            Ok(cols) => data.phi = cols,
            Err(e) => errors.push(format!("fundamental solution: {e}")),
        }
    }
    if let Some(d) = &a.duhamel {
        let dt = cfg.schedule.as_ref().and_then(|s| s.uniform_step()).expect("validated uniform schedule");
        let result = PhiMatrix::new(cfg.truncation.n, dt, icfg).and_then(|phi| {
            let history: Vec<Vec<f64>> = data.samples.iter().map(|s| inhomogeneity(&data.model, s)).collect();
            let rec = duhamel_reconstruct(&phi, &tails(&data.samples[0].c), &history, d.t)?;
            Ok(rec)
        });
        match (result, data.sample_at(d.t)) {
            (Ok(reconstructed), Some(s)) => {
                let direct = tails(&s.c);
                let max_error = direct.iter().zip(&reconstructed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                data.duhamel = Some(DuhamelRecord { t: d.t, direct, reconstructed, max_error });
            }
            (Err(e), _) => errors.push(format!("duhamel: {e}")),
            (_, None) => errors.push(format!("duhamel: no sample at t = {}", d.t)),
        }
    }
    if a.kon_equilibrium {
        match kon_equilibrium(&data.model, data.rho, cfg.truncation.n) {
            Ok(eq) => {
                let last = data.samples.last().expect("initial sample");
                let dc = last.c.iter().zip(&eq.c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                data.kon = Some(KonRecord { f_star: eq.f, residual: (last.f - eq.f).abs().max(dc), c_star: eq.c });
            }
            Err(e) => errors.push(format!("kon equilibrium: {e}")),
        }
    }
}

fn write_outputs(cfg: &ExperimentConfig, data: &RunData, sink: &mut OutputSink) -> Result<(), CliError> {
    let samples = &data.samples;
    let chosen: Vec<(usize, &SimState)> = if !cfg.output.snapshot_times.is_empty() {
        samples
            .iter()
            .enumerate()
            .filter(|(_, s)| cfg.output.snapshot_times.iter().any(|t| same_time(*t, s.t)))
            .collect()
    } else {
        match cfg.output.snapshots {
            SnapshotSelection::All => samples.iter().enumerate().collect(),
            SnapshotSelection::Last => samples.iter().enumerate().next_back().into_iter().collect(),
            SnapshotSelection::None => Vec::new(),
        }
    };
    for (i, s) in chosen {
        sink.write(&format!("snapshots/snapshot_{i:05}_t{}.csv", tag(s.t)), cluster_csv(&s.c).as_bytes())?;
    }
    sink.write("f_series.csv", csv(&["t", "f"], samples.iter().map(|s| vec![s.t, s.f])).as_bytes())?;

    let a = &cfg.analyses;
    let series = |f: &dyn Fn(&SimState) -> f64| csv(&["t", "value"], samples.iter().map(|s| vec![s.t, f(s)]));
    for name in &a.series {
        let (file, body) = match name {
            SeriesName::MassDrift => {
                ("mass_drift", csv(&["t", "value"], samples.iter().zip(&data.mass_drift).map(|(s, d)| vec![s.t, *d])))
            }
            SeriesName::SmallClusters => ("small_clusters", series(&|s| data.small_clusters(s))),
            SeriesName::ClusterCount => ("cluster_count", series(&|s| s.c.iter().sum())),
            SeriesName::GSum => ("g_sum", series(&|s| inhomogeneity_sum(&data.model, s))),
            SeriesName::Holder => ("holder_slack", series(&|s| holder_slack(&data.model, &s.c))),
        };
        sink.write(&format!("series/{file}.csv"), body.as_bytes())?;
    }
    for &k in &a.q_indices {
        let body = series(&|s| q_functional(&s.c, k).unwrap_or(f64::NAN));
        sink.write(&format!("series/q_{k}.csv"), body.as_bytes())?;
    }
    for &p in &a.moments {
        let body = series(&|s| moment(&s.c, p));
        sink.write(&format!("series/moment_p{}.csv", tag(p)), body.as_bytes())?;
    }
    if !data.diffusion.is_empty() {
        let rows = data.diffusion.iter().zip(data.comparison_defects()).map(|(d, e)| {
            vec![
                d.t,
                d.c.iter().sum(),
                bdlab_core::lyapunov_energy(&data.model, &d.c),
                bdlab_core::flux_energy(&data.model, &d.c, d.truncation),
                d.accounted_mass(),
                e,
            ]
        });
        let body = csv(&["t", "cluster_count", "lyapunov", "flux_energy", "accounted_mass", "max_defect"], rows);
        sink.write("comparison.csv", body.as_bytes())?;
    }
    for p in &data.profiles {
        let pr = &p.profile;
        let rows = pr.x_grid.iter().zip(&pr.values).map(|(&x, &v)| {
            let target = target_profile(&data.model, data.rho, pr.s, x);
            vec![x, v, target, v - target]
        });
        let body = csv(&["x", "value", "target", "error"], rows);
        sink.write(&format!("profiles/profile_t{}_s{}.csv", tag(pr.t), tag(pr.s)), body.as_bytes())?;
    }
    if !data.profiles.is_empty() {
        let mut body = String::from("t,s,norm,error\n");
        for p in &data.profiles {
            for (norm, e) in &p.errors {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f64(p.profile.t),
                    fmt_f64(p.profile.s),
                    norm.label(),
                    fmt_f64(*e)
                ));
            }
        }
        sink.write("profiles/errors.csv", body.as_bytes())?;
    }
    if !data.pairings.is_empty() {
        let mut body = String::from("t,function,value,target\n");
        for p in &data.pairings {
            body.push_str(&format!("{},{},{},{}\n", fmt_f64(p.t), p.function, fmt_f64(p.value), fmt_f64(p.target)));
        }
        sink.write("profiles/pairings.csv", body.as_bytes())?;
    }
    for cols in &data.phi {
        let Some(l) = cols.first().map(|c| c.l) else { continue };
        let mut body = String::from("t,k,value\n");
        for c in cols {
            for (i, v) in c.values.iter().enumerate() {
                body.push_str(&format!("{},{},{}\n", fmt_f64(c.t), i + 1, fmt_f64(*v)));
            }
        }
        sink.write(&format!("phi/phi_l{l}.csv"), body.as_bytes())?;
    }
    if let Some(d) = &data.duhamel {
        let rows =
            d.direct.iter().zip(&d.reconstructed).enumerate().map(|(i, (a, b))| vec![(i + 1) as f64, *a, *b, a - b]);
        sink.write("duhamel.csv", csv(&["k", "direct", "reconstructed", "error"], rows).as_bytes())?;
    }
    if let Some(k) = &data.kon {
        let last = samples.last().expect("initial sample");
        let mut rows = vec![vec![0.0, last.f, k.f_star]];
        rows.extend(last.c.iter().zip(&k.c_star).enumerate().map(|(i, (a, b))| vec![(i + 1) as f64, *a, *b]));
        sink.write("kon_equilibrium.csv", csv(&["n", "value", "equilibrium"], rows).as_bytes())?;
    }
    Ok(())
}

/// Run `cfg` writing into `out_dir`; relative input paths resolve against `base_dir`.
/// Configuration and I/O problems are errors; solver failures are recorded in the
/// outcome (and the manifest) with whatever samples were reached.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    cfg.validate()?;
    let model = cfg.rate_model()?;
    let state0 = cfg.initial_state(base_dir)?;
    let icfg = cfg.integrator.to_core();
    let rho = state0.accounted_mass();
    let mut sink = OutputSink::create(out_dir)?;
    log::info!("{}: N = {}, ρ = {rho}, λ = {}, κ = {}", cfg.name, state0.n(), cfg.model.lambda, cfg.model.kappa);

    let solved = solve(&model, &state0, cfg, &icfg);
    let mut errors = solved.errors;
    let mut data = RunData {
        model,
        rho,
        samples: solved.samples,
        mass_drift: solved.drift,
        diffusion: solved.diffusion,
        profiles: Vec::new(),
        pairings: Vec::new(),
        phi: Vec::new(),
        duhamel: None,
        kon: None,
        small_cluster_max: cfg.analyses.small_cluster_max(),
    };
    if errors.is_empty() {
        analyse(cfg, &icfg, &mut data, &mut errors);
    }
    for e in &errors {
        log::error!("{}: {e}", cfg.name);
    }
    let status = if errors.is_empty() { RunStatus::Complete } else { RunStatus::Partial };
    write_outputs(cfg, &data, &mut sink)?;

    let checks: Vec<CheckResult> = cfg.checks.iter().map(|c| c.evaluate(&data)).collect();
    if !checks.is_empty() {
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "name": cfg.name,
            "all_pass": checks.iter().all(|c| c.pass),
            "checks": checks,
        });
        sink.write_json("acceptance_report.json", &report)?;
    }

    let last = data.samples.last().expect("initial sample");
    let accounted: Vec<f64> = data.samples.iter().map(SimState::accounted_mass).collect();
    let stop = match solved.stop {
        Some(StopReason::Converged { t }) => json!({ "kind": "converged", "t": t }),
        Some(StopReason::HorizonReached { t }) => json!({ "kind": "horizon-reached", "t": t }),
        None if status == RunStatus::Complete => json!({ "kind": "schedule-complete", "t": last.t }),
        None => json!({ "kind": "failed", "t": last.t }),
    };
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": { "name": "bdlab", "version": env!("CARGO_PKG_VERSION") },
        "config": cfg,
        "status": match status { RunStatus::Complete => "complete", RunStatus::Partial => "partial" },
        "errors": errors,
        "solver": {
            "cluster": stats_json(&solved.full_stats.0, solved.full_stats.1),
            "diffusion": solved.diff_stats.map(|(s, m)| stats_json(&s, m)),
            "rel_tol": icfg.rel_tol,
            "abs_tol": icfg.abs_tol,
        },
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "samples": data.samples.len(),
        "final_time": last.t,
        "stop_reason": stop,
        "mass": {
            "initial": rho,
            "final": last.accounted_mass(),
            "max_abs_drift": data.mass_drift.iter().fold(0.0f64, |a, d| a.max(d.abs())),
            "min_accounted": accounted.iter().copied().fold(f64::INFINITY, f64::min),
            "max_accounted": accounted.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "leaked": last.leaked_mass,
            "clipped": last.clipped_mass,
        },
        "comparison_enabled": cfg.analyses.comparison.then(|| state0.f <= model.critical_density()),
        "files": sink.files(),
    });
    sink.write_json("manifest.json", &manifest)?;
    log::info!(
        "{}: {} in {:.2} s",
        cfg.name,
        if checks.iter().all(|c| c.pass) { "pass" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    Ok(RunOutcome { name: cfg.name.clone(), dir: out_dir.to_path_buf(), status, errors, checks })
}
