use bdlab_core::*;

fn lambda_one() -> RateModel {
    RateModel::new(1.0, 2.0).unwrap()
}

fn mono(n: usize, amount: f64, f0: f64) -> SimState {
    SimState::monodisperse(n, 1, amount, f0, Truncation::Reflecting).unwrap()
}

#[test]
fn stationary_state_is_fixed() {
    let model = lambda_one();
    let s = SimState::new(0.7, vec![0.0; 50], Truncation::Reflecting).unwrap();
    for method in [Method::ExplicitAdaptive, Method::LinearlyImplicit] {
        let cfg = IntegratorConfig { method, ..IntegratorConfig::default() };
        let out = step(&model, &s, &cfg, 3.0).unwrap();
        assert_eq!(out.f, 0.7);
        assert!(out.c.iter().all(|v| *v == 0.0));
        assert_eq!(out.t, 3.0);
    }
}

#[test]
fn k_on_equilibrium_is_fixed_by_the_integrator() {
    let model = RateModel::with_k_on(1.0, 2.0, 0.1).unwrap();
    let eq = kon_equilibrium(&model, 0.4, 200).unwrap();
    let s = SimState::new(eq.f, eq.c.clone(), Truncation::Reflecting).unwrap();
    let out = step(&model, &s, &IntegratorConfig::default(), 20.0).unwrap();
    assert!((out.f - eq.f).abs() < 1e-10);
    for (a, b) in out.c.iter().zip(&eq.c) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn mass_drift_per_unit_time_is_tiny() {
    let model = lambda_one();
    let s = mono(1000, 1.0, 0.0);
    let traj = integrate(&model, &s, &IntegratorConfig::default(), &[10.0, 50.0, 100.0]).unwrap();
    for (st, d) in traj.samples.iter().zip(&traj.mass_drift) {
        assert!(d.abs() <= 1e-10 * st.t, "drift {d} at t = {}", st.t);
    }
}

#[test]
fn drift_bounded_by_tolerance_at_several_tolerances() {
    let model = lambda_one();
    let s = mono(2000, 1.0, 0.0);
    for abs_tol in [1e-8, 1e-10, 1e-12] {
        let cfg = IntegratorConfig::with_tolerances(1e-6, abs_tol);
        let traj = integrate(&model, &s, &cfg, &[20.0]).unwrap();
        assert!(traj.max_abs_drift() <= 20.0 * abs_tol);
    }
}

#[test]
fn f_matches_closed_form_over_fifty() {
    let model = lambda_one();
    let s = mono(10_000, 0.9, 0.1);
    let cfg = IntegratorConfig::default();
    let times: Vec<f64> = (1..=100).map(|i| 0.5 * i as f64).collect();
    let traj = integrate(&model, &s, &cfg, &times).unwrap();
    for st in &traj.samples {
        let exact = f_closed_form(&model, 1.0, 0.1, st.t).unwrap();
        assert!((st.f - exact).abs() <= cfg.rel_tol * 10.0, "t = {}: {} vs {exact}", st.t, st.f);
    }
}

#[test]
fn error_decreases_with_tolerance() {
    let model = lambda_one();
    let s = mono(2000, 0.9, 0.1);
    let exact = f_closed_form(&model, 1.0, 0.1, 5.0).unwrap();
    for method in [Method::ExplicitAdaptive, Method::LinearlyImplicit] {
        let errs: Vec<f64> = [1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&tol| {
                let cfg = IntegratorConfig { method, ..IntegratorConfig::with_tolerances(tol, tol * 1e-4) };
                (integrate(&model, &s, &cfg, &[5.0]).unwrap().samples[0].f - exact).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{method:?}: {errs:?}");
    }
}

#[test]
fn explicit_and_implicit_agree() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let s = mono(300, 1.0, 0.0);
    let run = |method| {
        let cfg = IntegratorConfig { method, ..IntegratorConfig::with_tolerances(1e-10, 1e-14) };
        integrate(&model, &s, &cfg, &[10.0]).unwrap().samples.pop().unwrap()
    };
    let (a, b) = (run(Method::ExplicitAdaptive), run(Method::LinearlyImplicit));
    assert!((a.f - b.f).abs() < 1e-8);
    for (x, y) in a.c.iter().zip(&b.c) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn trivial_schedules() {
    let model = lambda_one();
    let s = mono(100, 1.0, 0.0);
    let cfg = IntegratorConfig::default();
    let empty = integrate(&model, &s, &cfg, &[]).unwrap();
    assert!(empty.samples.is_empty());
    let zero = integrate(&model, &s, &cfg, &[0.0]).unwrap();
    assert_eq!(zero.samples.len(), 1);
    assert_eq!(zero.samples[0], s);
    assert!(matches!(integrate(&model, &s, &cfg, &[1.0, 1.0]), Err(Error::InvalidSchedule { position: 1 })));
    assert!(matches!(integrate(&model, &s, &cfg, &[2.0, 1.0]), Err(Error::InvalidSchedule { position: 1 })));
}

#[test]
fn supercritical_monomers_reach_the_critical_level() {
    let model = lambda_one();
    let s = mono(10_000, 1.0, 0.0);
    let traj = integrate(&model, &s, &IntegratorConfig::default(), &[50.0, 100.0, 200.0, 400.0]).unwrap();
    assert_eq!(traj.times(), vec![50.0, 100.0, 200.0, 400.0]);
    assert!((traj.last().unwrap().f - 0.5).abs() < 1e-4);
}

#[test]
fn monomers_are_monotone() {
    let model = lambda_one();
    let times: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
    let up = integrate(&model, &mono(500, 0.8, 0.2), &IntegratorConfig::default(), &times).unwrap();
    assert!(up.samples.windows(2).all(|w| w[1].f >= w[0].f - 1e-12));
    let down = integrate(&model, &mono(500, 0.4, 0.9), &IntegratorConfig::default(), &times).unwrap();
    assert!(down.samples.windows(2).all(|w| w[1].f <= w[0].f + 1e-12));
    assert!(down.samples.iter().all(|s| s.f >= 0.5 - 1e-12));
}

#[test]
fn no_significant_negatives() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    for negativity in [NegativityPolicy::ClipAndLog, NegativityPolicy::RejectStep] {
        let cfg = IntegratorConfig { negativity, ..IntegratorConfig::default() };
        let mut worst = 0.0f64;
        integrate_observed(&model, &mono(400, 1.0, 0.0), &cfg, &[0.1, 1.0, 10.0, 50.0], |s| {
            worst = s.c.iter().copied().fold(worst, f64::min);
        })
        .unwrap();
        assert!(worst >= -10.0 * cfg.abs_tol);
    }
}

#[test]
fn auto_method_follows_stiffness() {
    let cfg = IntegratorConfig::default();
    let small = ClusterSystem::new(&RateModel::new(0.5, 2.0).unwrap(), 100, Truncation::Reflecting);
    let large = ClusterSystem::new(&lambda_one(), 10_000, Truncation::Reflecting);
    assert_eq!(cfg.resolve_method(&small), Method::ExplicitAdaptive);
    assert_eq!(cfg.resolve_method(&large), Method::LinearlyImplicit);
}

#[test]
fn step_budget_exhaustion_is_reported() {
    let model = lambda_one();
    let cfg = IntegratorConfig { method: Method::ExplicitAdaptive, max_steps: 50, ..IntegratorConfig::default() };
    let err = step(&model, &mono(5000, 1.0, 0.0), &cfg, 100.0).unwrap_err();
    assert!(matches!(err, Error::StepSizeUnderflow { .. }));
    assert!(err.to_string().contains("linearly-implicit"));
}

#[test]
fn invalid_configs_rejected() {
    let model = lambda_one();
    let s = mono(10, 1.0, 0.0);
    let bad = IntegratorConfig { rel_tol: 0.0, ..IntegratorConfig::default() };
    assert!(matches!(step(&model, &s, &bad, 1.0), Err(Error::InvalidConfig(_))));
    let bad = IntegratorConfig { min_step: 10.0, max_step: 1.0, ..IntegratorConfig::default() };
    assert!(step(&model, &s, &bad, 1.0).is_err());
    assert!(step(&model, &s, &IntegratorConfig::default(), 0.0).is_err());
}

#[test]
fn absorbing_policy_accounts_for_leaked_mass() {
    let model = lambda_one();
    let s = SimState::monodisperse(50, 1, 1.0, 0.0, Truncation::Absorbing).unwrap();
    let traj = integrate(&model, &s, &IntegratorConfig::default(), &[50.0, 200.0]).unwrap();
    let last = traj.last().unwrap();
    assert!(last.leaked_mass > 1e-3);
    assert!(traj.max_abs_drift() < 1e-10);
}

#[test]
fn quasi_stationarity_stops() {
    let model = lambda_one();
    let crit = QuasiStationarity { slope_threshold: 1e-9, horizon: 400.0, check_interval: 5.0 };
    let fixed = SimState::new(0.4, vec![0.0; 20], Truncation::Reflecting).unwrap();
    let traj = run_to_quasi_stationarity(&model, &fixed, &IntegratorConfig::default(), crit).unwrap();
    assert_eq!(traj.samples.len(), 1);
    assert_eq!(traj.stop, Some(StopReason::Converged { t: 0.0 }));

    let traj = run_to_quasi_stationarity(&model, &mono(10_000, 0.9, 0.1), &IntegratorConfig::default(), crit).unwrap();
    assert!(matches!(traj.stop, Some(StopReason::Converged { .. })));
    assert!((traj.last().unwrap().f - 0.5).abs() < 1e-3);

    let short = QuasiStationarity { slope_threshold: 1e-30, horizon: 10.0, check_interval: 5.0 };
    let traj = run_to_quasi_stationarity(&model, &mono(100, 0.9, 0.1), &IntegratorConfig::default(), short).unwrap();
    assert_eq!(traj.stop, Some(StopReason::HorizonReached { t: 10.0 }));
}

#[test]
fn small_clusters_fall_by_the_stop_time() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let crit = QuasiStationarity { slope_threshold: 1e-6, horizon: 200.0, check_interval: 10.0 };
    let traj = run_to_quasi_stationarity(&model, &mono(5000, 1.0, 0.0), &IntegratorConfig::default(), crit).unwrap();
    let stop = traj.last().unwrap();
    let half = traj.samples.iter().find(|s| s.t >= stop.t / 2.0).unwrap();
    let small = |s: &SimState| s.c[..10].iter().sum::<f64>();
    assert!(small(stop) < small(half));
}
