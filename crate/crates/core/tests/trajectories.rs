use bdlab_core::diagnostics::holder_slack;
use bdlab_core::selfsim::profile_pairing;
use bdlab_core::*;

fn mono(n: usize, amount: f64, f0: f64) -> SimState {
    SimState::monodisperse(n, 1, amount, f0, Truncation::Reflecting).unwrap()
}

fn uniform(dt: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| dt * i as f64).collect()
}

#[test]
fn q_functionals_grow_above_critical_monomers() {
    let model = RateModel::new(1.0, 2.0).unwrap();
    let traj = integrate(&model, &mono(3000, 0.6, 0.9), &IntegratorConfig::default(), &uniform(0.5, 60)).unwrap();
    for k in 1..=50 {
        let q: Vec<f64> = traj.samples.iter().map(|s| q_functional(&s.c, k).unwrap()).collect();
        assert!(q.windows(2).all(|w| w[1] - w[0] >= -1e-10), "q_{k} decreased");
        assert!(q.iter().all(|v| *v <= 1.5));
    }
}

#[test]
fn holder_bound_along_trajectory() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let traj = integrate(&model, &mono(2000, 1.0, 0.0), &IntegratorConfig::default(), &[1.0, 10.0, 100.0]).unwrap();
    for s in &traj.samples {
        let active = total_mass(s) - s.f;
        assert!((moment(&s.c, 1.0) - active).abs() < 1e-12);
        assert!(holder_slack(&model, &s.c) >= -1e-12);
    }
}

#[test]
fn higher_moment_grows_at_most_linearly() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let s0 = mono(20_000, 1.0, 0.0);
    let p = 2.0 - model.lambda();
    let m0 = moment(&s0.c, p);
    let traj = integrate(&model, &s0, &IntegratorConfig::default(), &[10.0, 100.0, 1000.0]).unwrap();
    let rates: Vec<f64> = traj.samples.iter().map(|s| (moment(&s.c, p) - m0) / s.t).collect();
    let worst = rates.iter().copied().fold(0.0, f64::max);
    assert!(rates.iter().all(|r| *r > 0.0));
    // bounded across two decades by a modest constant of order κρ²
    assert!(worst < 10.0 * model.kappa(), "{rates:?}");
}

#[test]
fn inhomogeneity_decays_exponentially() {
    let model = RateModel::new(1.0, 2.0).unwrap();
    let times = uniform(1.0, 15);
    let traj = integrate(&model, &mono(20_000, 1.0, 0.0), &IntegratorConfig::default(), &times).unwrap();
    let logs: Vec<f64> = traj.samples.iter().map(|s| inhomogeneity_sum(&model, s).abs().ln()).collect();
    let fit = linear_fit(&times, &logs).unwrap();
    assert!(fit.slope < 0.0 && fit.r_squared >= 0.99, "{fit:?}");
}

#[test]
fn comparison_principle_below_critical_monomers() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let run = coupled_run(&model, &mono(600, 1.0, 0.0), &IntegratorConfig::default(), &uniform(2.5, 8)).unwrap();
    assert!(run.comparison_enabled);
    for e in run.max_defects() {
        assert!(e <= 1e-8, "E = {e}");
    }
    let counts: Vec<f64> = run.diffusion.samples.iter().map(|s| s.c.iter().sum()).collect();
    assert!(counts.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn diffusion_energies_decay_and_balance() {
    let model = RateModel::new(0.5, 2.0).unwrap();
    let d0 = DiffusionState::new(mono(400, 1.0, 0.0).c, Truncation::Reflecting).unwrap();
    let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-14);
    let times: Vec<f64> = (0..=800).map(|i| 0.0125 * i as f64).collect();
    let traj = integrate_diffusion(&model, &d0, &cfg, &times).unwrap();
    let lyap: Vec<f64> = traj.samples.iter().map(|s| lyapunov_energy(&model, &s.c)).collect();
    let flux: Vec<f64> = traj.samples.iter().map(|s| flux_energy(&model, &s.c, s.truncation)).collect();
    assert!(lyap.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!(flux.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    let dissipated = time_integral(&times, &flux).unwrap();
    let balance = lyap.last().unwrap() + dissipated - lyap[0];
    assert!(balance.abs() < 1e-6, "balance residual {balance}");
    let rho = d0.accounted_mass();
    for s in &traj.samples {
        assert!(s.c.iter().enumerate().all(|(i, v)| *v <= rho / (i + 1) as f64 + 1e-12));
    }
}

#[test]
fn rescaled_profiles_approach_the_exponential() {
    let model = RateModel::new(1.0, 2.0).unwrap();
    let times = [25.0, 50.0, 100.0];
    let traj = integrate(&model, &mono(100_000, 1.0, 0.0), &IntegratorConfig::default(), &times).unwrap();
    let mut sup = Vec::new();
    let mut l1 = Vec::new();
    for s in &traj.samples {
        let tl = tails(&s.c);
        let p = rescale(&tl, s.t, 1.0, &default_grid(s.t, 5.0)).unwrap();
        assert!(p.values.windows(2).all(|w| w[1] <= w[0]));
        sup.push(profile_error(&p, &model, 1.0, Norm::Sup, 5.0).unwrap());
        l1.push(profile_error(&p, &model, 1.0, Norm::L1, 5.0).unwrap());
        for u in test_battery().iter().filter(|u| u.support.is_some()) {
            let grid = profile_pairing(&p, u);
            let cells = weak_pairing(&tl, u, s.t);
            assert!((grid - cells).abs() < 5e-3, "{}: {grid} vs {cells}", u.name);
        }
    }
    assert!(sup.windows(2).all(|w| w[1] < w[0]), "{sup:?}");
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
    let exp = test_battery()[0];
    let last = traj.last().unwrap();
    assert!((weak_pairing(&tails(&last.c), &exp, last.t) - 0.25).abs() < 0.01);
}

#[test]
fn rescale_beyond_truncation_reports_offending_points() {
    let s = mono(100, 1.0, 0.0);
    let err = rescale(&tails(&s.c), 50.0, 1.0, &default_grid(50.0, 5.0)).unwrap_err();
    match err {
        Error::GridBeyondTruncation { n, offending } => {
            assert_eq!(n, 100);
            assert!(offending.iter().all(|x| *x >= 99.0 / 50.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duhamel_agrees_with_direct_integration() {
    let model = RateModel::new(1.0, 2.0).unwrap();
    let n = 120;
    let dt = 2e-3;
    let s0 = mono(n, 1.0, 0.0);
    let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-14);
    let times = uniform(dt, 1000);
    let traj = integrate(&model, &s0, &cfg, &times).unwrap();
    let mut hist = vec![inhomogeneity(&model, &s0)];
    hist.extend(traj.samples.iter().map(|s| inhomogeneity(&model, s)));
    let phi = PhiMatrix::new(n, dt, &cfg).unwrap();
    let rec = duhamel_reconstruct(&phi, &tails(&s0.c), &hist, 2.0).unwrap();
    let direct = tails(&traj.last().unwrap().c);
    let err = rec.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-5, "{err}");
}
