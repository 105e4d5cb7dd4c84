//! The pure-diffusion system `∂_t c̃_n = J̃_{n-1} - J̃_n`, `J̃_n = n^λ c̃_n - (n+1)^λ c̃_{n+1}`,
//! `c̃_0 ≡ 0`: the cluster system with the feedback `κf` frozen to one. While `κf ≤ 1`
//! its tails bound those of the full system from above.

use crate::diagnostics::tails;
use crate::error::{Error, Result};
use crate::integrator::{
    check_schedule, integrate, IntegratorConfig, LatticeSystem, Method, Propagator, SolverStats, Trajectory,
};
use crate::model::{ClusterSystem, Derivative, Drive, RateModel, SimState, Truncation};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub t: f64,
    pub c: Vec<f64>,
    pub truncation: Truncation,
    pub leaked_mass: f64,
    pub clipped_mass: f64,
}

impl DiffusionState {
    pub fn new(c: Vec<f64>, truncation: Truncation) -> Result<Self> {
        let s = Self { t: 0.0, c, truncation, leaked_mass: 0.0, clipped_mass: 0.0 };
        s.as_cluster_state().validate()?;
        Ok(s)
    }

    /// Same cluster data, time and bookkeeping as `state`; `f` is dropped.
    pub fn from_cluster_state(state: &SimState) -> Self {
        Self {
            t: state.t,
            c: state.c.clone(),
            truncation: state.truncation,
            leaked_mass: state.leaked_mass,
            clipped_mass: state.clipped_mass,
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `Σ n c̃_n + leaked - clipped`.
    pub fn accounted_mass(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for (i, &v) in self.c.iter().enumerate() {
            acc.add((i + 1) as f64 * v);
        }
        acc.add(self.leaked_mass);
        acc.add(-self.clipped_mass);
        acc.value()
    }

    fn as_cluster_state(&self) -> SimState {
        SimState {
            t: self.t,
            f: 0.0,
            c: self.c.clone(),
            truncation: self.truncation,
            leaked_mass: self.leaked_mass,
            clipped_mass: self.clipped_mass,
        }
    }
}

fn diffusion_system(model: &RateModel, n: usize, truncation: Truncation) -> ClusterSystem {
    ClusterSystem::new(model, n, truncation).with_drive(Drive::Frozen(1.0))
}

/// Fluxes `J̃_0..J̃_N`; `J̃_N` follows the truncation policy.
pub fn diffusion_fluxes(model: &RateModel, c: &[f64], truncation: Truncation) -> Vec<f64> {
    let n = c.len();
    let mut j = Vec::with_capacity(n + 1);
    j.push(-c.first().copied().unwrap_or(0.0));
    for k in 1..=n {
        let out = model.rate(k) * c[k - 1];
        j.push(if k < n {
            out - model.rate(k + 1) * c[k]
        } else if truncation == Truncation::Absorbing {
            out
        } else {
            0.0
        });
    }
    j
}

/// Right-hand side of the diffusion system (`df` is always zero).
pub fn diffusion_rhs(model: &RateModel, state: &DiffusionState) -> Derivative {
    let n = state.n();
    let sys = diffusion_system(model, n, state.truncation);
    let mut y = state.c.clone();
    y.extend(sys.pack_extras(&state.as_cluster_state()));
    let mut dy = vec![0.0; y.len()];
    sys.rhs(n, &y, &mut dy);
    let dleak = if sys.passive() > 0 { dy[n] } else { 0.0 };
    dy.truncate(n);
    Derivative { df: 0.0, dc: dy, dleak }
}

#[derive(Debug, Clone, Default)]
pub struct DiffusionTrajectory {
    pub samples: Vec<DiffusionState>,
    pub mass_drift: Vec<f64>,
    pub stats: SolverStats,
    pub method: Option<Method>,
}

impl DiffusionTrajectory {
    pub fn max_abs_drift(&self) -> f64 {
        self.mass_drift.iter().fold(0.0, |a, d| a.max(d.abs()))
    }
}

/// Integrate the diffusion system through `schedule` with the same integrator as the
/// full system.
pub fn integrate_diffusion(
    model: &RateModel,
    state0: &DiffusionState,
    cfg: &IntegratorConfig,
    schedule: &[f64],
) -> Result<DiffusionTrajectory> {
    check_schedule(state0.t, schedule)?;
    let base = state0.as_cluster_state();
    base.validate()?;
    let sys = diffusion_system(model, state0.n(), state0.truncation);
    let mut prop = Propagator::new(&sys, cfg, state0.t, &state0.c, &sys.pack_extras(&base))?;
    let rho = state0.accounted_mass();
    let mut traj = DiffusionTrajectory { method: Some(prop.method()), ..Default::default() };
    let mut extras = vec![0.0; sys.extras()];
    for &t in schedule {
        prop.advance_to(t)?;
        let mut s = base.clone();
        prop.read(&mut s.c, &mut extras);
        sys.unpack_extras(&extras, &mut s);
        s.t = prop.time();
        s.clipped_mass = base.clipped_mass + prop.clipped_mass();
        let d = DiffusionState::from_cluster_state(&s);
        traj.mass_drift.push(d.accounted_mass() - rho);
        traj.samples.push(d);
    }
    traj.stats = prop.stats();
    Ok(traj)
}

/// `E_k = C_k - C̃_k`.
pub fn comparison_defect(full_tails: &[f64], diff_tails: &[f64]) -> Result<Vec<f64>> {
    if full_tails.len() != diff_tails.len() {
        return Err(Error::LengthMismatch { expected: full_tails.len(), got: diff_tails.len() });
    }
    Ok(full_tails.iter().zip(diff_tails).map(|(a, b)| a - b).collect())
}

/// Full and diffusion trajectories from the same cluster data.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub full: Trajectory,
    pub diffusion: DiffusionTrajectory,
    /// `false` when `f(0) > 1/κ`; the defects are still reported but carry no sign claim.
    pub comparison_enabled: bool,
    /// `E_k` at each sample.
    pub defects: Vec<Vec<f64>>,
}

impl CoupledRun {
    /// `max_k E_k` per sample.
    pub fn max_defects(&self) -> Vec<f64> {
        self.defects.iter().map(|e| e.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// Advance both systems (in parallel) through `schedule` and compare their tails.
pub fn coupled_run(
    model: &RateModel,
    state0: &SimState,
    cfg: &IntegratorConfig,
    schedule: &[f64],
) -> Result<CoupledRun> {
    let diff0 = DiffusionState::from_cluster_state(state0);
    let (full, diffusion) =
        rayon::join(|| integrate(model, state0, cfg, schedule), || integrate_diffusion(model, &diff0, cfg, schedule));
    let (full, diffusion) = (full?, diffusion?);
    let comparison_enabled = state0.f <= model.critical_density();
    if !comparison_enabled {
        log::warn!("f(0) = {} exceeds 1/κ; comparison principle not asserted", state0.f);
    }
    let defects = full
        .samples
        .iter()
        .zip(&diffusion.samples)
        .map(|(a, b)| comparison_defect(&tails(&a.c), &tails(&b.c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledRun { full, diffusion, comparison_enabled, defects })
}
