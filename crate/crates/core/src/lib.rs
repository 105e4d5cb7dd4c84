//! Numerical laboratory for a Becker-Döring model of cell polarization.
//!
//! Clusters of size `n` on the membrane gain molecules from a cytosolic pool `f`
//! through a feedback loop and lose them by detachment; there is no spontaneous
//! attachment. The crate integrates the truncated system, evaluates the functionals
//! that govern its long-time behaviour, and measures convergence of the rescaled
//! cluster tails towards the exponential self-similar profile.

pub mod arrow;
pub mod comparison;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod model;
pub mod selfsim;
pub mod sum;

pub use comparison::{
    comparison_defect, coupled_run, diffusion_fluxes, diffusion_rhs, integrate_diffusion, CoupledRun, DiffusionState,
    DiffusionTrajectory,
};
pub use diagnostics::{
    excess_mass, flux_energy, inhomogeneity, inhomogeneity_sum, linear_fit, lyapunov_energy, moment, q_functional,
    tails, time_integral, DiagnosticSeries, LinearFit,
};
pub use error::{Error, Result};
pub use integrator::{
    integrate, integrate_observed, run_to_quasi_stationarity, step, IntegratorConfig, LatticeSystem, Method,
    NegativityPolicy, Propagator, QuasiStationarity, SolverStats, StopReason, Trajectory,
};
pub use model::{
    equilibrium_ladder, f_closed_form, flux, kon_equilibrium, rhs, total_mass, ClusterSystem, Derivative,
    EquilibriumLadder, KonEquilibrium, RateModel, SimState, Truncation,
};
pub use selfsim::{
    default_grid, duhamel_reconstruct, fundamental_columns, fundamental_solution, profile_error, rescale,
    target_profile, test_battery, weak_pairing, Norm, PhiColumn, PhiMatrix, RescaledProfile, TestFunction,
};
