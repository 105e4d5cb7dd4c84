//! Adaptive time integration for lattice systems.
//!
//! Two embedded pairs sit behind one [`Propagator`]:
//!
//! * `ExplicitAdaptive`: Dormand-Prince 5(4), for mildly stiff runs (λ < 1, moderate N).
//! * `LinearlyImplicit`: a stiffly accurate four-stage-order Rosenbrock method with an
//!   embedded third-order estimate (γ = 1/4). Stage systems `(1/(γh) I - J) k = r` are
//!   solved in O(N) through [`ShiftedFactor`], since the cluster Jacobian is tridiagonal
//!   plus one monomer border.
//!
//! Both methods map linear invariants of the vector field to themselves, so the
//! weighted mass `f + Σ n c_n` is conserved up to round-off whenever the exact
//! Jacobian is used.
//!
//! The propagator only integrates an active window `c_1..c_m` of the lattice. Sites
//! beyond `m` hold exactly zero; the window grows once the sites next to its edge rise
//! above `support_floor`, and the window edge acts as a reflecting boundary until it
//! reaches the true truncation `N`.

use crate::arrow::{ArrowJacobian, ShiftedFactor};
use crate::error::{Error, Result};
use crate::model::{ClusterSystem, RateModel, SimState};

/// A truncated lattice ODE with arrow-structured Jacobian.
///
/// Packed layout of `y`: `[site_1..site_m, coupled scalar (optional), passive accumulators]`.
pub trait LatticeSystem: Sync {
    fn sites(&self) -> usize;
    fn coupled(&self) -> bool;
    fn passive(&self) -> usize;
    /// Vector field on the active window of `m` sites.
    fn rhs(&self, m: usize, y: &[f64], dy: &mut [f64]);
    fn jacobian(&self, m: usize, y: &[f64], jac: &mut ArrowJacobian);
    /// Weight of site `i` (0-based) in the conserved quantity.
    fn site_weight(&self, i: usize) -> f64;
    /// Rough bound on the spectral radius over the full truncation.
    fn stiffness(&self) -> f64;

    fn extras(&self) -> usize {
        usize::from(self.coupled()) + self.passive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Explicit for non-stiff truncations, linearly implicit otherwise.
    Auto,
    ExplicitAdaptive,
    LinearlyImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativityPolicy {
    /// Negative entries are set to zero; the mass this adds is recorded.
    ClipAndLog,
    /// Steps producing entries below `-abs_tol` are rejected and retried with a smaller step.
    RejectStep,
}

/// Above this spectral-radius estimate `Method::Auto` switches to the implicit method.
pub const AUTO_STIFFNESS_THRESHOLD: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub negativity: NegativityPolicy,
    /// Window growth threshold; `0.0` integrates the whole truncation from the start.
    pub support_floor: f64,
    pub initial_step: Option<f64>,
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_step: 100.0,
            min_step: 1e-14,
            negativity: NegativityPolicy::ClipAndLog,
            support_floor: 1e-200,
            initial_step: None,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("rel_tol and abs_tol must be positive");
        }
        if !(self.min_step > 0.0 && self.max_step > 0.0) {
            return bad("min_step and max_step must be positive");
        }
        if self.min_step > self.max_step {
            return bad("min_step must not exceed max_step");
        }
        if !(self.support_floor >= 0.0) {
            return bad("support_floor must be nonnegative");
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return bad("initial_step must be positive");
            }
        }
        Ok(())
    }

    pub fn resolve_method<S: LatticeSystem + ?Sized>(&self, sys: &S) -> Method {
        match self.method {
            Method::Auto if sys.stiffness() > AUTO_STIFFNESS_THRESHOLD => Method::LinearlyImplicit,
            Method::Auto => Method::ExplicitAdaptive,
            m => m,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub factorizations: u64,
    pub clipped_entries: u64,
    /// Largest active window reached.
    pub window: usize,
}

const WINDOW_PAD: usize = 32;

// Rosenbrock coefficients (γ = 1/4, stiffly accurate, order 4 with embedded order 3).
mod ros {
    pub const GAMMA: f64 = 0.25;
    pub const A21: f64 = 1.544;
    pub const A31: f64 = 0.9466785280815826;
    pub const A32: f64 = 0.2557011698983284;
    pub const A41: f64 = 3.314825187068521;
    pub const A42: f64 = 2.896124015972201;
    pub const A43: f64 = 0.9986419139977817;
    pub const A51: f64 = 1.221224509226641;
    pub const A52: f64 = 6.019134481288629;
    pub const A53: f64 = 12.53708332932087;
    pub const A54: f64 = -0.687886036105895;
    pub const C21: f64 = -5.6688;
    pub const C31: f64 = -2.430093356833875;
    pub const C32: f64 = -0.2063599157091915;
    pub const C41: f64 = -0.1073529058151375;
    pub const C42: f64 = -9.594562251023355;
    pub const C43: f64 = -20.47028614809616;
    pub const C51: f64 = 7.496443313967647;
    pub const C52: f64 = -10.24680431464352;
    pub const C53: f64 = -33.99990352819905;
    pub const C54: f64 = 11.7089089320616;
    pub const C61: f64 = 8.083246795921522;
    pub const C62: f64 = -7.981132988064893;
    pub const C63: f64 = -31.52159432874371;
    pub const C64: f64 = 16.31930543123136;
    pub const C65: f64 = -6.058818238834054;
}

// Dormand-Prince 5(4).
mod dopri {
    pub const A21: f64 = 1.0 / 5.0;
    pub const A31: f64 = 3.0 / 40.0;
    pub const A32: f64 = 9.0 / 40.0;
    pub const A41: f64 = 44.0 / 45.0;
    pub const A42: f64 = -56.0 / 15.0;
    pub const A43: f64 = 32.0 / 9.0;
    pub const A51: f64 = 19372.0 / 6561.0;
    pub const A52: f64 = -25360.0 / 2187.0;
    pub const A53: f64 = 64448.0 / 6561.0;
    pub const A54: f64 = -212.0 / 729.0;
    pub const A61: f64 = 9017.0 / 3168.0;
    pub const A62: f64 = -355.0 / 33.0;
    pub const A63: f64 = 46732.0 / 5247.0;
    pub const A64: f64 = 49.0 / 176.0;
    pub const A65: f64 = -5103.0 / 18656.0;
    pub const B1: f64 = 35.0 / 384.0;
    pub const B3: f64 = 500.0 / 1113.0;
    pub const B4: f64 = 125.0 / 192.0;
    pub const B5: f64 = -2187.0 / 6784.0;
    pub const B6: f64 = 11.0 / 84.0;
    pub const E1: f64 = 71.0 / 57600.0;
    pub const E3: f64 = -71.0 / 16695.0;
    pub const E4: f64 = 71.0 / 1920.0;
    pub const E5: f64 = -17253.0 / 339200.0;
    pub const E6: f64 = 22.0 / 525.0;
    pub const E7: f64 = -1.0 / 40.0;
}

#[derive(Default)]
struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
    jac: ArrowJacobian,
    factor: ShiftedFactor,
    /// FSAL derivative at the current point, valid for the explicit pair.
    fsal: bool,
}

impl Workspace {
    fn resize(&mut self, dim: usize) {
        for v in self.k.iter_mut().chain([&mut self.ytmp, &mut self.ynew, &mut self.err]) {
            v.resize(dim, 0.0);
        }
        self.fsal = false;
    }
}

/// Stateful stepper for one trajectory of a [`LatticeSystem`].
pub struct Propagator<'s, S: LatticeSystem + ?Sized> {
    sys: &'s S,
    cfg: IntegratorConfig,
    method: Method,
    t: f64,
    y: Vec<f64>,
    m: usize,
    h: f64,
    clipped_mass: f64,
    stats: SolverStats,
    ws: Workspace,
}

impl<'s, S: LatticeSystem + ?Sized> Propagator<'s, S> {
    /// Start at time `t0` from full-length `sites` (length N) and `extras`.
    pub fn new(sys: &'s S, cfg: &IntegratorConfig, t0: f64, sites: &[f64], extras: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let n = sys.sites();
        if sites.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: sites.len() });
        }
        if extras.len() != sys.extras() {
            return Err(Error::LengthMismatch { expected: sys.extras(), got: extras.len() });
        }
        let m = if cfg.support_floor > 0.0 {
            let last = sites.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
            (last + WINDOW_PAD).min(n)
        } else {
            n
        };
        let mut y = Vec::with_capacity(m + extras.len());
        y.extend_from_slice(&sites[..m]);
        y.extend_from_slice(extras);
        let mut ws = Workspace::default();
        ws.resize(y.len());
        Ok(Self {
            sys,
            method: cfg.resolve_method(sys),
            cfg: cfg.clone(),
            t: t0,
            y,
            m,
            h: cfg.initial_step.unwrap_or(0.0),
            clipped_mass: 0.0,
            stats: SolverStats { window: m, ..SolverStats::default() },
            ws,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn window(&self) -> usize {
        self.m
    }

    /// Mass added to the lattice by clipping negative entries.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    /// Packed active state.
    pub fn packed(&self) -> &[f64] {
        &self.y
    }

    /// Copy the current state out into full-length buffers.
    pub fn read(&self, sites: &mut [f64], extras: &mut [f64]) {
        let m = self.m;
        sites[..m].copy_from_slice(&self.y[..m]);
        sites[m..].iter_mut().for_each(|v| *v = 0.0);
        extras.copy_from_slice(&self.y[m..]);
    }

    /// Integrate up to exactly `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        if t_end < self.t {
            return Err(Error::InvalidSchedule { position: 0 });
        }
        if self.h <= 0.0 {
            self.h = self.initial_step_guess(t_end - self.t);
        }
        let mut steps = 0u64;
        while self.t < t_end {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.cfg.max_step);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let (accepted, h_next) = self.attempt(h)?;
            steps += 1;
            if steps > self.cfg.max_steps {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            if accepted {
                self.t = if last { t_end } else { self.t + h };
                self.stats.accepted += 1;
                self.after_accept();
                // A clamped final step says little about the next interval.
                self.h = if last { self.h.max(h_next) } else { h_next };
            } else {
                self.stats.rejected += 1;
                if h_next < self.cfg.min_step {
                    return Err(Error::StepSizeUnderflow { t: self.t, h: h_next });
                }
                self.h = h_next;
            }
        }
        Ok(())
    }

    fn initial_step_guess(&mut self, span: f64) -> f64 {
        let dim = self.y.len();
        let y = &self.y;
        let f = &mut self.ws.k[0];
        self.sys.rhs(self.m, y, f);
        self.stats.rhs_evals += 1;
        let (atol, rtol) = (self.cfg.abs_tol, self.cfg.rel_tol);
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for i in 0..dim {
            let sc = atol + rtol * y[i].abs();
            d0 = d0.max(y[i].abs() / sc);
            d1 = d1.max(f[i].abs() / sc);
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span.max(self.cfg.min_step)).min(self.cfg.max_step).max(self.cfg.min_step)
    }

    fn error_norm(&self) -> f64 {
        let (atol, rtol) = (self.cfg.abs_tol, self.cfg.rel_tol);
        let mut e: f64 = 0.0;
        for ((err, y0), y1) in self.ws.err.iter().zip(&self.y).zip(&self.ws.ynew) {
            let sc = atol + rtol * y0.abs().max(y1.abs());
            e = e.max(err.abs() / sc);
        }
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }

    /// One attempted step; returns (accepted, proposed next step).
    fn attempt(&mut self, h: f64) -> Result<(bool, f64)> {
        let ok = match self.method {
            Method::LinearlyImplicit => self.rosenbrock_step(h),
            _ => {
                self.dopri_step(h);
                true
            }
        };
        if !ok {
            return Ok((false, 0.25 * h));
        }
        let err = self.error_norm();
        let order = if self.method == Method::LinearlyImplicit { 4.0 } else { 5.0 };
        let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-1.0 / order) };
        if err > 1.0 {
            fac = fac.clamp(0.1, 0.9);
            return Ok((false, h * fac));
        }
        fac = fac.clamp(0.2, 5.0);
        if self.cfg.negativity == NegativityPolicy::RejectStep {
            let extras_start = self.m + usize::from(self.sys.coupled());
            let min = self.ws.ynew[..extras_start].iter().copied().fold(f64::INFINITY, f64::min);
            if min < -self.cfg.abs_tol {
                return Ok((false, 0.5 * h));
            }
        }
        std::mem::swap(&mut self.y, &mut self.ws.ynew);
        if self.method != Method::LinearlyImplicit {
            // FSAL: k[6] holds f(y_new).
            self.ws.k.swap(0, 6);
            self.ws.fsal = true;
        }
        Ok((true, h * fac))
    }

    fn after_accept(&mut self) {
        let m = self.m;
        let limit = m + usize::from(self.sys.coupled());
        if self.cfg.negativity == NegativityPolicy::ClipAndLog {
            let mut clipped = 0.0;
            let mut count = 0;
            for i in 0..limit {
                if self.y[i] < 0.0 {
                    let w = if i < m { self.sys.site_weight(i) } else { 1.0 };
                    clipped += -self.y[i] * w;
                    self.y[i] = 0.0;
                    count += 1;
                }
            }
            if count > 0 {
                self.clipped_mass += clipped;
                self.stats.clipped_entries += count;
                self.ws.fsal = false;
                log::debug!("t = {:.6e}: clipped {count} negative entries (mass {clipped:.3e})", self.t);
            }
        }
        self.maybe_grow_window();
    }

    fn maybe_grow_window(&mut self) {
        let n = self.sys.sites();
        if self.m >= n || self.cfg.support_floor <= 0.0 {
            return;
        }
        let m = self.m;
        let lo = m.saturating_sub(WINDOW_PAD);
        let edge = self.y[lo..m].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if edge <= self.cfg.support_floor {
            return;
        }
        let new_m = (m + WINDOW_PAD.max(m / 4)).min(n);
        let extras: Vec<f64> = self.y[m..].to_vec();
        self.y.truncate(m);
        self.y.resize(new_m, 0.0);
        self.y.extend_from_slice(&extras);
        self.m = new_m;
        self.ws.resize(self.y.len());
        self.stats.window = new_m;
    }

    fn eval(&mut self, which: Stage) {
        let m = self.m;
        let (src, dst) = match which {
            Stage::AtY(k) => (&self.y, &mut self.ws.k[k]),
            Stage::AtTmp(k) => (&self.ws.ytmp, &mut self.ws.k[k]),
        };
        self.sys.rhs(m, src, dst);
        self.stats.rhs_evals += 1;
    }

    fn dopri_step(&mut self, h: f64) {
        use dopri::*;
        if !self.ws.fsal {
            self.eval(Stage::AtY(0));
            self.ws.fsal = true;
        }
        let dim = self.y.len();
        macro_rules! stage {
            ($out:expr, $($coef:expr => $k:expr),+) => {{
                for i in 0..dim {
                    self.ws.ytmp[i] = self.y[i] + h * (0.0 $(+ $coef * self.ws.k[$k][i])+);
                }
                self.eval(Stage::AtTmp($out));
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..dim {
            let k = &self.ws.k;
            self.ws.ynew[i] =
                self.y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        let m = self.m;
        self.sys.rhs(m, &self.ws.ynew, &mut self.ws.k[6]);
        self.stats.rhs_evals += 1;
        for i in 0..dim {
            let k = &self.ws.k;
            self.ws.err[i] =
                h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
    }

    /// Returns false if a stage system was singular.
    fn rosenbrock_step(&mut self, h: f64) -> bool {
        use ros::*;
        let m = self.m;
        let dim = self.y.len();
        // Jacobian at the step start; reused across rejections only through recomputation,
        // which is cheap relative to the six stage solves.
        self.sys.jacobian(m, &self.y, &mut self.ws.jac);
        if self.ws.factor.factor(&self.ws.jac, 1.0 / (GAMMA * h)).is_err() {
            return false;
        }
        self.stats.factorizations += 1;
        let inv_h = 1.0 / h;

        // k1
        self.eval(Stage::AtY(0));
        self.ws.factor.solve(&self.ws.jac, &mut self.ws.k[0]);

        macro_rules! stage {
            ($out:expr, [$($a:expr => $ka:expr),+], [$($c:expr => $kc:expr),+]) => {{
                for i in 0..dim {
                    self.ws.ytmp[i] = self.y[i] $(+ $a * self.ws.k[$ka][i])+;
                }
                self.eval(Stage::AtTmp($out));
                for i in 0..dim {
                    let extra = 0.0 $(+ $c * self.ws.k[$kc][i])+;
                    self.ws.k[$out][i] += inv_h * extra;
                }
                self.ws.factor.solve(&self.ws.jac, &mut self.ws.k[$out]);
            }};
        }
        stage!(1, [A21 => 0], [C21 => 0]);
        stage!(2, [A31 => 0, A32 => 1], [C31 => 0, C32 => 1]);
        stage!(3, [A41 => 0, A42 => 1, A43 => 2], [C41 => 0, C42 => 1, C43 => 2]);
        stage!(4, [A51 => 0, A52 => 1, A53 => 2, A54 => 3], [C51 => 0, C52 => 1, C53 => 2, C54 => 3]);
        // Stage 5 point: y + a5 k + k5
        for i in 0..dim {
            let k = &self.ws.k;
            self.ws.ytmp[i] = self.y[i] + A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i] + k[4][i];
        }
        self.sys.rhs(m, &self.ws.ytmp, &mut self.ws.err);
        self.stats.rhs_evals += 1;
        for i in 0..dim {
            let k = &self.ws.k;
            self.ws.err[i] += inv_h * (C61 * k[0][i] + C62 * k[1][i] + C63 * k[2][i] + C64 * k[3][i] + C65 * k[4][i]);
        }
        self.ws.factor.solve(&self.ws.jac, &mut self.ws.err);
        for i in 0..dim {
            self.ws.ynew[i] = self.ws.ytmp[i] + self.ws.err[i];
        }
        self.ws.ynew.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy)]
enum Stage {
    AtY(usize),
    AtTmp(usize),
}

/// Sampled trajectory of the full cluster system.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<SimState>,
    /// `accounted_mass - initial mass` at each sample.
    pub mass_drift: Vec<f64>,
    pub stats: SolverStats,
    pub method: Option<Method>,
    pub stop: Option<StopReason>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_abs_drift(&self) -> f64 {
        self.mass_drift.iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    pub fn last(&self) -> Option<&SimState> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    /// `|df/dt|` dropped below the threshold at time `t`.
    Converged {
        t: f64,
    },
    HorizonReached {
        t: f64,
    },
}

pub(crate) fn check_schedule(t0: f64, schedule: &[f64]) -> Result<()> {
    let mut prev = t0;
    for (i, &t) in schedule.iter().enumerate() {
        if !t.is_finite() || t < prev || (i > 0 && t <= prev) {
            return Err(Error::InvalidSchedule { position: i });
        }
        prev = t;
    }
    Ok(())
}

fn cluster_propagator<'s>(
    sys: &'s ClusterSystem,
    state: &SimState,
    cfg: &IntegratorConfig,
) -> Result<Propagator<'s, ClusterSystem>> {
    state.validate()?;
    Propagator::new(sys, cfg, state.t, &state.c, &sys.pack_extras(state))
}

fn snapshot(sys: &ClusterSystem, prop: &Propagator<'_, ClusterSystem>, base: &SimState) -> SimState {
    let mut out = SimState { t: prop.time(), ..base.clone() };
    let mut extras = vec![0.0; sys.extras()];
    prop.read(&mut out.c, &mut extras);
    sys.unpack_extras(&extras, &mut out);
    out.clipped_mass = base.clipped_mass + prop.clipped_mass();
    out
}

/// Advance `state` by `dt_target` under error control.
pub fn step(model: &RateModel, state: &SimState, cfg: &IntegratorConfig, dt_target: f64) -> Result<SimState> {
    if !(dt_target > 0.0) {
        return Err(Error::InvalidConfig("dt_target must be positive".into()));
    }
    let sys = ClusterSystem::new(model, state.n(), state.truncation);
    let mut prop = cluster_propagator(&sys, state, cfg)?;
    prop.advance_to(state.t + dt_target)?;
    Ok(snapshot(&sys, &prop, state))
}

/// Integrate through `schedule`, handing each sample to `observer` as it is reached.
/// Returns solver statistics; on failure the observer has seen every sample before it.
pub fn integrate_observed<F>(
    model: &RateModel,
    state0: &SimState,
    cfg: &IntegratorConfig,
    schedule: &[f64],
    mut observer: F,
) -> Result<(SolverStats, Method)>
where
    F: FnMut(&SimState),
{
    check_schedule(state0.t, schedule)?;
    let sys = ClusterSystem::new(model, state0.n(), state0.truncation);
    let mut prop = cluster_propagator(&sys, state0, cfg)?;
    for &t in schedule {
        prop.advance_to(t)?;
        observer(&snapshot(&sys, &prop, state0));
    }
    Ok((prop.stats(), prop.method()))
}

/// Integrate and collect a trajectory sampled exactly at `schedule`.
pub fn integrate(model: &RateModel, state0: &SimState, cfg: &IntegratorConfig, schedule: &[f64]) -> Result<Trajectory> {
    let rho = state0.accounted_mass();
    let mut traj = Trajectory::default();
    let (stats, method) = integrate_observed(model, state0, cfg, schedule, |s| {
        traj.mass_drift.push(s.accounted_mass() - rho);
        traj.samples.push(s.clone());
    })?;
    traj.stats = stats;
    traj.method = Some(method);
    Ok(traj)
}

/// Stopping rule for [`run_to_quasi_stationarity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStationarity {
    /// Stop once `|df/dt|` falls below this.
    pub slope_threshold: f64,
    /// Give up (non-fatally) at this time.
    pub horizon: f64,
    /// Spacing of the checkpoints at which the criterion is evaluated.
    pub check_interval: f64,
}

/// Integrate until the monomer pool is quasi-stationary or the horizon is reached.
/// The trajectory holds the initial state followed by every checkpoint.
pub fn run_to_quasi_stationarity(
    model: &RateModel,
    state0: &SimState,
    cfg: &IntegratorConfig,
    criterion: QuasiStationarity,
) -> Result<Trajectory> {
    if !(criterion.check_interval > 0.0 && criterion.horizon >= state0.t) {
        return Err(Error::InvalidConfig("check_interval must be positive and horizon >= t0".into()));
    }
    let rho = state0.accounted_mass();
    let sys = ClusterSystem::new(model, state0.n(), state0.truncation);
    let mut prop = cluster_propagator(&sys, state0, cfg)?;
    let mut traj = Trajectory { method: Some(prop.method()), ..Trajectory::default() };
    let mut current = state0.clone();
    let mut k = 0u64;
    loop {
        traj.mass_drift.push(current.accounted_mass() - rho);
        traj.samples.push(current.clone());
        let slope = crate::model::rhs(model, &current).df;
        if slope.abs() < criterion.slope_threshold {
            traj.stop = Some(StopReason::Converged { t: current.t });
            break;
        }
        if current.t >= criterion.horizon {
            traj.stop = Some(StopReason::HorizonReached { t: current.t });
            break;
        }
        k += 1;
        let next = (state0.t + k as f64 * criterion.check_interval).min(criterion.horizon);
        prop.advance_to(next)?;
        current = snapshot(&sys, &prop, state0);
    }
    traj.stats = prop.stats();
    Ok(traj)
}
