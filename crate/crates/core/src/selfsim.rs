//! Rescaled tails `t C_{⌊tx⌋+1}(ts)` and their distance to the exponential profile
//! `(ρ - 1/κ)_+ s^{-1} e^{-x/s}`, the discrete fundamental solution of the homogeneous
//! tail equation, the Duhamel representation built from it, and weak pairings.

use rayon::prelude::*;

use crate::arrow::ArrowJacobian;
use crate::error::{Error, Result};
use crate::integrator::{check_schedule, IntegratorConfig, LatticeSystem, Propagator};
use crate::model::RateModel;
use crate::sum::NeumaierSum;

/// Homogeneous tail equation for unit rates,
/// `∂_t C_k = (k-1)(C_{k-1} - C_k) - k(C_k - C_{k+1})`,
/// Neumann at both ends so that `Σ_k C_k` is conserved.
#[derive(Debug, Clone, Copy)]
pub struct TailSystem {
    n: usize,
}

impl TailSystem {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LatticeSystem for TailSystem {
    fn sites(&self) -> usize {
        self.n
    }

    fn coupled(&self) -> bool {
        false
    }

    fn passive(&self) -> usize {
        0
    }

    fn rhs(&self, m: usize, y: &[f64], dy: &mut [f64]) {
        // D_k = k (C_k - C_{k+1}), with D_0 = D_m = 0
        let mut prev = 0.0;
        for i in 0..m {
            let k = (i + 1) as f64;
            let cur = if i + 1 < m { k * (y[i] - y[i + 1]) } else { 0.0 };
            dy[i] = prev - cur;
            prev = cur;
        }
    }

    fn jacobian(&self, m: usize, _y: &[f64], jac: &mut ArrowJacobian) {
        jac.reset(m, false, 0);
        for i in 0..m {
            let k = (i + 1) as f64;
            let out = if i + 1 < m { k } else { 0.0 };
            jac.diag[i] = -(k - 1.0) - out;
            if i > 0 {
                jac.lower[i] = k - 1.0;
            }
            if i + 1 < m {
                jac.upper[i] = k;
            }
        }
    }

    fn site_weight(&self, _i: usize) -> f64 {
        1.0
    }

    fn stiffness(&self) -> f64 {
        4.0 * self.n as f64
    }
}

/// `φ(t, ·, l)` on `k = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiColumn {
    pub l: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

impl PhiColumn {
    pub fn mass(&self) -> f64 {
        self.values.iter().copied().sum::<NeumaierSum>().value()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evolve the delta at `l` through `t_list` (nondecreasing, from 0).
pub fn fundamental_solution(l: usize, t_list: &[f64], n: usize, cfg: &IntegratorConfig) -> Result<Vec<PhiColumn>> {
    if l == 0 || l > n {
        return Err(Error::IndexOutOfRange { index: l, min: 1, max: n });
    }
    check_schedule(0.0, t_list)?;
    let sys = TailSystem::new(n);
    let mut delta = vec![0.0; n];
    delta[l - 1] = 1.0;
    let mut prop = Propagator::new(&sys, cfg, 0.0, &delta, &[])?;
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        prop.advance_to(t)?;
        let mut values = vec![0.0; n];
        prop.read(&mut values, &mut []);
        out.push(PhiColumn { l, t, values });
    }
    Ok(out)
}

/// Columns for several sources in parallel; result `[i]` belongs to `ls[i]`.
pub fn fundamental_columns(
    ls: &[usize],
    t_list: &[f64],
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<PhiColumn>>> {
    ls.par_iter().map(|&l| fundamental_solution(l, t_list, n, cfg)).collect()
}

/// Largest lattice for which [`PhiMatrix`] is built.
pub const PHI_MATRIX_MAX: usize = 500;

/// Dense `Φ(Δ)` with `Φ_{kl} = φ(Δ, k, l)`, column-major.
#[derive(Debug, Clone)]
pub struct PhiMatrix {
    n: usize,
    dt: f64,
    cols: Vec<f64>,
}

impl PhiMatrix {
    pub fn new(n: usize, dt: f64, cfg: &IntegratorConfig) -> Result<Self> {
        if n > PHI_MATRIX_MAX {
            return Err(Error::InvalidConfig(format!("dense propagator limited to N <= {PHI_MATRIX_MAX}, got {n}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig("propagator step must be positive".into()));
        }
        let ls: Vec<usize> = (1..=n).collect();
        let cols = fundamental_columns(&ls, &[dt], n, cfg)?;
        Ok(Self { n, dt, cols: cols.into_iter().flat_map(|mut c| c.pop().unwrap().values).collect() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.cols[(l - 1) * self.n..l * self.n]
    }

    /// `Φ v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut acc = vec![NeumaierSum::new(); n];
        for (l, &vl) in v.iter().enumerate() {
            if vl == 0.0 {
                continue;
            }
            for (a, &p) in acc.iter_mut().zip(&self.cols[l * n..(l + 1) * n]) {
                a.add(p * vl);
            }
        }
        acc.into_iter().map(|a| a.value()).collect()
    }
}

/// `C(t) = Φ(t) C(0) + ∫_0^t Φ(t - s) G(s) ds`, the integral by the composite trapezoid
/// rule on the history `g_history[j] = G(j Δ)`, `Δ = phi.dt()`.
pub fn duhamel_reconstruct(phi: &PhiMatrix, tails0: &[f64], g_history: &[Vec<f64>], t: f64) -> Result<Vec<f64>> {
    let n = phi.n();
    if tails0.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: tails0.len() });
    }
    let dt = phi.dt();
    let steps = (t / dt).round();
    if !(t >= 0.0) || (steps * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InsufficientHistory(format!("t = {t} is not a multiple of the step {dt}")));
    }
    let steps = steps as usize;
    if steps == 0 {
        return Ok(tails0.to_vec());
    }
    if g_history.len() < steps + 1 {
        return Err(Error::InsufficientHistory(format!(
            "{} samples of G cover less than [0, {t}] at step {dt}",
            g_history.len()
        )));
    }
    if let Some(g) = g_history.iter().find(|g| g.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: g.len() });
    }
    let axpy = |r: &mut [f64], w: f64, g: &[f64]| r.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
    let mut r = tails0.to_vec();
    axpy(&mut r, 0.5 * dt, &g_history[0]);
    for (j, g) in g_history.iter().enumerate().take(steps + 1).skip(1) {
        r = phi.apply(&r);
        axpy(&mut r, if j == steps { 0.5 * dt } else { dt }, g);
    }
    Ok(r)
}

/// Samples of `t C_{⌊tx⌋+1}(ts)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledProfile {
    pub t: f64,
    pub s: f64,
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Tail index `⌊t x⌋ + 1`.
#[inline]
pub fn tail_index(t: f64, x: f64) -> usize {
    (t * x).floor() as usize + 1
}

/// Rescale tails sampled at time `t s`.
pub fn rescale(tails: &[f64], t: f64, s: f64, x_grid: &[f64]) -> Result<RescaledProfile> {
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::InvalidConfig(format!("rescaling needs t > 0 and s > 0, got t = {t}, s = {s}")));
    }
    if let Some(i) = x_grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(format!("x grid not increasing at position {}", i + 1)));
    }
    if x_grid.first().is_some_and(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidConfig("x grid must be nonnegative".into()));
    }
    let n = tails.len();
    let offending: Vec<f64> = x_grid.iter().copied().filter(|&x| tail_index(t, x) > n).collect();
    if !offending.is_empty() {
        return Err(Error::GridBeyondTruncation { n, offending });
    }
    let values = x_grid.iter().map(|&x| t * tails[tail_index(t, x) - 1]).collect();
    Ok(RescaledProfile { t, s, x_grid: x_grid.to_vec(), values })
}

/// Uniform grid on `[0, m]` with spacing at most `min(0.01, 1/(2t))`.
pub fn default_grid(t: f64, m: f64) -> Vec<f64> {
    let h = 0.01f64.min(0.5 / t);
    let count = (m / h).ceil().max(1.0) as usize;
    (0..=count).map(|i| m * i as f64 / count as f64).collect()
}

/// `(ρ - 1/κ)_+ s^{-1} e^{-x/s}`.
pub fn target_profile(model: &RateModel, rho: f64, s: f64, x: f64) -> f64 {
    (rho - model.critical_density()).max(0.0) / s * (-x / s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    Sup,
    L1,
    L2,
    Lp(f64),
}

impl Norm {
    pub fn exponent(self) -> Option<f64> {
        match self {
            Norm::Sup => None,
            Norm::L1 => Some(1.0),
            Norm::L2 => Some(2.0),
            Norm::Lp(p) => Some(p),
        }
    }
}

/// Pointwise `profile - target` on the grid.
pub fn profile_residual(profile: &RescaledProfile, model: &RateModel, rho: f64) -> Vec<f64> {
    profile.x_grid.iter().zip(&profile.values).map(|(&x, &v)| v - target_profile(model, rho, profile.s, x)).collect()
}

/// Distance to the target on `[0, m]`; `L^p` norms by the composite trapezoid rule on the grid.
pub fn profile_error(profile: &RescaledProfile, model: &RateModel, rho: f64, norm: Norm, m: f64) -> Result<f64> {
    let last = profile.x_grid.last().copied().unwrap_or(f64::NEG_INFINITY);
    if m > last * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!("domain [0, {m}] exceeds the profile grid (ends at {last})")));
    }
    let res = profile_residual(profile, model, rho);
    let pts: Vec<(f64, f64)> =
        profile.x_grid.iter().zip(&res).filter(|(x, _)| **x <= m * (1.0 + 1e-12)).map(|(x, r)| (*x, r.abs())).collect();
    Ok(match norm.exponent() {
        None => pts.iter().fold(0.0, |a, p| a.max(p.1)),
        Some(p) => {
            if !(p >= 1.0) {
                return Err(Error::InvalidConfig(format!("L^p norm needs p >= 1, got {p}")));
            }
            let mut acc = NeumaierSum::new();
            for w in pts.windows(2) {
                acc.add(0.5 * (w[1].0 - w[0].0) * (w[0].1.powf(p) + w[1].1.powf(p)));
            }
            acc.value().powf(1.0 / p)
        }
    })
}

/// Smooth test function with optional compact support `[0, support]`.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub u: fn(f64) -> f64,
    pub support: Option<f64>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).field("support", &self.support).finish()
    }
}

fn bump(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        return 0.0;
    }
    let y = (2.0 * x - a - b) / (b - a);
    (1.0 - 1.0 / (1.0 - y * y)).exp()
}

/// Default battery: `e^{-x}`, two bumps, and low-order polynomials cut off at 5.
pub fn test_battery() -> Vec<TestFunction> {
    vec![
        TestFunction { name: "exp", u: |x| (-x).exp(), support: None },
        TestFunction { name: "bump_0_2", u: |x| bump(x, 0.0, 2.0), support: Some(2.0) },
        TestFunction { name: "bump_1_4", u: |x| bump(x, 1.0, 4.0), support: Some(4.0) },
        TestFunction {
            name: "quadratic_cutoff",
            u: |x| if x < 5.0 { (1.0 - x / 5.0).powi(2) } else { 0.0 },
            support: Some(5.0),
        },
        TestFunction {
            name: "linear_cutoff",
            u: |x| if x < 5.0 { x * (1.0 - x / 5.0) } else { 0.0 },
            support: Some(5.0),
        },
    ]
}

const GAUSS_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GAUSS_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_cell(u: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * GAUSS_NODES.iter().zip(GAUSS_WEIGHTS).map(|(z, w)| w * u(mid + half * z)).sum::<f64>()
}

/// `∫ t C_{⌊tx⌋+1} u(x) dx = t Σ_k C_k ∫_{(k-1)/t}^{k/t} u`, restricted to the support of `u`.
pub fn weak_pairing(tails: &[f64], test_fn: &TestFunction, t: f64) -> f64 {
    let kmax = match test_fn.support {
        Some(m) => ((m * t).ceil() as usize).min(tails.len()),
        None => tails.len(),
    };
    let mut acc = NeumaierSum::new();
    for (i, &c) in tails.iter().enumerate().take(kmax) {
        if c != 0.0 {
            acc.add(c * gauss_cell(test_fn.u, i as f64 / t, (i + 1) as f64 / t));
        }
    }
    t * acc.value()
}

/// `∫_0^∞ u(x) A s^{-1} e^{-x/s} dx` by composite Gauss on `[0, support or 60 s]`.
pub fn target_pairing(model: &RateModel, rho: f64, s: f64, test_fn: &TestFunction) -> f64 {
    let upper = test_fn.support.unwrap_or(60.0 * s);
    let cells = 4000;
    let h = upper / cells as f64;
    let g = |x: f64| (test_fn.u)(x) * target_profile(model, rho, s, x);
    (0..cells).map(|i| gauss_cell(g, i as f64 * h, (i + 1) as f64 * h)).sum::<NeumaierSum>().value()
}

/// Grid quadrature of a rescaled profile against `u` (trapezoid).
pub fn profile_pairing(profile: &RescaledProfile, test_fn: &TestFunction) -> f64 {
    let mut acc = NeumaierSum::new();
    for (xs, vs) in profile.x_grid.windows(2).zip(profile.values.windows(2)) {
        acc.add(0.5 * (xs[1] - xs[0]) * (vs[0] * (test_fn.u)(xs[0]) + vs[1] * (test_fn.u)(xs[1])));
    }
    acc.value()
}
