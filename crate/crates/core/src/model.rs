//! The modified Becker-Döring system: clusters on the membrane `c_n` exchange single
//! molecules with a cytosolic monomer pool `f`; there is no spontaneous attachment, so
//! the first coagulation channel is closed (`J_0 = -c_1`).
//!
//! Rates are power laws `a_n = b_n = n^λ`, with κ the ratio of feedback to detachment.

use crate::arrow::ArrowJacobian;
use crate::error::{Error, Result};
use crate::integrator::LatticeSystem;
use crate::sum::{compensated_sum, NeumaierSum};

/// Boundary handling at the truncation size `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// `J_N = 0`: nothing leaves the lattice, mass is conserved exactly.
    #[default]
    Reflecting,
    /// `c_{N+1} = 0` inside `J_N`; mass crossing into `n > N` is accumulated in `leaked_mass`.
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    lambda: f64,
    kappa: f64,
    k_on: f64,
}

impl RateModel {
    /// Main model (`k_on = 0`).
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        Self::with_k_on(lambda, kappa, 0.0)
    }

    /// Variant with spontaneous attachment, `J_0 = k_on f - c_1`.
    pub fn with_k_on(lambda: f64, kappa: f64, k_on: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidModel(format!("lambda = {lambda} must lie in [0, 1]")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidModel(format!("kappa = {kappa} must be positive")));
        }
        if !(k_on >= 0.0 && k_on.is_finite()) {
            return Err(Error::InvalidModel(format!("k_on = {k_on} must be nonnegative")));
        }
        Ok(Self { lambda, kappa, k_on })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn k_on(&self) -> f64 {
        self.k_on
    }

    /// Critical monomer concentration `1/κ`.
    pub fn critical_density(&self) -> f64 {
        1.0 / self.kappa
    }

    /// `n^λ`, with `0^0 = 1`.
    #[inline]
    pub fn rate(&self, n: usize) -> f64 {
        if self.lambda == 0.0 {
            1.0
        } else if self.lambda == 1.0 {
            n as f64
        } else {
            (n as f64).powf(self.lambda)
        }
    }

    /// `[0^λ, 1^λ, ..., n_max^λ]`.
    pub fn rate_table(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| self.rate(n)).collect()
    }
}

/// Full system state: time, monomer pool and clusters `c_1..c_N` (stored 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub f: f64,
    pub c: Vec<f64>,
    pub truncation: Truncation,
    /// Mass lost through the truncation edge (crossing `N` under the absorbing policy).
    pub leaked_mass: f64,
    /// Mass created by clipping round-off negatives to zero.
    pub clipped_mass: f64,
}

impl SimState {
    pub fn new(f: f64, c: Vec<f64>, truncation: Truncation) -> Result<Self> {
        let s = Self { t: 0.0, f, c, truncation, leaked_mass: 0.0, clipped_mass: 0.0 };
        s.validate()?;
        Ok(s)
    }

    /// `c_{n0}(0) = amount`, every other cluster empty.
    pub fn monodisperse(n: usize, n0: usize, amount: f64, f0: f64, truncation: Truncation) -> Result<Self> {
        if n0 == 0 || n0 > n {
            return Err(Error::IndexOutOfRange { index: n0, min: 1, max: n });
        }
        let mut c = vec![0.0; n];
        c[n0 - 1] = amount;
        Self::new(f0, c, truncation)
    }

    /// Truncation size `N`.
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `c_n` for 1-based `n`; zero outside `1..=N`.
    #[inline]
    pub fn cluster(&self, n: usize) -> f64 {
        if n == 0 || n > self.c.len() {
            0.0
        } else {
            self.c[n - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.len() < 2 {
            return Err(Error::InvalidState(format!("truncation N = {} must be at least 2", self.c.len())));
        }
        if !(self.f.is_finite() && self.f >= 0.0) {
            return Err(Error::InvalidState(format!("monomer pool f = {} must be finite and nonnegative", self.f)));
        }
        if let Some((i, v)) = self.c.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidState(format!("c_{} = {v} must be finite and nonnegative", i + 1)));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidState(format!("time t = {} must be nonnegative", self.t)));
        }
        Ok(())
    }

    /// `f + Σ n c_n + leaked - clipped`; constant in time up to integrator error.
    pub fn accounted_mass(&self) -> f64 {
        total_mass(self) + self.leaked_mass - self.clipped_mass
    }
}

/// `f + Σ_{n=1}^N n c_n` (leaked mass excluded).
pub fn total_mass(state: &SimState) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.add(state.f);
    for (i, &c) in state.c.iter().enumerate() {
        acc.add((i + 1) as f64 * c);
    }
    acc.value()
}

/// Flux `J_n` from size `n` to `n + 1` (`J_0` is the membrane-to-cytosol channel).
pub fn flux(model: &RateModel, truncation: Truncation, f: f64, c: &[f64], n: usize) -> Result<f64> {
    let big_n = c.len();
    if n > big_n {
        return Err(Error::IndexOutOfRange { index: n, min: 0, max: big_n });
    }
    let at = |k: usize| if k == 0 || k > big_n { 0.0 } else { c[k - 1] };
    if n == 0 {
        return Ok(model.k_on * f - at(1));
    }
    if n == big_n {
        return Ok(match truncation {
            Truncation::Reflecting => 0.0,
            Truncation::Absorbing => model.kappa * model.rate(n) * f * at(n),
        });
    }
    Ok(model.kappa * model.rate(n) * f * at(n) - model.rate(n + 1) * at(n + 1))
}

/// Time derivative of the full state.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub df: f64,
    pub dc: Vec<f64>,
    /// Rate at which mass leaves through `N` (absorbing policy only).
    pub dleak: f64,
}

/// Right-hand side: `dc_n = J_{n-1} - J_n`, `df = -Σ_{n=0}^N J_n`.
pub fn rhs(model: &RateModel, state: &SimState) -> Derivative {
    let sys = ClusterSystem::new(model, state.n(), state.truncation);
    let n = state.n();
    let mut y = Vec::with_capacity(n + sys.extras());
    y.extend_from_slice(&state.c);
    y.extend(sys.pack_extras(state));
    let mut dy = vec![0.0; y.len()];
    sys.rhs(n, &y, &mut dy);
    Derivative { df: dy[n], dleak: if sys.passive() > 0 { dy[n + 1] } else { 0.0 }, dc: dy.truncate_into(n) }
}

trait TruncateInto {
    fn truncate_into(self, n: usize) -> Vec<f64>;
}

impl TruncateInto for Vec<f64> {
    fn truncate_into(mut self, n: usize) -> Vec<f64> {
        self.truncate(n);
        self
    }
}

/// How the monomer pool enters the fluxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Drive {
    /// `f` is a state component coupled to every cluster.
    Dynamic,
    /// `κ f` frozen to the given value; `f` is not part of the state.
    Frozen(f64),
}

/// [`LatticeSystem`] for the cluster equations (and, with a frozen drive, the
/// pure-diffusion comparison system).
#[derive(Debug, Clone)]
pub struct ClusterSystem {
    kappa: f64,
    k_on: f64,
    drive: Drive,
    truncation: Truncation,
    n: usize,
    rates: Vec<f64>,
    max_f: f64,
}

impl ClusterSystem {
    pub fn new(model: &RateModel, n: usize, truncation: Truncation) -> Self {
        Self {
            kappa: model.kappa,
            k_on: model.k_on,
            drive: Drive::Dynamic,
            truncation,
            n,
            rates: model.rate_table(n + 1),
            max_f: 1.0 / model.kappa,
        }
    }

    pub(crate) fn with_drive(mut self, drive: Drive) -> Self {
        self.drive = drive;
        if let Drive::Frozen(_) = drive {
            self.k_on = 0.0;
        }
        self
    }

    /// Hint for the stiffness estimate: the largest monomer level expected.
    pub fn with_monomer_bound(mut self, f_max: f64) -> Self {
        self.max_f = f_max.max(0.0);
        self
    }

    fn absorbing(&self) -> bool {
        self.truncation == Truncation::Absorbing
    }

    pub(crate) fn pack_extras(&self, state: &SimState) -> Vec<f64> {
        let mut e = Vec::with_capacity(2);
        if self.coupled() {
            e.push(state.f);
        }
        if self.passive() > 0 {
            e.push(state.leaked_mass);
        }
        e
    }

    pub(crate) fn unpack_extras(&self, extras: &[f64], state: &mut SimState) {
        let mut it = extras.iter();
        if self.coupled() {
            state.f = *it.next().unwrap();
        }
        if self.passive() > 0 {
            state.leaked_mass = *it.next().unwrap();
        }
    }

    #[inline]
    fn kf(&self, y: &[f64], m: usize) -> (f64, f64) {
        match self.drive {
            Drive::Dynamic => (self.kappa * y[m], y[m]),
            Drive::Frozen(kf) => (kf, 0.0),
        }
    }

    /// Whether `J_m` (flux out of the last active site) is live.
    #[inline]
    fn edge_flux_live(&self, m: usize) -> bool {
        m == self.n && self.absorbing()
    }
}

impl LatticeSystem for ClusterSystem {
    fn sites(&self) -> usize {
        self.n
    }

    fn coupled(&self) -> bool {
        self.drive == Drive::Dynamic
    }

    fn passive(&self) -> usize {
        usize::from(self.absorbing() || !self.coupled())
    }

    fn rhs(&self, m: usize, y: &[f64], dy: &mut [f64]) {
        let a = &self.rates;
        let (kf, f) = self.kf(y, m);
        let c = &y[..m];
        let mut sum = NeumaierSum::new();
        let mut prev = self.k_on * f - c[0];
        sum.add(prev);
        for i in 0..m {
            let n = i + 1;
            let cur = if n < m {
                kf * a[n] * c[i] - a[n + 1] * c[i + 1]
            } else if self.edge_flux_live(m) {
                kf * a[n] * c[i]
            } else {
                0.0
            };
            dy[i] = prev - cur;
            sum.add(cur);
            prev = cur;
        }
        let mut idx = m;
        if self.coupled() {
            dy[idx] = -sum.value();
            idx += 1;
        }
        if self.passive() > 0 {
            // prev holds J_m; mass (N+1) J_N leaves when the window spans the lattice.
            // Without the monomer reservoir a closed edge still loses a_m c_m, which is
            // booked here so that the accounted mass stays exact.
            dy[idx] = if self.edge_flux_live(m) {
                (self.n + 1) as f64 * prev
            } else if !self.coupled() {
                a[m] * c[m - 1]
            } else {
                0.0
            };
        }
    }

    fn jacobian(&self, m: usize, y: &[f64], jac: &mut ArrowJacobian) {
        let a = &self.rates;
        let (kf, _) = self.kf(y, m);
        let coupled = self.coupled();
        jac.reset(m, coupled, self.passive());
        let c = &y[..m];
        let live = |n: usize| n < m || self.edge_flux_live(m);
        for i in 0..m {
            let n = i + 1;
            let out = if live(n) { kf * a[n] } else { 0.0 };
            jac.diag[i] = -a[n] - out;
            if i > 0 {
                jac.lower[i] = kf * a[n - 1];
            }
            if n < m {
                jac.upper[i] = a[n + 1];
            }
        }
        if coupled {
            let kappa = self.kappa;
            let b = jac.border.as_mut().expect("coupled border");
            let mut corner = NeumaierSum::new();
            corner.add(-self.k_on);
            for i in 0..m {
                let n = i + 1;
                let d_out = if live(n) { kappa * a[n] * c[i] } else { 0.0 };
                let d_in = if n == 1 { self.k_on } else { kappa * a[n - 1] * c[i - 1] };
                b.col[i] = d_in - d_out;
                b.row[i] = a[n] - if live(n) { kf * a[n] } else { 0.0 };
                corner.add(-d_out);
            }
            b.corner = corner.value();
        }
        if self.edge_flux_live(m) {
            let w = (self.n + 1) as f64;
            let mut entries = vec![(m - 1, w * kf * a[m])];
            if coupled {
                entries.push((m, w * self.kappa * a[m] * c[m - 1]));
            }
            jac.passive[0].entries = entries;
        } else if !coupled {
            jac.passive[0].entries = vec![(m - 1, a[m])];
        }
    }

    fn site_weight(&self, i: usize) -> f64 {
        (i + 1) as f64
    }

    fn stiffness(&self) -> f64 {
        let kf = match self.drive {
            Drive::Dynamic => self.kappa * self.max_f,
            Drive::Frozen(kf) => kf,
        };
        2.0 * self.rates[self.n + 1] * (1.0 + kf)
    }
}

/// Equilibrium coefficients `Q_n = Π_{i<n} a_i / Π_{2≤i≤n} b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumLadder {
    /// `q[n-1] = Q_n`.
    pub q: Vec<f64>,
}

impl EquilibriumLadder {
    pub fn get(&self, n: usize) -> f64 {
        self.q[n - 1]
    }

    /// `ln Q_n` computed alongside `q` (used for large exponents).
    pub fn log(&self, n: usize) -> f64 {
        self.q[n - 1].ln()
    }
}

/// Build `Q_1..Q_N` by accumulating `ln a_n - ln b_{n+1}`.
pub fn equilibrium_ladder(model: &RateModel, n: usize) -> Result<EquilibriumLadder> {
    if n == 0 {
        return Err(Error::IndexOutOfRange { index: 0, min: 1, max: usize::MAX });
    }
    Ok(EquilibriumLadder { q: log_ladder(model, n).into_iter().map(f64::exp).collect() })
}

fn log_ladder(model: &RateModel, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = NeumaierSum::new();
    out.push(0.0);
    for k in 1..n {
        // ln a_k - ln b_{k+1} = λ ln(k/(k+1)) = -λ ln(1 + 1/k)
        acc.add(-model.lambda * (1.0 / k as f64).ln_1p());
        out.push(acc.value());
    }
    out
}

/// Exact monomer pool for λ = 1, where `df/dt = (1 - κf)(ρ - f)` closes.
///
/// With `u = 1/κ - f` and `δ = ρ - 1/κ`, `1/u` solves a linear ODE; the `expm1`
/// form covers the double root `κρ = 1` without a separate branch.
pub fn f_closed_form(model: &RateModel, rho: f64, f0: f64, t: f64) -> Result<f64> {
    if model.lambda != 1.0 {
        return Err(Error::UnsupportedModel(format!("closed form requires lambda = 1 (got {})", model.lambda)));
    }
    if !(0.0..=rho).contains(&f0) || t < 0.0 {
        return Err(Error::InvalidState(format!("need 0 <= f0 <= rho and t >= 0 (f0 = {f0}, rho = {rho})")));
    }
    let kappa = model.kappa;
    let crit = 1.0 / kappa;
    if f0 == crit || f0 == rho {
        return Ok(f0);
    }
    let delta = rho - crit;
    let x = kappa * delta * t;
    let growth = x.exp();
    let integral = if x == 0.0 { kappa * t } else { kappa * t * x.exp_m1() / x };
    let w = growth / (crit - f0) + integral;
    Ok(crit - 1.0 / w)
}

/// Equilibrium of the `k_on > 0` variant with total mass `rho` on `n` sites:
/// `c_n = Q_n k_on κ^{n-1} f^n`, `f` the root of the mass constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct KonEquilibrium {
    pub f: f64,
    pub c: Vec<f64>,
}

pub fn kon_equilibrium(model: &RateModel, rho: f64, n: usize) -> Result<KonEquilibrium> {
    if !(model.k_on > 0.0) {
        return Err(Error::UnsupportedModel("k_on equilibrium requires k_on > 0".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidState(format!("mass rho = {rho} must be positive")));
    }
    let logq = log_ladder(model, n);
    let profile = |f: f64| -> Vec<f64> {
        let lf = f.ln();
        let (lk, lkon) = (model.kappa.ln(), model.k_on.ln());
        logq.iter()
            .enumerate()
            .map(|(i, lq)| {
                let k = (i + 1) as f64;
                (lq + lkon + (k - 1.0) * lk + k * lf).exp()
            })
            .collect()
    };
    let mass = |f: f64| -> (f64, f64) {
        if f == 0.0 {
            return (0.0 - rho, 1.0 + model.k_on);
        }
        let c = profile(f);
        let m = compensated_sum(c.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v));
        let dm = compensated_sum(c.iter().enumerate().map(|(i, v)| ((i + 1) as f64).powi(2) * v)) / f;
        (f + m - rho, 1.0 + dm)
    };
    // Safeguarded Newton on [0, rho]; g is increasing with g(0) < 0 <= g(rho).
    let (mut lo, mut hi) = (0.0, rho);
    let mut f = 0.5 * rho;
    for _ in 0..200 {
        let (g, dg) = mass(f);
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = f;
        } else {
            hi = f;
        }
        let mut next = f - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - f).abs() <= 1e-16 * f.max(1e-300) || hi - lo <= 1e-16 * hi {
            f = next;
            break;
        }
        f = next;
    }
    Ok(KonEquilibrium { f, c: profile(f) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(f: f64, c: &[f64]) -> SimState {
        SimState::new(f, c.to_vec(), Truncation::Reflecting).unwrap()
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(RateModel::new(1.5, 1.0).is_err());
        assert!(RateModel::new(-0.1, 1.0).is_err());
        assert!(RateModel::new(0.5, 0.0).is_err());
        assert!(RateModel::with_k_on(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        let m = RateModel::new(0.0, 1.0).unwrap();
        assert_eq!(m.rate(0), 1.0);
        let m = RateModel::new(0.5, 1.0).unwrap();
        assert_eq!(m.rate(0), 0.0);
        assert_eq!(m.rate(4), 2.0);
    }

    #[test]
    fn flux_hand_values() {
        let m = RateModel::new(1.0, 1.0).unwrap();
        let mut c = vec![0.0; 6];
        c[0] = 0.5;
        c[1] = 0.25;
        assert_relative_eq!(flux(&m, Truncation::Reflecting, 2.0, &c, 1).unwrap(), 0.5);
        assert_eq!(flux(&m, Truncation::Reflecting, 3.0, &[0.0; 6], 0).unwrap(), 0.0);
        assert!(matches!(flux(&m, Truncation::Reflecting, 1.0, &c, 7), Err(Error::IndexOutOfRange { index: 7, .. })));
    }

    #[test]
    fn flux_vanishes_on_equilibrium_ladder() {
        // κf = 1 and c_n = Q_n z^n with Q_n = 1/n, z = 1
        let m = RateModel::new(1.0, 2.0).unwrap();
        let c: Vec<f64> = (1..=20).map(|n| 1.0 / n as f64).collect();
        for n in 1..20 {
            assert!(flux(&m, Truncation::Reflecting, 0.5, &c, n).unwrap().abs() < 1e-15);
        }
        let d = rhs(&m, &state(0.5, &c));
        for n in 2..20 {
            assert!(d.dc[n - 1].abs() < 1e-15, "dc_{n} = {}", d.dc[n - 1]);
        }
        // J_0 = -c_1 still drains the first cluster
        assert_relative_eq!(d.dc[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn flux_k_on_variant() {
        let m = RateModel::with_k_on(1.0, 1.0, 0.3).unwrap();
        let c = vec![0.2, 0.0, 0.0];
        assert_relative_eq!(flux(&m, Truncation::Reflecting, 2.0, &c, 0).unwrap(), 0.6 - 0.2);
    }

    #[test]
    fn absorbing_edge_flux() {
        let m = RateModel::new(1.0, 2.0).unwrap();
        let c = vec![0.0, 0.0, 0.5];
        assert_eq!(flux(&m, Truncation::Reflecting, 1.0, &c, 3).unwrap(), 0.0);
        assert_relative_eq!(flux(&m, Truncation::Absorbing, 1.0, &c, 3).unwrap(), 2.0 * 3.0 * 0.5);
    }

    #[test]
    fn stationary_point_has_zero_rhs() {
        let m = RateModel::new(0.7, 3.0).unwrap();
        let d = rhs(&m, &state(1.3, &[0.0; 10]));
        assert_eq!(d.df, 0.0);
        assert!(d.dc.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_entry_hand_evaluation() {
        let m = RateModel::new(0.0, 1.0).unwrap();
        let d = rhs(&m, &state(0.0, &[0.0, 1.0, 0.0, 0.0]));
        assert_relative_eq!(d.dc[0], 1.0);
        assert_relative_eq!(d.dc[1], -1.0);
        assert_relative_eq!(d.df, 1.0);
        assert_eq!(d.dc[2], 0.0);
    }

    #[test]
    fn lambda_one_monomer_equation() {
        let m = RateModel::new(1.0, 1.7).unwrap();
        // c_N = 0, so the reflecting boundary does not enter
        let s = state(0.3, &[0.1, 0.05, 0.2, 0.0, 0.01, 0.0]);
        let rho = total_mass(&s);
        let d = rhs(&m, &s);
        assert_relative_eq!(d.df, (1.0 - 1.7 * 0.3) * (rho - 0.3), epsilon = 1e-14);
    }

    #[test]
    fn total_mass_hand_values() {
        assert_eq!(total_mass(&state(1.0, &[0.0; 4])), 1.0);
        assert_relative_eq!(total_mass(&state(0.2, &[0.1, 0.0, 0.1, 0.0])), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn ladder_values() {
        let q = equilibrium_ladder(&RateModel::new(1.0, 1.0).unwrap(), 3).unwrap();
        assert_relative_eq!(q.get(1), 1.0);
        assert_relative_eq!(q.get(3), 1.0 / 3.0, max_relative = 1e-15);
        let q = equilibrium_ladder(&RateModel::new(0.0, 1.0).unwrap(), 50).unwrap();
        assert!(q.q.iter().all(|v| *v == 1.0));
        let q = equilibrium_ladder(&RateModel::new(0.5, 1.0).unwrap(), 4).unwrap();
        assert_relative_eq!(q.get(4), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn ladder_matches_closed_form_to_1e12() {
        for &lambda in &[0.25, 0.5, 0.9, 1.0] {
            let model = RateModel::new(lambda, 1.0).unwrap();
            let q = equilibrium_ladder(&model, 10_000).unwrap();
            for n in 1..=10_000usize {
                let exact = (n as f64).powf(-lambda);
                let rel = (q.get(n) - exact).abs() / exact;
                assert!(rel < 1e-12, "lambda {lambda} n {n}: rel {rel}");
            }
        }
    }

    #[test]
    fn closed_form_fixed_points() {
        let m = RateModel::new(1.0, 2.0).unwrap();
        for t in [0.0, 1.0, 100.0] {
            assert_eq!(f_closed_form(&m, 1.0, 0.5, t).unwrap(), 0.5);
            assert_eq!(f_closed_form(&m, 0.8, 0.8, t).unwrap(), 0.8);
        }
        assert!(matches!(
            f_closed_form(&RateModel::new(0.5, 2.0).unwrap(), 1.0, 0.1, 1.0),
            Err(Error::UnsupportedModel(_))
        ));
    }

    /// Classic RK4 on the scalar ODE; independent of the closed-form algebra.
    fn rk4_oracle(kappa: f64, rho: f64, f0: f64, t: f64, h: f64) -> f64 {
        let g = |f: f64| (1.0 - kappa * f) * (rho - f);
        let steps = (t / h).round() as usize;
        let mut f = f0;
        for _ in 0..steps {
            let k1 = g(f);
            let k2 = g(f + 0.5 * h * k1);
            let k3 = g(f + 0.5 * h * k2);
            let k4 = g(f + h * k3);
            f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        f
    }

    #[test]
    fn closed_form_matches_rk4_reference() {
        let m = RateModel::new(1.0, 2.0).unwrap();
        let oracle = rk4_oracle(2.0, 1.0, 0.9, 10.0, 1e-5);
        let exact = f_closed_form(&m, 1.0, 0.9, 10.0).unwrap();
        assert!((exact - oracle).abs() < 1e-12, "{exact} vs {oracle}");
        // subcritical and double-root branches
        let sub = f_closed_form(&m, 0.4, 0.1, 3.0).unwrap();
        assert!((sub - rk4_oracle(2.0, 0.4, 0.1, 3.0, 1e-5)).abs() < 1e-12);
        let dbl = f_closed_form(&m, 0.5, 0.1, 7.0).unwrap();
        assert!((dbl - rk4_oracle(2.0, 0.5, 0.1, 7.0, 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn kon_equilibrium_is_stationary() {
        let m = RateModel::with_k_on(1.0, 2.0, 0.1).unwrap();
        let eq = kon_equilibrium(&m, 0.4, 200).unwrap();
        let s = state(eq.f, &eq.c);
        assert_relative_eq!(total_mass(&s), 0.4, max_relative = 1e-13);
        let d = rhs(&m, &s);
        assert!(d.df.abs() < 1e-14);
        assert!(d.dc.iter().all(|v| v.abs() < 1e-14));
    }
}
