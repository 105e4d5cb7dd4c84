//! Functionals of a state: tails, moments, the `q_k` family, the tail-equation
//! inhomogeneity and the energies of the pure-diffusion system.

use crate::comparison::diffusion_fluxes;
use crate::error::{Error, Result};
use crate::model::{RateModel, SimState, Truncation};
use crate::sum::NeumaierSum;

/// Tails `C_k = Σ_{n≥k} c_n` for `k = 1..N` (0-based storage).
///
/// The Neumann convention `C_0 = C_1` is available through [`tail`].
pub fn tails(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    let mut acc = NeumaierSum::new();
    for (k, &v) in c.iter().enumerate().rev() {
        acc.add(v);
        out[k] = acc.value();
    }
    out
}

/// `C_k` for 1-based `k`, with `C_0 = C_1` and `C_k = 0` beyond the truncation.
pub fn tail(tails: &[f64], k: usize) -> f64 {
    match k {
        0 => tails.first().copied().unwrap_or(0.0),
        k if k > tails.len() => 0.0,
        k => tails[k - 1],
    }
}

/// Inverse of [`tails`]: `c_n = C_n - C_{n+1}`.
pub fn clusters_from_tails(tails: &[f64]) -> Vec<f64> {
    (0..tails.len()).map(|i| tails[i] - tails.get(i + 1).copied().unwrap_or(0.0)).collect()
}

/// `Σ n^p c_n` over the truncated range.
pub fn moment(c: &[f64], p: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for (i, &v) in c.iter().enumerate() {
        let n = (i + 1) as f64;
        let w = if p == 0.0 {
            1.0
        } else if p == 1.0 {
            n
        } else {
            n.powf(p)
        };
        acc.add(w * v);
    }
    acc.value()
}

/// `q_k = Σ_{n>k} (n - k) c_n` for `1 ≤ k < N`.
pub fn q_functional(c: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= c.len() {
        return Err(Error::IndexOutOfRange { index: k, min: 1, max: c.len().saturating_sub(1) });
    }
    let mut acc = NeumaierSum::new();
    for (i, &v) in c.iter().enumerate().skip(k) {
        acc.add((i + 1 - k) as f64 * v);
    }
    Ok(acc.value())
}

/// Tail-equation inhomogeneity `G_k = (κf - 1)(k - 1) c_{k-1}`, `k = 1..N` (so `G_1 = 0`).
pub fn inhomogeneity(model: &RateModel, state: &SimState) -> Vec<f64> {
    let drive = model.kappa() * state.f - 1.0;
    let mut g = vec![0.0; state.n()];
    for k in 2..=state.n() {
        g[k - 1] = drive * (k - 1) as f64 * state.c[k - 2];
    }
    g
}

/// `Σ_k G_k`, compensated.
pub fn inhomogeneity_sum(model: &RateModel, state: &SimState) -> f64 {
    inhomogeneity(model, state).into_iter().sum::<NeumaierSum>().value()
}

/// `Σ n^λ c_n² / 2`.
pub fn lyapunov_energy(model: &RateModel, c: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for (i, &v) in c.iter().enumerate() {
        acc.add(0.5 * model.rate(i + 1) * v * v);
    }
    acc.value()
}

/// `Σ_{n≥0} |J̃_n|²` with the pure-diffusion fluxes.
pub fn flux_energy(model: &RateModel, c: &[f64], truncation: Truncation) -> f64 {
    diffusion_fluxes(model, c, truncation).into_iter().map(|j| j * j).sum::<NeumaierSum>().value()
}

/// Mass that escapes to infinitely large clusters, `(ρ - 1/κ)_+`.
pub fn excess_mass(model: &RateModel, rho: f64) -> f64 {
    (rho - model.critical_density()).max(0.0)
}

/// Slack in the Hölder bound `(Σ n c_n)² ≤ Σ n^λ c_n · Σ n^{2-λ} c_n`;
/// nonnegative whenever the bound holds.
pub fn holder_slack(model: &RateModel, c: &[f64]) -> f64 {
    let lambda = model.lambda();
    let m1 = moment(c, 1.0);
    moment(c, lambda) * moment(c, 2.0 - lambda) - m1 * m1
}

/// Named time series with strictly increasing sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSeries {
    pub name: String,
    pub samples: Vec<(f64, f64)>,
}

impl DiagnosticSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), samples: Vec::new() }
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.last() {
            if !(t > last) {
                return Err(Error::InvalidSchedule { position: self.samples.len() });
            }
        }
        self.samples.push((t, value));
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    /// Largest increase between consecutive samples (`<= 0` for a nonincreasing series).
    pub fn max_increase(&self) -> f64 {
        self.samples.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest finite-difference slope between consecutive samples.
    pub fn min_slope(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).fold(f64::INFINITY, f64::min)
    }
}

/// `∫ v dt` over sampled values: composite Simpson on uniformly spaced samples (the last
/// interval by the trapezoid rule when their number is odd), trapezoid otherwise.
pub fn time_integral(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 2 {
        return Ok(0.0);
    }
    let h = times[1] - times[0];
    let uniform = times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    let mut acc = NeumaierSum::new();
    let intervals = times.len() - 1;
    if uniform && intervals >= 2 {
        let pairs = intervals / 2;
        for p in 0..pairs {
            let i = 2 * p;
            acc.add(h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]));
        }
        if intervals % 2 == 1 {
            acc.add(0.5 * h * (values[intervals - 1] + values[intervals]));
        }
    } else {
        for (t, v) in times.windows(2).zip(values.windows(2)) {
            acc.add(0.5 * (t[1] - t[0]) * (v[0] + v[1]));
        }
    }
    Ok(acc.value())
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidState("a linear fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept: my - slope * mx, r_squared })
}
