//! Declarative pass/fail checks evaluated on a finished run.

use bdlab_core::diagnostics::time_integral;
use bdlab_core::{
    f_closed_form, flux_energy, inhomogeneity_sum, linear_fit, lyapunov_energy, q_functional, DiagnosticSeries,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, NormName};
use crate::runner::RunData;

fn one() -> f64 {
    1.0
}

fn l1() -> NormName {
    NormName::L1
}

fn sup() -> NormName {
    NormName::Sup
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    /// `max |accounted mass - ρ| / ρ`.
    MassDrift { threshold: f64 },
    /// `max |f - f_closed_form|` over the samples (λ = 1).
    FClosedForm { threshold: f64 },
    /// `|f(T) - min(ρ, 1/κ)|` at the last sample.
    FLimit { threshold: f64 },
    /// Largest move of `f` away from its limit between consecutive samples.
    FMonotone { threshold: f64 },
    /// Largest ratio of consecutive gaps `|f - limit|` on samples in `[from, to]`.
    GapDecay { threshold: f64, from: f64, to: f64 },
    /// Largest ratio of consecutive `max_{n ≤ n_max} c_n` from `from` on; values at or
    /// below `floor` count as decayed. Passes when strictly below `threshold`.
    SmallClustersDecrease {
        #[serde(default = "one")]
        threshold: f64,
        #[serde(default)]
        from: f64,
        #[serde(default)]
        floor: f64,
    },
    /// `max_{n ≤ n_max} c_n` at the last sample.
    SmallClustersFinal { threshold: f64 },
    /// `max_{k, t} (C_k - C̃_k)`.
    ComparisonDefect { threshold: f64 },
    /// Largest ratio of consecutive `Σ c̃_n` (strictly below `threshold`).
    SupersolutionDecay {
        #[serde(default = "one")]
        threshold: f64,
    },
    /// Largest increase of `Σ n^λ c̃_n² / 2` between samples.
    LyapunovMonotone { threshold: f64 },
    /// Largest increase of `Σ |J̃_n|²` between samples.
    FluxEnergyMonotone { threshold: f64 },
    /// `|L(T) + ∫_0^T F - L(0)|` on the diffusion samples.
    EnergyBalance { threshold: f64 },
    /// Smallest finite-difference slope of `q_k`, `k_min ≤ k ≤ k_max`; passes at `≥ -threshold`.
    QMonotone { threshold: f64, k_min: usize, k_max: usize },
    /// `max |Σ_k φ - 1|`.
    PhiMass { threshold: f64 },
    /// `min φ`; passes at `≥ -threshold`.
    PhiMin { threshold: f64 },
    /// `max_decade |max (1+t) sup φ / K - 1|`, `K` the overall maximum.
    PhiDecayConstant { threshold: f64 },
    /// Slope of the least-squares line through `ln |Σ G_k|` on `[from, to]`; passes below `threshold`.
    GSumSlope {
        #[serde(default)]
        threshold: f64,
        from: f64,
        to: f64,
    },
    /// `R²` of that fit; passes at `≥ threshold`.
    GSumR2 { threshold: f64, from: f64, to: f64 },
    /// `max_k |C_k(t) - Duhamel reconstruction|`.
    DuhamelError { threshold: f64 },
    /// Largest ratio of consecutive profile errors (strictly below `threshold`).
    ProfileErrorDecrease {
        #[serde(default = "sup")]
        norm: NormName,
        #[serde(default = "one")]
        s: f64,
        #[serde(default = "one")]
        threshold: f64,
    },
    /// Profile error at the last rescaling time.
    ProfileErrorFinal {
        #[serde(default = "sup")]
        norm: NormName,
        #[serde(default = "one")]
        s: f64,
        threshold: f64,
    },
    /// `max_s err(t_to, s) / err(t_from, s)` (strictly below `threshold`).
    TimeSliceDecrease {
        #[serde(default = "l1")]
        norm: NormName,
        t_from: f64,
        t_to: f64,
        #[serde(default = "one")]
        threshold: f64,
    },
    /// `|pairing - target pairing|` at the last rescaling time.
    PairingLimit { function: String, threshold: f64 },
    /// `max(|f - f*|, max_n |c_n - c_n*|)` against the `k_on` equilibrium.
    KonResidual { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Relation::Le => measured <= threshold,
            Relation::Lt => measured < threshold,
            Relation::Ge => measured >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: String, measured: f64, relation: Relation, threshold: f64) -> Self {
        Self { pass: relation.holds(measured, threshold), name, measured, relation, threshold }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn max_ratio(values: &[f64], floor: f64) -> f64 {
    values.windows(2).map(|w| if w[0] <= floor { 0.0 } else { w[1] / w[0] }).fold(f64::NEG_INFINITY, f64::max)
}

fn nan_if_empty(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

impl CheckSpec {
    pub fn name(&self) -> String {
        match self {
            CheckSpec::MassDrift { .. } => "mass_drift".into(),
            CheckSpec::FClosedForm { .. } => "f_closed_form".into(),
            CheckSpec::FLimit { .. } => "f_limit".into(),
            CheckSpec::FMonotone { .. } => "f_monotone".into(),
            CheckSpec::GapDecay { .. } => "gap_decay".into(),
            CheckSpec::SmallClustersDecrease { .. } => "small_clusters_decrease".into(),
            CheckSpec::SmallClustersFinal { .. } => "small_clusters_final".into(),
            CheckSpec::ComparisonDefect { .. } => "comparison_defect".into(),
            CheckSpec::SupersolutionDecay { .. } => "supersolution_decay".into(),
            CheckSpec::LyapunovMonotone { .. } => "lyapunov_monotone".into(),
            CheckSpec::FluxEnergyMonotone { .. } => "flux_energy_monotone".into(),
            CheckSpec::EnergyBalance { .. } => "energy_balance".into(),
            CheckSpec::QMonotone { .. } => "q_monotone".into(),
            CheckSpec::PhiMass { .. } => "phi_mass".into(),
            CheckSpec::PhiMin { .. } => "phi_min".into(),
            CheckSpec::PhiDecayConstant { .. } => "phi_decay_constant".into(),
            CheckSpec::GSumSlope { .. } => "g_sum_slope".into(),
            CheckSpec::GSumR2 { .. } => "g_sum_r2".into(),
            CheckSpec::DuhamelError { .. } => "duhamel_error".into(),
            CheckSpec::ProfileErrorDecrease { norm, s, .. } => {
                format!("profile_error_decrease[{},s={}]", norm.label(), crate::output::tag(*s))
            }
            CheckSpec::ProfileErrorFinal { norm, s, .. } => {
                format!("profile_error_final[{},s={}]", norm.label(), crate::output::tag(*s))
            }
            CheckSpec::TimeSliceDecrease { norm, .. } => format!("time_slice_decrease[{}]", norm.label()),
            CheckSpec::PairingLimit { function, .. } => format!("pairing_limit[{function}]"),
            CheckSpec::KonResidual { .. } => "kon_residual".into(),
        }
    }

    /// Reject checks whose inputs the configuration does not produce.
    pub fn validate(&self, cfg: &ExperimentConfig) -> Result<(), String> {
        let a = &cfg.analyses;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("`{}` needs {what}", self.name())) };
        match self {
            CheckSpec::FClosedForm { .. } => {
                need(cfg.model.lambda == 1.0 && cfg.model.k_on == 0.0, "lambda = 1 and k_on = 0 (closed form)")
            }
            CheckSpec::FLimit { .. } | CheckSpec::FMonotone { .. } | CheckSpec::GapDecay { .. } => {
                need(cfg.model.k_on == 0.0, "k_on = 0")
            }
            CheckSpec::ComparisonDefect { .. }
            | CheckSpec::SupersolutionDecay { .. }
            | CheckSpec::LyapunovMonotone { .. }
            | CheckSpec::FluxEnergyMonotone { .. }
            | CheckSpec::EnergyBalance { .. } => need(a.comparison, "analyses.comparison = true"),
            CheckSpec::QMonotone { k_min, k_max, .. } => {
                need(*k_min >= 1 && k_min <= k_max && *k_max < cfg.truncation.n, "1 <= k_min <= k_max < N")
            }
            CheckSpec::PhiMass { .. } | CheckSpec::PhiMin { .. } | CheckSpec::PhiDecayConstant { .. } => {
                need(a.fundamental.is_some(), "analyses.fundamental")
            }
            CheckSpec::DuhamelError { .. } => need(a.duhamel.is_some(), "analyses.duhamel"),
            CheckSpec::ProfileErrorDecrease { norm, s, .. } | CheckSpec::ProfileErrorFinal { norm, s, .. } => need(
                a.selfsim.as_ref().is_some_and(|ss| ss.norms.contains(norm) && ss.s.iter().any(|v| close(*v, *s))),
                "analyses.selfsim with this norm and s",
            ),
            CheckSpec::TimeSliceDecrease { norm, t_from, t_to, .. } => need(
                a.selfsim.as_ref().is_some_and(|ss| {
                    ss.norms.contains(norm)
                        && ss.times.iter().any(|t| close(*t, *t_from))
                        && ss.times.iter().any(|t| close(*t, *t_to))
                }),
                "analyses.selfsim with this norm and both times",
            ),
            CheckSpec::PairingLimit { function, .. } => need(
                a.selfsim.as_ref().is_some_and(|ss| ss.pairings && ss.s.iter().any(|v| close(*v, 1.0)))
                    && bdlab_core::test_battery().iter().any(|u| u.name == function),
                "selfsim pairings at s = 1 and a battery function name",
            ),
            CheckSpec::KonResidual { .. } => need(a.kon_equilibrium, "analyses.kon_equilibrium = true"),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, data: &RunData) -> CheckResult {
        let model = &data.model;
        let limit = data.rho.min(model.critical_density());
        let samples = &data.samples;
        let name = self.name();
        match self {
            CheckSpec::MassDrift { threshold } => {
                let worst = data.mass_drift.iter().fold(0.0f64, |a, d| a.max(d.abs()));
                CheckResult::new(name, worst / data.rho, Relation::Le, *threshold)
            }
            CheckSpec::FClosedForm { threshold } => {
                let worst = samples
                    .iter()
                    .map(|s| match f_closed_form(model, data.rho, samples[0].f, s.t) {
                        Ok(exact) => (s.f - exact).abs(),
                        Err(_) => f64::NAN,
                    })
                    .fold(0.0, f64::max);
                CheckResult::new(name, worst, Relation::Le, *threshold)
            }
            CheckSpec::FLimit { threshold } => {
                let f = samples.last().map_or(f64::NAN, |s| s.f);
                CheckResult::new(name, (f - limit).abs(), Relation::Le, *threshold)
            }
            CheckSpec::FMonotone { threshold } => {
                let dir = (limit - samples[0].f).signum();
                let worst = samples.windows(2).map(|w| -dir * (w[1].f - w[0].f)).fold(0.0, f64::max);
                CheckResult::new(name, worst, Relation::Le, *threshold)
            }
            CheckSpec::GapDecay { threshold, from, to } => {
                let gaps: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.t >= from - 1e-9 && s.t <= to + 1e-9)
                    .map(|s| (s.f - limit).abs())
                    .collect();
                CheckResult::new(name, nan_if_empty(max_ratio(&gaps, 0.0)), Relation::Le, *threshold)
            }
            CheckSpec::SmallClustersDecrease { threshold, from, floor } => {
                let v: Vec<f64> =
                    samples.iter().filter(|s| s.t >= from - 1e-9).map(|s| data.small_clusters(s)).collect();
                CheckResult::new(name, nan_if_empty(max_ratio(&v, *floor)), Relation::Lt, *threshold)
            }
            CheckSpec::SmallClustersFinal { threshold } => {
                let v = samples.last().map_or(f64::NAN, |s| data.small_clusters(s));
                CheckResult::new(name, v, Relation::Le, *threshold)
            }
            CheckSpec::ComparisonDefect { threshold } => {
                let worst = data.comparison_defects().into_iter().fold(f64::NEG_INFINITY, f64::max);
                CheckResult::new(name, nan_if_empty(worst), Relation::Le, *threshold)
            }
            CheckSpec::SupersolutionDecay { threshold } => {
                let counts: Vec<f64> =
                    data.diffusion.iter().filter(|s| s.t > 0.0).map(|s| s.c.iter().sum::<f64>()).collect();
                CheckResult::new(name, nan_if_empty(max_ratio(&counts, 0.0)), Relation::Lt, *threshold)
            }
            CheckSpec::LyapunovMonotone { threshold } | CheckSpec::FluxEnergyMonotone { threshold } => {
                let lyap = matches!(self, CheckSpec::LyapunovMonotone { .. });
                let mut series = DiagnosticSeries::new(name.clone());
                for s in &data.diffusion {
                    let v = if lyap { lyapunov_energy(model, &s.c) } else { flux_energy(model, &s.c, s.truncation) };
                    let _ = series.push(s.t, v);
                }
                CheckResult::new(name, nan_if_empty(series.max_increase()), Relation::Le, *threshold)
            }
            CheckSpec::EnergyBalance { threshold } => {
                let times: Vec<f64> = data.diffusion.iter().map(|s| s.t).collect();
                let flux: Vec<f64> = data.diffusion.iter().map(|s| flux_energy(model, &s.c, s.truncation)).collect();
                let measured = match (data.diffusion.first(), data.diffusion.last(), time_integral(&times, &flux)) {
                    (Some(a), Some(b), Ok(dissipated)) => {
                        (lyapunov_energy(model, &b.c) + dissipated - lyapunov_energy(model, &a.c)).abs()
                    }
                    _ => f64::NAN,
                };
                CheckResult::new(name, measured, Relation::Le, *threshold)
            }
            CheckSpec::QMonotone { threshold, k_min, k_max } => {
                let mut worst = f64::INFINITY;
                for k in *k_min..=*k_max {
                    let mut series = DiagnosticSeries::new("q");
                    for s in samples {
                        let _ = series.push(s.t, q_functional(&s.c, k).unwrap_or(f64::NAN));
                    }
                    worst = worst.min(series.min_slope());
                }
                CheckResult::new(name, nan_if_empty(worst), Relation::Ge, -threshold)
            }
            CheckSpec::PhiMass { threshold } => {
                let worst = data.phi.iter().flatten().map(|c| (c.mass() - 1.0).abs()).fold(f64::NEG_INFINITY, f64::max);
                CheckResult::new(name, nan_if_empty(worst), Relation::Le, *threshold)
            }
            CheckSpec::PhiMin { threshold } => {
                let worst = data.phi.iter().flatten().map(|c| c.min()).fold(f64::INFINITY, f64::min);
                CheckResult::new(name, nan_if_empty(worst), Relation::Ge, -threshold)
            }
            CheckSpec::PhiDecayConstant { threshold } => {
                CheckResult::new(name, phi_decade_spread(data), Relation::Le, *threshold)
            }
            CheckSpec::GSumSlope { threshold, from, to } => {
                let fit = g_sum_fit(data, *from, *to);
                CheckResult::new(name, fit.map_or(f64::NAN, |f| f.slope), Relation::Lt, *threshold)
            }
            CheckSpec::GSumR2 { threshold, from, to } => {
                let fit = g_sum_fit(data, *from, *to);
                CheckResult::new(name, fit.map_or(f64::NAN, |f| f.r_squared), Relation::Ge, *threshold)
            }
            CheckSpec::DuhamelError { threshold } => {
                let v = data.duhamel.as_ref().map_or(f64::NAN, |d| d.max_error);
                CheckResult::new(name, v, Relation::Le, *threshold)
            }
            CheckSpec::ProfileErrorDecrease { norm, s, threshold } => {
                let errs = data.profile_errors(*norm, *s);
                let v: Vec<f64> = errs.iter().map(|e| e.1).collect();
                CheckResult::new(name, nan_if_empty(max_ratio(&v, 0.0)), Relation::Lt, *threshold)
            }
            CheckSpec::ProfileErrorFinal { norm, s, threshold } => {
                let v = data.profile_errors(*norm, *s).last().map_or(f64::NAN, |e| e.1);
                CheckResult::new(name, v, Relation::Le, *threshold)
            }
            CheckSpec::TimeSliceDecrease { norm, t_from, t_to, threshold } => {
                let mut worst = f64::NEG_INFINITY;
                for s in data.slice_values() {
                    let errs = data.profile_errors(*norm, s);
                    let at = |t: f64| errs.iter().find(|e| close(e.0, t)).map_or(f64::NAN, |e| e.1);
                    worst = worst.max(at(*t_to) / at(*t_from));
                }
                CheckResult::new(name, nan_if_empty(worst), Relation::Lt, *threshold)
            }
            CheckSpec::PairingLimit { function, threshold } => {
                let v = data
                    .pairings
                    .iter()
                    .rfind(|p| &p.function == function)
                    .map_or(f64::NAN, |p| (p.value - p.target).abs());
                CheckResult::new(name, v, Relation::Le, *threshold)
            }
            CheckSpec::KonResidual { threshold } => {
                let v = data.kon.as_ref().map_or(f64::NAN, |k| k.residual);
                CheckResult::new(name, v, Relation::Le, *threshold)
            }
        }
    }
}

fn g_sum_fit(data: &RunData, from: f64, to: f64) -> Option<bdlab_core::LinearFit> {
    let (ts, logs): (Vec<f64>, Vec<f64>) = data
        .samples
        .iter()
        .filter(|s| s.t >= from - 1e-9 && s.t <= to + 1e-9)
        .map(|s| (s.t, inhomogeneity_sum(&data.model, s).abs().ln()))
        .unzip();
    if logs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    linear_fit(&ts, &logs).ok()
}

/// Decades are `[10^j, 10^{j+1})`.
fn phi_decade_spread(data: &RunData) -> f64 {
    let pts: Vec<(f64, f64)> =
        data.phi.iter().flatten().filter(|c| c.t >= 1.0).map(|c| (c.t, (1.0 + c.t) * c.sup())).collect();
    let k = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !k.is_finite() {
        return f64::NAN;
    }
    let mut decades = std::collections::BTreeMap::<i32, f64>::new();
    for (t, g) in pts {
        let d = decades.entry(t.log10().floor() as i32).or_insert(f64::NEG_INFINITY);
        *d = d.max(g);
    }
    decades.values().map(|m| (m / k - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_and_relations() {
        assert_eq!(max_ratio(&[4.0, 2.0, 1.5], 0.0), 0.75);
        assert_eq!(max_ratio(&[1.0, 1e-30, 2e-30], 1e-20), 1e-30);
        assert!(Relation::Lt.holds(0.99, 1.0) && !Relation::Lt.holds(1.0, 1.0));
        assert!(Relation::Ge.holds(-1e-12, -1e-10));
        assert!(!Relation::Le.holds(f64::NAN, 1.0));
    }

    #[test]
    fn names_carry_qualifiers() {
        let c = CheckSpec::ProfileErrorDecrease { norm: NormName::Lp(3.0), s: 0.5, threshold: 1.0 };
        assert_eq!(c.name(), "profile_error_decrease[l3,s=0.5]");
    }
}
