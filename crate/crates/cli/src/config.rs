//! Experiment configuration (TOML). Unknown keys are rejected; see `docs/config.md`.

use std::path::{Path, PathBuf};

use bdlab_core::{IntegratorConfig, Method, NegativityPolicy, RateModel, SimState, Truncation};
use serde::{Deserialize, Serialize};

use crate::checks::CheckSpec;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub run: RunMode,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: f64,
    pub kappa: f64,
    #[serde(default)]
    pub k_on: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `c_{n0} = amount`, all other clusters empty.
    Monodisperse {
        #[serde(default = "one")]
        n0: usize,
        amount: f64,
        #[serde(default)]
        f0: f64,
    },
    /// CSV with columns `n,c_n` (header optional); missing sizes are zero.
    File {
        path: PathBuf,
        #[serde(default)]
        f0: f64,
    },
    /// `c_n = Q_n z^n` on the equilibrium ladder.
    Ladder {
        z: f64,
        #[serde(default)]
        f0: f64,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    #[default]
    Reflecting,
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub n: usize,
    #[serde(default)]
    pub policy: PolicyName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    Auto,
    ExplicitAdaptive,
    LinearlyImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NegativityName {
    #[default]
    ClipAndLog,
    RejectStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: MethodName,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub negativity: NegativityName,
    pub support_floor: f64,
    pub initial_step: Option<f64>,
    pub max_steps: u64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            method: MethodName::Auto,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step: d.max_step,
            min_step: d.min_step,
            negativity: NegativityName::ClipAndLog,
            support_floor: d.support_floor,
            initial_step: d.initial_step,
            max_steps: d.max_steps,
        }
    }
}

impl IntegratorSection {
    pub fn to_core(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: match self.method {
                MethodName::Auto => Method::Auto,
                MethodName::ExplicitAdaptive => Method::ExplicitAdaptive,
                MethodName::LinearlyImplicit => Method::LinearlyImplicit,
            },
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            min_step: self.min_step,
            negativity: match self.negativity {
                NegativityName::ClipAndLog => NegativityPolicy::ClipAndLog,
                NegativityName::RejectStep => NegativityPolicy::RejectStep,
            },
            support_floor: self.support_floor,
            initial_step: self.initial_step,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    List {
        times: Vec<f64>,
    },
    /// `t0 · factor^i`, `i = 0..count`.
    Geometric {
        t0: f64,
        factor: f64,
        count: usize,
    },
    /// `start + dt · i`, `i = 1..=count`.
    Uniform {
        dt: f64,
        count: usize,
        #[serde(default)]
        start: f64,
    },
}

impl ScheduleConfig {
    pub fn times(&self) -> Vec<f64> {
        match self {
            ScheduleConfig::List { times } => times.clone(),
            ScheduleConfig::Geometric { t0, factor, count } => {
                (0..*count).map(|i| t0 * factor.powi(i as i32)).collect()
            }
            ScheduleConfig::Uniform { dt, count, start } => (1..=*count).map(|i| start + dt * i as f64).collect(),
        }
    }

    /// Spacing if the schedule is uniform from zero.
    pub fn uniform_step(&self) -> Option<f64> {
        match self {
            ScheduleConfig::Uniform { dt, start, .. } if *start == 0.0 => Some(*dt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunMode {
    /// Sample the cluster system at the schedule.
    #[default]
    Trajectory,
    /// Run until `|df/dt| < slope_threshold` or the horizon.
    QuasiStationarity { slope_threshold: f64, horizon: f64, check_interval: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesName {
    MassDrift,
    SmallClusters,
    ClusterCount,
    GSum,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    /// Extra scalar series written under `series/`.
    pub series: Vec<SeriesName>,
    /// `q_k` series for these `k`.
    pub q_indices: Vec<usize>,
    /// `Σ n^p c_n` series for these `p`.
    pub moments: Vec<f64>,
    /// `n_max` for the small-cluster series and checks (default 10).
    pub small_cluster_max: Option<usize>,
    /// Run the pure-diffusion system alongside.
    pub comparison: bool,
    pub selfsim: Option<SelfsimConfig>,
    pub fundamental: Option<FundamentalConfig>,
    pub duhamel: Option<DuhamelConfig>,
    /// Compare the final state with the `k_on` equilibrium.
    pub kon_equilibrium: bool,
}

impl Analyses {
    pub fn small_cluster_max(&self) -> usize {
        self.small_cluster_max.unwrap_or(10)
    }

    pub fn is_empty(&self) -> bool {
        *self == Analyses::default()
    }
}

/// `"sup"`, `"l1"`, `"l2"` or `"lp:<p>"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormName {
    Sup,
    L1,
    L2,
    Lp(f64),
}

impl NormName {
    pub fn to_core(self) -> bdlab_core::Norm {
        match self {
            NormName::Sup => bdlab_core::Norm::Sup,
            NormName::L1 => bdlab_core::Norm::L1,
            NormName::L2 => bdlab_core::Norm::L2,
            NormName::Lp(p) => bdlab_core::Norm::Lp(p),
        }
    }

    pub fn label(self) -> String {
        match self {
            NormName::Sup => "sup".into(),
            NormName::L1 => "l1".into(),
            NormName::L2 => "l2".into(),
            NormName::Lp(p) => format!("l{}", crate::output::tag(p)),
        }
    }
}

impl TryFrom<String> for NormName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "sup" => Ok(NormName::Sup),
            "l1" => Ok(NormName::L1),
            "l2" => Ok(NormName::L2),
            other => other
                .strip_prefix("lp:")
                .and_then(|p| p.parse::<f64>().ok())
                .map(NormName::Lp)
                .ok_or_else(|| format!("unknown norm `{other}`; expected sup, l1, l2 or lp:<p>")),
        }
    }
}

impl From<NormName> for String {
    fn from(n: NormName) -> String {
        match n {
            NormName::Lp(p) => format!("lp:{}", crate::output::tag(p)),
            other => other.label(),
        }
    }
}

fn default_norms() -> Vec<NormName> {
    vec![NormName::Sup, NormName::L1, NormName::L2]
}

fn default_s() -> Vec<f64> {
    vec![1.0]
}

fn default_m() -> f64 {
    5.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfsimConfig {
    /// Rescaling times `t`; tails are read at `t · s`, which must be scheduled.
    pub times: Vec<f64>,
    #[serde(default = "default_s")]
    pub s: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormName>,
    /// Pair the `s = 1` profiles against the default test-function battery.
    #[serde(default = "yes")]
    pub pairings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundamentalConfig {
    pub l: Vec<usize>,
    pub times: Vec<f64>,
    pub n: usize,
    #[serde(default = "tight_rel")]
    pub rel_tol: f64,
    #[serde(default = "tight_abs")]
    pub abs_tol: f64,
}

fn tight_rel() -> f64 {
    1e-10
}

fn tight_abs() -> f64 {
    1e-14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuhamelConfig {
    /// Reconstruction time; the schedule must be uniform from 0 and reach it.
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotSelection {
    #[default]
    All,
    Last,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub snapshots: SnapshotSelection,
    /// If nonempty, only these sample times are written (overrides `snapshots`).
    pub snapshot_times: Vec<f64>,
}

/// Parse TOML, reporting the offending field path on schema errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::config("<document>", e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(
            if path.is_empty() || path == "." { "<document>".to_string() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn field<T>(path: &str, r: bdlab_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::config(path, e.to_string()))
}

fn contains_time(times: &[f64], t: f64) -> bool {
    times.iter().any(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
}

impl ExperimentConfig {
    pub fn rate_model(&self) -> Result<RateModel, CliError> {
        field("model", RateModel::with_k_on(self.model.lambda, self.model.kappa, self.model.k_on))
    }

    pub fn truncation(&self) -> Truncation {
        match self.truncation.policy {
            PolicyName::Reflecting => Truncation::Reflecting,
            PolicyName::Absorbing => Truncation::Absorbing,
        }
    }

    pub fn schedule_times(&self) -> Vec<f64> {
        self.schedule.as_ref().map(ScheduleConfig::times).unwrap_or_default()
    }

    /// Build the initial state; relative file paths resolve against `base_dir`.
    pub fn initial_state(&self, base_dir: &Path) -> Result<SimState, CliError> {
        let n = self.truncation.n;
        let policy = self.truncation();
        let state = match &self.initial {
            InitialConfig::Monodisperse { n0, amount, f0 } => {
                field("initial", SimState::monodisperse(n, *n0, *amount, *f0, policy))?
            }
            InitialConfig::File { path, f0 } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let c = read_cluster_file(&full, n)?;
                field("initial", SimState::new(*f0, c, policy))?
            }
            InitialConfig::Ladder { z, f0 } => {
                let model = self.rate_model()?;
                let ladder = field("initial", bdlab_core::equilibrium_ladder(&model, n))?;
                if !(*z > 0.0) {
                    return Err(CliError::config("initial.z", "ladder seed must be positive"));
                }
                let c = (1..=n).map(|k| (ladder.log(k) + k as f64 * z.ln()).exp()).collect();
                field("initial", SimState::new(*f0, c, policy))?
            }
        };
        let mass = state.accounted_mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(CliError::config("initial", format!("initial mass {mass} must be finite and positive")));
        }
        Ok(state)
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<(), CliError> {
        self.rate_model()?;
        if self.truncation.n < 2 {
            return Err(CliError::config("truncation.n", "must be at least 2"));
        }
        field("integrator", self.integrator.to_core().validate())?;
        let times = self.schedule_times();
        match (&self.run, &self.schedule) {
            (RunMode::Trajectory, None) => {
                return Err(CliError::config("schedule", "trajectory runs need a schedule"));
            }
            (RunMode::QuasiStationarity { slope_threshold, horizon, check_interval }, _) => {
                if !(*slope_threshold > 0.0 && *horizon > 0.0 && *check_interval > 0.0) {
                    return Err(CliError::config(
                        "run",
                        "slope_threshold, horizon and check_interval must be positive",
                    ));
                }
                if self.schedule.is_some() {
                    return Err(CliError::config("schedule", "quasi-stationarity runs choose their own sample times"));
                }
            }
            _ => {}
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CliError::config(format!("schedule[{i}]"), "sample times must be finite and nonnegative"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(CliError::config(format!("schedule[{}]", i + 1), "sample times must be strictly increasing"));
        }
        let a = &self.analyses;
        let n = self.truncation.n;
        if let Some(k) = a.q_indices.iter().find(|k| **k == 0 || **k >= n) {
            return Err(CliError::config("analyses.q_indices", format!("k = {k} outside 1..N-1")));
        }
        if a.moments.iter().any(|p| !(*p >= 0.0)) {
            return Err(CliError::config("analyses.moments", "exponents must be nonnegative"));
        }
        if a.small_cluster_max() == 0 || a.small_cluster_max() > n {
            return Err(CliError::config("analyses.small_cluster_max", "must lie in 1..=N"));
        }
        if let Some(ss) = &a.selfsim {
            if !(ss.m > 0.0) {
                return Err(CliError::config("analyses.selfsim.m", "must be positive"));
            }
            for &t in &ss.times {
                if !(t > 0.0) {
                    return Err(CliError::config("analyses.selfsim.times", "rescaling times must be positive"));
                }
                if (t * ss.m).floor() as usize + 1 > n {
                    return Err(CliError::config(
                        "analyses.selfsim.m",
                        format!("⌊t·M⌋ + 1 = {} exceeds N = {n} at t = {t}", (t * ss.m).floor() as usize + 1),
                    ));
                }
                for &s in &ss.s {
                    if !(s > 0.0) {
                        return Err(CliError::config("analyses.selfsim.s", "must be positive"));
                    }
                    if !contains_time(&times, t * s) {
                        return Err(CliError::config(
                            "analyses.selfsim",
                            format!("tails at t·s = {} are needed but not scheduled", t * s),
                        ));
                    }
                }
            }
            if let Some(NormName::Lp(p)) = ss.norms.iter().find(|nm| matches!(nm, NormName::Lp(p) if !(*p >= 1.0))) {
                return Err(CliError::config("analyses.selfsim.norms", format!("L^p needs p >= 1, got {p}")));
            }
        }
        if let Some(fs) = &a.fundamental {
            if fs.n < 2 {
                return Err(CliError::config("analyses.fundamental.n", "must be at least 2"));
            }
            if let Some(l) = fs.l.iter().find(|l| **l == 0 || **l > fs.n) {
                return Err(CliError::config("analyses.fundamental.l", format!("source {l} outside 1..=n")));
            }
            if fs.times.windows(2).any(|w| !(w[1] > w[0])) || fs.times.first().is_some_and(|t| !(*t >= 0.0)) {
                return Err(CliError::config("analyses.fundamental.times", "must be nonnegative and increasing"));
            }
        }
        if let Some(d) = &a.duhamel {
            let dt = self
                .schedule
                .as_ref()
                .and_then(ScheduleConfig::uniform_step)
                .ok_or_else(|| CliError::config("analyses.duhamel", "needs a uniform schedule starting at 0"))?;
            if !contains_time(&times, d.t) || (d.t / dt).round() * dt - d.t > 1e-9 * d.t.max(1.0) {
                return Err(CliError::config(
                    "analyses.duhamel.t",
                    "must be a scheduled multiple of the schedule step",
                ));
            }
            if n > bdlab_core::selfsim::PHI_MATRIX_MAX {
                return Err(CliError::config(
                    "truncation.n",
                    format!("Duhamel validation needs N <= {}", bdlab_core::selfsim::PHI_MATRIX_MAX),
                ));
            }
        }
        if a.kon_equilibrium && !(self.model.k_on > 0.0) {
            return Err(CliError::config("analyses.kon_equilibrium", "needs model.k_on > 0"));
        }
        for (i, c) in self.checks.iter().enumerate() {
            c.validate(self).map_err(|msg| CliError::config(format!("checks[{i}]"), msg))?;
        }
        Ok(())
    }
}

fn read_cluster_file(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("initial.path", format!("cannot read {}: {e}", path.display())))?;
    let mut c = vec![0.0; n];
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (a, b) = (cols.next(), cols.next());
        let parsed = match (a.map(str::parse::<usize>), b.map(str::parse::<f64>)) {
            (Some(Ok(k)), Some(Ok(v))) => (k, v),
            _ if line_no == 0 => continue,
            _ => {
                return Err(CliError::config(
                    "initial.path",
                    format!("{}:{}: expected `n,c_n`", path.display(), line_no + 1),
                ))
            }
        };
        let (k, v) = parsed;
        if k == 0 || k > n {
            return Err(CliError::config(
                "initial.path",
                format!("{}:{}: size {k} outside 1..={n}", path.display(), line_no + 1),
            ));
        }
        c[k - 1] = v;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[model]
lambda = 1.0
kappa = 2.0
[initial]
kind = "monodisperse"
amount = 1.0
[truncation]
n = 50
[schedule]
kind = "list"
times = [1.0, 2.0]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.integrator, IntegratorSection::default());
        assert_eq!(cfg.schedule_times(), vec![1.0, 2.0]);
        assert!(cfg.analyses.is_empty());
        assert_eq!(cfg.initial_state(Path::new(".")).unwrap().c[0], 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let bad = MINIMAL.replace("n = 50", "n = 50\npolcy = \"absorbing\"");
        match parse_config(&bad) {
            Err(CliError::Config { path, .. }) => assert!(path.contains("truncation"), "{path}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("kappa = 2.0", "kappa = 2.0\nkapa = 1.0");
        assert!(matches!(parse_config(&bad), Err(CliError::Config { .. })));
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let bad = MINIMAL.replace("kappa = 2.0", "kappa = -1.0");
        assert!(matches!(parse_config(&bad), Err(CliError::Config { path, .. }) if path == "model"));
        let bad = MINIMAL.replace("times = [1.0, 2.0]", "times = [2.0, 1.0]");
        assert!(matches!(parse_config(&bad), Err(CliError::Config { path, .. }) if path == "schedule[1]"));
        let bad = format!("{MINIMAL}\n[analyses.selfsim]\ntimes = [2.0]\nm = 30.0\n");
        assert!(matches!(parse_config(&bad), Err(CliError::Config { path, .. }) if path == "analyses.selfsim.m"));
    }

    #[test]
    fn schedules_expand() {
        assert_eq!(
            ScheduleConfig::Geometric { t0: 50.0, factor: 2.0, count: 4 }.times(),
            vec![50.0, 100.0, 200.0, 400.0]
        );
        let u = ScheduleConfig::Uniform { dt: 0.5, count: 3, start: 0.0 };
        assert_eq!(u.times(), vec![0.5, 1.0, 1.5]);
        assert_eq!(u.uniform_step(), Some(0.5));
    }

    #[test]
    fn ladder_and_file_initial_data() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.csv"), "n,c_n\n1,0.5\n3,0.25\n").unwrap();
        let cfg = parse_config(
            &MINIMAL.replace("kind = \"monodisperse\"\namount = 1.0", "kind = \"file\"\npath = \"c.csv\"\nf0 = 0.1"),
        )
        .unwrap();
        let s = cfg.initial_state(dir.path()).unwrap();
        assert_eq!((s.f, s.c[0], s.c[1], s.c[2]), (0.1, 0.5, 0.0, 0.25));
        let cfg = parse_config(&MINIMAL.replace("kind = \"monodisperse\"\namount = 1.0", "kind = \"ladder\"\nz = 0.5"))
            .unwrap();
        let s = cfg.initial_state(Path::new(".")).unwrap();
        assert!((s.c[2] - 0.125 / 3.0).abs() < 1e-15);
    }
}
