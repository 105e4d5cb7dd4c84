//! Acceptance battery: runs the built-in presets and prints one line per criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use bdlab_cli::{find_preset, run_experiment};
use serde_json::Value;

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

/// Run `preset` into `root` and return its acceptance report.
fn report(root: &Path, preset: &str) -> Value {
    let cfg = find_preset(preset).expect("preset exists");
    let dir = root.join(preset);
    let outcome = run_experiment(&cfg, Path::new("."), &dir).expect("preset runs");
    for e in &outcome.errors {
        eprintln!("  {preset}: {e}");
    }
    let text = std::fs::read_to_string(dir.join("acceptance_report.json")).expect("report written");
    serde_json::from_str(&text).expect("report is JSON")
}

/// Every entry of every report as `name = measured rel threshold`, plus overall pass.
fn summarize(reports: &[(&str, &Value)]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (preset, r) in reports {
        for c in r["checks"].as_array().expect("checks array") {
            let ok = c["pass"].as_bool().unwrap_or(false);
            pass &= ok;
            let measured = c["measured"].as_f64().map_or("NaN".into(), |v| format!("{v:.3e}"));
            parts.push(format!(
                "{preset}/{}={measured}{}{:e}{}",
                c["name"].as_str().unwrap_or("?"),
                c["relation"].as_str().unwrap_or("?"),
                c["threshold"].as_f64().unwrap_or(f64::NAN),
                if ok { "" } else { " FAIL" }
            ));
        }
        pass &= r["all_pass"].as_bool().unwrap_or(false);
    }
    (pass, parts.join("; "))
}

fn criterion(id: u32, title: &'static str, root: &Path, presets: &[&str]) -> Line {
    let start = Instant::now();
    let reports: Vec<Value> = presets.iter().map(|p| report(root, p)).collect();
    let pairs: Vec<(&str, &Value)> = presets.iter().copied().zip(&reports).collect();
    let (pass, detail) = summarize(&pairs);
    Line { id, title, pass, detail: format!("{detail} [{:.1} s]", start.elapsed().as_secs_f64()) }
}

/// Steady state of the `k_on` variant for `a_n = n`: `c_n = k_on κ^{n-1} f^n / n`, `f` solving
/// `f + Σ n c_n = ρ` by bisection.
fn kon_oracle(k_on: f64, kappa: f64, rho: f64, n: usize) -> (f64, Vec<f64>) {
    let profile = |f: f64| -> Vec<f64> {
        (1..=n).map(|k| k_on * kappa.powi(k as i32 - 1) * f.powi(k as i32) / k as f64).collect()
    };
    let excess = |f: f64| f + profile(f).iter().enumerate().map(|(i, c)| (i + 1) as f64 * c).sum::<f64>() - rho;
    let (mut lo, mut hi) = (0.0, rho.min(1.0 / kappa));
    assert!(excess(lo) < 0.0 && excess(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f = 0.5 * (lo + hi);
    (f, profile(f))
}

fn kon_criterion(root: &Path) -> Line {
    let mut line = criterion(13, "k_on variant steady state", root, &["kon-variant-equilibrium"]);
    let cfg = find_preset("kon-variant-equilibrium").unwrap();
    let (f_star, c_star) = kon_oracle(cfg.model.k_on, cfg.model.kappa, 0.4, cfg.truncation.n);
    let text = std::fs::read_to_string(root.join("kon-variant-equilibrium/kon_equilibrium.csv")).unwrap();
    let mut residual = 0.0f64;
    for row in text.lines().skip(1) {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let simulated = cols[1];
        let exact = if cols[0] == 0.0 { f_star } else { c_star[cols[0] as usize - 1] };
        residual = residual.max((simulated - exact).abs());
    }
    let ok = residual <= 1e-6;
    line.pass &= ok;
    line.detail = format!("{}; bisection oracle f*={f_star:.10} residual={residual:.3e}<=1e-6", line.detail);
    line
}

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-')).unwrap_or_default();
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let plan: Vec<(u32, &'static str, Vec<&'static str>)> = vec![
        (1, "mass conservation, lambda = 1, N = 1e4, t <= 400", vec!["mass-conservation"]),
        (2, "monomer pool matches the closed form on [0, 50]", vec!["scalar-oracle"]),
        (
            3,
            "f(400) -> min(rho, 1/kappa), super- and subcritical",
            vec!["prop12b-lambda1", "prop12b-lambda1-subcritical"],
        ),
        (4, "lambda = 1/2: f monotone, gap shrinks >= 25% per doubling", vec!["prop12b-lambda-half"]),
        (
            5,
            "small clusters decrease and vanish, lambda in {1/2, 1}",
            vec!["prop12a-supercritical", "prop12a-supercritical-half", "prop12a-subcritical"],
        ),
        (6, "comparison principle E_k <= 0", vec!["comparison-principle"]),
        (7, "diffusion energies decay and balance", vec!["lyapunov-diffusion"]),
        (8, "q_k nondecreasing for f0 >= 1/kappa", vec!["qk-monotone"]),
        (9, "fundamental solution bounds and G-sum decay", vec!["phi-decay"]),
        (10, "Duhamel reconstruction, N = 200, t = 5", vec!["duhamel-small"]),
        (11, "rescaled tails converge to the exponential profile", vec!["thm13-selfsim"]),
        (12, "time-slice profiles s in {1/2, 1, 2}", vec!["thm13-lp"]),
    ];
    let mut lines = Vec::new();
    for (id, title, presets) in &plan {
        if filter.is_empty() || id.to_string() == filter {
            lines.push(criterion(*id, title, root, presets));
        }
    }
    if filter.is_empty() || filter == "13" {
        lines.push(kon_criterion(root));
    }
    let mut failed = 0;
    for l in &lines {
        println!("criterion {:>2} {}: {} -- {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.title, l.detail);
        failed += usize::from(!l.pass);
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
