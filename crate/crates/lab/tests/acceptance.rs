//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 if any criterion fails.
//!
//! Statistical criteria are judged from the raw numbers in each report at
//! the level the criterion names (per case), independent of the report's
//! own family-wise verdict.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use erw_core::blp::{coupled_pair, run_blp, walk_edge_process, BlpKind, Window};
use erw_core::cookie_model::{CookieChainSpec, CookieEnvironment};
use erw_core::erw::{simulate, StopReason, StopRule, WalkOptions};
use erw_core::rng::{derive_seed, Rng64};
use erw_core::stats::wilson_ci;
use erw_lab::config::Config;
use erw_lab::drivers::{Context, Experiment};
use erw_lab::report::{Check, ExperimentReport};
use rand::{Rng, SeedableRng};

type Judged = Result<(bool, String), String>;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance")
}

/// Reports by config file, so a config shared by two criteria runs once.
#[derive(Default)]
struct Runs(HashMap<&'static str, ExperimentReport>);

impl Runs {
    fn get(&mut self, experiment: Experiment, file: &'static str) -> Result<&ExperimentReport, String> {
        if !self.0.contains_key(file) {
            let config = Config::load(&config_dir().join(file)).map_err(|e| format!("{file}: {e}"))?;
            let ctx = Context::new(config, None, None).map_err(|e| e.to_string())?;
            let outcome = experiment.run(&ctx).map_err(|e| format!("{} on {file}: {e}", experiment.name()))?;
            self.0.insert(file, outcome.report);
        }
        Ok(&self.0[file])
    }
}

fn wilson_99(c: &Check) -> Result<bool, String> {
    let n = c.samples[0];
    let k = (c.statistic * n as f64).round() as u64;
    let target = c.target.ok_or("proportion check without a target")?;
    Ok(wilson_ci(k, n, 0.99).map_err(|e| e.to_string())?.contains(target))
}

fn ks_p(c: &Check) -> Result<f64, String> {
    c.p_value.ok_or_else(|| format!("{}: no p-value", c.name))
}

fn checks<'a>(r: &'a ExperimentReport, method: &str) -> Vec<&'a Check> {
    r.checks.iter().filter(|c| c.method == method).collect()
}

fn named<'a>(r: &'a ExperimentReport, name: &str) -> Result<&'a Check, String> {
    r.checks.iter().find(|c| c.name == name).ok_or_else(|| format!("no check named {name:?}"))
}

fn exit_grid(runs: &mut Runs) -> Judged {
    let r = runs.get(Experiment::VerifyExit, "exit.json")?;
    let cs = checks(r, "wilson_interval");
    if cs.len() != 18 || cs.iter().any(|c| c.samples[0] < 1_000_000) {
        return Err(format!("expected 18 cases of 10^6 paths, got {}", cs.len()));
    }
    let inside = cs.iter().map(|c| wilson_99(c)).collect::<Result<Vec<_>, _>>()?.into_iter().filter(|&b| b).count();
    Ok((inside == cs.len(), format!("{inside}/{} analytic values inside the 99% Wilson interval", cs.len())))
}

fn initialized_exits(runs: &mut Runs) -> Judged {
    let r = runs.get(Experiment::VerifyExit, "initialized.json")?;
    let cs = checks(r, "wilson_interval");
    if cs.len() != 6 {
        return Err(format!("expected 6 initialized cases, got {}", cs.len()));
    }
    let root = cs
        .iter()
        .find(|c| c.target.is_some_and(|t| (t - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12))
        .ok_or("the 0.7071 case is missing")?;
    let inside = cs.iter().map(|c| wilson_99(c)).collect::<Result<Vec<_>, _>>()?.into_iter().filter(|&b| b).count();
    Ok((
        inside == cs.len(),
        format!("{inside}/6 inside the 99% Wilson interval; 0.7071 case simulated {:.4}", root.statistic),
    ))
}

fn z_checks_pass(r: &ExperimentReport, names: &[&str]) -> Result<Vec<String>, String> {
    let mut failed = Vec::new();
    for n in names {
        let c = named(r, n)?;
        if c.method != "z_score" {
            return Err(format!("{n} is not a z-score check"));
        }
        if c.verdict != erw_lab::report::Verdict::Pass {
            failed.push(format!("{n} = {}", c.statistic));
        }
    }
    Ok(failed)
}

fn parameter_ground_truth(runs: &mut Runs) -> Judged {
    let fair = runs.get(Experiment::EstimateParams, "params-fair.json")?;
    let mut failed = z_checks_pass(
        fair,
        &["r+(0) expected", "r-(0) expected", "nu expected", "theta+ expected", "theta- expected"],
    )?;
    let nu = named(fair, "nu expected")?.statistic;
    for (file, states) in [("params-two-cookies.json", 3), ("params-sticky.json", 2)] {
        let r = runs.get(Experiment::EstimateParams, file)?;
        let mut names: Vec<String> = (0..states).map(|i| format!("r+({i}) + r-({i}) - (nu/2 - 1)")).collect();
        names.push("theta+ + theta- - (1 - 2/nu)".into());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        failed.extend(z_checks_pass(r, &refs)?.into_iter().map(|f| format!("{file}: {f}")));
    }
    let detail = if failed.is_empty() {
        format!("fair estimates within 4 SE (nu = {nu:.4}); identity residuals within 4 SE for two cookies and sticky")
    } else {
        failed.join("; ")
    };
    Ok((failed.is_empty(), detail))
}

fn pi_fixed_points(runs: &mut Runs) -> Judged {
    let r = runs.get(Experiment::EstimateParams, "params-sticky.json")?;
    let failed = z_checks_pass(r, &["theta+(pi+)", "theta-(pi-)"])?;
    let (p, m) = (named(r, "theta+(pi+)")?, named(r, "theta-(pi-)")?);
    Ok((failed.is_empty(), format!("sticky: theta+(pi+) = {:.4}, theta-(pi-) = {:.4}", p.statistic, m.statistic)))
}

fn ks_criterion(runs: &mut Runs, experiment: Experiment, file: &'static str, expected: usize) -> Judged {
    let r = runs.get(experiment, file)?;
    let cs = checks(r, "ks_two_sample");
    if cs.len() != expected {
        return Err(format!("expected {expected} KS tests, got {}", cs.len()));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for c in cs {
        let p = ks_p(c)?;
        ok &= p > 1e-3;
        parts.push(format!("{} p = {p:.3}", c.name));
    }
    Ok((ok, parts.join(", ")))
}

fn rayknight(runs: &mut Runs) -> Judged {
    ks_criterion(runs, Experiment::VerifyRayknight, "rayknight.json", 5)
}

fn blp_diffusion(runs: &mut Runs) -> Judged {
    let (ok, detail) = ks_criterion(runs, Experiment::VerifyBlpDiffusion, "blp-diffusion.json", 1)?;
    let r = runs.get(Experiment::VerifyBlpDiffusion, "blp-diffusion.json")?;
    let drift = r.values.get("drift").and_then(|v| v.as_f64()).ok_or("report has no drift")?;
    let nu = r.parameters.as_ref().ok_or("report has no parameters")?.nu;
    Ok((ok && drift == 1.0 && nu == 2.0, format!("{detail} (D = {drift}, nu = {nu})")))
}

fn flt(runs: &mut Runs) -> Judged {
    let (ok, detail) = ks_criterion(runs, Experiment::VerifyFlt, "flt.json", 1)?;
    let r = runs.get(Experiment::VerifyFlt, "flt.json")?;
    let top = named(r, "max(theta+, theta-) below the stability bound")?.statistic;
    Ok((ok && top < 0.8, format!("{detail}; max theta = {top:.3}")))
}

fn time_lln(runs: &mut Runs) -> Judged {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, file) in [("fair", "time-lln-fair.json"), ("sticky", "time-lln-sticky.json")] {
        let r = runs.get(Experiment::VerifyTimeLln, file)?;
        let c = named(r, "T_k / (k n eps^2) against nu/2, k = 20")?;
        let target = c.target.ok_or("no target")?;
        let rel = c.statistic / target - 1.0;
        ok &= rel.abs() <= 0.05;
        parts.push(format!("{label} {:.4} vs nu/2 = {target:.4} ({:+.1}%)", c.statistic, 100.0 * rel));
    }
    Ok((ok, parts.join(", ")))
}

fn sticky() -> Result<Arc<CookieChainSpec>, String> {
    let file = erw_lab::spec_file::SpecFile::load(&config_dir().join("../specs/sticky.json")).map_err(|e| e.to_string())?;
    let input = file.to_input().map_err(|e| e.to_string())?;
    Ok(Arc::new(CookieChainSpec::new(input).map_err(|e| e.to_string())?))
}

fn u_absorbed(values: &[u64]) -> bool {
    match values.iter().position(|&z| z == 0) {
        Some(i) => values[i..].iter().all(|&z| z == 0),
        None => true,
    }
}

fn structural_invariants(_: &mut Runs) -> Judged {
    let spec = sticky()?;
    let e = |e: erw_core::Error| e.to_string();
    let kinds = [BlpKind::UPlus, BlpKind::VPlus, BlpKind::UMinus, BlpKind::VMinus];
    let mut rng = Rng64::seed_from_u64(2024);

    let (mut order, mut absorption, mut u_runs) = (0u64, 0u64, 0u64);
    for _ in 0..10_000 {
        let kind = kinds[rng.random_range(0..4)];
        let lo = rng.random_range(0..60u64);
        let hi = lo + rng.random_range(0..60u64);
        let left = rng.random_range(-40..0i64);
        let w = Window::new(left, left + rng.random_range(1..80i64)).map_err(e)?;
        let (a, b) = coupled_pair(spec.clone(), rng.random(), kind, lo, hi, w, kind.direction()).map_err(e)?;
        order += a.values.iter().zip(&b.values).any(|(x, y)| x > y) as u64;
        if matches!(kind, BlpKind::UPlus | BlpKind::UMinus) {
            u_runs += 2;
            absorption += !u_absorbed(&a.values) as u64 + !u_absorbed(&b.values) as u64;
        }
    }
    for r in 0..10_000u64 {
        let kind = if r % 2 == 0 { BlpKind::UPlus } else { BlpKind::UMinus };
        let mut env = CookieEnvironment::new(spec.clone(), derive_seed(31, &[r]));
        let t = run_blp(&mut env, kind, r % 40, Window::new(-60, 60).map_err(e)?, kind.direction()).map_err(e)?;
        u_runs += 1;
        absorption += !u_absorbed(&t.values) as u64;
    }

    let (mut exits, mut sigma, mut seed) = (0u64, 0u64, 0u64);
    while exits < 10_000 {
        seed += 1;
        let l = 2 + (derive_seed(seed, &[0]) % 63) as i64;
        let env = CookieEnvironment::new(spec.clone(), seed);
        let walk = simulate(env, StopRule::Exit { lower: Some(-l), upper: Some(l) }, WalkOptions::default()).map_err(e)?;
        if walk.reason != StopReason::HitLower {
            continue;
        }
        exits += 1;
        let mut env = CookieEnvironment::new(spec.clone(), seed);
        let z = walk_edge_process(&mut env, l as u64, l - 1).map_err(e)?;
        let total: u64 = (-l..l).map(|x| walk.right_steps(x)).sum();
        let same = z.values.iter().enumerate().all(|(i, &v)| v == walk.right_steps(-l + i as i64));
        sigma += (walk.steps != l as u64 + 2 * total || !same) as u64;
    }

    Ok((
        order + sigma + absorption == 0,
        format!(
            "order violations {order}/10000 pairs, sigma identity violations {sigma}/{exits} exits, \
             absorption violations {absorption}/{u_runs} U runs"
        ),
    ))
}

const COMMANDS: [&str; 10] = [
    "validate-spec",
    "simulate-walk",
    "estimate-params",
    "verify-exit",
    "verify-rayknight",
    "verify-blp-diffusion",
    "verify-flt",
    "verify-time-lln",
    "verify-goodness",
    "export-path",
];

fn run_cli(command: &str, out: &Path, threads: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_erwlab"))
        .arg(command)
        .arg("--config")
        .arg(config_dir().join("determinism.json"))
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code() == Some(3) {
        return Err(format!("{command}: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let report = out.join(format!("{command}.report.json"));
    std::fs::read(&report).map_err(|e| format!("{}: {e}", report.display()))
}

fn determinism(_: &mut Runs) -> Judged {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differ = Vec::new();
    for c in COMMANDS {
        let first = run_cli(c, &dir.path().join("first"), 1)?;
        let second = run_cli(c, &dir.path().join("second"), 2)?;
        if first != second {
            differ.push(c);
        }
    }
    let detail = if differ.is_empty() {
        format!("{} commands, reports byte-identical across repeated runs (1 and 2 threads)", COMMANDS.len())
    } else {
        format!("reports differ for {}", differ.join(", "))
    };
    Ok((differ.is_empty(), detail))
}

type Criterion = (&'static str, fn(&mut Runs) -> Judged);

const CRITERIA: [Criterion; 10] = [
    ("exit probabilities from the origin", exit_grid),
    ("exit probabilities from given extrema", initialized_exits),
    ("parameter ground truth and identities", parameter_ground_truth),
    ("pi fixed points", pi_fixed_points),
    ("Ray-Knight profile at criticality", rayknight),
    ("V+ diffusion approximation", blp_diffusion),
    ("functional limit marginal", flt),
    ("mesoscopic time LLN", time_lln),
    ("exact structural invariants", structural_invariants),
    ("determinism of CLI reports", determinism),
];

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let mut failed = 0;
    for (i, (title, judge)) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = judge(&mut runs).unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !ok as usize;
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("[{:>2}] {verdict} {title}: {detail} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", CRITERIA.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
