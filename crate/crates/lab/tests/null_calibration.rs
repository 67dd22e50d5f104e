//! With `null_calibration` on, simulated samples are replaced by draws from
//! the reference law, so every rejection is a false alarm. The family-wise
//! rejection rate must stay within twice its nominal level.

use erw_lab::config::Config;
use erw_lab::drivers::{Context, Experiment};
use erw_lab::report::Verdict;

const TRIALS: u64 = 200;
const ALPHA: f64 = 0.05;

fn rejection_count(experiment: Experiment, json: &str) -> u64 {
    let mut config: Config = serde_json::from_str(json).unwrap();
    config.null_calibration = true;
    config.family_alpha = ALPHA;
    (0..TRIALS)
        .filter(|&seed| {
            let ctx = Context::new(config.clone(), Some(1_000 + seed), Some(1)).unwrap();
            experiment.run(&ctx).unwrap().report.verdict == Verdict::Fail
        })
        .count() as u64
}

fn assert_calibrated(experiment: Experiment, json: &str) {
    let k = rejection_count(experiment, json);
    let bound = (2.0 * ALPHA * TRIALS as f64) as u64;
    assert!(k <= bound, "{}: {k}/{TRIALS} rejections, bound {bound}", experiment.name());
}

const PARAMS: &str = r#""spec": {"m_cookie": []}, "parameters": {"theta_plus": 0.3, "theta_minus": -0.2, "nu": 2.2}"#;

#[test]
fn exit_frequencies() {
    let json = r#"{"exit": {"thetas": [[0.5, -0.5], [0, 0.3]], "b": [1, 2], "replicates": 2000}}"#;
    assert_calibrated(Experiment::VerifyExit, json);
}

#[test]
fn functional_limit_marginal() {
    let json = format!(r#"{{{PARAMS}, "flt": {{"n": 100, "replicates": 300, "reference_paths": 300, "dt": 0.01}}}}"#);
    assert_calibrated(Experiment::VerifyFlt, &json);
}

#[test]
fn blp_diffusion() {
    let json = format!(
        r#"{{{PARAMS}, "blp_diffusion": {{"kind": "V+", "generations": 50, "times": [0.5, 1], "replicates": 200, "dt": 0.01}}}}"#
    );
    assert_calibrated(Experiment::VerifyBlpDiffusion, &json);
}

#[test]
fn rayknight_profile() {
    let json = format!(r#"{{{PARAMS}, "rayknight": {{"m": 10, "replicates": 200, "points": [0.5, 1, 1.5], "dx": 0.01}}}}"#);
    assert_calibrated(Experiment::VerifyRayknight, &json);
}
