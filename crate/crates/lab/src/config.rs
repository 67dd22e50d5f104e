//! Experiment configuration: one JSON document whose sections feed the
//! individual subcommands. Every section is optional and has defaults.

use std::path::{Path, PathBuf};

use erw_core::cookie_model::SamplingMode;
use erw_core::params::EstimationConfig;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};
use crate::spec_file::SpecFile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Cookie chain: a path relative to this file, or the chain itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecSource>,
    /// Master seed; `--seed` overrides it.
    pub seed: u64,
    /// Worker threads; `--threads` overrides it. Results do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Family-wise error rate of the p-value and interval tests in one
    /// report. With k such tests each runs at `family_alpha / k`.
    pub family_alpha: f64,
    /// Replace every simulated sample by an independent draw from the law it
    /// is compared with. Used to check that the tests reject at their
    /// nominal rate.
    pub null_calibration: bool,
    /// Known limit parameters. When absent they are estimated from the cookie chain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<KnownParameters>,
    pub estimation: EstimationSection,
    pub walk: WalkSection,
    pub exit: ExitSection,
    pub rayknight: RayKnightSection,
    pub blp_diffusion: BlpDiffusionSection,
    pub flt: FltSection,
    pub time_lln: TimeLlnSection,
    pub goodness: GoodnessSection,
    pub export: ExportSection,
    #[serde(skip)]
    #[schemars(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            spec: None,
            seed: 1,
            threads: None,
            family_alpha: 0.01,
            null_calibration: false,
            parameters: None,
            estimation: EstimationSection::default(),
            walk: WalkSection::default(),
            exit: ExitSection::default(),
            rayknight: RayKnightSection::default(),
            blp_diffusion: BlpDiffusionSection::default(),
            flt: FltSection::default(),
            time_lln: TimeLlnSection::default(),
            goodness: GoodnessSection::default(),
            export: ExportSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.into(), source })?;
        let mut cfg: Config = serde_json::from_str(&text).map_err(|source| LabError::Parse { path: path.into(), source })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    /// The cookie chain named by the config, loaded if it is a path.
    pub fn spec_file(&self) -> LabResult<Option<SpecFile>> {
        match &self.spec {
            None => Ok(None),
            Some(SpecSource::Inline(s)) => Ok(Some(s.clone())),
            Some(SpecSource::Path(p)) => Ok(Some(SpecFile::load(&self.base_dir.join(p))?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SpecSource {
    Path(String),
    Inline(SpecFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct KnownParameters {
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub nu: f64,
    /// `r+` per state, needed by the goodness check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_plus: Option<Vec<f64>>,
    /// Limiting first-cookie law ahead of the walk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_plus: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    CoinByCoin,
    Accelerated,
}

impl From<Sampling> for SamplingMode {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::CoinByCoin => SamplingMode::CoinByCoin,
            Sampling::Accelerated => SamplingMode::Accelerated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    /// Starting populations `n` at which `E[U_1 - n]` and `Var(U_1)/n` are
    /// measured before extrapolating in `1/n`.
    pub levels: Vec<u64>,
    /// Replicates per sign, first state and level.
    pub reps: u64,
    pub batches: usize,
    pub sampling: Sampling,
    /// Largest standardized residual of the `1/n` fit.
    pub convergence_sigmas: f64,
    /// Largest gap between the `U+` and `U-` variance estimates.
    pub mismatch_sigmas: f64,
    /// Width, in standard errors, of the checks reported by `estimate-params`.
    pub tolerance_sigmas: f64,
    /// Values the estimates are checked against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedParameters>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        let d = EstimationConfig::default();
        EstimationSection {
            levels: d.levels,
            reps: d.reps,
            batches: d.batches,
            sampling: Sampling::Accelerated,
            convergence_sigmas: d.convergence_sigmas,
            mismatch_sigmas: d.mismatch_sigmas,
            tolerance_sigmas: 4.0,
            expected: None,
        }
    }
}

impl EstimationSection {
    pub fn to_core(&self) -> EstimationConfig {
        EstimationConfig {
            levels: self.levels.clone(),
            reps: self.reps,
            batches: self.batches,
            sampling: self.sampling.into(),
            convergence_sigmas: self.convergence_sigmas,
            mismatch_sigmas: self.mismatch_sigmas,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectedParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_plus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_minus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_minus: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WalkStop {
    Steps { n: u64 },
    Exit { lower: Option<i64>, upper: Option<i64> },
    Mesoscopic { k: usize, epsilon: f64, n: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct WalkSection {
    pub stop: WalkStop,
    pub replicates: u64,
    pub step_cap: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_above: Option<i64>,
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection {
            stop: WalkStop::Steps { n: 10_000 },
            replicates: 100,
            step_cap: erw_core::erw::DEFAULT_STEP_CAP,
            collapse_above: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExitSampler {
    /// Excursion-by-excursion sampling with no time grid.
    Exact,
    /// Time grid of step `dt`.
    Grid { dt: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InitializedCase {
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// Running minimum at the start (the position is 0).
    pub lower: f64,
    /// Running maximum at the start.
    pub upper: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WalkExitCase {
    pub lower: i64,
    pub upper: i64,
    pub replicates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ExitSection {
    /// `(theta+, theta-)` pairs started from the origin.
    pub thetas: Vec<[f64; 2]>,
    pub a: f64,
    pub b: Vec<f64>,
    pub replicates: u64,
    pub sampler: ExitSampler,
    /// Starts with nonzero extrema.
    pub initialized: Vec<InitializedCase>,
    /// Exit of the walk itself, compared with the limit law at the
    /// configured or estimated parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkExitCase>,
    /// Report inconclusive when an interval is wider than this on either side.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_half_width: Option<f64>,
}

impl Default for ExitSection {
    fn default() -> Self {
        let grid = [-0.5, 0.0, 0.5];
        ExitSection {
            thetas: grid.iter().flat_map(|&p| grid.iter().map(move |&m| [p, m])).collect(),
            a: -1.0,
            b: vec![1.0, 2.0],
            replicates: 1_000_000,
            sampler: ExitSampler::Exact,
            initialized: Vec::new(),
            walk: None,
            max_half_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RayKnightSection {
    /// The walk runs until it first hits `-m`.
    pub m: u64,
    pub replicates: u64,
    /// Profile samples; defaults to `replicates`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_replicates: Option<u64>,
    /// Points `s`, in units of `m` above `-m`, where the profile is compared.
    pub points: Vec<f64>,
    pub dx: f64,
    /// Fold excursions above the highest compared site into single steps.
    pub collapse: bool,
    pub step_cap: u64,
}

impl Default for RayKnightSection {
    fn default() -> Self {
        RayKnightSection {
            m: 200,
            replicates: 50_000,
            reference_replicates: None,
            points: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            dx: 1e-3,
            collapse: true,
            step_cap: erw_core::erw::DEFAULT_STEP_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BlpDiffusionSection {
    /// `U+`, `V+`, `U-` or `V-`.
    pub kind: String,
    /// Scale `m`: generation `floor(t m)` is divided by `m`.
    pub generations: u64,
    /// Starting value divided by `m`.
    pub init_fraction: f64,
    pub times: Vec<f64>,
    pub replicates: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_replicates: Option<u64>,
    pub dt: f64,
    pub sampling: Sampling,
}

impl Default for BlpDiffusionSection {
    fn default() -> Self {
        BlpDiffusionSection {
            kind: "V+".into(),
            generations: 10_000,
            init_fraction: 0.0,
            times: vec![1.0],
            replicates: 5_000,
            reference_replicates: None,
            dt: 1e-4,
            sampling: Sampling::Accelerated,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FltReference {
    /// `W(1)` of the perturbed Brownian motion with the walk's parameters.
    Bmpe,
    /// Standard normal, for walks with both parameters zero.
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FltSection {
    pub n: u64,
    pub replicates: u64,
    pub reference_paths: u64,
    pub dt: f64,
    /// Inconclusive when the larger parameter is not below this.
    pub max_theta: f64,
    pub reference: FltReference,
}

impl Default for FltSection {
    fn default() -> Self {
        FltSection { n: 40_000, replicates: 2_000, reference_paths: 2_000, dt: 1e-4, max_theta: 0.8, reference: FltReference::Bmpe }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TimeLlnSection {
    pub k: usize,
    pub epsilon: f64,
    pub n: u64,
    pub replicates: u64,
    /// Allowed relative error of the mean against `nu / 2`.
    pub tolerance: f64,
    /// Also compare with the same mean for the perturbed Brownian motion,
    /// simulated on `bmpe_paths` grid paths of step `bmpe_dt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bmpe_paths: Option<u64>,
    pub bmpe_dt: f64,
}

impl Default for TimeLlnSection {
    fn default() -> Self {
        TimeLlnSection { k: 20, epsilon: 0.1, n: 10_000, replicates: 1_000, tolerance: 0.05, bmpe_paths: None, bmpe_dt: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GoodnessSection {
    pub n: u64,
    /// The walk runs until it leaves `[-K sqrt(n), K sqrt(n)]`.
    pub big_k: f64,
    pub replicates: u64,
    /// Frequency below which the result is reported inconclusive.
    pub target_frequency: f64,
    /// Sites right of the walk with at least this many left steps enter the
    /// comparison of first cookies with `pi+`.
    pub min_left_steps: u64,
    pub tv_tolerance: f64,
}

impl Default for GoodnessSection {
    fn default() -> Self {
        GoodnessSection {
            n: 40_000,
            big_k: 1.0,
            replicates: 200,
            target_frequency: 0.95,
            min_left_steps: 20,
            tv_tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExportSection {
    /// `(step, position)` of one walk.
    Walk { steps: u64 },
    /// `(site, right, left, total)` local times of one walk stopped at the
    /// first exit from `(lower, upper)`.
    LocalTimes { lower: i64, upper: i64 },
    /// `(generation, site, value)` of one branching-like process.
    Blp { kind: String, generations: u64, init: u64 },
    /// `(t, value)` of one squared Bessel path with constant drift.
    Besq { y0: f64, drift: f64, nu: f64, horizon: f64, dt: f64 },
    /// `(t, W, I, S)` of one perturbed Brownian path.
    Bmpe { alpha: f64, beta: f64, horizon: f64, dt: f64 },
    /// `(x, value)` of one local-time profile.
    Rayknight { theta_plus: f64, theta_minus: f64, lower: f64, pos: f64, upper: f64, dx: f64, horizon: f64 },
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection::Walk { steps: 1_000 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: Config = serde_json::from_str("{}").unwrap();
        assert_eq!(c.exit.thetas.len(), 9);
        assert_eq!(c.family_alpha, 0.01);
        assert_eq!(c.rayknight.m, 200);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"exits": {}}"#).is_err());
        assert!(serde_json::from_str::<Config>(r#"{"flt": {"steps": 3}}"#).is_err());
    }

    #[test]
    fn inline_and_path_specs() {
        let c: Config = serde_json::from_str(r#"{"spec": "fair.json"}"#).unwrap();
        assert_eq!(c.spec, Some(SpecSource::Path("fair.json".into())));
        let c: Config = serde_json::from_str(r#"{"spec": {"m_cookie": [0.75]}}"#).unwrap();
        assert!(matches!(c.spec, Some(SpecSource::Inline(_))));
        let c: Config = serde_json::from_str(r#"{"export": {"besq": {"y0": 1, "drift": 0, "nu": 4, "horizon": 1, "dt": 0.001}}}"#).unwrap();
        assert!(matches!(c.export, ExportSection::Besq { .. }));
    }
}
