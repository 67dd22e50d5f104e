//! Report documents and the rules that turn statistics into verdicts.

use std::collections::BTreeMap;

use erw_core::params::Estimate;
use erw_core::stats::{wilson_ci, ChiSquareResult, KsResult};
use serde::{Deserialize, Serialize};

use crate::error::LabResult;

/// Ordered so that the verdict of a report is the maximum over its checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub method: String,
    /// Sample sizes entering the statistic.
    pub samples: Vec<u64>,
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// The rule that produced the verdict.
    pub tolerance: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(name: &str, method: &str, samples: Vec<u64>, statistic: f64, tolerance: String, verdict: Verdict) -> Self {
        Check {
            name: name.into(),
            method: method.into(),
            samples,
            statistic,
            p_value: None,
            target: None,
            interval: None,
            tolerance,
            verdict,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// `|estimate - target| <= sigmas * max(se, se_floor)`.
    pub fn z_score(name: &str, est: Estimate, target: f64, sigmas: f64, se_floor: f64) -> Self {
        let se = est.se.max(se_floor);
        let dev = (est.value - target).abs();
        let ok = dev <= sigmas * se;
        let mut c = Check::new(
            name,
            "z_score",
            vec![],
            est.value,
            format!("|estimate - target| <= {sigmas} * max(se, {se_floor:e}), se = {:e}", est.se),
            if ok { Verdict::Pass } else { Verdict::Fail },
        );
        c.target = Some(target);
        c.interval = Some([est.value - sigmas * se, est.value + sigmas * se]);
        c
    }

    /// Relative error of a sample mean. Inconclusive when the standard error
    /// of the relative error exceeds a third of the tolerance.
    pub fn relative(name: &str, samples: u64, mean: f64, se: f64, target: f64, tolerance: f64) -> Self {
        let rel = (mean - target) / target;
        let rel_se = (se / target).abs();
        let verdict = if !rel.is_finite() {
            Verdict::Fail
        } else if rel_se > tolerance / 3.0 {
            Verdict::Inconclusive
        } else if rel.abs() <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        let mut c = Check::new(
            name,
            "relative_error",
            vec![samples],
            mean,
            format!("|mean / target - 1| <= {tolerance}; inconclusive if its se > {}", tolerance / 3.0),
            verdict,
        );
        c.target = Some(target);
        c.interval = Some([mean - 3.0 * se, mean + 3.0 * se]);
        c
    }

    /// An assertion with zero tolerance.
    pub fn exact(name: &str, samples: u64, violations: u64) -> Self {
        Check::new(
            name,
            "exact",
            vec![samples],
            violations as f64,
            "no violations".into(),
            if violations == 0 { Verdict::Pass } else { Verdict::Fail },
        )
    }

    /// `value <= bound`; inconclusive instead of fail when `soft`.
    pub fn upper_bound(name: &str, method: &str, samples: u64, value: f64, bound: f64, soft: bool) -> Self {
        let verdict = if value <= bound {
            Verdict::Pass
        } else if soft {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        };
        let mut c = Check::new(name, method, vec![samples], value, format!("<= {bound}"), verdict);
        c.target = Some(bound);
        c
    }

    /// `value >= bound`; inconclusive instead of fail when `soft`.
    pub fn lower_bound(name: &str, method: &str, samples: u64, value: f64, bound: f64, soft: bool) -> Self {
        let verdict = if value >= bound {
            Verdict::Pass
        } else if soft {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        };
        let mut c = Check::new(name, method, vec![samples], value, format!(">= {bound}"), verdict);
        c.target = Some(bound);
        c
    }
}

/// A test whose level is set once the size of the family is known.
#[derive(Clone, Debug)]
pub enum FamilyTest {
    Ks { name: String, method: &'static str, samples: Vec<u64>, result: KsResult },
    ChiSquare { name: String, samples: u64, result: ChiSquareResult },
    /// Wilson interval for `successes / trials` against `target`.
    Proportion { name: String, successes: u64, trials: u64, target: f64, max_half_width: Option<f64> },
}

impl FamilyTest {
    fn resolve(self, alpha: f64) -> LabResult<Check> {
        let tol = format!("p > {alpha:e}");
        Ok(match self {
            FamilyTest::Ks { name, method, samples, result } => {
                let v = if result.p_value > alpha { Verdict::Pass } else { Verdict::Fail };
                let mut c = Check::new(&name, method, samples, result.statistic, tol, v);
                c.p_value = Some(result.p_value);
                c
            }
            FamilyTest::ChiSquare { name, samples, result } => {
                let v = if result.p_value > alpha { Verdict::Pass } else { Verdict::Fail };
                let mut c = Check::new(&name, "chi_square", vec![samples], result.statistic, tol, v);
                c.p_value = Some(result.p_value);
                c.note = Some(format!("{} degrees of freedom", result.dof));
                c
            }
            FamilyTest::Proportion { name, successes, trials, target, max_half_width } => {
                let conf = 1.0 - alpha;
                let ci = wilson_ci(successes, trials, conf)?;
                let half = 0.5 * (ci.hi - ci.lo);
                let v = if !ci.contains(target) {
                    Verdict::Fail
                } else if max_half_width.is_some_and(|w| half > w) {
                    Verdict::Inconclusive
                } else {
                    Verdict::Pass
                };
                let mut tolerance = format!("target inside the {conf} Wilson interval");
                if let Some(w) = max_half_width {
                    tolerance.push_str(&format!("; inconclusive if half width > {w}"));
                }
                let mut c = Check::new(&name, "wilson_interval", vec![trials], successes as f64 / trials as f64, tolerance, v);
                c.target = Some(target);
                c.interval = Some([ci.lo, ci.hi]);
                c
            }
        })
    }
}

/// How the limit parameters used by a driver were obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    /// `configured` or `estimated`.
    pub source: String,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_plus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_plus: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_fingerprint: Option<String>,
    pub seed: u64,
    pub family_alpha: f64,
    /// Number of p-value and interval tests sharing `family_alpha`.
    pub family_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_test_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<ParameterReport>,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, serde_json::Value>,
    pub verdict: Verdict,
}

enum Entry {
    Family(FamilyTest),
    Fixed(Check),
}

pub struct ReportBuilder {
    experiment: String,
    spec_fingerprint: Option<String>,
    seed: u64,
    family_alpha: f64,
    parameters: Option<ParameterReport>,
    entries: Vec<Entry>,
    values: BTreeMap<String, serde_json::Value>,
}

impl ReportBuilder {
    pub fn new(experiment: &str, spec_fingerprint: Option<String>, seed: u64, family_alpha: f64) -> Self {
        ReportBuilder {
            experiment: experiment.into(),
            spec_fingerprint,
            seed,
            family_alpha,
            parameters: None,
            entries: Vec::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn parameters(&mut self, p: ParameterReport) {
        self.parameters = Some(p);
    }

    pub fn test(&mut self, t: FamilyTest) {
        self.entries.push(Entry::Family(t));
    }

    pub fn check(&mut self, c: Check) {
        self.entries.push(Entry::Fixed(c));
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    pub fn finish(self) -> LabResult<ExperimentReport> {
        let k = self.entries.iter().filter(|e| matches!(e, Entry::Family(_))).count();
        let alpha = if k > 0 { Some(self.family_alpha / k as f64) } else { None };
        let checks = self
            .entries
            .into_iter()
            .map(|e| match e {
                Entry::Family(t) => t.resolve(alpha.unwrap_or(self.family_alpha)),
                Entry::Fixed(c) => Ok(c),
            })
            .collect::<LabResult<Vec<_>>>()?;
        let verdict = checks.iter().map(|c| c.verdict).max().unwrap_or(Verdict::Pass);
        Ok(ExperimentReport {
            experiment: self.experiment,
            spec_fingerprint: self.spec_fingerprint,
            seed: self.seed,
            family_alpha: self.family_alpha,
            family_size: k,
            per_test_alpha: alpha,
            parameters: self.parameters,
            checks,
            values: self.values,
            verdict,
        })
    }
}

/// A CSV table written next to the report.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks(p: f64) -> FamilyTest {
        FamilyTest::Ks {
            name: "k".into(),
            method: "ks_two_sample",
            samples: vec![10, 10],
            result: KsResult { statistic: 0.1, p_value: p, n_eff: 5.0 },
        }
    }

    #[test]
    fn bonferroni_splits_the_family_level() {
        let mut b = ReportBuilder::new("x", None, 1, 0.01);
        b.test(ks(0.004));
        b.test(ks(0.5));
        let r = b.finish().unwrap();
        assert_eq!(r.per_test_alpha, Some(0.005));
        assert_eq!(r.checks[0].verdict, Verdict::Fail);
        assert_eq!(r.checks[1].verdict, Verdict::Pass);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn fail_dominates_inconclusive() {
        let mut b = ReportBuilder::new("x", None, 1, 0.01);
        b.check(Check::lower_bound("f", "frequency", 10, 0.5, 0.9, true));
        assert_eq!(b.finish().unwrap().verdict, Verdict::Inconclusive);
        let mut b = ReportBuilder::new("x", None, 1, 0.01);
        b.check(Check::lower_bound("f", "frequency", 10, 0.5, 0.9, true));
        b.check(Check::exact("e", 10, 1));
        assert_eq!(b.finish().unwrap().verdict, Verdict::Fail);
        assert_eq!(ReportBuilder::new("x", None, 1, 0.01).finish().unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn wide_interval_is_inconclusive() {
        let t = |n| FamilyTest::Proportion { name: "p".into(), successes: n / 2, trials: n, target: 0.5, max_half_width: Some(0.01) };
        assert_eq!(t(100).resolve(0.01).unwrap().verdict, Verdict::Inconclusive);
        assert_eq!(t(1_000_000).resolve(0.01).unwrap().verdict, Verdict::Pass);
        let off = FamilyTest::Proportion { name: "p".into(), successes: 10, trials: 100, target: 0.5, max_half_width: Some(0.01) };
        assert_eq!(off.resolve(0.01).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn relative_error_rules() {
        assert_eq!(Check::relative("t", 100, 1.01, 0.001, 1.0, 0.05).verdict, Verdict::Pass);
        assert_eq!(Check::relative("t", 100, 1.2, 0.001, 1.0, 0.05).verdict, Verdict::Fail);
        assert_eq!(Check::relative("t", 100, 1.0, 0.1, 1.0, 0.05).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn z_score_floor_handles_zero_error() {
        let c = Check::z_score("r", Estimate::new(1e-17, 0.0), 0.0, 4.0, 1e-9);
        assert_eq!(c.verdict, Verdict::Pass);
        let c = Check::z_score("r", Estimate::new(0.1, 0.01), 0.0, 4.0, 1e-9);
        assert_eq!(c.verdict, Verdict::Fail);
    }
}
