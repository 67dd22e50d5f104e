use erw_core::bmpe_besq::{bmpe_exit, bmpe_exit_grid, exit_prob_analytic, exit_prob_initialized, BmpeParams, ExitSide, Extrema};
use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopReason, StopRule, WalkOptions};
use erw_core::rng::{derive_seed, replicate_rng};
use erw_core::runner::ReplicateRunner;
use rand::Rng;

use super::parameters::resolve;
use super::Context;
use crate::config::ExitSampler;
use crate::error::LabResult;
use crate::output::Outcome;
use crate::report::{num, FamilyTest, Table};

const TAG: u64 = 0x6578_6974;

struct Case {
    kind: &'static str,
    theta_plus: f64,
    theta_minus: f64,
    init: Extrema,
    a: f64,
    b: f64,
    /// Side whose frequency is compared.
    side: ExitSide,
    target: f64,
}

impl Case {
    fn label(&self) -> String {
        format!(
            "{} theta=({}, {}) extrema=({}, {}) interval=({}, {}) {:?} exit",
            self.kind, self.theta_plus, self.theta_minus, self.init.lower, self.init.upper, self.a, self.b, self.side
        )
    }
}

fn cases(ctx: &Context) -> LabResult<Vec<Case>> {
    let sec = &ctx.config.exit;
    let mut out = Vec::new();
    for &[tp, tm] in &sec.thetas {
        for &b in &sec.b {
            let target = exit_prob_analytic(tp, tm, sec.a, b)?;
            out.push(Case {
                kind: "origin",
                theta_plus: tp,
                theta_minus: tm,
                init: Extrema::ORIGIN,
                a: sec.a,
                b,
                side: ExitSide::Lower,
                target,
            });
        }
    }
    for c in &sec.initialized {
        let target = exit_prob_initialized(c.theta_plus, c.theta_minus, c.lower, c.upper, c.a, c.b)?.upper;
        out.push(Case {
            kind: "initialized",
            theta_plus: c.theta_plus,
            theta_minus: c.theta_minus,
            init: Extrema::new(c.lower, 0.0, c.upper)?,
            a: c.a,
            b: c.b,
            side: ExitSide::Upper,
            target,
        });
    }
    Ok(out)
}

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.exit;
    let null = ctx.config.null_calibration;
    let mut b = ctx.builder("verify-exit");
    let mut cases = cases(ctx)?;
    let mut trials = vec![sec.replicates; cases.len()];
    let mut counts = Vec::new();

    for (ci, c) in cases.iter().enumerate() {
        let params = BmpeParams::new(c.theta_plus, c.theta_minus)?;
        let experiment = derive_seed(TAG, &[ci as u64]);
        let hits = ctx.pool.map(sec.replicates, |r| -> LabResult<bool> {
            let mut rng = replicate_rng(ctx.seed, experiment, r);
            if null {
                return Ok(rng.random::<f64>() < c.target);
            }
            let out = match sec.sampler {
                ExitSampler::Exact => bmpe_exit(params, c.init, c.a, c.b, &mut rng)?,
                ExitSampler::Grid { dt } => bmpe_exit_grid(params, c.init, c.a, c.b, dt, &mut rng)?,
            };
            Ok(out.side == c.side)
        });
        counts.push(count(hits)?);
    }

    if let Some(w) = &sec.walk {
        let p = resolve(ctx)?;
        b.parameters(p.report());
        let (spec, _) = ctx.spec()?;
        let target = exit_prob_analytic(p.theta_plus, p.theta_minus, w.lower as f64, w.upper as f64)?;
        let experiment = derive_seed(TAG, &[u64::MAX]);
        let stop = StopRule::Exit { lower: Some(w.lower), upper: Some(w.upper) };
        let hits = ctx.pool.map(w.replicates, |r| -> LabResult<bool> {
            if null {
                return Ok(replicate_rng(ctx.seed, experiment, r).random::<f64>() < target);
            }
            let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[experiment, r]));
            Ok(simulate(env, stop, WalkOptions::default())?.reason == StopReason::HitLower)
        });
        counts.push(count(hits)?);
        trials.push(w.replicates);
        cases.push(Case {
            kind: "walk",
            theta_plus: p.theta_plus,
            theta_minus: p.theta_minus,
            init: Extrema::ORIGIN,
            a: w.lower as f64,
            b: w.upper as f64,
            side: ExitSide::Lower,
            target,
        });
    }

    for ((c, &k), &n) in cases.iter().zip(&counts).zip(&trials) {
        b.test(FamilyTest::Proportion {
            name: c.label(),
            successes: k,
            trials: n,
            target: c.target,
            max_half_width: sec.max_half_width,
        });
    }
    b.value("sampler", sec.sampler);
    let report = b.finish()?;

    let mut t = Table::new(
        "exit",
        &[
            "kind", "theta_plus", "theta_minus", "lower", "upper", "a", "b", "side", "replicates", "count", "frequency", "target",
            "ci_lo", "ci_hi", "verdict",
        ],
    );
    for (((c, &k), &n), chk) in cases.iter().zip(&counts).zip(&trials).zip(&report.checks) {
        let ci = chk.interval.unwrap_or([f64::NAN; 2]);
        t.push(vec![
            c.kind.into(),
            num(c.theta_plus),
            num(c.theta_minus),
            num(c.init.lower),
            num(c.init.upper),
            num(c.a),
            num(c.b),
            format!("{:?}", c.side).to_lowercase(),
            n.to_string(),
            k.to_string(),
            num(k as f64 / n as f64),
            num(c.target),
            num(ci[0]),
            num(ci[1]),
            chk.verdict.to_string().to_lowercase(),
        ]);
    }
    Ok(Outcome { report, tables: vec![t] })
}

fn count(hits: Vec<LabResult<bool>>) -> LabResult<u64> {
    let mut k = 0;
    for h in hits {
        k += h? as u64;
    }
    Ok(k)
}
