use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopReason, StopRule, WalkOptions};
use erw_core::rng::derive_seed;
use erw_core::runner::ReplicateRunner;
use erw_core::stats::mean_se;

use super::Context;
use crate::config::WalkStop;
use crate::error::LabResult;
use crate::output::Outcome;
use crate::report::{Check, Table};

const TAG: u64 = 0x7761_6c6b;

pub fn stop_rule(s: WalkStop) -> StopRule {
    match s {
        WalkStop::Steps { n } => StopRule::FixedSteps(n),
        WalkStop::Exit { lower, upper } => StopRule::Exit { lower, upper },
        WalkStop::Mesoscopic { k, epsilon, n } => StopRule::Mesoscopic { k, epsilon, n },
    }
}

struct Summary {
    steps: u64,
    last: i64,
    min: i64,
    max: i64,
    reason: StopReason,
    /// Local time summed over sites minus the number of steps.
    balance: i64,
    /// The stop rule's condition does not hold at the end.
    bad_stop: bool,
    local_times: Option<Vec<(i64, u64, u64)>>,
}

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.walk;
    let (spec, _) = ctx.spec()?;
    let stop = stop_rule(sec.stop);
    let options = WalkOptions { step_cap: sec.step_cap, record_path: false, collapse_above: sec.collapse_above };
    let out = ctx.pool.map(sec.replicates, |r| -> LabResult<Summary> {
        let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG, r]));
        let t = simulate(env, stop, options)?;
        let total: u64 = t.edges.iter().map(|(_, &(a, b))| a + b).sum();
        let bad_stop = match (stop, t.reason) {
            (StopRule::FixedSteps(n), _) => t.steps != n,
            (StopRule::Exit { lower, .. }, StopReason::HitLower) => Some(t.final_position) != lower,
            (StopRule::Exit { upper, .. }, StopReason::HitUpper) => Some(t.final_position) != upper,
            (StopRule::Mesoscopic { k, .. }, StopReason::Mesoscopic) => t.mesoscopic.as_ref().map(|m| m.times.len()) != Some(k + 1),
            _ => true,
        };
        let local_times = (r == 0).then(|| (t.min..=t.max).map(|x| (x, t.right_steps(x), t.left_steps(x))).collect());
        Ok(Summary {
            steps: t.steps,
            last: t.final_position,
            min: t.min,
            max: t.max,
            reason: t.reason,
            balance: total as i64 - t.steps as i64,
            bad_stop,
            local_times,
        })
    });
    let out: Vec<Summary> = out.into_iter().collect::<LabResult<_>>()?;

    let mut b = ctx.builder("simulate-walk");
    let n = out.len() as u64;
    if sec.collapse_above.is_none() {
        b.check(Check::exact("local times add up to the number of steps", n, out.iter().filter(|s| s.balance != 0).count() as u64));
    }
    b.check(Check::exact("walk ends where its stop rule says", n, out.iter().filter(|s| s.bad_stop).count() as u64));
    let steps: Vec<f64> = out.iter().map(|s| s.steps as f64).collect();
    let finals: Vec<f64> = out.iter().map(|s| s.last as f64).collect();
    b.value("mean_steps", mean_se(&steps).0);
    b.value("mean_final_position", mean_se(&finals).0);

    let mut summary = Table::new("summary", &["replicate", "steps", "final", "min", "max", "reason"]);
    for (i, s) in out.iter().enumerate() {
        summary.push(vec![
            i.to_string(),
            s.steps.to_string(),
            s.last.to_string(),
            s.min.to_string(),
            s.max.to_string(),
            format!("{:?}", s.reason),
        ]);
    }
    let mut tables = vec![summary];
    if let Some(lt) = out.first().and_then(|s| s.local_times.as_ref()) {
        let mut t = Table::new("local_times", &["site", "right", "left", "total"]);
        for &(x, r, l) in lt {
            t.push(vec![x.to_string(), r.to_string(), l.to_string(), (r + l).to_string()]);
        }
        tables.push(t);
    }
    Ok(Outcome { report: b.finish()?, tables })
}
