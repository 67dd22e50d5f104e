use erw_core::bmpe_besq::rayknight_law;
use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopRule, WalkOptions};
use erw_core::rng::{derive_seed, replicate_rng, Rng64};
use erw_core::runner::ReplicateRunner;

use super::parameters::{resolve, Resolved};
use super::{columns, ks_family, Context, QuantileTable};
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::report::{num, Table};

const TAG_WALK: u64 = 0x726b_7761;
const TAG_REF: u64 = 0x726b_7266;

fn profile(p: &Resolved, points: &[f64], dx: f64, rng: &mut Rng64) -> LabResult<Vec<f64>> {
    let horizon = points.iter().copied().fold(0.0, f64::max) + dx;
    let path = rayknight_law(p.theta_plus, p.theta_minus, 1.0, 1.0, 1.0, dx, horizon, rng)?;
    Ok(points.iter().map(|&s| path.value_at(s)).collect())
}


pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.rayknight;
    if sec.m == 0 || sec.points.iter().any(|&s| !(s >= 0.0)) {
        return Err(config_err("rayknight needs m > 0 and points >= 0"));
    }
    let null = ctx.config.null_calibration;
    let p = resolve(ctx)?;
    let (spec, _) = ctx.spec()?;
    let m = sec.m as i64;
    let sites: Vec<i64> = sec.points.iter().map(|&s| -m + (s * m as f64).floor() as i64).collect();
    let top = sites.iter().copied().max().unwrap_or(0);
    let options = WalkOptions {
        step_cap: sec.step_cap,
        record_path: false,
        collapse_above: sec.collapse.then_some(top + 1),
    };
    let stop = StopRule::Exit { lower: Some(-m), upper: None };
    let scale = 2.0 / (p.nu * m as f64);

    let walk = ctx.pool.map(sec.replicates, |r| -> LabResult<Vec<f64>> {
        if null {
            return profile(&p, &sec.points, sec.dx, &mut replicate_rng(ctx.seed, TAG_WALK, r));
        }
        let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG_WALK, r]));
        let t = simulate(env, stop, options)?;
        Ok(sites.iter().map(|&x| scale * t.local_time(x) as f64).collect())
    });
    let walk = columns(walk, sites.len())?;
    let reference = ctx.pool.map(sec.reference_replicates.unwrap_or(sec.replicates), |r| {
        profile(&p, &sec.points, sec.dx, &mut replicate_rng(ctx.seed, TAG_REF, r))
    });
    let reference = columns(reference, sites.len())?;

    let mut b = ctx.builder("verify-rayknight");
    b.parameters(p.report());
    let mut q = QuantileTable::new("s");
    let mut means = Table::new("means", &["s", "site", "simulated_mean", "reference_mean"]);
    for (i, &s) in sec.points.iter().enumerate() {
        ks_family(&mut b, &format!("local time at s = {s}"), &walk[i], &reference[i])?;
        q.add(&num(s), &walk[i], &reference[i]);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        means.push(vec![num(s), sites[i].to_string(), num(mean(&walk[i])), num(mean(&reference[i]))]);
    }
    b.value("m", sec.m);
    b.value("dx", sec.dx);
    Ok(Outcome { report: b.finish()?, tables: vec![means, q.finish()] })
}
