use erw_core::bmpe_besq::{bmpe_simulate, BmpeParams, Extrema};
use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopRule, WalkOptions};
use erw_core::rng::{derive_seed, replicate_rng, Rng64};
use erw_core::runner::ReplicateRunner;
use erw_core::stats::mean_se;
use rand::Rng;

use super::parameters::resolve;
use super::{columns, Context};
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::report::{num, Check, Table};

const TAG: u64 = 0x746c_6c6e;
const TAG_BMPE: u64 = 0x746c_6270;

/// Running means of the first `k` times the path needs to move one unit
/// away from its previous recorded position.
fn bmpe_unit_times(params: BmpeParams, k: usize, dt: f64, rng: &mut Rng64) -> LabResult<Vec<f64>> {
    let mut horizon = 4.0 * k as f64;
    loop {
        let path = bmpe_simulate(params, Extrema::ORIGIN, horizon, dt, rng)?;
        let (mut anchor, mut since, mut sum) = (0.0, 0usize, 0.0);
        let mut out = Vec::with_capacity(k);
        for (i, &w) in path.w.iter().enumerate() {
            if (w - anchor).abs() >= 1.0 {
                anchor += (w - anchor).signum();
                sum += (i - since) as f64 * dt;
                since = i;
                out.push(sum / (out.len() + 1) as f64);
                if out.len() == k {
                    return Ok(out);
                }
            }
        }
        horizon *= 2.0;
    }
}

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.time_lln;
    if sec.k == 0 {
        return Err(config_err("time_lln needs k > 0"));
    }
    let null = ctx.config.null_calibration;
    let p = resolve(ctx)?;
    let (spec, _) = ctx.spec()?;
    let target = p.nu / 2.0;
    let unit = sec.n as f64 * sec.epsilon * sec.epsilon;
    let stop = StopRule::Mesoscopic { k: sec.k, epsilon: sec.epsilon, n: sec.n };

    // Row r holds T_j / (j n eps^2) for j = 1..=k.
    let rows = ctx.pool.map(sec.replicates, |r| -> LabResult<Vec<f64>> {
        if null {
            // Running means of exponential times with mean `target`.
            let mut rng = replicate_rng(ctx.seed, TAG, r);
            let mut sum = 0.0;
            return Ok((1..=sec.k)
                .map(|j| {
                    sum += -target * (1.0 - rng.random::<f64>()).ln();
                    sum / j as f64
                })
                .collect());
        }
        let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG, r]));
        let t = simulate(env, stop, WalkOptions::default())?;
        let times = t.mesoscopic.map(|m| m.times).unwrap_or_default();
        Ok((1..=sec.k).map(|j| times.get(j).map_or(f64::NAN, |&tj| tj as f64 / (j as f64 * unit))).collect())
    });
    let cols = columns(rows, sec.k)?;

    let mut b = ctx.builder("verify-time-lln");
    b.parameters(p.report());
    let bmpe = match sec.bmpe_paths {
        Some(paths) => {
            let params = BmpeParams::new(p.theta_plus, p.theta_minus)?;
            let rows = ctx.pool.map(paths, |r| -> LabResult<Vec<f64>> {
                let times = bmpe_unit_times(params, sec.k, sec.bmpe_dt, &mut replicate_rng(ctx.seed, TAG_BMPE, r))?;
                Ok(times.into_iter().map(|t| target * t).collect())
            });
            Some(columns(rows, sec.k)?)
        }
        None => None,
    };
    let mut t = Table::new("running_mean", &["j", "mean", "se", "target", "bmpe_mean", "bmpe_se"]);
    for (j, c) in cols.iter().enumerate() {
        let (m, se) = mean_se(c);
        let (bm, bse) = bmpe.as_ref().map_or((f64::NAN, f64::NAN), |b| mean_se(&b[j]));
        t.push(vec![(j + 1).to_string(), num(m), num(se), num(target), num(bm), num(bse)]);
    }
    let (mean, se) = mean_se(&cols[sec.k - 1]);
    b.check(Check::relative(&format!("T_k / (k n eps^2) against nu/2, k = {}", sec.k), sec.replicates, mean, se, target, sec.tolerance));
    if let Some(bm) = &bmpe {
        let (bmean, bse) = mean_se(&bm[sec.k - 1]);
        let se = (se * se + bse * bse).sqrt();
        b.check(Check::relative(
            &format!("T_k / (k n eps^2) against the perturbed Brownian motion at k = {}", sec.k),
            sec.replicates,
            mean,
            se,
            bmean,
            sec.tolerance,
        ));
        b.value("bmpe_mean", bmean);
    }
    b.value("scale", (sec.epsilon * (sec.n as f64).sqrt()).floor());
    Ok(Outcome { report: b.finish()?, tables: vec![t] })
}
