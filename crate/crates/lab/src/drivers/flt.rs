use erw_core::bmpe_besq::{bmpe_endpoint, BmpeParams};
use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopRule, WalkOptions};
use erw_core::rng::{derive_seed, replicate_rng, Rng64};
use erw_core::runner::ReplicateRunner;
use erw_core::stats::{ks_one_sample, normal_cdf, normal_quantile};
use rand::Rng;

use super::parameters::resolve;
use super::{ks_family, Context, QuantileTable};
use crate::config::FltReference;
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::report::{Check, FamilyTest};

const TAG_WALK: u64 = 0x666c_7477;
const TAG_REF: u64 = 0x666c_7472;

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.flt;
    if sec.n == 0 {
        return Err(config_err("flt needs n > 0"));
    }
    let null = ctx.config.null_calibration;
    let p = resolve(ctx)?;
    let (spec, _) = ctx.spec()?;
    let a = p.scaling();
    if !(a > 0.0) {
        return Err(config_err(format!("theta+ + theta- = {} leaves no scaling constant", p.theta_plus + p.theta_minus)));
    }
    let params = BmpeParams::new(p.theta_plus, p.theta_minus)?;
    let reference = |rng: &mut Rng64| -> LabResult<f64> {
        Ok(match sec.reference {
            FltReference::Bmpe => bmpe_endpoint(params, 1.0, sec.dt, rng)?,
            FltReference::Normal => normal_quantile(rng.random::<f64>()),
        })
    };
    let norm = a * (sec.n as f64).sqrt();
    let walk = ctx.pool.map(sec.replicates, |r| -> LabResult<f64> {
        if null {
            return reference(&mut replicate_rng(ctx.seed, TAG_WALK, r));
        }
        let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG_WALK, r]));
        Ok(simulate(env, StopRule::FixedSteps(sec.n), WalkOptions::default())?.final_position as f64 / norm)
    });
    let walk: Vec<f64> = walk.into_iter().collect::<LabResult<_>>()?;

    let mut b = ctx.builder("verify-flt");
    b.parameters(p.report());
    b.value("scaling_constant", a);
    let top = p.theta_plus.max(p.theta_minus);
    b.check(Check::upper_bound("max(theta+, theta-) below the stability bound", "precondition", 1, top, sec.max_theta, true));
    let mut q = QuantileTable::new("n");
    let label = sec.n.to_string();
    match sec.reference {
        FltReference::Bmpe => {
            let refs = ctx.pool.map(sec.reference_paths, |r| reference(&mut replicate_rng(ctx.seed, TAG_REF, r)));
            let refs: Vec<f64> = refs.into_iter().collect::<LabResult<_>>()?;
            ks_family(&mut b, "X_n / (a sqrt n) against W(1)", &walk, &refs)?;
            q.add(&label, &walk, &refs);
        }
        FltReference::Normal => {
            let result = ks_one_sample(&walk, normal_cdf)?;
            b.test(FamilyTest::Ks {
                name: "X_n / (a sqrt n) against N(0, 1)".into(),
                method: "ks_one_sample",
                samples: vec![walk.len() as u64],
                result,
            });
            let refs: Vec<f64> = (1..1000).map(|k| normal_quantile(k as f64 / 1000.0)).collect();
            q.add(&label, &walk, &refs);
        }
    }
    Ok(Outcome { report: b.finish()?, tables: vec![q.finish()] })
}
