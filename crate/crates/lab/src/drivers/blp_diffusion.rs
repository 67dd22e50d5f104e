use erw_core::blp::{run_blp, BlpKind, Direction, Window};
use erw_core::bmpe_besq::{besq_simulate, BesqConfig, DriftSchedule};
use erw_core::cookie_model::CookieEnvironment;
use erw_core::rng::{derive_seed, replicate_rng};
use erw_core::runner::ReplicateRunner;

use super::parameters::{resolve, Resolved};
use super::{columns, ks_family, Context, QuantileTable};
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::report::num;

const TAG_BLP: u64 = 0x626c_7070;
const TAG_REF: u64 = 0x626c_7266;

pub fn parse_kind(s: &str) -> LabResult<BlpKind> {
    match s {
        "U+" => Ok(BlpKind::UPlus),
        "V+" => Ok(BlpKind::VPlus),
        "U-" => Ok(BlpKind::UMinus),
        "V-" => Ok(BlpKind::VMinus),
        _ => Err(config_err(format!("unknown process kind {s:?}; expected U+, V+, U- or V-"))),
    }
}

/// Drift of the diffusion limit of each kind.
pub fn limit_drift(kind: BlpKind, p: &Resolved) -> f64 {
    let rho = p.rho();
    match kind {
        BlpKind::UPlus => rho,
        BlpKind::VPlus => rho + 1.0,
        BlpKind::UMinus => p.nu / 2.0 - 1.0 - rho,
        BlpKind::VMinus => p.nu / 2.0 - rho,
    }
}

/// Window of `len` sites next to the origin, read in the kind's direction.
pub fn window(kind: BlpKind, len: u64) -> LabResult<(Window, Direction)> {
    let len = len as i64;
    let w = match kind.direction() {
        Direction::LeftToRight => Window::new(1, len)?,
        Direction::RightToLeft => Window::new(-len, -1)?,
    };
    Ok((w, kind.direction()))
}

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.blp_diffusion;
    let kind = parse_kind(&sec.kind)?;
    if sec.generations == 0 || sec.times.iter().any(|&t| !(t > 0.0)) {
        return Err(config_err("blp_diffusion needs generations > 0 and positive times"));
    }
    let null = ctx.config.null_calibration;
    let p = resolve(ctx)?;
    let (spec, _) = ctx.spec()?;
    let m = sec.generations as f64;
    let horizon = sec.times.iter().copied().fold(0.0, f64::max);
    let (win, dir) = window(kind, (horizon * m).ceil() as u64)?;
    let init = (sec.init_fraction * m).round() as u64;
    let gens: Vec<usize> = sec.times.iter().map(|&t| (t * m).floor() as usize).collect();
    let besq = BesqConfig {
        y0: init as f64 / m,
        nu: p.nu,
        drift: DriftSchedule::constant(limit_drift(kind, &p)),
        dt: sec.dt,
        horizon,
        absorb_after: matches!(kind, BlpKind::UPlus | BlpKind::UMinus).then_some(0.0),
        stop_at_absorption: false,
    };
    let diffusion = |tag: u64, r: u64| -> LabResult<Vec<f64>> {
        let path = besq_simulate(&besq, &mut replicate_rng(ctx.seed, tag, r))?;
        Ok(sec.times.iter().map(|&t| path.value_at(t)).collect())
    };

    let sim = ctx.pool.map(sec.replicates, |r| -> LabResult<Vec<f64>> {
        if null {
            return diffusion(TAG_BLP, r);
        }
        let mut env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG_BLP, r])).with_sampling(sec.sampling.into());
        let t = run_blp(&mut env, kind, init, win, dir)?;
        Ok(gens.iter().map(|&g| t.values[g] as f64 / m).collect())
    });
    let reference = ctx.pool.map(sec.reference_replicates.unwrap_or(sec.replicates), |r| diffusion(TAG_REF, r));
    let (sim, reference) = (columns(sim, gens.len())?, columns(reference, gens.len())?);

    let mut b = ctx.builder("verify-blp-diffusion");
    b.parameters(p.report());
    b.value("kind", kind.name());
    b.value("drift", limit_drift(kind, &p));
    let mut q = QuantileTable::new("t");
    for (i, &t) in sec.times.iter().enumerate() {
        ks_family(&mut b, &format!("{} at t = {t}", kind.name()), &sim[i], &reference[i])?;
        q.add(&num(t), &sim[i], &reference[i]);
    }
    Ok(Outcome { report: b.finish()?, tables: vec![q.finish()] })
}

