use erw_core::blp::run_blp;
use erw_core::bmpe_besq::{besq_simulate, bmpe_simulate, rayknight_law, BesqConfig, BmpeParams, DriftSchedule, Extrema};
use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopRule, WalkOptions};
use erw_core::rng::replicate_rng;

use super::blp_diffusion::{parse_kind, window};
use super::Context;
use crate::config::ExportSection;
use crate::error::LabResult;
use crate::output::Outcome;
use crate::report::{num, Table};

const TAG: u64 = 0x6578_706f;

/// One path of the configured kind as a CSV table.
pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let mut rng = replicate_rng(ctx.seed, TAG, 0);
    let env_seed = ctx.seed_for(&[TAG]);
    let table = match ctx.config.export.clone() {
        ExportSection::Walk { steps } => {
            let (spec, _) = ctx.spec()?;
            let options = WalkOptions { record_path: true, ..WalkOptions::default() };
            let t = simulate(CookieEnvironment::new(spec, env_seed), StopRule::FixedSteps(steps), options)?;
            let mut tab = Table::new("walk", &["step", "position"]);
            for (k, x) in t.positions.unwrap_or_default().iter().enumerate() {
                tab.push(vec![k.to_string(), x.to_string()]);
            }
            tab
        }
        ExportSection::LocalTimes { lower, upper } => {
            let (spec, _) = ctx.spec()?;
            let stop = StopRule::Exit { lower: Some(lower), upper: Some(upper) };
            let t = simulate(CookieEnvironment::new(spec, env_seed), stop, WalkOptions::default())?;
            let mut tab = Table::new("local_times", &["site", "right", "left", "total"]);
            for x in t.min..=t.max {
                let (r, l) = (t.right_steps(x), t.left_steps(x));
                tab.push(vec![x.to_string(), r.to_string(), l.to_string(), (r + l).to_string()]);
            }
            tab
        }
        ExportSection::Blp { kind, generations, init } => {
            let (spec, _) = ctx.spec()?;
            let kind = parse_kind(&kind)?;
            let (win, dir) = window(kind, generations)?;
            let t = run_blp(&mut CookieEnvironment::new(spec, env_seed), kind, init, win, dir)?;
            let mut tab = Table::new("blp", &["generation", "site", "value", "kind", "absorbed"]);
            for (g, &v) in t.values.iter().enumerate() {
                let site = if g == 0 { String::new() } else { t.sites[g - 1].to_string() };
                let absorbed = t.absorption_index.is_some_and(|a| g >= a);
                tab.push(vec![g.to_string(), site, v.to_string(), kind.name().into(), absorbed.to_string()]);
            }
            tab
        }
        ExportSection::Besq { y0, drift, nu, horizon, dt } => {
            let cfg = BesqConfig {
                y0,
                nu,
                drift: DriftSchedule::constant(drift),
                dt,
                horizon,
                absorb_after: None,
                stop_at_absorption: false,
            };
            let path = besq_simulate(&cfg, &mut rng)?;
            let mut tab = Table::new("besq", &["t", "value"]);
            for k in 0..=path.steps {
                tab.push(vec![num(k as f64 * dt), num(path.value(k))]);
            }
            tab
        }
        ExportSection::Bmpe { alpha, beta, horizon, dt } => {
            let path = bmpe_simulate(BmpeParams::new(alpha, beta)?, Extrema::ORIGIN, horizon, dt, &mut rng)?;
            let mut tab = Table::new("bmpe", &["t", "w", "lower", "upper"]);
            for k in 0..path.w.len() {
                tab.push(vec![num(k as f64 * dt), num(path.w[k]), num(path.lower[k]), num(path.upper[k])]);
            }
            tab
        }
        ExportSection::Rayknight { theta_plus, theta_minus, lower, pos, upper, dx, horizon } => {
            let path = rayknight_law(theta_plus, theta_minus, lower, pos, upper, dx, horizon, &mut rng)?;
            let mut tab = Table::new("rayknight", &["x", "value"]);
            for k in 0..=path.steps {
                tab.push(vec![num(k as f64 * dx), num(path.value(k))]);
            }
            tab
        }
    };
    let mut b = ctx.builder("export-path");
    b.value("rows", table.rows.len());
    b.value("table", &table.name);
    Ok(Outcome { report: b.finish()?, tables: vec![table] })
}
