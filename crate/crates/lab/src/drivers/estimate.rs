use erw_core::params::{Estimate, ParameterEstimates, SignEstimates};

use super::parameters::{estimate, Resolved};
use super::Context;
use crate::error::LabResult;
use crate::output::Outcome;
use crate::report::{num, Check, Table};

/// Below this a standard error is treated as rounding noise.
const SE_FLOOR: f64 = 1e-9;

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.estimation;
    let e = estimate(ctx)?;
    let mut b = ctx.builder("estimate-params");
    b.parameters(Resolved::from_estimates(&e).report());
    let k = sec.tolerance_sigmas;
    let z = |name: &str, est: Estimate, target: f64| Check::z_score(name, est, target, k, SE_FLOOR);

    let half = e.nu.value / 2.0 - 1.0;
    for i in 0..e.plus.r.len() {
        let (p, m) = (e.plus.r[i], e.minus.r[i]);
        let se = (p.se.powi(2) + m.se.powi(2) + 0.25 * e.nu.se.powi(2)).sqrt();
        b.check(z(&format!("r+({i}) + r-({i}) - (nu/2 - 1)"), Estimate::new(p.value + m.value - half, se), 0.0));
    }
    let scale = 2.0 / e.nu.value;
    let id = e.identity_residual;
    b.check(z("theta+ + theta- - (1 - 2/nu)", Estimate::new(scale * id.value, scale * id.se), 0.0));
    b.check(z("theta+(pi+)", e.theta_plus_at_pi, 0.0));
    b.check(z("theta-(pi-)", e.theta_minus_at_pi, 0.0));

    if let Some(x) = &sec.expected {
        for (label, want, got) in [("r+", &x.r_plus, &e.plus.r), ("r-", &x.r_minus, &e.minus.r)] {
            if let Some(want) = want {
                for (i, (&w, &g)) in want.iter().zip(got).enumerate() {
                    b.check(z(&format!("{label}({i}) expected"), g, w));
                }
            }
        }
        for (label, want, got) in
            [("nu", x.nu, e.nu), ("theta+", x.theta_plus, e.theta_plus), ("theta-", x.theta_minus, e.theta_minus)]
        {
            if let Some(w) = want {
                b.check(z(&format!("{label} expected"), got, w));
            }
        }
    }
    if let Some(c) = e.classification {
        b.value("class", format!("{:?}", c.class));
        b.value("near_boundary", c.near_boundary);
    }
    b.value("scaling_constant", e.scaling_constant());
    Ok(Outcome { report: b.finish()?, tables: tables(&e) })
}

fn tables(e: &ParameterEstimates) -> Vec<Table> {
    let mut levels = Table::new("levels", &["sign", "level", "state", "r", "r_se", "pi", "pi_se"]);
    let mut nu = Table::new("nu_levels", &["sign", "level", "nu", "nu_se"]);
    let signs: [(&str, &SignEstimates); 2] = [("+", &e.plus), ("-", &e.minus)];
    for (sign, s) in signs {
        for l in &s.levels {
            for i in 0..l.r.len() {
                levels.push(vec![
                    sign.into(),
                    l.n.to_string(),
                    i.to_string(),
                    num(l.r[i].value),
                    num(l.r[i].se),
                    num(l.pi[i].value),
                    num(l.pi[i].se),
                ]);
            }
            nu.push(vec![sign.into(), l.n.to_string(), num(l.nu.value), num(l.nu.se)]);
        }
    }
    let mut summary = Table::new("summary", &["quantity", "value", "se"]);
    let mut row = |q: String, est: Estimate| summary.push(vec![q, num(est.value), num(est.se)]);
    for (sign, s) in signs {
        for (i, r) in s.r.iter().enumerate() {
            row(format!("r{sign}({i})"), *r);
        }
        for (i, p) in s.pi.iter().enumerate() {
            row(format!("pi{sign}({i})"), *p);
        }
        row(format!("nu{sign}"), s.nu);
    }
    row("nu".into(), e.nu);
    row("theta+".into(), e.theta_plus);
    row("theta-".into(), e.theta_minus);
    row("theta+(pi+)".into(), e.theta_plus_at_pi);
    row("theta-(pi-)".into(), e.theta_minus_at_pi);
    row("identity_residual".into(), e.identity_residual);
    vec![summary, levels, nu]
}
