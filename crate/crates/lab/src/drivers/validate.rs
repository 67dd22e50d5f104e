use erw_core::cookie_model::{validate_spec, CookieChainSpec};

use super::Context;
use crate::error::LabResult;
use crate::output::Outcome;
use crate::report::{num, Check, Table};
use crate::spec_file::fingerprint;

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let mut b = ctx.builder("validate-spec");
    let mut tables = Vec::new();
    let input = match ctx.spec_file()?.to_input() {
        Ok(input) => input,
        Err(e) => {
            b.check(Check::exact("spec accepted", 1, 1).with_note(e.to_string()));
            return Ok(Outcome { report: b.finish()?, tables });
        }
    };
    let d = validate_spec(&input);
    let mut check = Check::exact("spec accepted", 1, d.failures.len() as u64);
    if !d.failures.is_empty() || !d.warnings.is_empty() {
        check = check.with_note(d.describe().trim_end().to_string());
    }
    b.check(check);
    b.value("fingerprint", fingerprint(&input));
    b.value("n_states", input.n_states);
    b.value("failures", d.failures.iter().map(|f| f.to_string()).collect::<Vec<_>>());
    b.value("warnings", d.warnings.iter().map(|f| f.to_string()).collect::<Vec<_>>());
    b.value("mean_drift", d.mean_drift);
    if d.accepted {
        let spec = CookieChainSpec::new(input)?;
        let mut t = Table::new("states", &["state", "p", "eta", "stationary", "drift_potential", "absorbing"]);
        for i in 0..spec.n_states() {
            t.push(vec![
                i.to_string(),
                num(spec.p()[i]),
                num(spec.eta()[i]),
                num(spec.stationary()[i]),
                num(spec.drift_potential()[i]),
                spec.is_absorbing(i).to_string(),
            ]);
        }
        b.value("stationary", spec.stationary());
        tables.push(t);
    }
    Ok(Outcome { report: b.finish()?, tables })
}
