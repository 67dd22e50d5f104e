//! Limit parameters used by the drivers: configured, or estimated from the
//! spec.

use erw_core::params::{estimate_parameters, ParameterEstimates};

use super::Context;
use crate::error::LabResult;
use crate::report::ParameterReport;

const TAG_ESTIMATE: u64 = 0x6573_7469;

#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub source: &'static str,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub nu: f64,
    /// Standard errors of `theta+`, `theta-` and `nu`.
    pub se: Option<[f64; 3]>,
    pub r_plus: Option<Vec<f64>>,
    pub pi_plus: Option<Vec<f64>>,
}

impl Resolved {
    pub fn from_estimates(e: &ParameterEstimates) -> Self {
        Resolved {
            source: "estimated",
            theta_plus: e.theta_plus.value,
            theta_minus: e.theta_minus.value,
            nu: e.nu.value,
            se: Some([e.theta_plus.se, e.theta_minus.se, e.nu.se]),
            r_plus: Some(e.r_plus()),
            pi_plus: Some(e.plus.pi.iter().map(|p| p.value).collect()),
        }
    }

    pub fn report(&self) -> ParameterReport {
        ParameterReport {
            source: self.source.into(),
            theta_plus: self.theta_plus,
            theta_minus: self.theta_minus,
            nu: self.nu,
            se: self.se,
            r_plus: self.r_plus.clone(),
            pi_plus: self.pi_plus.clone(),
        }
    }

    /// `sqrt(1 - theta+ - theta-)`.
    pub fn scaling(&self) -> f64 {
        (1.0 - self.theta_plus - self.theta_minus).sqrt()
    }

    /// `eta . r+ = nu theta+ / 2`.
    pub fn rho(&self) -> f64 {
        0.5 * self.nu * self.theta_plus
    }
}

/// Seed under which parameters are estimated; shared by every driver so
/// that all of them see the same estimates.
pub fn estimation_seed(ctx: &Context) -> u64 {
    ctx.seed_for(&[TAG_ESTIMATE])
}

pub fn estimate(ctx: &Context) -> LabResult<ParameterEstimates> {
    let (spec, _) = ctx.spec()?;
    Ok(estimate_parameters(&spec, &ctx.config.estimation.to_core(), estimation_seed(ctx), &ctx.pool)?)
}

pub fn resolve(ctx: &Context) -> LabResult<Resolved> {
    match &ctx.config.parameters {
        Some(k) => Ok(Resolved {
            source: "configured",
            theta_plus: k.theta_plus,
            theta_minus: k.theta_minus,
            nu: k.nu,
            se: None,
            r_plus: k.r_plus.clone(),
            pi_plus: k.pi_plus.clone(),
        }),
        None => Ok(Resolved::from_estimates(&estimate(ctx)?)),
    }
}
