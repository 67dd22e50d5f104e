//! Experiment drivers. Each one reads its section of the config, fans
//! replicates out over the pool and returns a report plus CSV tables.

use std::sync::Arc;

use erw_core::cookie_model::CookieChainSpec;
use erw_core::rng::derive_seed;
use erw_core::stats::ks_two_sample;

use crate::config::Config;
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::parallel::Pool;
use crate::report::{num, FamilyTest, ReportBuilder, Table};
use crate::spec_file::{fingerprint, SpecFile};

pub mod blp_diffusion;
pub mod estimate;
pub mod exit;
pub mod export;
pub mod flt;
pub mod goodness;
pub mod parameters;
pub mod rayknight;
pub mod time_lln;
pub mod validate;
pub mod walk;

/// Shared state of one run.
pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub pool: Pool,
}

impl Context {
    pub fn new(config: Config, seed: Option<u64>, threads: Option<usize>) -> LabResult<Self> {
        let seed = seed.unwrap_or(config.seed);
        let pool = Pool::new(threads.or(config.threads))?;
        Ok(Context { config, seed, pool })
    }

    pub fn spec_file(&self) -> LabResult<SpecFile> {
        self.config.spec_file()?.ok_or_else(|| config_err("this command needs a `spec` in the config"))
    }

    /// Validated chain and its fingerprint.
    pub fn spec(&self) -> LabResult<(Arc<CookieChainSpec>, String)> {
        let file = self.spec_file()?;
        let input = file.to_input()?;
        let fp = fingerprint(&input);
        Ok((Arc::new(CookieChainSpec::new(input)?), fp))
    }

    /// Fingerprint of the configured spec, if there is one that parses.
    pub fn fingerprint(&self) -> Option<String> {
        self.config.spec_file().ok().flatten().and_then(|f| f.to_input().ok()).map(|i| fingerprint(&i))
    }

    pub fn builder(&self, experiment: &str) -> ReportBuilder {
        ReportBuilder::new(experiment, self.fingerprint(), self.seed, self.config.family_alpha)
    }

    pub fn seed_for(&self, words: &[u64]) -> u64 {
        derive_seed(self.seed, words)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ValidateSpec,
    SimulateWalk,
    EstimateParams,
    VerifyExit,
    VerifyRayknight,
    VerifyBlpDiffusion,
    VerifyFlt,
    VerifyTimeLln,
    VerifyGoodness,
    ExportPath,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::ValidateSpec,
        Experiment::SimulateWalk,
        Experiment::EstimateParams,
        Experiment::VerifyExit,
        Experiment::VerifyRayknight,
        Experiment::VerifyBlpDiffusion,
        Experiment::VerifyFlt,
        Experiment::VerifyTimeLln,
        Experiment::VerifyGoodness,
        Experiment::ExportPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ValidateSpec => "validate-spec",
            Experiment::SimulateWalk => "simulate-walk",
            Experiment::EstimateParams => "estimate-params",
            Experiment::VerifyExit => "verify-exit",
            Experiment::VerifyRayknight => "verify-rayknight",
            Experiment::VerifyBlpDiffusion => "verify-blp-diffusion",
            Experiment::VerifyFlt => "verify-flt",
            Experiment::VerifyTimeLln => "verify-time-lln",
            Experiment::VerifyGoodness => "verify-goodness",
            Experiment::ExportPath => "export-path",
        }
    }

    pub fn run(self, ctx: &Context) -> LabResult<Outcome> {
        match self {
            Experiment::ValidateSpec => validate::run(ctx),
            Experiment::SimulateWalk => walk::run(ctx),
            Experiment::EstimateParams => estimate::run(ctx),
            Experiment::VerifyExit => exit::run(ctx),
            Experiment::VerifyRayknight => rayknight::run(ctx),
            Experiment::VerifyBlpDiffusion => blp_diffusion::run(ctx),
            Experiment::VerifyFlt => flt::run(ctx),
            Experiment::VerifyTimeLln => time_lln::run(ctx),
            Experiment::VerifyGoodness => goodness::run(ctx),
            Experiment::ExportPath => export::run(ctx),
        }
    }
}

/// Linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Percentiles 1..=99 of paired samples, for QQ plots.
pub(crate) struct QuantileTable(Table);

impl QuantileTable {
    pub fn new(label: &str) -> Self {
        QuantileTable(Table::new("quantiles", &[label, "q", "simulated", "reference"]))
    }

    pub fn add(&mut self, label: &str, simulated: &[f64], reference: &[f64]) {
        let (a, b) = (sorted(simulated), sorted(reference));
        for k in 1..100 {
            let q = k as f64 / 100.0;
            self.0.push(vec![label.into(), num(q), num(quantile(&a, q)), num(quantile(&b, q))]);
        }
    }

    pub fn finish(self) -> Table {
        self.0
    }
}

/// Columns of a replicate-major matrix.
pub(crate) fn columns(rows: Vec<LabResult<Vec<f64>>>, width: usize) -> LabResult<Vec<Vec<f64>>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (c, v) in cols.iter_mut().zip(row?) {
            c.push(v);
        }
    }
    Ok(cols)
}

/// Two-sample KS test added to the report's family.
pub(crate) fn ks_family(b: &mut ReportBuilder, name: &str, simulated: &[f64], reference: &[f64]) -> LabResult<()> {
    let result = ks_two_sample(simulated, reference)?;
    b.test(FamilyTest::Ks {
        name: name.into(),
        method: "ks_two_sample",
        samples: vec![simulated.len() as u64, reference.len() as u64],
        result,
    });
    Ok(())
}
