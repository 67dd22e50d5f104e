use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use erw_lab::config::{Config, SpecSource};
use erw_lab::drivers::{Context, Experiment};
use erw_lab::output::{write_outcome, Timing};
use erw_lab::spec_file::SpecFile;
use erw_lab::LabResult;

/// Excited random walks with Markovian cookie stacks: simulation and
/// statistical checks against their diffusion limits.
#[derive(Parser)]
#[command(name = "erwlab", version)]
struct Cli {
    /// JSON config; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for the report and CSV tables.
    #[arg(long, global = true, default_value = "erwlab-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a cookie chain and print its stationary law.
    ValidateSpec {
        /// Spec file; defaults to the config's `spec`.
        spec: Option<PathBuf>,
    },
    /// Run walks with the `walk` section's stop rule.
    SimulateWalk,
    /// Estimate r, nu, pi and theta for the cookie chain.
    EstimateParams,
    /// Exit probabilities of the perturbed Brownian motion (and optionally the walk).
    VerifyExit,
    /// Local-time profile of the walk at its first visit to -m.
    VerifyRayknight,
    /// Rescaled branching-like process against its squared Bessel limit.
    VerifyBlpDiffusion,
    /// X_n / (a sqrt n) against W(1).
    VerifyFlt,
    /// Mean mesoscopic exit time against nu/2.
    VerifyTimeLln,
    /// Regularity of the remaining first cookies around the walk.
    VerifyGoodness,
    /// One path of the `export` section's kind as CSV.
    ExportPath,
    /// Print a JSON schema.
    Schema {
        #[arg(value_enum, default_value_t = SchemaKind::Config)]
        which: SchemaKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Config,
    Spec,
}

const EXIT_ERROR: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> LabResult<u8> {
    let experiment = match cli.command {
        Command::Schema { which } => {
            let schema = match which {
                SchemaKind::Config => schemars::schema_for!(Config),
                SchemaKind::Spec => schemars::schema_for!(SpecFile),
            };
            println!("{}", serde_json::to_string_pretty(&schema)?);
            return Ok(0);
        }
        Command::ValidateSpec { .. } => Experiment::ValidateSpec,
        Command::SimulateWalk => Experiment::SimulateWalk,
        Command::EstimateParams => Experiment::EstimateParams,
        Command::VerifyExit => Experiment::VerifyExit,
        Command::VerifyRayknight => Experiment::VerifyRayknight,
        Command::VerifyBlpDiffusion => Experiment::VerifyBlpDiffusion,
        Command::VerifyFlt => Experiment::VerifyFlt,
        Command::VerifyTimeLln => Experiment::VerifyTimeLln,
        Command::VerifyGoodness => Experiment::VerifyGoodness,
        Command::ExportPath => Experiment::ExportPath,
    };
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Command::ValidateSpec { spec: Some(p) } = &cli.command {
        config.base_dir = PathBuf::new();
        config.spec = Some(SpecSource::Path(p.to_string_lossy().into_owned()));
    }
    let ctx = Context::new(config, cli.seed, cli.threads)?;
    let start = Instant::now();
    let outcome = experiment.run(&ctx)?;
    let timing = Timing {
        experiment: experiment.name().into(),
        threads: ctx.pool.threads(),
        seconds: start.elapsed().as_secs_f64(),
    };
    let written = write_outcome(&cli.out, &outcome, &timing)?;

    let r = &outcome.report;
    for c in &r.checks {
        let p = c.p_value.map(|p| format!(" p={p:.4}")).unwrap_or_default();
        println!("{:<12} {} [{} = {:.6}{p}]", c.verdict.to_string(), c.name, c.method, c.statistic);
    }
    println!("{} {} ({:.1}s)", r.verdict, r.experiment, timing.seconds);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(r.verdict.exit_code() as u8)
}
