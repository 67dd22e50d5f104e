use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, LabResult};
use crate::report::{ExperimentReport, Table};

/// Everything a driver produces.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub tables: Vec<Table>,
}

/// Wall-clock data, kept out of the report so reports stay reproducible.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub experiment: String,
    pub threads: usize,
    pub seconds: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.into(), source }
}

/// Pretty JSON with a trailing newline.
pub fn report_json(report: &ExperimentReport) -> LabResult<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<experiment>.report.json`, `<experiment>.<table>.csv` and
/// `<experiment>.timing.json` into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome, timing: &Timing) -> LabResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = &outcome.report.experiment;
    let mut written = Vec::new();

    let path = dir.join(format!("{stem}.report.json"));
    std::fs::write(&path, report_json(&outcome.report)?).map_err(io_err(&path))?;
    written.push(path);

    for t in &outcome.tables {
        let path = dir.join(format!("{stem}.{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }

    let path = dir.join(format!("{stem}.timing.json"));
    std::fs::write(&path, serde_json::to_string_pretty(timing)? + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
