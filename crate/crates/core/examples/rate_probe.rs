//! Oracle error of the nuisance learners as the number of sampled clusters
//! grows. Errors fall roughly like 1/M for a correctly specified parametric
//! model.

use dml_survey::harness::{nuisance_rate_probe, ProbeConfig};
use dml_survey::nuisance::LearnerSpec;
use dml_survey::popgen::ScenarioSpec;

fn main() -> dml_survey::Result<()> {
    let cfg = ProbeConfig::new(ScenarioSpec::preset(1)?, LearnerSpec::parametric());
    let report = nuisance_rate_probe(&cfg)?;
    print!("{}", report.to_table());
    Ok(())
}
