//! A short Monte Carlo run of one scenario, printed as a summary table.
//!
//! cargo run --release --example simulate_scenario -- 1 50

use dml_survey::estimators::EstimatorId;
use dml_survey::harness::{format_table, run_scenario, RunConfig};

fn main() -> dml_survey::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: u8 = args.next().map_or(1, |s| s.parse().expect("scenario id"));
    let reps: usize = args.next().map_or(20, |s| s.parse().expect("replication count"));

    let mut cfg = RunConfig::preset(id)?;
    cfg.reps = reps;
    cfg.estimators = EstimatorId::parse_list("HT,Haj,naive,DR1,DR2clw,DR2,TMLE1,TMLE2")?;
    let out = run_scenario(&cfg)?;

    print!("{}", format_table(&out.summary));
    if !out.failures.is_empty() {
        println!("{} replications failed", out.failures.len());
    }
    Ok(())
}
