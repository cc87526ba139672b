//! Every estimator on one simulated replication, with 95% intervals.

use dml_survey::data::ObservedData;
use dml_survey::harness::{estimate_all, RunConfig, Simulation};
use dml_survey::nuisance::Truth;

fn main() -> dml_survey::Result<()> {
    let cfg = RunConfig::preset(1)?;
    let sim = Simulation::new(&cfg.scenario)?;
    let draw = sim.draw(2024)?;
    let data = ObservedData::from_draw(&sim.population, &draw);
    let truth = Truth {
        outcome: sim.population.true_outcome().clone(),
        selection: sim.population.true_selection(),
    };

    let (results, diagnostics) = estimate_all(&data, &sim.groups, &cfg, 2024, Some(&truth))?;
    for d in diagnostics {
        println!("# {d}");
    }
    println!("Ybar = {:.4}", draw.y_bar);
    for r in results {
        match r.ci() {
            Some((lo, hi)) => println!("{:<12} {:>9.4}  [{lo:.4}, {hi:.4}]", r.id.to_string(), r.point),
            None => println!("{:<12} {:>9.4}", r.id.to_string(), r.point),
        }
    }
    Ok(())
}
