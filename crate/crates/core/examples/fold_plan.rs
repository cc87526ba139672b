//! Cluster-level folds and the active subsets used to fit π̂ᴮ out of fold.

use dml_survey::crossfit::CrossFit;
use dml_survey::harness::Simulation;
use dml_survey::popgen::ScenarioSpec;

fn main() -> dml_survey::Result<()> {
    let spec = ScenarioSpec::preset(4)?;
    let sim = Simulation::new(&spec)?;
    let draw = sim.draw(11)?;
    let cf = CrossFit::build(&sim.groups, &draw.rc, spec.folds, spec.delta, 11)?;

    println!("groups: mean pi^C {:?}", sim.groups.mean_pi);
    println!("sampled clusters per group and fold:");
    for (l, row) in cf.plan.sampled_in_fold.iter().enumerate() {
        println!("  group {l}: {row:?} (total {})", cf.plan.sampled_in_group[l]);
    }
    for a in &cf.active {
        let mult: Vec<String> = a.multiplier.iter().map(|m| format!("{m:.4}")).collect();
        println!(
            "fold {}: {} active clusters, C = {:?}, multipliers [{}]",
            a.fold + 1,
            a.active_count(),
            a.subsample_sizes,
            mult.join(", ")
        );
    }

    let path = std::env::temp_dir().join("fold_plan.csv");
    cf.write_csv(&draw.rc, &path)?;
    println!("plan written to {}", path.display());
    Ok(())
}
