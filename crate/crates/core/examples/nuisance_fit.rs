//! Fit π̂ᴮ and m̂ on one replication with a parametric and a boosted learner
//! and compare them to the true functions.

use dml_survey::crossfit::CrossFit;
use dml_survey::data::ObservedData;
use dml_survey::formula::expit;
use dml_survey::harness::{LearnerConfig, Simulation};
use dml_survey::nuisance::{fit_all_folds, NuisanceSpec, Truth};
use dml_survey::popgen::ScenarioSpec;

fn main() -> dml_survey::Result<()> {
    let spec = ScenarioSpec::preset(3)?;
    let sim = Simulation::new(&spec)?;
    let draw = sim.draw(3)?;
    let data = ObservedData::from_draw(&sim.population, &draw);
    let truth = Truth {
        outcome: sim.population.true_outcome().clone(),
        selection: sim.population.true_selection(),
    };
    let learners = LearnerConfig::default();
    let crossfit = CrossFit::build(&sim.groups, &data.sampled, spec.folds, spec.delta, 3)?;

    let runs: [(&str, NuisanceSpec); 2] = [
        ("parametric (main effects)", learners.parametric(&spec)),
        ("boosted", learners.boosted()),
    ];
    for (name, nspec) in runs {
        let fit = fit_all_folds(&data, &crossfit, &nspec, Some(&truth), 3)?;
        let (mut pi_err, mut m_err, mut count) = (0.0, 0.0, 0.0);
        for (i, u) in data.units.iter().enumerate() {
            let pi0 = expit(truth.selection.eval(&u.x));
            pi_err += (pi0 / fit.pi_b[i] - 1.0).powi(2);
            m_err += (fit.m[i] - truth.outcome.eval(&u.x)).powi(2);
            count += 1.0;
        }
        println!("{name}");
        for (k, f) in fit.folds.iter().enumerate() {
            println!(
                "  fold {}: selection {} rows / {} iterations, outcome {} rows / {} iterations",
                k + 1,
                f.selection.diagnostics.training_rows,
                f.selection.diagnostics.iterations,
                f.outcome.diagnostics.training_rows,
                f.outcome.diagnostics.iterations
            );
        }
        println!("  mean (pi0/pi_hat - 1)^2 = {:.4}", pi_err / count);
        println!("  mean (m_hat - m0)^2     = {:.4}", m_err / count);
    }
    Ok(())
}
