//! Generate the population of a built-in scenario and describe it.
//!
//! cargo run --release --example population -- 3

use dml_survey::popgen::{generate_population, ScenarioSpec};

fn main() -> dml_survey::Result<()> {
    let id: u8 = std::env::args()
        .nth(1)
        .map_or(Ok(1), |s| s.parse())
        .expect("scenario id 1-6");
    let spec = ScenarioSpec::preset(id)?;
    let pop = generate_population(&spec, spec.seed)?;

    let sizes = pop.size_measures();
    let (lo, hi) = sizes
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    println!("scenario {id}: n = {}, J = {}", pop.len(), pop.cluster_count());
    println!("households per cluster: min {lo}, max {hi}");
    println!("selection intercept: {:.3}", pop.selection_intercept);
    println!("expected |B| = {:.0}", pop.expected_sample_b_size());
    println!("mean of m0 over the population = {:.4}", pop.mean_true_mean());

    let mut by_size = [0usize; 3];
    for p in &pop.individuals {
        by_size[p.household_size as usize - 1] += 1;
    }
    println!("individuals in households of size 1/2/3: {by_size:?}");
    Ok(())
}
