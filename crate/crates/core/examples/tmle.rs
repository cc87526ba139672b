//! The TMLE fluctuation step: per-fold ε, the solved score, and the two
//! TMLE estimates next to DR1 on the same fit.

use dml_survey::crossfit::CrossFit;
use dml_survey::data::ObservedData;
use dml_survey::estimators::{
    dr1, fluctuation_score, tmle1, tmle2, tmle_fluctuate, FluctuationKind, NuisanceVariant, NuisanceView,
};
use dml_survey::harness::{LearnerConfig, Simulation};
use dml_survey::nuisance::fit_all_folds;
use dml_survey::popgen::ScenarioSpec;

fn main() -> dml_survey::Result<()> {
    let spec = ScenarioSpec::preset(1)?;
    let sim = Simulation::new(&spec)?;
    let draw = sim.draw(5)?;
    let data = ObservedData::from_draw(&sim.population, &draw);
    let crossfit = CrossFit::build(&sim.groups, &data.sampled, spec.folds, spec.delta, 5)?;
    let fit = fit_all_folds(&data, &crossfit, &LearnerConfig::default().parametric(&spec), None, 5)?;
    let view = NuisanceView::from(&fit);

    println!("Ybar  = {:.5}", draw.y_bar);
    report(&data, view, FluctuationKind::Linear)?;

    // The logit fluctuation needs Y and m̂ in (0, 1): rescale both.
    let ys: Vec<f64> = data.units.iter().filter_map(|u| u.y).collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
    let (lo, hi) = (lo - 1.0, hi + 1.0);
    let scale = |v: f64| ((v - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
    let mut unit_data = data.clone();
    unit_data.units.iter_mut().for_each(|u| u.y = u.y.map(scale));
    let m01: Vec<f64> = fit.m.iter().map(|&m| scale(m)).collect();
    let view01 = NuisanceView { m: &m01, ..view };
    println!("on (Y - {lo:.2}) / {:.2}:", hi - lo);
    report(&unit_data, view01, FluctuationKind::Logit)?;
    Ok(())
}

fn report(data: &ObservedData, view: NuisanceView<'_>, kind: FluctuationKind) -> dml_survey::Result<()> {
    let variant = NuisanceVariant::Parametric;
    {
        let fl = tmle_fluctuate(data, view, kind)?;
        println!("{kind:?} fluctuation");
        for (k, eps) in fl.epsilon.iter().enumerate() {
            println!(
                "  fold {}: epsilon = {eps:+.5}, score = {:+.2e}",
                k + 1,
                fluctuation_score(data, view, &fl, k)
            );
        }
        println!("  DR1   = {:.5}", dr1(data, view, variant)?.point);
        println!("  TMLE1 = {:.5}", tmle1(data, view, &fl, variant)?.point);
        println!("  TMLE2 = {:.5}", tmle2(data, view, &fl, variant)?.point);
    }
    Ok(())
}
