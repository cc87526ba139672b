//! Monte Carlo orchestration: replications, summaries, the nuisance rate
//! probe and the file outputs of a run.

mod config;
mod probe;
mod report;
mod simulation;

use std::path::Path;

use rayon::prelude::*;

pub use config::{ConfigFile, FeatureChoice, LearnerConfig, RunConfig};
pub use probe::{log_log_slope, nuisance_rate_probe, ProbeConfig, ProbeReport, ProbeRow};
pub use report::{
    emit_report, format_table, read_records, read_summary, summarize, write_records, RepRecord, SummaryRow,
};
pub use simulation::Simulation;

use crate::crossfit::{CrossFit, ProbabilityGroups};
use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::estimators::{design_estimate, nuisance_estimates, EstimateResult, EstimatorId, NuisanceVariant};
use crate::nuisance::{fit_all_folds, Truth};
use crate::rng::derive_seed;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    /// Ȳ.
    pub truth: f64,
    pub results: Vec<EstimateResult>,
    /// Free-form fit diagnostics for the run log.
    pub diagnostics: Vec<String>,
}

/// Nuisance fits used by a set of estimators, in fixed order.
fn variants(ids: &[EstimatorId]) -> Vec<NuisanceVariant> {
    let mut v: Vec<NuisanceVariant> = ids
        .iter()
        .filter(|id| id.kind.uses_nuisances())
        .map(|id| id.nuisances)
        .collect();
    v.sort();
    v.dedup();
    v
}

/// Every estimator in `cfg.estimators` on one observed data set. Nuisance
/// fits are shared by all rows using the same variant.
pub fn estimate_all(
    data: &ObservedData,
    groups: &ProbabilityGroups,
    cfg: &RunConfig,
    seed: u64,
    truth: Option<&Truth>,
) -> Result<(Vec<EstimateResult>, Vec<String>)> {
    let spec = &cfg.scenario;
    let mut diagnostics = vec![format!(
        "nA={} nB={} NA={:.1}",
        data.sample_a_size(),
        data.sample_b_size(),
        data.horvitz_thompson_size()
    )];
    let mut results = Vec::with_capacity(cfg.estimators.len());
    for id in cfg.estimators.iter().filter(|id| !id.kind.uses_nuisances()) {
        results.push(design_estimate(data, id.kind)?);
    }
    for (vi, variant) in variants(&cfg.estimators).into_iter().enumerate() {
        let cross = match variant {
            NuisanceVariant::BoostedCrossFit => true,
            NuisanceVariant::Parametric => cfg.learners.parametric_crossfit,
            NuisanceVariant::BoostedSingle => false,
        };
        let crossfit = if cross {
            CrossFit::build(groups, &data.sampled, spec.folds, spec.delta, seed)?
        } else {
            CrossFit::single(groups, &data.sampled)?
        };
        let nspec = cfg.learners.spec_for(variant, spec);
        let fit = fit_all_folds(data, &crossfit, &nspec, truth, derive_seed(seed, 1 + vi as u64))?;
        let iters: Vec<String> = fit
            .folds
            .iter()
            .map(|f| {
                format!(
                    "{}/{}",
                    f.selection.diagnostics.iterations, f.outcome.diagnostics.iterations
                )
            })
            .collect();
        diagnostics.push(format!(
            "{variant:?}: iterations sel/out per fold [{}], degenerate groups {}",
            iters.join(" "),
            crossfit.degenerate_groups()
        ));
        let kinds: Vec<_> = cfg
            .estimators
            .iter()
            .filter(|id| id.nuisances == variant && id.kind.uses_nuisances())
            .map(|id| id.kind)
            .collect();
        results.extend(nuisance_estimates(
            data,
            (&fit).into(),
            &kinds,
            variant,
            cfg.learners.fluctuation,
        )?);
    }
    // Restore the requested order.
    results.sort_by_key(|r| cfg.estimators.iter().position(|id| *id == r.id));
    Ok((results, diagnostics))
}

/// All requested estimators on replication `rep`, whose seed is derived
/// from `cfg.seed` and `rep` alone.
pub fn run_replication(sim: &Simulation, cfg: &RunConfig, rep: usize) -> Result<Replication> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let draw = sim.draw(seed)?;
    let data = ObservedData::from_draw(&sim.population, &draw);
    let truth = Truth {
        outcome: sim.population.true_outcome().clone(),
        selection: sim.population.true_selection(),
    };
    let (results, diagnostics) = estimate_all(&data, &sim.groups, cfg, seed, Some(&truth))?;
    Ok(Replication {
        rep,
        seed,
        truth: draw.y_bar,
        results,
        diagnostics,
    })
}

/// Estimates from external samples. Cluster probabilities are only known for
/// sampled clusters, so the equal-probability (single group) fold rules apply.
pub fn estimate_external(data: &ObservedData, cfg: &RunConfig) -> Result<(Vec<EstimateResult>, Vec<String>)> {
    data.validate()?;
    let j = data.cluster_pi.len();
    let known: Vec<f64> = data.cluster_pi.iter().copied().filter(|p| p.is_finite()).collect();
    let groups = ProbabilityGroups {
        group_of_cluster: vec![0; j],
        mean_pi: vec![known.iter().sum::<f64>() / known.len().max(1) as f64],
        sizes: vec![j],
    };
    let mut cfg = cfg.clone();
    if !data.sample_a_has_outcomes() {
        cfg.estimators.retain(|id| id.kind.uses_nuisances());
    }
    if cfg.estimators.is_empty() {
        return Err(Error::Config(
            "no estimator applicable: Sample A has no outcomes".into(),
        ));
    }
    estimate_all(data, &groups, &cfg, cfg.seed, None)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Vec<SummaryRow>,
    pub records: Vec<RepRecord>,
    pub failures: Vec<(usize, String)>,
    pub log: Vec<String>,
}

impl RunOutput {
    /// `summary.csv`, `summary.txt`, `replications.csv` and `run.log` in `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        emit_report(&self.summary, dir.join("summary.csv"))?;
        write_records(dir.join("replications.csv"), &self.records)?;
        let log = dir.join("run.log");
        std::fs::write(&log, self.log.join("\n") + "\n").map_err(|e| Error::io(&log, e))
    }
}

pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let sim = Simulation::new(&cfg.scenario)?;
    run_with(&sim, cfg)
}

/// As [`run_scenario`] on an already prepared population.
pub fn run_with(sim: &Simulation, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let outcomes: Vec<Result<Replication>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_replication(sim, cfg, r))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut log = vec![format!(
        "population n={} J={} M={} seed={} reps={}",
        sim.population.len(),
        sim.population.cluster_count(),
        sim.spec().sampled_clusters,
        cfg.seed,
        cfg.reps
    )];
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => {
                log.push(format!(
                    "rep {r} seed {:#018x}: {}",
                    rep.seed,
                    rep.diagnostics.join("; ")
                ));
                records.extend(rep.results.iter().map(|e| RepRecord {
                    rep: r,
                    estimator: e.id.to_string(),
                    point: e.point,
                    se: e.se,
                    truth: rep.truth,
                    covered: e.covers(rep.truth).map(u8::from),
                }));
            }
            Err(e) => {
                log.push(format!("rep {r} FAILED: {e}"));
                failures.push((r, e.to_string()));
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * cfg.reps as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: cfg.reps,
            first: failures[0].1.clone(),
        });
    }
    if !failures.is_empty() {
        log.push(format!(
            "{} of {} replications failed and were excluded",
            failures.len(),
            cfg.reps
        ));
    }
    let ids: Vec<String> = cfg.estimators.iter().map(ToString::to_string).collect();
    let summary = summarize(&records, &ids);
    Ok(RunOutput {
        summary,
        records,
        failures,
        log,
    })
}
