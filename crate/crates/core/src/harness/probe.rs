//! Oracle errors of the nuisance learners as the number of sampled clusters
//! grows.
//!
//! For each M in the grid the population is regenerated with J scaled in
//! proportion to M, so Sample B grows with Sample A. Errors are averaged over
//! a fixed random subset of the population and over replications:
//! E_X[(π^B₀/π̂ᴮ − 1)²] and E_X[(m̂ − m₀)²].

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::crossfit::CrossFit;
use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::formula::Covariates;
use crate::harness::Simulation;
use crate::nuisance::{fit_all_folds, LearnerSpec, NuisanceSpec, Truth};
use crate::popgen::{generate_population, ScenarioSpec};
use crate::rng::{derive_seed, stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub scenario: ScenarioSpec,
    pub grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub learner: LearnerSpec,
    /// Size of the population subset the errors are averaged over.
    pub eval_points: usize,
}

impl ProbeConfig {
    pub fn new(scenario: ScenarioSpec, learner: LearnerSpec) -> Self {
        Self {
            scenario,
            grid: vec![50, 100, 150, 300],
            reps: 10,
            seed: 1,
            learner,
            eval_points: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub sampled_clusters: usize,
    pub clusters: usize,
    pub pi_error: f64,
    pub m_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Least-squares slope of log error on log M.
    pub pi_slope: f64,
    pub m_slope: f64,
}

impl ProbeReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>5} {:>6} {:>12} {:>12}\n", "M", "J", "pi_error", "m_error");
        for r in &self.rows {
            s += &format!(
                "{:>5} {:>6} {:>12.4e} {:>12.4e}\n",
                r.sampled_clusters, r.clusters, r.pi_error, r.m_error
            );
        }
        s += &format!("slope (log-log): pi {:.3}, m {:.3}\n", self.pi_slope, self.m_slope);
        s
    }
}

pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn nuisance_rate_probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.grid.len() < 2 || cfg.reps == 0 {
        return Err(Error::Config(
            "rate probe needs at least two grid points and one replication".into(),
        ));
    }
    let base = &cfg.scenario;
    let spec = NuisanceSpec::both(cfg.learner.clone());
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for &m in &cfg.grid {
        let mut s = base.clone();
        s.sampled_clusters = m;
        s.clusters = ((m as f64) * base.clusters as f64 / base.sampled_clusters as f64).round() as usize;
        let sim = Simulation::from_population(generate_population(&s, s.seed)?)?;
        let pop = &sim.population;
        let truth = Truth {
            outcome: pop.true_outcome().clone(),
            selection: pop.true_selection(),
        };
        let mut rng = stream(derive_seed(cfg.seed, m as u64), Stream::Probe);
        let eval: Vec<(Covariates, f64, f64)> = sample(&mut rng, pop.len(), cfg.eval_points.min(pop.len()))
            .into_iter()
            .map(|i| {
                let p = &pop.individuals[i];
                (p.covariates, p.true_sel_prob, p.true_mean)
            })
            .collect();
        let errors: Vec<(f64, f64)> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64)> {
                let seed = derive_seed(derive_seed(cfg.seed, m as u64), r as u64);
                let draw = sim.draw(seed)?;
                let data = ObservedData::from_draw(pop, &draw);
                let cf = CrossFit::single(&sim.groups, &draw.rc)?;
                let fit = fit_all_folds(&data, &cf, &spec, Some(&truth), seed)?;
                let f = &fit.folds[0];
                let k = eval.len() as f64;
                let (pe, me) = eval.iter().fold((0.0, 0.0), |(pe, me), (x, pi0, m0)| {
                    let ratio = pi0 / f.pi_b(x) - 1.0;
                    let d = f.m(x) - m0;
                    (pe + ratio * ratio, me + d * d)
                });
                Ok((pe / k, me / k))
            })
            .collect::<Result<_>>()?;
        let n = errors.len() as f64;
        rows.push(ProbeRow {
            sampled_clusters: m,
            clusters: s.clusters,
            pi_error: errors.iter().map(|e| e.0).sum::<f64>() / n,
            m_error: errors.iter().map(|e| e.1).sum::<f64>() / n,
        });
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.sampled_clusters as f64).collect();
    let pi: Vec<f64> = rows.iter().map(|r| r.pi_error).collect();
    let me: Vec<f64> = rows.iter().map(|r| r.m_error).collect();
    Ok(ProbeReport {
        pi_slope: log_log_slope(&ms, &pi),
        m_slope: log_log_slope(&ms, &me),
        rows,
    })
}
