use crate::crossfit::{build_groups, ProbabilityGroups};
use crate::design::{cluster_inclusion_probs, draw_sample_a, ClusterDesign, ClusterSampler, DesignKind, SampleDraw};
use crate::error::Result;
use crate::popgen::{draw_outcomes, generate_population, FinitePopulation, ScenarioSpec};
use crate::rng::{self, Stream};
use crate::selection::draw_sample_b;

/// A fixed population with its cluster design prepared for repeated draws.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub population: FinitePopulation,
    /// π^C for every cluster.
    pub pi_c: Vec<f64>,
    pub groups: ProbabilityGroups,
    sampler: ClusterSampler,
}

impl Simulation {
    /// Generates the population from the scenario's own seed.
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        Self::from_population(generate_population(spec, spec.seed)?)
    }

    pub fn from_population(population: FinitePopulation) -> Result<Self> {
        let spec = &population.scenario;
        let design = match spec.design {
            DesignKind::Sampford => {
                let pi = cluster_inclusion_probs(&population.size_measures(), spec.sampled_clusters)?;
                ClusterDesign::new(DesignKind::Sampford, spec.sampled_clusters, pi)?
            }
            DesignKind::Srswor => ClusterDesign::srswor(population.cluster_count(), spec.sampled_clusters)?,
        };
        let groups = build_groups(&design.target_pi, spec.groups)?;
        Ok(Self {
            pi_c: design.target_pi.clone(),
            sampler: design.sampler(),
            groups,
            population,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.population.scenario
    }

    /// One replication: Sample A, Sample B and outcomes, each from its own
    /// stream of `rep_seed`.
    pub fn draw(&self, rep_seed: u64) -> Result<SampleDraw> {
        let mut rng = rng::stream(rep_seed, Stream::SampleA);
        let rc = self.sampler.draw(&mut rng)?;
        let a = draw_sample_a(
            &self.population,
            &rc,
            &self.pi_c,
            self.spec().households_sampled,
            &mut rng,
        )?;
        let rb = draw_sample_b(&self.population, rep_seed);
        let outcomes = draw_outcomes(&self.population, rep_seed);
        Ok(SampleDraw {
            rc,
            pi_c: self.pi_c.clone(),
            ra: a.ra,
            pi_a: a.pi_a,
            pi_a_given_c: a.pi_a_given_c,
            rb,
            y: outcomes.y,
            y_bar: outcomes.mean,
        })
    }
}
