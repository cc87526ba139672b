//! Finite population of clusters, households and individuals.
//!
//! A population is generated once per scenario and then frozen; every
//! replication reuses it and only re-draws outcomes and samples.

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::DesignKind;
use crate::error::{Error, Result};
use crate::formula::{expit, Covariates, LinearPredictor};
use crate::rng::{self, Stream};
use crate::selection;

/// Household sizes are 1, 2 or 3.
pub const HOUSEHOLD_SIZES: usize = 3;

/// How the intercept of the true selection model is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionIntercept {
    Fixed(f64),
    /// Solve for the intercept giving this expected Sample-B size.
    TargetSize(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// 1..=6 for the built-in scenarios, `None` for custom ones.
    pub id: Option<u8>,
    /// J.
    pub clusters: usize,
    /// M, clusters in Sample A.
    pub sampled_clusters: usize,
    /// Households drawn per sampled cluster.
    pub households_sampled: usize,
    /// K, cross-fitting folds.
    pub folds: usize,
    /// Active-subset slack in (0, 1).
    pub delta: f64,
    /// L, cluster probability groups used when the design is unequal.
    pub groups: usize,
    /// m₀(X).
    pub outcome: LinearPredictor,
    /// logit π^B₀(X); its intercept is replaced by `selection_intercept`.
    pub selection: LinearPredictor,
    pub selection_intercept: SelectionIntercept,
    pub household_mean: f64,
    pub household_variance: f64,
    /// Standard deviation of Y given X (1 in every built-in scenario).
    pub outcome_sd: f64,
    pub design: DesignKind,
    /// Seed of the frozen population.
    pub seed: u64,
}

const DEFAULT_POPULATION_SEED: u64 = 20_250_811;

impl ScenarioSpec {
    /// One of the six built-in scenarios.
    pub fn preset(id: u8) -> Result<Self> {
        let linear = || {
            LinearPredictor::new(
                0.0,
                vec![
                    (1.0, crate::formula::Term::Main(0)),
                    (1.0, crate::formula::Term::Main(1)),
                    (2.0, crate::formula::Term::Main(2)),
                    (1.0, crate::formula::Term::Main(3)),
                ],
            )
        };
        let linear_sel =
            |alpha: f64| -> LinearPredictor { format!("{alpha} + 0.5*x1 + x2 + 0.5*x3 + x4").parse().unwrap() };
        let nonlinear: LinearPredictor = "0.5*x1 + 0.5*x2 + 2*x3 + x4 + 2*x1*x3 + x2^2".parse().unwrap();
        let nonlinear_sel: LinearPredictor = "-6.4 + 0.25*x1 + 0.5*x2 + 0.5*x3 + x4 + x1*x3 + 0.5*x2^2"
            .parse()
            .unwrap();

        let (outcome, selection, m, n_house) = match id {
            1 => (linear(), linear_sel(-6.2), 150, 20),
            2 => (linear(), linear_sel(-7.5), 150, 20),
            3 => (nonlinear.clone(), nonlinear_sel.clone(), 150, 20),
            4 => (nonlinear.clone(), nonlinear_sel.clone(), 50, 20),
            5 => (nonlinear.clone(), nonlinear_sel.clone(), 150, 5),
            6 => (nonlinear.clone(), nonlinear_sel.clone(), 50, 5),
            _ => return Err(Error::Config(format!("unknown scenario {id}; expected 1..=6"))),
        };
        let alpha = selection.intercept;
        Ok(Self {
            id: Some(id),
            clusters: 1000,
            sampled_clusters: m,
            households_sampled: n_house,
            folds: 5,
            delta: 0.01,
            groups: 4,
            outcome,
            selection,
            selection_intercept: SelectionIntercept::Fixed(alpha),
            household_mean: 100.0,
            household_variance: 400.0,
            outcome_sd: 1.0,
            design: DesignKind::Sampford,
            seed: DEFAULT_POPULATION_SEED,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sampled_clusters == 0 || self.sampled_clusters >= self.clusters {
            return fail(format!(
                "need 0 < M < J, got M = {}, J = {}",
                self.sampled_clusters, self.clusters
            ));
        }
        if self.folds < 2 {
            return fail(format!("need K >= 2 folds, got {}", self.folds));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("need 0 < delta < 1, got {}", self.delta));
        }
        if self.groups == 0 {
            return fail("need L >= 1 probability groups".into());
        }
        if self.households_sampled == 0 {
            return fail("need at least one household per sampled cluster".into());
        }
        if !(self.household_mean > 0.0) || self.household_variance < self.household_mean {
            return fail(format!(
                "household counts need mean > 0 and variance >= mean, got {} and {}",
                self.household_mean, self.household_variance
            ));
        }
        if !(self.outcome_sd >= 0.0) {
            return fail(format!("outcome sd must be >= 0, got {}", self.outcome_sd));
        }
        if let SelectionIntercept::TargetSize(t) = self.selection_intercept {
            if !(t > 0.0) {
                return fail(format!("target Sample-B size must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Individual {
    pub cluster: u32,
    /// Household index within its cluster.
    pub household: u32,
    /// q ∈ {1, 2, 3}.
    pub household_size: u8,
    pub covariates: Covariates,
    /// m₀(X).
    pub true_mean: f64,
    /// π^B₀(X).
    pub true_sel_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// (H₁, H₂, H₃).
    pub households_by_size: [u32; HOUSEHOLD_SIZES],
    pub members: Range<usize>,
    /// Total households, the size measure used for cluster sampling.
    pub size_measure: f64,
}

impl Cluster {
    pub fn households(&self) -> usize {
        self.households_by_size.iter().map(|&h| h as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Individuals of household `h`; households are laid out by size class.
    pub fn household_members(&self, h: usize) -> Range<usize> {
        let [h1, h2, _] = self.households_by_size.map(|v| v as usize);
        let offset = if h < h1 {
            h
        } else if h < h1 + h2 {
            h1 + 2 * (h - h1)
        } else {
            h1 + 2 * h2 + 3 * (h - h1 - h2)
        };
        let size = household_size_of(h, &self.households_by_size);
        let start = self.members.start + offset;
        start..start + size
    }
}

fn household_size_of(h: usize, by_size: &[u32; HOUSEHOLD_SIZES]) -> usize {
    let [h1, h2, _] = by_size.map(|v| v as usize);
    if h < h1 {
        1
    } else if h < h1 + h2 {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone)]
pub struct FinitePopulation {
    pub clusters: Vec<Cluster>,
    pub individuals: Vec<Individual>,
    pub scenario: ScenarioSpec,
    /// Intercept of logit π^B₀ actually used.
    pub selection_intercept: f64,
}

impl FinitePopulation {
    /// n.
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// J.
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn true_selection(&self) -> LinearPredictor {
        self.scenario.selection.with_intercept(self.selection_intercept)
    }

    pub fn true_outcome(&self) -> &LinearPredictor {
        &self.scenario.outcome
    }

    pub fn size_measures(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.size_measure).collect()
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.individuals[i].cluster as usize
    }

    /// Population mean of m₀.
    pub fn mean_true_mean(&self) -> f64 {
        self.individuals.iter().map(|p| p.true_mean).sum::<f64>() / self.len() as f64
    }

    /// Σ π^B₀, the expected Sample-B size.
    pub fn expected_sample_b_size(&self) -> f64 {
        self.individuals.iter().map(|p| p.true_sel_prob).sum()
    }

    /// Write one row per individual.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.individuals {
            w.serialize(PopulationRow::from(p))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Rebuild a population from [`FinitePopulation::write_csv`] output.
    ///
    /// Rows must be grouped by cluster (ids `0..J` in order) and, inside a
    /// cluster, laid out by household size. Stored m₀ and π^B₀ are checked
    /// against `scenario`'s formulas.
    pub fn read_csv(path: impl AsRef<Path>, scenario: ScenarioSpec) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let rows: Vec<PopulationRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Self::from_rows(&rows, scenario)
    }

    fn from_rows(rows: &[PopulationRow], scenario: ScenarioSpec) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("population file: {m}"));
        let mut clusters: Vec<Cluster> = Vec::new();
        let mut individuals = Vec::with_capacity(rows.len());
        let mut start = 0;
        while start < rows.len() {
            let id = rows[start].cluster_id;
            if id != clusters.len() {
                return Err(bad(format!(
                    "cluster ids must be 0..J in order, found {id} at row {start}"
                )));
            }
            let end = start + rows[start..].iter().take_while(|r| r.cluster_id == id).count();
            let mut counts = [0usize; HOUSEHOLD_SIZES];
            let mut last_q = 1;
            for r in &rows[start..end] {
                if !(1..=3).contains(&r.q) || r.q < last_q {
                    return Err(bad(format!(
                        "cluster {id}: household sizes must be 1..=3 in ascending blocks"
                    )));
                }
                last_q = r.q;
                counts[r.q as usize - 1] += 1;
            }
            let mut by_size = [0u32; HOUSEHOLD_SIZES];
            for q in 0..HOUSEHOLD_SIZES {
                if counts[q] % (q + 1) != 0 {
                    return Err(bad(format!(
                        "cluster {id}: {} members in size-{} households",
                        counts[q],
                        q + 1
                    )));
                }
                by_size[q] = (counts[q] / (q + 1)) as u32;
            }
            let cluster = Cluster {
                id,
                households_by_size: by_size,
                members: start..end,
                size_measure: by_size.iter().map(|&h| h as f64).sum(),
            };
            for (offset, r) in rows[start..end].iter().enumerate() {
                let h = household_index_at(offset, &by_size);
                individuals.push(Individual {
                    cluster: id as u32,
                    household: h as u32,
                    household_size: r.q,
                    covariates: [r.x1, r.x2, r.x3, r.x4],
                    true_mean: r.m0,
                    true_sel_prob: r.pib0,
                });
            }
            clusters.push(cluster);
            start = end;
        }
        let selection_intercept = resolve_intercept(&scenario, &individuals)?;
        let pop = FinitePopulation {
            clusters,
            individuals,
            scenario,
            selection_intercept,
        };
        let sel = pop.true_selection();
        for (i, p) in pop.individuals.iter().enumerate() {
            let m0 = pop.scenario.outcome.eval(&p.covariates);
            let pib = expit(sel.eval(&p.covariates));
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
            if !close(m0, p.true_mean) || !close(pib, p.true_sel_prob) {
                return Err(bad(format!(
                    "row {i}: stored m0/piB0 disagree with the scenario formulas"
                )));
            }
        }
        Ok(pop)
    }
}

fn household_index_at(offset: usize, by_size: &[u32; HOUSEHOLD_SIZES]) -> usize {
    let [h1, h2, _] = by_size.map(|v| v as usize);
    if offset < h1 {
        offset
    } else if offset < h1 + 2 * h2 {
        h1 + (offset - h1) / 2
    } else {
        h1 + h2 + (offset - h1 - 2 * h2) / 3
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PopulationRow {
    cluster_id: usize,
    q: u8,
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
    m0: f64,
    #[serde(rename = "piB0")]
    pib0: f64,
}

impl From<&Individual> for PopulationRow {
    fn from(p: &Individual) -> Self {
        let [x1, x2, x3, x4] = p.covariates;
        Self {
            cluster_id: p.cluster as usize,
            q: p.household_size,
            x1,
            x2,
            x3,
            x4,
            m0: p.true_mean,
            pib0: p.true_sel_prob,
        }
    }
}

/// Negative binomial with the given mean and variance, as a gamma-Poisson
/// mixture with r = μ²/(σ² − μ). Falls back to Poisson when σ² = μ.
#[derive(Debug, Clone, Copy)]
pub struct HouseholdCounts {
    mean: f64,
    shape: Option<f64>,
}

impl HouseholdCounts {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0) || variance < mean {
            return Err(Error::Config(format!(
                "negative binomial needs mean > 0 and variance >= mean, got {mean}, {variance}"
            )));
        }
        let excess = variance - mean;
        let shape = (excess > 1e-12 * mean).then(|| mean * mean / excess);
        Ok(Self { mean, shape })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let lambda = match self.shape {
            Some(r) => Gamma::new(r, self.mean / r).unwrap().sample(rng),
            None => self.mean,
        };
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).unwrap().sample(rng) as u32
    }
}

/// Generate the frozen population for `spec` from `seed`.
pub fn generate_population(spec: &ScenarioSpec, seed: u64) -> Result<FinitePopulation> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Stream::Population);
    let counts = HouseholdCounts::new(spec.household_mean, spec.household_variance)?;

    let mut by_size: Vec<[u32; HOUSEHOLD_SIZES]> = Vec::with_capacity(spec.clusters);
    for _ in 0..spec.clusters {
        // An empty cluster has no sampling measure; redraw it.
        loop {
            let h = [
                counts.sample(&mut rng),
                counts.sample(&mut rng),
                counts.sample(&mut rng),
            ];
            if h.iter().any(|&v| v > 0) {
                by_size.push(h);
                break;
            }
        }
    }

    let log_h: Vec<f64> = by_size
        .iter()
        .map(|h| (h.iter().map(|&v| v as f64).sum::<f64>()).ln())
        .collect();
    let mean = log_h.iter().sum::<f64>() / log_h.len() as f64;
    let sd = (log_h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / log_h.len() as f64).sqrt();
    let z: Vec<f64> = log_h
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect();
    let effect = Normal::new(0.0, 0.2).unwrap();
    let u: Vec<f64> = (0..spec.clusters).map(|_| effect.sample(&mut rng)).collect();

    let mut clusters = Vec::with_capacity(spec.clusters);
    let mut individuals = Vec::new();
    for (j, h) in by_size.iter().enumerate() {
        let start = individuals.len();
        let mut household = 0u32;
        for (qi, &count) in h.iter().enumerate() {
            let q = qi + 1;
            let shift = q as f64 - 2.0;
            let cont_mean = 0.3 * z[j] + 0.1 * shift + u[j];
            let bin_prob = expit(0.3 * z[j] + 0.2 * shift + u[j]);
            for _ in 0..count {
                for _ in 0..q {
                    let n1: f64 = rng.sample(StandardNormal);
                    let n2: f64 = rng.sample(StandardNormal);
                    let x = [
                        cont_mean + n1,
                        cont_mean + n2,
                        f64::from(u8::from(rng.random_bool(bin_prob))),
                        f64::from(u8::from(rng.random_bool(bin_prob))),
                    ];
                    individuals.push(Individual {
                        cluster: j as u32,
                        household,
                        household_size: q as u8,
                        covariates: x,
                        true_mean: spec.outcome.eval(&x),
                        true_sel_prob: 0.0,
                    });
                }
                household += 1;
            }
        }
        clusters.push(Cluster {
            id: j,
            households_by_size: *h,
            members: start..individuals.len(),
            size_measure: h.iter().map(|&v| v as f64).sum(),
        });
    }

    let selection_intercept = resolve_intercept(spec, &individuals)?;
    let sel = spec.selection.with_intercept(selection_intercept);
    for p in &mut individuals {
        p.true_sel_prob = expit(sel.eval(&p.covariates));
        if !(p.true_sel_prob > 0.0 && p.true_sel_prob < 1.0) {
            return Err(Error::Config(format!(
                "selection probability {} outside (0, 1); formula is too extreme",
                p.true_sel_prob
            )));
        }
    }

    Ok(FinitePopulation {
        clusters,
        individuals,
        scenario: spec.clone(),
        selection_intercept,
    })
}

fn resolve_intercept(spec: &ScenarioSpec, individuals: &[Individual]) -> Result<f64> {
    match spec.selection_intercept {
        SelectionIntercept::Fixed(a) => Ok(a),
        SelectionIntercept::TargetSize(target) => {
            let slopes: Vec<f64> = individuals
                .iter()
                .map(|p| spec.selection.eval_slope(&p.covariates))
                .collect();
            selection::solve_intercept(&slopes, target)
        }
    }
}

/// One replication's outcomes and their finite-population mean Ȳ.
#[derive(Debug, Clone)]
pub struct Outcomes {
    pub y: Vec<f64>,
    pub mean: f64,
}

/// Yᵢ ~ Normal(m₀(Xᵢ), σ²) independently.
pub fn draw_outcomes(pop: &FinitePopulation, seed: u64) -> Outcomes {
    let mut rng = rng::stream(seed, Stream::Outcomes);
    let sd = pop.scenario.outcome_sd;
    let y: Vec<f64> = pop
        .individuals
        .iter()
        .map(|p| {
            let e: f64 = rng.sample(StandardNormal);
            p.true_mean + sd * e
        })
        .collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Outcomes { y, mean }
}
