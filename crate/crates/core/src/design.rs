//! Sample A: cluster-level without-replacement designs and the two-stage
//! household/individual design inside sampled clusters.
//!
//! Sampford draws use the classical characterisation: the first unit is
//! drawn with probability π_j / M, the other M − 1 with replacement with
//! probability ∝ π_j / (1 − π_j), and the draw is kept iff all M units are
//! distinct. Conditional on being distinct, the M − 1 with-replacement
//! draws form a conditional-Poisson sample, which is drawn exactly by a
//! list-sequential pass over precomputed log elementary symmetric
//! polynomials. The only rejection left is "first unit also appears in the
//! rest", which happens with probability ≈ M/J instead of the ≈ e^{-M²/2J}
//! acceptance rate of the naive scheme.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::popgen::FinitePopulation;
use crate::rng::{self, Stream};

/// Clamp value used when a proportional-to-size probability reaches 1.
pub const PI_CLAMP: f64 = 1.0 - 1e-9;

/// Default cap on Sampford rejection attempts.
pub const DEFAULT_ATTEMPT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    Srswor,
    Sampford,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srswor" => Ok(DesignKind::Srswor),
            "sampford" => Ok(DesignKind::Sampford),
            other => Err(Error::Config(format!("unknown design `{other}`"))),
        }
    }
}

/// π^C_j = M·h_j / Σh, with values reaching 1 clamped to 1 − 1e-9 and the
/// remaining mass renormalised until no value exceeds the clamp.
pub fn cluster_inclusion_probs(size_measures: &[f64], sample_size: usize) -> Result<Vec<f64>> {
    let j = size_measures.len();
    if sample_size == 0 || sample_size >= j {
        return Err(Error::Design(format!("need 0 < M < J, got M = {sample_size}, J = {j}")));
    }
    if let Some(bad) = size_measures.iter().position(|&h| !(h > 0.0) || !h.is_finite()) {
        return Err(Error::Design(format!(
            "cluster {bad} has non-positive size measure {}",
            size_measures[bad]
        )));
    }
    let m = sample_size as f64;
    let mut clamped = vec![false; j];
    let mut pi = vec![0.0; j];
    loop {
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let free_mass = m - n_clamped as f64 * PI_CLAMP;
        let free_total: f64 = size_measures
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(h, _)| h)
            .sum();
        let mut changed = false;
        for k in 0..j {
            if clamped[k] {
                pi[k] = PI_CLAMP;
            } else {
                pi[k] = free_mass * size_measures[k] / free_total;
                if pi[k] >= 1.0 {
                    clamped[k] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(pi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDesign {
    pub kind: DesignKind,
    /// M.
    pub sample_size: usize,
    /// π^C_j for every cluster.
    pub target_pi: Vec<f64>,
}

impl ClusterDesign {
    pub fn new(kind: DesignKind, sample_size: usize, target_pi: Vec<f64>) -> Result<Self> {
        let j = target_pi.len();
        if sample_size == 0 || sample_size >= j {
            return Err(Error::Design(format!("need 0 < M < J, got M = {sample_size}, J = {j}")));
        }
        if let Some(k) = target_pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Design(format!(
                "cluster {k} has inclusion probability {} outside (0, 1)",
                target_pi[k]
            )));
        }
        let total: f64 = target_pi.iter().sum();
        if (total - sample_size as f64).abs() > 1e-9 * (sample_size as f64).max(1.0) {
            return Err(Error::Design(format!(
                "inclusion probabilities sum to {total}, expected M = {sample_size}"
            )));
        }
        if kind == DesignKind::Srswor {
            let first = target_pi[0];
            if target_pi.iter().any(|&p| (p - first).abs() > 1e-12) {
                return Err(Error::Design("SRSWOR needs equal inclusion probabilities".into()));
            }
        }
        Ok(Self {
            kind,
            sample_size,
            target_pi,
        })
    }

    /// Equal-probability design, π^C = M/J.
    pub fn srswor(clusters: usize, sample_size: usize) -> Result<Self> {
        let p = sample_size as f64 / clusters as f64;
        Self::new(DesignKind::Srswor, sample_size, vec![p; clusters])
    }

    pub fn sampler(&self) -> ClusterSampler {
        ClusterSampler::new(self)
    }
}

/// A design prepared for repeated draws.
#[derive(Debug, Clone)]
pub struct ClusterSampler {
    clusters: usize,
    sample_size: usize,
    inner: SamplerKind,
    attempt_cap: usize,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Srswor,
    Sampford {
        first: WeightedIndex<f64>,
        log_odds: Vec<f64>,
        /// log e_r(w_k, …, w_{J−1}) at `[k * (rest + 1) + r]`, k = 0..=J.
        log_esp: Vec<f64>,
        rest: usize,
    },
}

impl ClusterSampler {
    fn new(design: &ClusterDesign) -> Self {
        let j = design.target_pi.len();
        let m = design.sample_size;
        let inner = match design.kind {
            DesignKind::Srswor => SamplerKind::Srswor,
            DesignKind::Sampford => {
                let log_odds: Vec<f64> = design.target_pi.iter().map(|&p| p.ln() - (-p).ln_1p()).collect();
                let rest = m - 1;
                let width = rest + 1;
                let mut log_esp = vec![f64::NEG_INFINITY; (j + 1) * width];
                log_esp[j * width] = 0.0;
                for k in (0..j).rev() {
                    for r in 0..width {
                        let skip = log_esp[(k + 1) * width + r];
                        let take = if r > 0 {
                            log_odds[k] + log_esp[(k + 1) * width + r - 1]
                        } else {
                            f64::NEG_INFINITY
                        };
                        log_esp[k * width + r] = log_add_exp(skip, take);
                    }
                }
                SamplerKind::Sampford {
                    first: WeightedIndex::new(&design.target_pi).expect("validated probabilities"),
                    log_odds,
                    log_esp,
                    rest,
                }
            }
        };
        Self {
            clusters: j,
            sample_size: m,
            inner,
            attempt_cap: DEFAULT_ATTEMPT_CAP,
        }
    }

    pub fn with_attempt_cap(mut self, cap: usize) -> Self {
        self.attempt_cap = cap;
        self
    }

    /// R^C indicators with exactly M ones.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<bool>> {
        let mut rc = vec![false; self.clusters];
        match &self.inner {
            SamplerKind::Srswor => {
                for k in index::sample(rng, self.clusters, self.sample_size) {
                    rc[k] = true;
                }
                Ok(rc)
            }
            SamplerKind::Sampford {
                first,
                log_odds,
                log_esp,
                rest,
            } => {
                let width = rest + 1;
                for _ in 0..self.attempt_cap {
                    rc.iter_mut().for_each(|v| *v = false);
                    let lead = first.sample(rng);
                    let mut need = *rest;
                    let mut clash = false;
                    for k in 0..self.clusters {
                        if need == 0 {
                            break;
                        }
                        let log_p = log_odds[k] + log_esp[(k + 1) * width + need - 1] - log_esp[k * width + need];
                        if rng.random::<f64>() < log_p.exp() {
                            if k == lead {
                                clash = true;
                                break;
                            }
                            rc[k] = true;
                            need -= 1;
                        }
                    }
                    if !clash {
                        rc[lead] = true;
                        return Ok(rc);
                    }
                }
                Err(Error::Degenerate(format!(
                    "Sampford sampler rejected {} consecutive draws",
                    self.attempt_cap
                )))
            }
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

/// One Sampford draw of cluster indicators.
pub fn sampford_draw(design: &ClusterDesign, seed: u64) -> Result<Vec<bool>> {
    if design.kind != DesignKind::Sampford {
        return Err(Error::Design("sampford_draw called on a non-Sampford design".into()));
    }
    design.sampler().draw(&mut rng::stream(seed, Stream::SampleA))
}

/// Sample-A membership and inclusion probabilities for every individual.
#[derive(Debug, Clone)]
pub struct SampleA {
    pub ra: Vec<bool>,
    /// π^A = π^C · π^{A|C}.
    pub pi_a: Vec<f64>,
    pub pi_a_given_c: Vec<f64>,
}

impl SampleA {
    pub fn size(&self) -> usize {
        self.ra.iter().filter(|&&r| r).count()
    }
}

/// Second stage: in each sampled cluster, `n_house` households by SRSWOR and
/// one member uniformly from each. π^{A|C}ᵢ = (n_house / H_j) / qᵢ.
pub fn draw_sample_a<R: Rng + ?Sized>(
    pop: &FinitePopulation,
    rc: &[bool],
    pi_c: &[f64],
    n_house: usize,
    rng: &mut R,
) -> Result<SampleA> {
    let n = pop.len();
    let mut ra = vec![false; n];
    let mut pi_a = vec![0.0; n];
    let mut pi_a_given_c = vec![0.0; n];
    for c in &pop.clusters {
        let households = c.households();
        if rc[c.id] && households < n_house {
            return Err(Error::Design(format!(
                "cluster {} has {households} households, fewer than n_house = {n_house}",
                c.id
            )));
        }
        let frac = (n_house as f64 / households as f64).min(1.0);
        for i in c.members.clone() {
            let q = pop.individuals[i].household_size as f64;
            pi_a_given_c[i] = frac / q;
            pi_a[i] = pi_c[c.id] * pi_a_given_c[i];
        }
        if rc[c.id] {
            for h in index::sample(rng, households, n_house) {
                let members = c.household_members(h);
                let pick = members.start + rng.random_range(0..members.len());
                ra[pick] = true;
            }
        }
    }
    Ok(SampleA { ra, pi_a, pi_a_given_c })
}

/// Everything observed (and, in simulation, unobserved) in one replication.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub rc: Vec<bool>,
    pub pi_c: Vec<f64>,
    pub ra: Vec<bool>,
    pub pi_a: Vec<f64>,
    pub pi_a_given_c: Vec<f64>,
    pub rb: Vec<bool>,
    pub y: Vec<f64>,
    /// Ȳ, the estimand of this replication.
    pub y_bar: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popgen::{generate_population, ScenarioSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Sampford pmf by enumeration: p(s) ∝ Σ_{i∈s}(1−π_i) Π_{j∈s} π_j/(1−π_j).
    fn sampford_pmf(pi: &[f64], m: usize) -> Vec<(Vec<usize>, f64)> {
        let j = pi.len();
        let mut out = Vec::new();
        for mask in 0u32..(1 << j) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let s: Vec<usize> = (0..j).filter(|k| mask & (1 << k) != 0).collect();
            let prod: f64 = s.iter().map(|&k| pi[k] / (1.0 - pi[k])).product();
            let lead: f64 = s.iter().map(|&k| 1.0 - pi[k]).sum();
            out.push((s, prod * lead));
        }
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        out.iter_mut().for_each(|(_, p)| *p /= total);
        out
    }

    #[test]
    fn enumerated_pmf_reproduces_targets() {
        let pi = [0.9, 0.6, 0.5];
        let pmf = sampford_pmf(&pi, 2);
        for k in 0..3 {
            let incl: f64 = pmf.iter().filter(|(s, _)| s.contains(&k)).map(|(_, p)| p).sum();
            assert!((incl - pi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn sampford_matches_pmf_on_small_fixture() {
        let pi = vec![0.9, 0.6, 0.5];
        let design = ClusterDesign::new(DesignKind::Sampford, 2, pi.clone()).unwrap();
        let sampler = design.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 20_000;
        let pmf = sampford_pmf(&pi, 2);
        let mut counts = vec![0usize; pmf.len()];
        let mut incl = [0usize; 3];
        for _ in 0..draws {
            let rc = sampler.draw(&mut rng).unwrap();
            assert_eq!(rc.iter().filter(|&&r| r).count(), 2);
            let s: Vec<usize> = (0..3).filter(|&k| rc[k]).collect();
            let idx = pmf.iter().position(|(t, _)| *t == s).unwrap();
            counts[idx] += 1;
            for k in s {
                incl[k] += 1;
            }
        }
        for (k, &c) in incl.iter().enumerate() {
            let p = pi[k];
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * sigma, "unit {k}");
        }
        for ((_, p), &c) in pmf.iter().zip(&counts) {
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn equal_probabilities_are_symmetric() {
        let design = ClusterDesign::new(DesignKind::Sampford, 2, vec![0.5; 4]).unwrap();
        let sampler = design.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 20_000;
        let mut incl = [0usize; 4];
        for _ in 0..draws {
            for (k, r) in sampler.draw(&mut rng).unwrap().into_iter().enumerate() {
                incl[k] += usize::from(r);
            }
        }
        let sigma = (0.25 / draws as f64).sqrt();
        for c in incl {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn probability_one_is_rejected() {
        let err = ClusterDesign::new(DesignKind::Sampford, 2, vec![1.0, 0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::Design(_)));
    }

    #[test]
    fn attempt_cap_is_enforced() {
        // Two units of three with one dominant unit: clashes are frequent, so
        // a cap of one attempt fails quickly for some seed.
        let design = ClusterDesign::new(DesignKind::Sampford, 2, vec![0.98, 0.51, 0.51]).unwrap();
        let sampler = design.sampler().with_attempt_cap(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let failures = (0..200).filter(|_| sampler.draw(&mut rng).is_err()).count();
        assert!(failures > 0);
    }

    #[test]
    fn sampford_on_scenario_scale() {
        let pop = generate_population(&ScenarioSpec::preset(1).unwrap(), 1).unwrap();
        let pi = cluster_inclusion_probs(&pop.size_measures(), 150).unwrap();
        assert!((pi.iter().sum::<f64>() - 150.0).abs() < 1e-9);
        let design = ClusterDesign::new(DesignKind::Sampford, 150, pi).unwrap();
        let rc = sampford_draw(&design, 5).unwrap();
        assert_eq!(rc.iter().filter(|&&r| r).count(), 150);
    }

    #[test]
    fn inclusion_probs_uniform() {
        let pi = cluster_inclusion_probs(&[3.0; 10], 5).unwrap();
        assert!(pi.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn inclusion_probs_clamp_and_renormalise() {
        // (1,1,2) with M = 2 gives (0.5, 0.5, 1.0); the last clamps to
        // 1 − 1e-9 and the others share the remaining 1 + 1e-9 equally.
        let pi = cluster_inclusion_probs(&[1.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(pi[2], PI_CLAMP);
        let expected = (2.0 - PI_CLAMP) / 2.0;
        assert!((pi[0] - expected).abs() < 1e-15);
        assert!((pi[1] - expected).abs() < 1e-15);
        assert!((pi.iter().sum::<f64>() - 2.0).abs() < 1e-12);

        assert!(cluster_inclusion_probs(&[1.0, 1.0], 2).is_err());
        assert!(cluster_inclusion_probs(&[1.0, 0.0, 1.0], 1).is_err());
    }

    #[test]
    fn srswor_subsets_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let design = ClusterDesign::srswor(6, 3).unwrap();
        let sampler = design.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 20_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let rc = sampler.draw(&mut rng).unwrap();
            let mask: u32 = rc.iter().enumerate().map(|(k, &r)| u32::from(r) << k).sum();
            *counts.entry(mask).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 20);
        let expected = draws as f64 / 20.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
    }

    fn small_pop() -> FinitePopulation {
        let mut s = ScenarioSpec::preset(1).unwrap();
        s.clusters = 30;
        s.sampled_clusters = 6;
        generate_population(&s, 3).unwrap()
    }

    #[test]
    fn sample_a_size_and_probabilities() {
        let pop = small_pop();
        let pi = cluster_inclusion_probs(&pop.size_measures(), 6).unwrap();
        let design = ClusterDesign::new(DesignKind::Sampford, 6, pi.clone()).unwrap();
        let rc = sampford_draw(&design, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = draw_sample_a(&pop, &rc, &pi, 20, &mut rng).unwrap();
        assert_eq!(a.size(), 6 * 20);
        for (i, p) in pop.individuals.iter().enumerate() {
            let c = &pop.clusters[p.cluster as usize];
            let expected = 20.0 / c.households() as f64 / p.household_size as f64;
            assert!((a.pi_a_given_c[i] - expected).abs() < 1e-15);
            assert!((a.pi_a[i] - pi[c.id] * expected).abs() < 1e-15);
            if a.ra[i] {
                assert!(rc[c.id]);
            }
            assert!(a.pi_a[i] > 0.0 && a.pi_a[i] <= 1.0);
        }
        // At most one member per household.
        for c in &pop.clusters {
            for h in 0..c.households() {
                assert!(c.household_members(h).filter(|&i| a.ra[i]).count() <= 1);
            }
        }
    }

    #[test]
    fn conditional_probability_formula() {
        // H_j = 100, q = 2, n_house = 20 → 0.2 · 0.5 = 0.1.
        let frac: f64 = 20.0 / 100.0;
        assert!((frac / 2.0 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn too_few_households_is_reported() {
        let pop = small_pop();
        let pi = vec![0.2; 30];
        let mut rc = vec![false; 30];
        rc[4] = true;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = draw_sample_a(&pop, &rc, &pi, 100_000, &mut rng).unwrap_err();
        assert!(err.to_string().contains("cluster 4"));
    }

    #[test]
    fn horvitz_thompson_population_size() {
        let pop = small_pop();
        let pi = cluster_inclusion_probs(&pop.size_measures(), 6).unwrap();
        let design = ClusterDesign::new(DesignKind::Sampford, 6, pi.clone()).unwrap();
        let sampler = design.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 500;
        let est: Vec<f64> = (0..reps)
            .map(|_| {
                let rc = sampler.draw(&mut rng).unwrap();
                let a = draw_sample_a(&pop, &rc, &pi, 20, &mut rng).unwrap();
                a.ra.iter()
                    .zip(&a.pi_a)
                    .filter(|(r, _)| **r)
                    .map(|(_, p)| 1.0 / p)
                    .sum::<f64>()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / reps as f64;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let n = pop.len() as f64;
        assert!((mean - n).abs() < 3.0 * sd / (reps as f64).sqrt(), "{mean} vs {n}");
    }

    #[test]
    fn census_within_cluster() {
        let pop = small_pop();
        let c = &pop.clusters[0];
        let n_house = c.households();
        let mut rc = vec![false; 30];
        rc[0] = true;
        let pi = vec![0.2; 30];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = draw_sample_a(&pop, &rc, &pi, n_house, &mut rng).unwrap();
        for i in c.members.clone() {
            let q = pop.individuals[i].household_size as f64;
            assert!((a.pi_a_given_c[i] - 1.0 / q).abs() < 1e-15);
        }
    }

    proptest::proptest! {
        #[test]
        fn inclusion_probs_are_valid(
            sizes in proptest::collection::vec(1.0f64..500.0, 5..60),
            frac in 0.05f64..0.7,
        ) {
            let m = ((sizes.len() as f64 * frac) as usize).max(1);
            let pi = cluster_inclusion_probs(&sizes, m).unwrap();
            proptest::prop_assert!((pi.iter().sum::<f64>() - m as f64).abs() < 1e-9);
            proptest::prop_assert!(pi.iter().all(|&p| p > 0.0 && p < 1.0));
        }

        #[test]
        fn draws_have_fixed_size_and_nested_samples(seed in 0u64..100_000, m in 2usize..8) {
            let pop = small_pop();
            let pi = cluster_inclusion_probs(&pop.size_measures(), m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for design in [
                ClusterDesign::new(DesignKind::Sampford, m, pi.clone()).unwrap(),
                ClusterDesign::srswor(pop.cluster_count(), m).unwrap(),
            ] {
                let rc = design.sampler().draw(&mut rng).unwrap();
                proptest::prop_assert_eq!(rc.iter().filter(|&&r| r).count(), m);
                let a = draw_sample_a(&pop, &rc, &design.target_pi, 5, &mut rng).unwrap();
                for (i, p) in pop.individuals.iter().enumerate() {
                    proptest::prop_assert!(a.pi_a[i] > 0.0 && a.pi_a[i] <= 1.0);
                    if a.ra[i] {
                        proptest::prop_assert!(rc[p.cluster as usize]);
                    }
                }
            }
        }
    }
}
