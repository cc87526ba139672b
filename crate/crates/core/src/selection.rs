//! Sample B: Bernoulli self-selection with probability π^B₀(X).

use rand::Rng;

use crate::error::{Error, Result};
use crate::formula::expit;
use crate::popgen::FinitePopulation;
use crate::rng::{self, Stream};

/// R^Bᵢ ~ Bernoulli(π^B₀(Xᵢ)) independently.
pub fn draw_sample_b(pop: &FinitePopulation, seed: u64) -> Vec<bool> {
    let mut rng = rng::stream(seed, Stream::SampleB);
    bernoulli_indicators(pop.individuals.iter().map(|p| p.true_sel_prob), &mut rng)
}

pub fn bernoulli_indicators<I, R>(probs: I, rng: &mut R) -> Vec<bool>
where
    I: IntoIterator<Item = f64>,
    R: Rng + ?Sized,
{
    probs.into_iter().map(|p| rng.random::<f64>() < p).collect()
}

/// Intercept α with Σ expit(α + ηᵢ) = `target`, by bisection.
pub fn solve_intercept(slopes: &[f64], target: f64) -> Result<f64> {
    let n = slopes.len() as f64;
    if !(target > 0.0 && target < n) {
        return Err(Error::Config(format!(
            "target Sample-B size {target} must lie in (0, {n})"
        )));
    }
    let size = |a: f64| slopes.iter().map(|&e| expit(a + e)).sum::<f64>();
    let (mut lo, mut hi) = (-50.0, 50.0);
    while size(lo) > target {
        lo -= 50.0;
    }
    while size(hi) < target {
        hi += 50.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if size(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
