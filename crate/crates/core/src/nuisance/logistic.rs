//! Logit-linear selection model fitted by maximising a pseudo-likelihood.
//!
//! With `rb` the Sample-B indicator and `aw = R^A/π^A` (already adjusted by
//! the active-subset multiplier), the objectives are
//!
//! * full:        Σ rb·log p + (aw − rb)·log(1 − p)
//! * approximate: Σ rb·log p + aw·log(1 − p)
//!
//! Both have the form Σ w₁ log p + (t − w₁) log(1 − p) with t = aw (full) or
//! t = aw + rb (approximate), so the gradient is Σ (w₁ − t·p)·x and the
//! Hessian −Σ t·p(1 − p)·x xᵀ, negative semi-definite because t ≥ 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{expit, logit};
use crate::nuisance::linear::check_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PseudoLikelihoodKind {
    Full,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// On max |gradient| relative to the total weight Σ t.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-10,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonFit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    /// Objective after each accepted step, starting at the initial value.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PseudoLikelihood {
    rows: Vec<Vec<f64>>,
    positive: Vec<f64>,
    total: Vec<f64>,
}

/// |logit| beyond which a fitted probability is treated as exactly 0 or 1.
/// Largest change in any linear predictor that a converged Newton step may
/// still make. Under separation the steps stay O(1) while the gradient
/// vanishes.
const STEP_TOL_ETA: f64 = 1e-6;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl PseudoLikelihood {
    /// `rows` are feature vectors (intercept included by the caller).
    pub fn new(rows: Vec<Vec<f64>>, in_b: &[bool], a_weight: &[f64], kind: PseudoLikelihoodKind) -> Self {
        let positive: Vec<f64> = in_b.iter().map(|&b| f64::from(u8::from(b))).collect();
        let total = positive
            .iter()
            .zip(a_weight)
            .map(|(&rb, &aw)| match kind {
                PseudoLikelihoodKind::Full => aw,
                PseudoLikelihoodKind::Approximate => aw + rb,
            })
            .collect();
        Self { rows, positive, total }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn eta(&self, r: &[f64], beta: &[f64]) -> f64 {
        r.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    fn row_value(&self, i: usize, beta: &[f64]) -> f64 {
        let (w1, t) = (self.positive[i], self.total[i]);
        let eta = self.eta(&self.rows[i], beta);
        -w1 * softplus(-eta) - (t - w1) * softplus(eta)
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        (0..self.rows.len()).map(|i| self.row_value(i, beta)).sum()
    }

    /// objective(to) − objective(from), summed row by row so that changes
    /// far below the objective's own magnitude stay resolvable.
    pub fn objective_change(&self, from: &[f64], to: &[f64]) -> f64 {
        (0..self.rows.len())
            .map(|i| self.row_value(i, to) - self.row_value(i, from))
            .sum()
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (r, (&w1, &t)) in self.rows.iter().zip(self.positive.iter().zip(&self.total)) {
            let resid = w1 - t * expit(self.eta(r, beta));
            for (gj, xj) in g.iter_mut().zip(r) {
                *gj += resid * xj;
            }
        }
        g
    }

    pub fn hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let p = self.dim();
        let mut h = DMatrix::zeros(p, p);
        for (r, &t) in self.rows.iter().zip(&self.total) {
            let pr = expit(self.eta(r, beta));
            let w = t * pr * (1.0 - pr);
            for a in 0..p {
                for b in a..p {
                    h[(a, b)] -= w * r[a] * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }

    /// A stationary point with fitted probabilities numerically 0 or 1 is
    /// the signature of separation: the maximiser lies at infinity.
    fn finish(
        coef: Vec<f64>,
        iterations: usize,
        objective: f64,
        gradient_norm: f64,
        trace: Vec<f64>,
    ) -> Result<NewtonFit> {
        Ok(NewtonFit {
            coef,
            iterations,
            objective,
            gradient_norm,
            trace,
        })
    }

    fn total_weight(&self) -> f64 {
        self.total.iter().sum()
    }

    /// Newton–Raphson with step halving; every accepted step increases the
    /// objective. `intercept` marks a constant column for the starting value.
    pub fn maximize(&self, names: &[String], intercept: Option<usize>, opts: NewtonOptions) -> Result<NewtonFit> {
        let p = self.dim();
        let scale = self.total_weight().max(1.0);
        let positives: f64 = self.positive.iter().sum();
        if positives == 0.0 {
            return Err(Error::EmptySample(
                "no Sample-B units to fit the selection model".into(),
            ));
        }
        if self.total_weight() <= positives * 1e-12 {
            return Err(Error::EmptySample(
                "no Sample-A weight to fit the selection model".into(),
            ));
        }
        let mut gram = DMatrix::zeros(p, p);
        for (r, &t) in self.rows.iter().zip(&self.total) {
            for a in 0..p {
                for b in 0..p {
                    gram[(a, b)] += t * r[a] * r[b];
                }
            }
        }
        check_rank(&gram, names)?;

        let mut beta = vec![0.0; p];
        if let Some(k) = intercept {
            let rate = (positives / self.total_weight()).clamp(1e-12, 1.0 - 1e-12);
            beta[k] = logit(rate);
        }
        let mut value = self.objective(&beta);
        let mut trace = vec![value];
        let norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let mut gnorm = f64::INFINITY;
        for iter in 0..opts.max_iter {
            let g = self.gradient(&beta);
            gnorm = norm(&g);
            let neg_h = -self.hessian(&beta);
            let step = match neg_h.cholesky() {
                Some(ch) => ch.solve(&DVector::from_column_slice(&g)),
                None => return Err(Error::Separation { gradient_norm: gnorm }),
            };
            let eta_step = self
                .rows
                .iter()
                .fold(0.0f64, |m, r| m.max(self.eta(r, step.as_slice()).abs()));
            if gnorm <= opts.tolerance * scale && eta_step <= STEP_TOL_ETA {
                return Self::finish(beta, iter, value, gnorm, trace);
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let change = self.objective_change(&beta, &cand);
                if change.is_finite() && change >= 0.0 {
                    beta = cand;
                    value += change;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // No representable ascent left: at the optimum up to rounding
                // if the step is negligible, otherwise running off to infinity.
                if gnorm <= 1e-6 * scale && eta_step <= 1e-4 {
                    return Self::finish(beta, iter, value, gnorm, trace);
                }
                return Err(Error::Separation { gradient_norm: gnorm });
            }
            trace.push(value);
        }
        if gnorm <= opts.tolerance * scale {
            // Vanishing gradient with steps that never shrink.
            return Err(Error::Separation { gradient_norm: gnorm });
        }
        Err(Error::NonConvergence {
            solver: "pseudo-likelihood Newton",
            iterations: opts.max_iter,
            gradient_norm: gnorm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("b{j}")).collect()
    }

    fn intercept_fixture() -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
        // Five Sample-B units and Sample-A weights summing to 50.
        let mut rows = vec![vec![1.0]; 5];
        let mut in_b = vec![true; 5];
        let mut aw = vec![0.0; 5];
        for w in [10.0, 15.0, 25.0] {
            rows.push(vec![1.0]);
            in_b.push(false);
            aw.push(w);
        }
        (rows, in_b, aw)
    }

    #[test]
    fn intercept_only_full_solution() {
        let (rows, in_b, aw) = intercept_fixture();
        let pl = PseudoLikelihood::new(rows, &in_b, &aw, PseudoLikelihoodKind::Full);
        let fit = pl.maximize(&names(1), Some(0), NewtonOptions::default()).unwrap();
        assert!((expit(fit.coef[0]) - 5.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_approximate_solution() {
        let (rows, in_b, aw) = intercept_fixture();
        let pl = PseudoLikelihood::new(rows, &in_b, &aw, PseudoLikelihoodKind::Approximate);
        let fit = pl.maximize(&names(1), Some(0), NewtonOptions::default()).unwrap();
        assert!((expit(fit.coef[0]) - 5.0 / 55.0).abs() < 1e-12);
    }

    fn random_fixture(seed: u64, kind: PseudoLikelihoodKind) -> PseudoLikelihood {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let mut rows = Vec::new();
        let mut in_b = Vec::new();
        let mut aw = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.random_range(-1.0..1.0);
            let x2: f64 = rng.random_range(-2.0..2.0);
            rows.push(vec![1.0, x1, x2, x1 * x2]);
            let b = rng.random_bool(0.4);
            let a = !b || rng.random_bool(0.2);
            in_b.push(b);
            aw.push(if a { rng.random_range(2.0..30.0) } else { 0.0 });
        }
        PseudoLikelihood::new(rows, &in_b, &aw, kind)
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        for (seed, kind) in [
            (1, PseudoLikelihoodKind::Full),
            (2, PseudoLikelihoodKind::Approximate),
            (3, PseudoLikelihoodKind::Full),
        ] {
            let pl = random_fixture(seed, kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..10 {
                let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = pl.gradient(&beta);
                let h = pl.hessian(&beta);
                for j in 0..4 {
                    let step = 1e-5;
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[j] += step;
                    dn[j] -= step;
                    let fd = (pl.objective(&up) - pl.objective(&dn)) / (2.0 * step);
                    assert!((fd - g[j]).abs() / g[j].abs().max(1.0) < 1e-6);
                    let gu = pl.gradient(&up);
                    let gd = pl.gradient(&dn);
                    for k in 0..4 {
                        let fd = (gu[k] - gd[k]) / (2.0 * step);
                        assert!((fd - h[(k, j)]).abs() / h[(k, j)].abs().max(1.0) < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn objective_never_decreases() {
        let pl = random_fixture(7, PseudoLikelihoodKind::Full);
        let fit = pl.maximize(&names(4), Some(0), NewtonOptions::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.gradient_norm <= 1e-10 * pl.total_weight());
    }

    #[test]
    fn separation_is_an_error() {
        // B units all at x = 1, A units all at x = 0: the slope diverges.
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, f64::from(u8::from(i < 10))]).collect();
        let in_b: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let aw: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 5.0 }).collect();
        let pl = PseudoLikelihood::new(rows, &in_b, &aw, PseudoLikelihoodKind::Approximate);
        let err = pl.maximize(&names(2), Some(0), NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err}");
    }
}
