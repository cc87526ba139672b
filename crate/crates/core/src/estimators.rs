//! Point estimators of the finite-population mean, the TMLE fluctuation and
//! the plug-in standard errors.
//!
//! All sums run over the observed units (Sample A ∪ Sample B); every other
//! individual contributes zero to every estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::formula::{expit, logit};
use crate::nuisance::NuisanceFit;

/// Normal quantile for 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    HT,
    Haj,
    Naive,
    DR1,
    DR2clw,
    DR2,
    TMLE1,
    TMLE2,
}

impl EstimatorKind {
    pub fn uses_nuisances(self) -> bool {
        !matches!(self, EstimatorKind::HT | EstimatorKind::Haj | EstimatorKind::Naive)
    }

    fn label(self) -> &'static str {
        match self {
            EstimatorKind::HT => "HT",
            EstimatorKind::Haj => "Haj",
            EstimatorKind::Naive => "naive",
            EstimatorKind::DR1 => "DR1",
            EstimatorKind::DR2clw => "DR2clw",
            EstimatorKind::DR2 => "DR2",
            EstimatorKind::TMLE1 => "TMLE1",
            EstimatorKind::TMLE2 => "TMLE2",
        }
    }
}

/// Which nuisance fit an estimator row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NuisanceVariant {
    /// Parametric models fitted once on all data.
    Parametric,
    /// Boosted trees with K-fold cross-fitting.
    BoostedCrossFit,
    /// Boosted trees fitted once on all data.
    BoostedSingle,
}

impl NuisanceVariant {
    fn suffix(self) -> &'static str {
        match self {
            NuisanceVariant::Parametric => "",
            NuisanceVariant::BoostedCrossFit => ".gbm5",
            NuisanceVariant::BoostedSingle => ".gbm1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EstimatorId {
    pub kind: EstimatorKind,
    pub nuisances: NuisanceVariant,
}

impl EstimatorId {
    pub const fn new(kind: EstimatorKind, nuisances: NuisanceVariant) -> Self {
        Self { kind, nuisances }
    }

    /// The standard roster, in table order.
    pub fn all() -> Vec<EstimatorId> {
        use EstimatorKind::*;
        use NuisanceVariant::*;
        let mut ids: Vec<_> = [HT, Haj, Naive, DR1, DR2clw, DR2, TMLE1, TMLE2]
            .into_iter()
            .map(|k| Self::new(k, Parametric))
            .collect();
        for v in [BoostedCrossFit, BoostedSingle] {
            ids.extend([DR1, DR2, TMLE1, TMLE2].into_iter().map(|k| Self::new(k, v)));
        }
        ids
    }

    pub fn parse_list(s: &str) -> Result<Vec<EstimatorId>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.label(), self.nuisances.suffix())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, variant) = match s.split_once('.') {
            None => (s, NuisanceVariant::Parametric),
            Some((h, "gbm5")) => (h, NuisanceVariant::BoostedCrossFit),
            Some((h, "gbm1")) => (h, NuisanceVariant::BoostedSingle),
            Some(_) => return Err(Error::Config(format!("unknown estimator '{s}'"))),
        };
        let kind = [
            EstimatorKind::HT,
            EstimatorKind::Haj,
            EstimatorKind::Naive,
            EstimatorKind::DR1,
            EstimatorKind::DR2clw,
            EstimatorKind::DR2,
            EstimatorKind::TMLE1,
            EstimatorKind::TMLE2,
        ]
        .into_iter()
        .find(|k| k.label() == head)
        .ok_or_else(|| Error::Config(format!("unknown estimator '{s}'")))?;
        if !kind.uses_nuisances() && variant != NuisanceVariant::Parametric {
            return Err(Error::Config(format!("estimator '{head}' takes no nuisance suffix")));
        }
        Ok(Self::new(kind, variant))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub id: EstimatorId,
    pub point: f64,
    pub se: Option<f64>,
}

impl EstimateResult {
    fn new(id: EstimatorId, point: f64, se: Option<f64>) -> Self {
        Self { id, point, se }
    }

    /// 95% normal interval.
    pub fn ci(&self) -> Option<(f64, f64)> {
        self.se.map(|s| (self.point - Z_95 * s, self.point + Z_95 * s))
    }

    pub fn covers(&self, truth: f64) -> Option<bool> {
        self.ci().map(|(lo, hi)| lo <= truth && truth <= hi)
    }
}

/// Per-unit nuisance values aligned with `ObservedData::units`.
#[derive(Debug, Clone, Copy)]
pub struct NuisanceView<'a> {
    pub pi_b: &'a [f64],
    pub m: &'a [f64],
    pub fold_of_unit: &'a [usize],
    pub folds: usize,
}

impl<'a> From<&'a NuisanceFit> for NuisanceView<'a> {
    fn from(fit: &'a NuisanceFit) -> Self {
        Self {
            pi_b: &fit.pi_b,
            m: &fit.m,
            fold_of_unit: &fit.fold_of_unit,
            folds: fit.folds.len(),
        }
    }
}

fn n_of(data: &ObservedData) -> f64 {
    data.population_size as f64
}

fn a_outcomes(data: &ObservedData) -> Result<Vec<(usize, f64)>> {
    data.units
        .iter()
        .enumerate()
        .filter(|(_, u)| u.in_a)
        .map(|(i, u)| {
            u.y.map(|y| (i, y))
                .ok_or_else(|| Error::Config("A-only estimators need Y for every Sample-A unit".into()))
        })
        .collect()
}

fn ha_size(data: &ObservedData) -> Result<f64> {
    let na = data.horvitz_thompson_size();
    if na > 0.0 {
        Ok(na)
    } else {
        Err(Error::EmptySample("Sample A is empty".into()))
    }
}

/// Cluster-level with-replacement variance of n⁻¹ Σ R^A g/π^A for per-unit
/// values `g` (only Sample-A entries are read).
pub fn cluster_variance(data: &ObservedData, g: &[f64]) -> Result<f64> {
    let m = data.sampled_clusters();
    if m < 2 {
        return Err(Error::Variance(format!("{m} sampled cluster(s); need at least 2")));
    }
    let mut e = vec![0.0; data.cluster_pi.len()];
    for (u, gi) in data.units.iter().zip(g) {
        if u.in_a {
            e[u.cluster] += gi / u.pi_a_given_c;
        }
    }
    let mf = m as f64;
    let t: Vec<f64> = (0..e.len())
        .filter(|&j| data.sampled[j])
        .map(|j| e[j] * mf / data.cluster_pi[j])
        .collect();
    let tbar = t.iter().sum::<f64>() / mf;
    let ss: f64 = t.iter().map(|v| (v - tbar) * (v - tbar)).sum();
    let n = n_of(data);
    Ok(ss / (mf * (mf - 1.0)) / (n * n))
}

/// n⁻² Σ R^B (1 − π̂) π̂⁻² (Y − m̂)².
pub fn sample_b_variance(data: &ObservedData, pi_b: &[f64], m: &[f64]) -> f64 {
    let n = n_of(data);
    data.units
        .iter()
        .zip(pi_b.iter().zip(m))
        .filter(|(u, _)| u.in_b)
        .map(|(u, (&p, &mi))| {
            let r = u.y.unwrap_or(mi) - mi;
            (1.0 - p) / (p * p) * r * r
        })
        .sum::<f64>()
        / (n * n)
}

pub fn ht(data: &ObservedData) -> Result<EstimateResult> {
    let ay = a_outcomes(data)?;
    let n = n_of(data);
    let point = ay.iter().map(|&(i, y)| y / data.units[i].pi_a).sum::<f64>() / n;
    let mut g = vec![0.0; data.units.len()];
    for &(i, y) in &ay {
        g[i] = y;
    }
    let v = cluster_variance(data, &g)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::HT, NuisanceVariant::Parametric),
        point,
        Some(v.sqrt()),
    ))
}

pub fn hajek(data: &ObservedData) -> Result<EstimateResult> {
    let ay = a_outcomes(data)?;
    let na = ha_size(data)?;
    let point = ay.iter().map(|&(i, y)| y / data.units[i].pi_a).sum::<f64>() / na;
    let mut g = vec![0.0; data.units.len()];
    for &(i, y) in &ay {
        g[i] = y - point;
    }
    let scale = n_of(data) / na;
    let v = cluster_variance(data, &g)? * scale * scale;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::Haj, NuisanceVariant::Parametric),
        point,
        Some(v.sqrt()),
    ))
}

pub fn naive(data: &ObservedData) -> Result<EstimateResult> {
    let ay = a_outcomes(data)?;
    if ay.is_empty() {
        return Err(Error::EmptySample("Sample A is empty".into()));
    }
    let point = ay.iter().map(|&(_, y)| y).sum::<f64>() / ay.len() as f64;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::Naive, NuisanceVariant::Parametric),
        point,
        None,
    ))
}

/// n⁻¹ Σ [R^B Y/π̂ + (R^A/π^A − R^B/π̂) m̂].
pub fn dr1_point(data: &ObservedData, pi_b: &[f64], m: &[f64]) -> f64 {
    let total: f64 = data
        .units
        .iter()
        .zip(pi_b.iter().zip(m))
        .map(|(u, (&p, &mi))| {
            let b = if u.in_b { (u.y.unwrap_or(mi) - mi) / p } else { 0.0 };
            b + u.a_weight() * mi
        })
        .sum();
    total / n_of(data)
}

/// Hájek mean of `g` over Sample A.
fn a_mean(data: &ObservedData, g: &[f64]) -> f64 {
    let (num, den) = data
        .units
        .iter()
        .zip(g)
        .fold((0.0, 0.0), |(s, w), (u, gi)| (s + u.a_weight() * gi, w + u.a_weight()));
    num / den
}

fn dr_se(data: &ObservedData, pi_b: &[f64], m: &[f64], centered: bool) -> Result<f64> {
    let g: Vec<f64> = if centered {
        let mbar = a_mean(data, m);
        m.iter().map(|v| v - mbar).collect()
    } else {
        m.to_vec()
    };
    Ok((cluster_variance(data, &g)? + sample_b_variance(data, pi_b, m)).sqrt())
}

fn check_b(data: &ObservedData) -> Result<()> {
    if data.sample_b_size() == 0 {
        Err(Error::EmptySample("Sample B is empty".into()))
    } else {
        Ok(())
    }
}

pub fn dr1(data: &ObservedData, fit: NuisanceView<'_>, variant: NuisanceVariant) -> Result<EstimateResult> {
    check_b(data)?;
    let point = dr1_point(data, fit.pi_b, fit.m);
    let se = dr_se(data, fit.pi_b, fit.m, false)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::DR1, variant),
        point,
        Some(se),
    ))
}

/// θ̂₁ · n / N̂ᴬ.
pub fn dr2(data: &ObservedData, fit: NuisanceView<'_>, variant: NuisanceVariant) -> Result<EstimateResult> {
    check_b(data)?;
    let na = ha_size(data)?;
    let point = dr1_point(data, fit.pi_b, fit.m) * n_of(data) / na;
    let se = dr_se(data, fit.pi_b, fit.m, true)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::DR2, variant),
        point,
        Some(se),
    ))
}

/// Σ R^A m̂/π^A ÷ N̂ᴬ + Σ R^B (Y − m̂)/π̂ ÷ N̂ᴮ, with N̂ᴮ = Σ R^B/π̂.
pub fn dr2clw(data: &ObservedData, fit: NuisanceView<'_>, variant: NuisanceVariant) -> Result<EstimateResult> {
    check_b(data)?;
    let na = ha_size(data)?;
    let (mut first, mut resid, mut nb) = (0.0, 0.0, 0.0);
    for (u, (&p, &mi)) in data.units.iter().zip(fit.pi_b.iter().zip(fit.m)) {
        first += u.a_weight() * mi;
        if u.in_b {
            resid += (u.y.unwrap_or(mi) - mi) / p;
            nb += 1.0 / p;
        }
    }
    let point = first / na + resid / nb;
    let se = dr_se(data, fit.pi_b, fit.m, true)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::DR2clw, variant),
        point,
        Some(se),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FluctuationKind {
    /// m̂ + ε/π̂ᴮ.
    #[default]
    Linear,
    /// expit(logit m̂ + ε/π̂ᴮ); needs Y and m̂ in (0, 1).
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuation {
    pub kind: FluctuationKind,
    /// ε̂_k per fold.
    pub epsilon: Vec<f64>,
    /// m̂*(X) for each observed unit.
    pub m_star: Vec<f64>,
}

fn fluctuated(kind: FluctuationKind, m: f64, p: f64, eps: f64) -> f64 {
    match kind {
        FluctuationKind::Linear => m + eps / p,
        FluctuationKind::Logit => expit(logit(m) + eps / p),
    }
}

/// Σ_{i∈fold k} R^B (Y − m̂*)/π̂ᴮ, the estimating function ε̂_k solves.
pub fn fluctuation_score(data: &ObservedData, fit: NuisanceView<'_>, fl: &Fluctuation, k: usize) -> f64 {
    data.units
        .iter()
        .enumerate()
        .filter(|(i, u)| u.in_b && fit.fold_of_unit[*i] == k)
        .map(|(i, u)| (u.y.unwrap_or(fl.m_star[i]) - fl.m_star[i]) / fit.pi_b[i])
        .sum()
}

pub fn tmle_fluctuate(data: &ObservedData, fit: NuisanceView<'_>, kind: FluctuationKind) -> Result<Fluctuation> {
    let mut epsilon = Vec::with_capacity(fit.folds);
    for k in 0..fit.folds {
        // (h, m̂, Y) for the fold's Sample-B units, h = 1/π̂ᴮ.
        let rows: Vec<(f64, f64, f64)> = data
            .units
            .iter()
            .enumerate()
            .filter(|(i, u)| u.in_b && fit.fold_of_unit[*i] == k)
            .map(|(i, u)| (1.0 / fit.pi_b[i], fit.m[i], u.y.unwrap_or(fit.m[i])))
            .collect();
        if rows.is_empty() {
            return Err(Error::fold(k + 1, "no Sample-B units to fit the fluctuation"));
        }
        let eps = match kind {
            FluctuationKind::Linear => linear_epsilon(&rows),
            FluctuationKind::Logit => logit_epsilon(&rows).map_err(|e| Error::fold(k + 1, e.to_string()))?,
        };
        epsilon.push(eps);
    }
    if kind == FluctuationKind::Logit && fit.m.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::Config("logit fluctuation needs m̂ in (0, 1)".into()));
    }
    let m_star = fit
        .m
        .iter()
        .zip(fit.pi_b)
        .zip(fit.fold_of_unit)
        .map(|((&m, &p), &k)| fluctuated(kind, m, p, epsilon[k]))
        .collect();
    Ok(Fluctuation { kind, epsilon, m_star })
}

/// Σ h r / Σ h², refined by one Newton step on the residual score.
fn linear_epsilon(rows: &[(f64, f64, f64)]) -> f64 {
    let hh: f64 = rows.iter().map(|(h, _, _)| h * h).sum();
    let eps = rows.iter().map(|(h, m, y)| h * (y - m)).sum::<f64>() / hh;
    let score: f64 = rows.iter().map(|(h, m, y)| h * (y - (m + eps * h))).sum();
    eps + score / hh
}

/// Offset logistic regression of Y on h with offset logit m̂ and no intercept.
fn logit_epsilon(rows: &[(f64, f64, f64)]) -> Result<f64> {
    if rows
        .iter()
        .any(|&(_, m, y)| !(y > 0.0 && y < 1.0 && m > 0.0 && m < 1.0))
    {
        return Err(Error::Config("logit fluctuation needs Y and m̂ in (0, 1)".into()));
    }
    let off: Vec<f64> = rows.iter().map(|&(_, m, _)| logit(m)).collect();
    let ll = |eps: f64| -> f64 {
        rows.iter()
            .zip(&off)
            .map(|(&(h, _, y), &o)| {
                let eta = o + eps * h;
                let sp = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
                -y * sp(-eta) - (1.0 - y) * sp(eta)
            })
            .sum()
    };
    let score = |eps: f64| -> f64 {
        rows.iter()
            .zip(&off)
            .map(|(&(h, _, y), &o)| h * (y - expit(o + eps * h)))
            .sum()
    };
    let scale: f64 = rows.iter().map(|&(h, _, _)| h).sum();
    let mut eps = 0.0;
    let mut value = ll(eps);
    for _ in 0..100 {
        let (mut g, mut info) = (0.0, 0.0);
        for (&(h, _, y), &o) in rows.iter().zip(&off) {
            let p = expit(o + eps * h);
            g += h * (y - p);
            info += h * h * p * (1.0 - p);
        }
        if g.abs() <= 1e-13 * scale {
            return Ok(eps);
        }
        if !(info > 0.0) {
            break;
        }
        let step = g / info;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=30 {
            let cand = eps + t * step;
            let v = ll(cand);
            // Near the optimum ll changes drop below rounding; the score does not.
            if v.is_finite() && (v >= value || score(cand).abs() < g.abs()) {
                eps = cand;
                value = v;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let g = score(eps);
    if g.abs() <= 1e-9 * scale {
        Ok(eps)
    } else {
        Err(Error::NonConvergence {
            solver: "logit fluctuation",
            iterations: 100,
            gradient_norm: g.abs(),
        })
    }
}

/// Mass imputation with the fluctuated regression: n⁻¹ Σ R^A m̂*/π^A.
pub fn tmle1(
    data: &ObservedData,
    fit: NuisanceView<'_>,
    fl: &Fluctuation,
    variant: NuisanceVariant,
) -> Result<EstimateResult> {
    let point = tmle1_point(data, &fl.m_star);
    let se = dr_se(data, fit.pi_b, &fl.m_star, false)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::TMLE1, variant),
        point,
        Some(se),
    ))
}

pub fn tmle2(
    data: &ObservedData,
    fit: NuisanceView<'_>,
    fl: &Fluctuation,
    variant: NuisanceVariant,
) -> Result<EstimateResult> {
    let na = ha_size(data)?;
    let point = tmle1_point(data, &fl.m_star) * n_of(data) / na;
    let se = dr_se(data, fit.pi_b, &fl.m_star, true)?;
    Ok(EstimateResult::new(
        EstimatorId::new(EstimatorKind::TMLE2, variant),
        point,
        Some(se),
    ))
}

fn tmle1_point(data: &ObservedData, m_star: &[f64]) -> f64 {
    data.units
        .iter()
        .zip(m_star)
        .map(|(u, m)| u.a_weight() * m)
        .sum::<f64>()
        / n_of(data)
}

/// Every nuisance-based estimator in `kinds` for one fit; the fluctuation is
/// computed once if any TMLE row is requested.
pub fn nuisance_estimates(
    data: &ObservedData,
    fit: NuisanceView<'_>,
    kinds: &[EstimatorKind],
    variant: NuisanceVariant,
    fluctuation: FluctuationKind,
) -> Result<Vec<EstimateResult>> {
    let fl = if kinds
        .iter()
        .any(|k| matches!(k, EstimatorKind::TMLE1 | EstimatorKind::TMLE2))
    {
        Some(tmle_fluctuate(data, fit, fluctuation)?)
    } else {
        None
    };
    kinds
        .iter()
        .map(|&k| match k {
            EstimatorKind::DR1 => dr1(data, fit, variant),
            EstimatorKind::DR2 => dr2(data, fit, variant),
            EstimatorKind::DR2clw => dr2clw(data, fit, variant),
            EstimatorKind::TMLE1 => tmle1(data, fit, fl.as_ref().expect("fluctuation"), variant),
            EstimatorKind::TMLE2 => tmle2(data, fit, fl.as_ref().expect("fluctuation"), variant),
            EstimatorKind::HT | EstimatorKind::Haj | EstimatorKind::Naive => {
                Err(Error::Config(format!("{} does not use nuisances", k.label())))
            }
        })
        .collect()
}

/// HT, Hájek or naive.
pub fn design_estimate(data: &ObservedData, kind: EstimatorKind) -> Result<EstimateResult> {
    match kind {
        EstimatorKind::HT => ht(data),
        EstimatorKind::Haj => hajek(data),
        EstimatorKind::Naive => naive(data),
        other => Err(Error::Config(format!("{} needs nuisance fits", other.label()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Unit;
    use proptest::prelude::*;

    fn unit(cluster: usize, in_a: bool, in_b: bool, pi_a: f64, y: f64) -> Unit {
        Unit {
            cluster,
            x: [0.0; 4],
            in_a,
            in_b,
            pi_a,
            pi_a_given_c: pi_a / 0.5,
            y: Some(y),
        }
    }

    fn data(units: Vec<Unit>, n: usize, clusters: usize) -> ObservedData {
        let sampled: Vec<bool> = (0..clusters)
            .map(|c| units.iter().any(|u| u.in_a && u.cluster == c))
            .collect();
        ObservedData {
            population_size: n,
            cluster_pi: vec![0.5; clusters],
            sampled,
            units,
        }
    }

    fn view<'a>(pi_b: &'a [f64], m: &'a [f64], fold: &'a [usize], folds: usize) -> NuisanceView<'a> {
        NuisanceView {
            pi_b,
            m,
            fold_of_unit: fold,
            folds,
        }
    }

    #[test]
    fn ids_round_trip() {
        let all = EstimatorId::all();
        assert_eq!(all.len(), 16);
        let names: Vec<String> = all.iter().map(ToString::to_string).collect();
        assert_eq!(
            names[..8],
            ["HT", "Haj", "naive", "DR1", "DR2clw", "DR2", "TMLE1", "TMLE2"]
        );
        assert_eq!(names[8], "DR1.gbm5");
        assert_eq!(names[15], "TMLE2.gbm1");
        for (id, s) in all.iter().zip(&names) {
            assert_eq!(&s.parse::<EstimatorId>().unwrap(), id);
        }
        assert!("HT.gbm5".parse::<EstimatorId>().is_err());
        assert!("KH".parse::<EstimatorId>().is_err());
    }

    #[test]
    fn ht_small_example() {
        // n = 4, π^A = 0.5, sampled Y = {1, 3}: (2 + 6)/4.
        let d = data(
            vec![unit(0, true, false, 0.5, 1.0), unit(1, true, false, 0.5, 3.0)],
            4,
            2,
        );
        assert!((ht(&d).unwrap().point - 2.0).abs() < 1e-15);
    }

    #[test]
    fn census_reduces_to_population_mean() {
        let ys = [1.0, 4.0, -2.0, 0.5, 3.0, 7.0];
        let units: Vec<Unit> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| Unit {
                pi_a_given_c: 1.0,
                ..unit(i % 3, true, true, 1.0, y)
            })
            .collect();
        let mut d = data(units, ys.len(), 3);
        d.cluster_pi = vec![1.0; 3];
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((ht(&d).unwrap().point - ybar).abs() < 1e-14);
        let pi_b = vec![1.0; 6];
        let m = vec![0.3, -1.0, 2.0, 5.0, 0.0, 1.0];
        let fold = vec![0; 6];
        let v = view(&pi_b, &m, &fold, 1);
        let dr = dr1(&d, v, NuisanceVariant::Parametric).unwrap();
        assert!((dr.point - ybar).abs() < 1e-14);
        assert!((dr2(&d, v, NuisanceVariant::Parametric).unwrap().point - ybar).abs() < 1e-14);
    }

    #[test]
    fn hajek_equals_naive_with_equal_weights() {
        let d = data(
            vec![
                unit(0, true, false, 0.2, 1.0),
                unit(0, true, false, 0.2, 2.5),
                unit(1, true, false, 0.2, -4.0),
            ],
            100,
            2,
        );
        assert!((hajek(&d).unwrap().point - naive(&d).unwrap().point).abs() < 1e-14);
        assert!(naive(&d).unwrap().se.is_none());
    }

    #[test]
    fn zero_outcome_regression_gives_ipw() {
        let d = data(
            vec![
                unit(0, true, true, 0.1, 2.0),
                unit(1, true, false, 0.1, 1.0),
                unit(0, false, true, 0.0, 5.0),
            ],
            50,
            2,
        );
        let pi_b = [0.2, 0.3, 0.4];
        let m = [0.0; 3];
        let fold = [0; 3];
        let got = dr1_point(&d, &pi_b, &m);
        assert!((got - (2.0 / 0.2 + 5.0 / 0.4) / 50.0).abs() < 1e-15);
        let _ = view(&pi_b, &m, &fold, 1);
    }

    #[test]
    fn linear_epsilon_two_unit_example() {
        // (π̂, Y − m̂) = (0.5, 1) and (0.25, 0): ε̂ = 2 / 20.
        let rows = [(2.0, 0.0, 1.0), (4.0, 0.0, 0.0)];
        assert!((linear_epsilon(&rows) - 0.1).abs() < 1e-15);
        let d = data(
            vec![unit(0, true, true, 0.5, 1.0), unit(1, true, true, 0.5, 0.0)],
            10,
            2,
        );
        let pi_b = [0.5, 0.25];
        let m = [0.0, 0.0];
        let fold = [0, 0];
        let fl = tmle_fluctuate(&d, view(&pi_b, &m, &fold, 1), FluctuationKind::Linear).unwrap();
        assert!((fl.epsilon[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_epsilon() {
        let d = data(
            vec![unit(0, true, true, 0.5, 1.0), unit(1, false, true, 0.5, 3.0)],
            10,
            2,
        );
        let pi_b = [0.5, 0.25];
        let m = [1.0, 3.0];
        let fold = [0, 0];
        let fl = tmle_fluctuate(&d, view(&pi_b, &m, &fold, 1), FluctuationKind::Linear).unwrap();
        assert_eq!(fl.epsilon, vec![0.0]);
        assert_eq!(fl.m_star, m.to_vec());
    }

    #[test]
    fn logit_fluctuation_solves_score() {
        let ys = [0.2, 0.7, 0.45, 0.9, 0.1, 0.6];
        let units: Vec<Unit> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| unit(i % 2, true, true, 0.5, y))
            .collect();
        let d = data(units, 40, 2);
        let pi_b = [0.5, 0.3, 0.2, 0.8, 0.4, 0.25];
        let m = [0.3, 0.5, 0.5, 0.6, 0.2, 0.4];
        let fold = [0, 1, 0, 1, 0, 1];
        let v = view(&pi_b, &m, &fold, 2);
        let fl = tmle_fluctuate(&d, v, FluctuationKind::Logit).unwrap();
        for k in 0..2 {
            assert!(fluctuation_score(&d, v, &fl, k).abs() < 1e-10);
        }
        let bad = [0.3, 1.2, 0.5, 0.6, 0.2, 0.4];
        assert!(tmle_fluctuate(&d, view(&pi_b, &bad, &fold, 2), FluctuationKind::Logit).is_err());
    }

    #[test]
    fn logit_fluctuation_reaches_tight_score_with_large_weights() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 4000;
        let units: Vec<Unit> = (0..n)
            .map(|i| unit(i % 3, false, true, 1.0, rng.random_range(0.05..0.95)))
            .collect();
        let d = data(units, 500_000, 3);
        let pi_b: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..0.05)).collect();
        let m: Vec<f64> = d
            .units
            .iter()
            .map(|u| (u.y.unwrap() + rng.random_range(-0.04..0.04)).clamp(0.01, 0.99))
            .collect();
        let fold: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let v = view(&pi_b, &m, &fold, 3);
        let fl = tmle_fluctuate(&d, v, FluctuationKind::Logit).unwrap();
        for k in 0..3 {
            let s = fluctuation_score(&d, v, &fl, k);
            assert!(s.abs() < 1e-8, "fold {k}: score {s:e}");
        }
    }

    #[test]
    fn fold_without_sample_b_is_an_error() {
        let d = data(
            vec![unit(0, true, true, 0.5, 1.0), unit(1, true, false, 0.5, 0.0)],
            10,
            2,
        );
        let pi_b = [0.5, 0.25];
        let m = [0.0, 0.0];
        let fold = [0, 1];
        let err = tmle_fluctuate(&d, view(&pi_b, &m, &fold, 2), FluctuationKind::Linear).unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 2, .. }), "{err}");
    }

    #[test]
    fn one_cluster_has_no_variance() {
        let d = data(
            vec![unit(0, true, true, 0.5, 1.0), unit(0, true, false, 0.5, 0.0)],
            10,
            2,
        );
        assert!(matches!(ht(&d).unwrap_err(), Error::Variance(_)));
    }

    #[test]
    fn degenerate_variance_components_vanish() {
        // Constant m̂, zero B residuals, identical cluster totals.
        let units = vec![
            unit(0, true, true, 0.25, 2.0),
            unit(0, true, false, 0.25, 9.0),
            unit(1, true, false, 0.25, 1.0),
            unit(1, true, true, 0.25, 2.0),
        ];
        let d = data(units, 16, 2);
        let pi_b = [0.3, 0.3, 0.3, 0.3];
        let m = [2.0; 4];
        assert_eq!(sample_b_variance(&d, &pi_b, &m), 0.0);
        assert!(cluster_variance(&d, &m).unwrap().abs() < 1e-20);
    }

    fn random_data(seed: u64) -> (ObservedData, Vec<f64>, Vec<f64>, Vec<usize>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let clusters = 6;
        let mut units = Vec::new();
        let mut pi_b = Vec::new();
        let mut m = Vec::new();
        let mut fold = Vec::new();
        for i in 0..80 {
            let c = i % clusters;
            let in_a = rng.random_bool(0.6);
            let in_b = !in_a || rng.random_bool(0.3);
            units.push(Unit {
                cluster: c,
                x: [0.0; 4],
                in_a,
                in_b,
                pi_a: rng.random_range(0.01..0.2),
                pi_a_given_c: rng.random_range(0.05..0.5),
                y: Some(rng.random_range(-3.0..3.0)),
            });
            pi_b.push(rng.random_range(0.01..0.9));
            m.push(rng.random_range(-2.0..2.0));
            fold.push(c % 3);
        }
        let sampled = (0..clusters)
            .map(|c| units.iter().any(|u| u.in_a && u.cluster == c))
            .collect();
        let d = ObservedData {
            population_size: 400,
            cluster_pi: vec![0.3; clusters],
            sampled,
            units,
        };
        (d, pi_b, m, fold)
    }

    proptest! {
        #[test]
        fn intervals_contain_the_point(point in -1e6f64..1e6, se in 0.0f64..1e3) {
            let r = EstimateResult::new(EstimatorId::new(EstimatorKind::DR1, NuisanceVariant::Parametric), point, Some(se));
            let (lo, hi) = r.ci().unwrap();
            prop_assert!(lo <= point && point <= hi);
        }

        #[test]
        fn ratio_identity_and_dual_form(seed in 0u64..10_000) {
            let (d, pi_b, m, fold) = random_data(seed);
            let v = view(&pi_b, &m, &fold, 3);
            let n = d.population_size as f64;
            let na = d.horvitz_thompson_size();
            let t1 = dr1(&d, v, NuisanceVariant::Parametric).unwrap().point;
            let t2 = dr2(&d, v, NuisanceVariant::Parametric).unwrap().point;
            prop_assert!((t2 * na / n - t1).abs() <= 1e-12 * t1.abs().max(1.0));

            let fl = tmle_fluctuate(&d, v, FluctuationKind::Linear).unwrap();
            for k in 0..3 {
                prop_assert!(fluctuation_score(&d, v, &fl, k).abs() < 1e-10);
            }
            let mass = tmle1(&d, v, &fl, NuisanceVariant::Parametric).unwrap().point;
            let u_form = dr1_point(&d, &pi_b, &fl.m_star);
            prop_assert!((mass - u_form).abs() < 1e-10);
        }

        #[test]
        fn hajek_scale_invariance(seed in 0u64..10_000, c in 0.05f64..1.0) {
            let (d, ..) = random_data(seed);
            let mut scaled = d.clone();
            for u in scaled.units.iter_mut() {
                u.pi_a *= c;
            }
            let a = hajek(&d).unwrap().point;
            let b = hajek(&scaled).unwrap().point;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn outcome_shift(seed in 0u64..10_000, c in -5.0f64..5.0) {
            // Shifting Y and m̂ by c shifts ratio-form estimators by c and
            // the n-normalised ones by c·N̂ᴬ/n.
            let (d, pi_b, m, fold) = random_data(seed);
            let mut shifted = d.clone();
            for u in shifted.units.iter_mut() {
                u.y = u.y.map(|y| y + c);
            }
            let ms: Vec<f64> = m.iter().map(|v| v + c).collect();
            let ratio = c;
            let plain = c * d.horvitz_thompson_size() / d.population_size as f64;
            let kinds = [EstimatorKind::DR1, EstimatorKind::DR2, EstimatorKind::DR2clw, EstimatorKind::TMLE1, EstimatorKind::TMLE2];
            let before = nuisance_estimates(&d, view(&pi_b, &m, &fold, 3), &kinds, NuisanceVariant::Parametric, FluctuationKind::Linear).unwrap();
            let after = nuisance_estimates(&shifted, view(&pi_b, &ms, &fold, 3), &kinds, NuisanceVariant::Parametric, FluctuationKind::Linear).unwrap();
            for (b, a) in before.iter().zip(&after) {
                let want = match b.id.kind {
                    EstimatorKind::DR1 | EstimatorKind::TMLE1 => plain,
                    _ => ratio,
                };
                prop_assert!((a.point - b.point - want).abs() < 1e-9, "{}", b.id);
                if want == ratio {
                    prop_assert!((a.se.unwrap() - b.se.unwrap()).abs() < 1e-9);
                }
            }
            for kind in [EstimatorKind::Haj, EstimatorKind::Naive] {
                let shift = design_estimate(&shifted, kind).unwrap().point - design_estimate(&d, kind).unwrap().point;
                prop_assert!((shift - ratio).abs() < 1e-9);
            }
            let shift = ht(&shifted).unwrap().point - ht(&d).unwrap().point;
            prop_assert!((shift - plain).abs() < 1e-9);
        }
    }
}
