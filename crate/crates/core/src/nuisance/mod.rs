//! Per-fold nuisance fits: the selection probability π̂ᴮ_k and the outcome
//! regression m̂_k, each trained only on units outside fold k.

pub mod boost;
pub mod linear;
pub mod logistic;

use std::fmt;

use rayon::prelude::*;

use crate::crossfit::CrossFit;
use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::formula::{expit, Covariates, LinearPredictor, Term};
use crate::rng::{indexed_stream, Stream};

pub use boost::{BoostParams, BoostedModel, Loss};
pub use logistic::{NewtonFit, NewtonOptions, PseudoLikelihood, PseudoLikelihoodKind};

/// Lower clip for π̂ᴮ.
pub const PI_B_FLOOR: f64 = 1e-6;
/// Upper clip for π̂ᴮ.
pub const PI_B_CEIL: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeatureMap {
    InterceptOnly,
    #[default]
    MainEffects,
    Terms(Vec<Term>),
}

impl FeatureMap {
    pub fn terms(&self) -> Vec<Term> {
        match self {
            FeatureMap::InterceptOnly => Vec::new(),
            FeatureMap::MainEffects => Term::main_effects(),
            FeatureMap::Terms(t) => t.clone(),
        }
    }

    /// Feature row without an intercept column.
    pub fn expand(&self, x: &Covariates) -> Vec<f64> {
        self.terms().iter().map(|t| t.eval(x)).collect()
    }

    fn expand_with_intercept(&self, x: &Covariates) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.terms().iter().map(|t| t.eval(x)))
            .collect()
    }

    fn names_with_intercept(&self) -> Vec<String> {
        std::iter::once("(intercept)".to_string())
            .chain(self.terms().iter().map(Term::to_string))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerFamily {
    Parametric,
    Boosted(BoostParams),
    /// The data-generating function itself; for checks that isolate the
    /// estimator from learning error.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub family: LearnerFamily,
    pub features: FeatureMap,
    /// Only read by the parametric selection fit.
    pub likelihood: PseudoLikelihoodKind,
}

impl LearnerSpec {
    pub fn parametric() -> Self {
        Self {
            family: LearnerFamily::Parametric,
            features: FeatureMap::MainEffects,
            likelihood: PseudoLikelihoodKind::Full,
        }
    }

    pub fn boosted(params: BoostParams) -> Self {
        Self {
            family: LearnerFamily::Boosted(params),
            features: FeatureMap::MainEffects,
            likelihood: PseudoLikelihoodKind::Approximate,
        }
    }

    pub fn oracle() -> Self {
        Self {
            family: LearnerFamily::Oracle,
            features: FeatureMap::MainEffects,
            likelihood: PseudoLikelihoodKind::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpec {
    pub selection: LearnerSpec,
    pub outcome: LearnerSpec,
}

impl NuisanceSpec {
    pub fn both(spec: LearnerSpec) -> Self {
        Self {
            selection: spec.clone(),
            outcome: spec,
        }
    }
}

/// True m₀ and logit π^B₀, used by the oracle family.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub outcome: LinearPredictor,
    pub selection: LinearPredictor,
}

pub trait Predictor: Send + Sync + fmt::Debug {
    fn predict(&self, x: &Covariates) -> f64;
}

#[derive(Debug, Clone)]
struct LinearModel {
    features: FeatureMap,
    coef: Vec<f64>,
    logistic: bool,
}

impl Predictor for LinearModel {
    fn predict(&self, x: &Covariates) -> f64 {
        let eta: f64 = self
            .features
            .expand_with_intercept(x)
            .iter()
            .zip(&self.coef)
            .map(|(a, b)| a * b)
            .sum();
        if self.logistic {
            expit(eta)
        } else {
            eta
        }
    }
}

#[derive(Debug, Clone)]
struct Boosted {
    features: FeatureMap,
    model: BoostedModel,
}

impl Predictor for Boosted {
    fn predict(&self, x: &Covariates) -> f64 {
        self.model.predict(&self.features.expand(x))
    }
}

#[derive(Debug, Clone)]
struct OracleModel {
    predictor: LinearPredictor,
    logistic: bool,
}

impl Predictor for OracleModel {
    fn predict(&self, x: &Covariates) -> f64 {
        let eta = self.predictor.eval(x);
        if self.logistic {
            expit(eta)
        } else {
            eta
        }
    }
}

/// What a single fit reports besides its predictor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitDiagnostics {
    pub training_rows: usize,
    /// Newton iterations, or trees kept after early stopping.
    pub iterations: usize,
    /// Final pseudo-log-likelihood (parametric selection only).
    pub objective: Option<f64>,
}

#[derive(Debug)]
pub struct FittedModel {
    pub predictor: Box<dyn Predictor>,
    pub diagnostics: FitDiagnostics,
}

/// Training rows for the outcome model: Sample-B units.
#[derive(Debug, Clone, Default)]
pub struct OutcomeRows {
    pub x: Vec<Covariates>,
    pub y: Vec<f64>,
}

/// Training rows for the selection model. Each unit appears once with its
/// Sample-B flag and its (multiplier-adjusted) Sample-A weight, zero if not
/// an active Sample-A unit.
#[derive(Debug, Clone, Default)]
pub struct SelectionRows {
    pub x: Vec<Covariates>,
    pub in_b: Vec<bool>,
    pub a_weight: Vec<f64>,
}

pub fn fit_outcome(rows: &OutcomeRows, spec: &LearnerSpec, truth: Option<&Truth>, seed: u64) -> Result<FittedModel> {
    let n = rows.x.len();
    if n == 0 {
        return Err(Error::EmptySample("no Sample-B rows to fit the outcome model".into()));
    }
    let diagnostics = FitDiagnostics {
        training_rows: n,
        ..FitDiagnostics::default()
    };
    match &spec.family {
        LearnerFamily::Parametric => {
            let design: Vec<Vec<f64>> = rows.x.iter().map(|x| spec.features.expand_with_intercept(x)).collect();
            let coef = linear::ols(&design, &rows.y, &spec.features.names_with_intercept())?;
            Ok(FittedModel {
                predictor: Box::new(LinearModel {
                    features: spec.features.clone(),
                    coef,
                    logistic: false,
                }),
                diagnostics,
            })
        }
        LearnerFamily::Boosted(params) => {
            let design: Vec<Vec<f64>> = rows.x.iter().map(|x| spec.features.expand(x)).collect();
            let w = vec![1.0; n];
            let mut rng = indexed_stream(seed, Stream::Learner, 0);
            let model = BoostedModel::fit(&design, &rows.y, &w, Loss::Squared, params, &mut rng)?;
            Ok(FittedModel {
                diagnostics: FitDiagnostics {
                    iterations: model.n_trees(),
                    ..diagnostics
                },
                predictor: Box::new(Boosted {
                    features: spec.features.clone(),
                    model,
                }),
            })
        }
        LearnerFamily::Oracle => oracle(truth, |t| t.outcome.clone(), false, diagnostics),
    }
}

pub fn fit_selection(
    rows: &SelectionRows,
    spec: &LearnerSpec,
    truth: Option<&Truth>,
    seed: u64,
) -> Result<FittedModel> {
    let n = rows.x.len();
    if !rows.in_b.iter().any(|&b| b) {
        return Err(Error::EmptySample("no Sample-B rows to fit the selection model".into()));
    }
    if !rows.a_weight.iter().any(|&w| w > 0.0) {
        return Err(Error::EmptySample(
            "no active Sample-A rows to fit the selection model".into(),
        ));
    }
    let diagnostics = FitDiagnostics {
        training_rows: n,
        ..FitDiagnostics::default()
    };
    match &spec.family {
        LearnerFamily::Parametric => {
            let design: Vec<Vec<f64>> = rows.x.iter().map(|x| spec.features.expand_with_intercept(x)).collect();
            let pl = PseudoLikelihood::new(design, &rows.in_b, &rows.a_weight, spec.likelihood);
            let fit = pl.maximize(&spec.features.names_with_intercept(), Some(0), NewtonOptions::default())?;
            Ok(FittedModel {
                diagnostics: FitDiagnostics {
                    iterations: fit.iterations,
                    objective: Some(fit.objective),
                    ..diagnostics
                },
                predictor: Box::new(LinearModel {
                    features: spec.features.clone(),
                    coef: fit.coef,
                    logistic: true,
                }),
            })
        }
        LearnerFamily::Boosted(params) => {
            // Weighted log-loss: B units as positives (weight 1), active A
            // units as negatives (weight 1/π^A); a unit in both gives two rows.
            let mut design = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            for ((x, &b), &aw) in rows.x.iter().zip(&rows.in_b).zip(&rows.a_weight) {
                if b {
                    design.push(spec.features.expand(x));
                    y.push(1.0);
                    w.push(1.0);
                }
                if aw > 0.0 {
                    design.push(spec.features.expand(x));
                    y.push(0.0);
                    w.push(aw);
                }
            }
            let mut rng = indexed_stream(seed, Stream::Learner, 1);
            let model = BoostedModel::fit(&design, &y, &w, Loss::Logistic, params, &mut rng)?;
            Ok(FittedModel {
                diagnostics: FitDiagnostics {
                    iterations: model.n_trees(),
                    ..diagnostics
                },
                predictor: Box::new(Boosted {
                    features: spec.features.clone(),
                    model,
                }),
            })
        }
        LearnerFamily::Oracle => oracle(truth, |t| t.selection.clone(), true, diagnostics),
    }
}

fn oracle(
    truth: Option<&Truth>,
    pick: impl Fn(&Truth) -> LinearPredictor,
    logistic: bool,
    diagnostics: FitDiagnostics,
) -> Result<FittedModel> {
    let t = truth.ok_or_else(|| Error::Config("oracle learner requires the true model".into()))?;
    Ok(FittedModel {
        predictor: Box::new(OracleModel {
            predictor: pick(t),
            logistic,
        }),
        diagnostics,
    })
}

#[derive(Debug)]
pub struct FoldFit {
    pub selection: FittedModel,
    pub outcome: FittedModel,
}

impl FoldFit {
    /// π̂ᴮ_k(x), clipped to [`PI_B_FLOOR`], [`PI_B_CEIL`].
    pub fn pi_b(&self, x: &Covariates) -> f64 {
        clip_pi_b(self.selection.predictor.predict(x))
    }

    /// m̂_k(x).
    pub fn m(&self, x: &Covariates) -> f64 {
        self.outcome.predictor.predict(x)
    }
}

pub fn clip_pi_b(p: f64) -> f64 {
    if p.is_nan() {
        PI_B_FLOOR
    } else {
        p.clamp(PI_B_FLOOR, PI_B_CEIL)
    }
}

/// Cross-fitted nuisances with each observed unit's out-of-fold predictions.
#[derive(Debug)]
pub struct NuisanceFit {
    pub folds: Vec<FoldFit>,
    /// Fold index of each unit in `ObservedData::units`.
    pub fold_of_unit: Vec<usize>,
    /// π̂ᴮ for each unit, from the model that did not see its fold.
    pub pi_b: Vec<f64>,
    /// m̂ for each unit, likewise.
    pub m: Vec<f64>,
}

/// Training rows for fold `k`: units outside it, with Sample A restricted to
/// the fold's active clusters and π^A scaled by the group multiplier.
pub fn training_rows(data: &ObservedData, crossfit: &CrossFit, k: usize) -> (OutcomeRows, SelectionRows) {
    let single = crossfit.folds() == 1;
    let active = &crossfit.active[k];
    let mut out = OutcomeRows::default();
    let mut sel = SelectionRows::default();
    for u in &data.units {
        if !single && crossfit.fold_of_cluster(u.cluster) == k {
            continue;
        }
        let aw = if u.in_a && active.active[u.cluster] {
            let mult = active.multiplier[crossfit.groups.group_of_cluster[u.cluster]];
            1.0 / (u.pi_a * mult)
        } else {
            0.0
        };
        if u.in_b {
            if let Some(y) = u.y {
                out.x.push(u.x);
                out.y.push(y);
            }
        }
        if u.in_b || aw > 0.0 {
            sel.x.push(u.x);
            sel.in_b.push(u.in_b);
            sel.a_weight.push(aw);
        }
    }
    (out, sel)
}

pub fn fit_all_folds(
    data: &ObservedData,
    crossfit: &CrossFit,
    spec: &NuisanceSpec,
    truth: Option<&Truth>,
    seed: u64,
) -> Result<NuisanceFit> {
    let k_total = crossfit.folds();
    let folds: Vec<FoldFit> = (0..k_total)
        .into_par_iter()
        .map(|k| {
            let (out_rows, sel_rows) = training_rows(data, crossfit, k);
            let fold_seed = crate::rng::derive_seed(seed, k as u64);
            let outcome = fit_outcome(&out_rows, &spec.outcome, truth, fold_seed)
                .map_err(|e| Error::fold(k + 1, e.to_string()))?;
            let selection = fit_selection(&sel_rows, &spec.selection, truth, fold_seed)
                .map_err(|e| Error::fold(k + 1, e.to_string()))?;
            Ok(FoldFit { selection, outcome })
        })
        .collect::<Result<_>>()?;
    let fold_of_unit: Vec<usize> = data
        .units
        .iter()
        .map(|u| {
            if k_total == 1 {
                0
            } else {
                crossfit.fold_of_cluster(u.cluster)
            }
        })
        .collect();
    let pi_b = data
        .units
        .iter()
        .zip(&fold_of_unit)
        .map(|(u, &k)| folds[k].pi_b(&u.x))
        .collect();
    let m = data
        .units
        .iter()
        .zip(&fold_of_unit)
        .map(|(u, &k)| folds[k].m(&u.x))
        .collect();
    Ok(NuisanceFit {
        folds,
        fold_of_unit,
        pi_b,
        m,
    })
}
