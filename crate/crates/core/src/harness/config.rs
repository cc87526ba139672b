//! Run configuration and its flat TOML file form.
//!
//! ```toml
//! scenario = 3
//! reps = 100
//! seed = 7
//! estimators = "HT,DR1,DR2,DR1.gbm5"
//! n_trees = 300
//! selection_features = "main_effects"
//! outcome_features = "x1 + x2 + x3 + x4 + x1*x3 + x2^2"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::design::DesignKind;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, FluctuationKind, NuisanceVariant};
use crate::formula::{LinearPredictor, Term};
use crate::nuisance::{BoostParams, FeatureMap, LearnerFamily, LearnerSpec, NuisanceSpec, PseudoLikelihoodKind};
use crate::popgen::{ScenarioSpec, SelectionIntercept};

/// Feature set of a parametric model, resolved against a scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeatureChoice {
    #[default]
    MainEffects,
    InterceptOnly,
    /// The terms of the data-generating model.
    TrueModel,
    Terms(Vec<Term>),
}

impl FeatureChoice {
    pub fn resolve(&self, truth: &LinearPredictor) -> FeatureMap {
        match self {
            FeatureChoice::MainEffects => FeatureMap::MainEffects,
            FeatureChoice::InterceptOnly => FeatureMap::InterceptOnly,
            FeatureChoice::TrueModel => FeatureMap::Terms(truth.term_list()),
            FeatureChoice::Terms(t) => FeatureMap::Terms(t.clone()),
        }
    }
}

impl FromStr for FeatureChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "main_effects" => Ok(FeatureChoice::MainEffects),
            "intercept" | "intercept_only" => Ok(FeatureChoice::InterceptOnly),
            "true" | "true_model_terms" => Ok(FeatureChoice::TrueModel),
            formula => {
                let lp: LinearPredictor = formula.parse()?;
                Ok(FeatureChoice::Terms(lp.term_list()))
            }
        }
    }
}

fn parse_likelihood(s: &str) -> Result<PseudoLikelihoodKind> {
    match s {
        "full" => Ok(PseudoLikelihoodKind::Full),
        "approximate" => Ok(PseudoLikelihoodKind::Approximate),
        _ => Err(Error::Config(format!(
            "pseudo_likelihood must be full or approximate, got '{s}'"
        ))),
    }
}

fn parse_fluctuation(s: &str) -> Result<FluctuationKind> {
    match s {
        "linear" => Ok(FluctuationKind::Linear),
        "logit" => Ok(FluctuationKind::Logit),
        _ => Err(Error::Config(format!("fluctuation must be linear or logit, got '{s}'"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub boosting: BoostParams,
    /// Used by the parametric selection model.
    pub pseudo_likelihood: PseudoLikelihoodKind,
    pub selection_features: FeatureChoice,
    pub outcome_features: FeatureChoice,
    pub fluctuation: FluctuationKind,
    /// Cross-fit the parametric rows too (they are fitted once by default).
    pub parametric_crossfit: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            boosting: BoostParams::default(),
            pseudo_likelihood: PseudoLikelihoodKind::Full,
            selection_features: FeatureChoice::MainEffects,
            outcome_features: FeatureChoice::MainEffects,
            fluctuation: FluctuationKind::Linear,
            parametric_crossfit: false,
        }
    }
}

impl LearnerConfig {
    pub fn parametric(&self, scenario: &ScenarioSpec) -> NuisanceSpec {
        NuisanceSpec {
            selection: LearnerSpec {
                family: LearnerFamily::Parametric,
                features: self.selection_features.resolve(&scenario.selection),
                likelihood: self.pseudo_likelihood,
            },
            outcome: LearnerSpec {
                family: LearnerFamily::Parametric,
                features: self.outcome_features.resolve(&scenario.outcome),
                likelihood: self.pseudo_likelihood,
            },
        }
    }

    pub fn boosted(&self) -> NuisanceSpec {
        NuisanceSpec::both(LearnerSpec::boosted(self.boosting))
    }

    pub fn spec_for(&self, variant: NuisanceVariant, scenario: &ScenarioSpec) -> NuisanceSpec {
        match variant {
            NuisanceVariant::Parametric => self.parametric(scenario),
            NuisanceVariant::BoostedCrossFit | NuisanceVariant::BoostedSingle => self.boosted(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    pub learners: LearnerConfig,
    /// Output directory.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self {
            scenario,
            reps: 100,
            seed: 1,
            estimators: EstimatorId::all(),
            learners: LearnerConfig::default(),
            out: None,
        }
    }

    pub fn preset(id: u8) -> Result<Self> {
        Ok(Self::new(ScenarioSpec::preset(id)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        self.learners.boosting.validate()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.into_config()
    }
}

/// Every key is optional; unset keys keep the preset (scenario 1 if no
/// `scenario` is given) or library defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<u8>,
    pub clusters: Option<usize>,
    pub sampled_clusters: Option<usize>,
    pub households_sampled: Option<usize>,
    pub folds: Option<usize>,
    pub delta: Option<f64>,
    pub groups: Option<usize>,
    pub outcome: Option<String>,
    pub selection: Option<String>,
    pub selection_intercept: Option<f64>,
    pub target_sample_b: Option<f64>,
    pub household_mean: Option<f64>,
    pub household_variance: Option<f64>,
    pub outcome_sd: Option<f64>,
    pub design: Option<String>,
    pub population_seed: Option<u64>,
    pub population_size: Option<usize>,

    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub estimators: Option<String>,
    pub out: Option<PathBuf>,

    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub min_leaf_weight: Option<f64>,
    pub subsample: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub patience: Option<usize>,

    pub pseudo_likelihood: Option<String>,
    pub selection_features: Option<String>,
    pub outcome_features: Option<String>,
    pub fluctuation: Option<String>,
    pub parametric_crossfit: Option<bool>,
}

impl ConfigFile {
    fn has_boosting_keys(&self) -> bool {
        self.n_trees.is_some()
            || self.max_depth.is_some()
            || self.learning_rate.is_some()
            || self.min_leaf_weight.is_some()
            || self.subsample.is_some()
            || self.validation_fraction.is_some()
            || self.patience.is_some()
    }

    pub fn into_config(self) -> Result<RunConfig> {
        let mut s = ScenarioSpec::preset(self.scenario.unwrap_or(1))?;
        if self.scenario.is_none() {
            s.id = None;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            clusters => s.clusters,
            sampled_clusters => s.sampled_clusters,
            households_sampled => s.households_sampled,
            folds => s.folds,
            delta => s.delta,
            groups => s.groups,
            household_mean => s.household_mean,
            household_variance => s.household_variance,
            outcome_sd => s.outcome_sd,
            population_seed => s.seed,
        }
        if let Some(f) = &self.outcome {
            s.outcome = f.parse()?;
        }
        if let Some(f) = &self.selection {
            s.selection = f.parse()?;
            s.selection_intercept = SelectionIntercept::Fixed(s.selection.intercept);
        }
        match (self.selection_intercept, self.target_sample_b) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give at most one of selection_intercept and target_sample_b".into(),
                ))
            }
            (Some(a), None) => s.selection_intercept = SelectionIntercept::Fixed(a),
            (None, Some(t)) => s.selection_intercept = SelectionIntercept::TargetSize(t),
            (None, None) => {}
        }
        if let Some(d) = &self.design {
            s.design = d.parse::<DesignKind>()?;
        }

        let estimators = match &self.estimators {
            Some(list) => EstimatorId::parse_list(list)?,
            None => EstimatorId::all(),
        };
        let boosted = estimators.iter().any(|e| e.nuisances != NuisanceVariant::Parametric);
        if self.has_boosting_keys() && !boosted {
            return Err(Error::Config(
                "boosting keys given but no boosted estimator selected".into(),
            ));
        }
        let mut boosting = BoostParams::default();
        set! {
            n_trees => boosting.n_trees,
            max_depth => boosting.max_depth,
            learning_rate => boosting.learning_rate,
            min_leaf_weight => boosting.min_leaf_weight,
            subsample => boosting.subsample,
            validation_fraction => boosting.validation_fraction,
            patience => boosting.patience,
        }
        let mut learners = LearnerConfig {
            boosting,
            ..LearnerConfig::default()
        };
        if let Some(v) = &self.pseudo_likelihood {
            learners.pseudo_likelihood = parse_likelihood(v)?;
        }
        if let Some(v) = &self.fluctuation {
            learners.fluctuation = parse_fluctuation(v)?;
        }
        if let Some(v) = &self.selection_features {
            learners.selection_features = v.parse()?;
        }
        if let Some(v) = &self.outcome_features {
            learners.outcome_features = v.parse()?;
        }
        set! { parametric_crossfit => learners.parametric_crossfit }

        let cfg = RunConfig {
            scenario: s,
            reps: self.reps.unwrap_or(100),
            seed: self.seed.unwrap_or(1),
            estimators,
            learners,
            out: self.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
