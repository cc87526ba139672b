//! The observed part of a replication: every unit in Sample A or Sample B.
//!
//! Units outside both samples contribute nothing to any estimator, so they
//! are dropped here; only the population size n is kept.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::design::SampleDraw;
use crate::error::{Error, Result};
use crate::formula::Covariates;
use crate::popgen::FinitePopulation;

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub cluster: usize,
    pub x: Covariates,
    pub in_a: bool,
    pub in_b: bool,
    /// π^A; only meaningful when `in_a`.
    pub pi_a: f64,
    /// π^{A|C}; only meaningful when `in_a`.
    pub pi_a_given_c: f64,
    /// Always present for Sample-B units; present for Sample-A units when
    /// their outcome is known (simulation), enabling the A-only estimators.
    pub y: Option<f64>,
}

impl Unit {
    /// R^A/π^A.
    pub fn a_weight(&self) -> f64 {
        if self.in_a {
            1.0 / self.pi_a
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObservedData {
    /// n.
    pub population_size: usize,
    /// π^C for every cluster `0..J`.
    pub cluster_pi: Vec<f64>,
    /// R^C for every cluster.
    pub sampled: Vec<bool>,
    pub units: Vec<Unit>,
}

impl ObservedData {
    pub fn from_draw(pop: &FinitePopulation, draw: &SampleDraw) -> Self {
        let units = pop
            .individuals
            .iter()
            .enumerate()
            .filter(|(i, _)| draw.ra[*i] || draw.rb[*i])
            .map(|(i, p)| Unit {
                cluster: p.cluster as usize,
                x: p.covariates,
                in_a: draw.ra[i],
                in_b: draw.rb[i],
                pi_a: draw.pi_a[i],
                pi_a_given_c: draw.pi_a_given_c[i],
                y: Some(draw.y[i]),
            })
            .collect();
        Self {
            population_size: pop.len(),
            cluster_pi: draw.pi_c.clone(),
            sampled: draw.rc.clone(),
            units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.cluster_pi.len();
        if self.sampled.len() != j {
            return Err(Error::Config("cluster vectors disagree on J".into()));
        }
        for (idx, u) in self.units.iter().enumerate() {
            if u.cluster >= j {
                return Err(Error::Config(format!("unit {idx}: cluster {} >= J = {j}", u.cluster)));
            }
            if u.in_a {
                if !self.sampled[u.cluster] {
                    return Err(Error::Config(format!(
                        "unit {idx} is in Sample A but cluster {} is not sampled",
                        u.cluster
                    )));
                }
                if !(u.pi_a > 0.0 && u.pi_a <= 1.0) {
                    return Err(Error::Config(format!("unit {idx}: piA = {} outside (0, 1]", u.pi_a)));
                }
            }
            if u.in_b && u.y.is_none() {
                return Err(Error::Config(format!("unit {idx} is in Sample B without an outcome")));
            }
            if !u.in_a && !u.in_b {
                return Err(Error::Config(format!("unit {idx} is in neither sample")));
            }
        }
        Ok(())
    }

    /// M.
    pub fn sampled_clusters(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }

    pub fn sample_a_size(&self) -> usize {
        self.units.iter().filter(|u| u.in_a).count()
    }

    pub fn sample_b_size(&self) -> usize {
        self.units.iter().filter(|u| u.in_b).count()
    }

    /// N̂ᴬ = Σ R^A/π^A.
    pub fn horvitz_thompson_size(&self) -> f64 {
        self.units.iter().map(Unit::a_weight).sum()
    }
}

#[derive(Debug, Deserialize)]
struct SampleARow {
    cluster_id: String,
    #[serde(rename = "piA")]
    pi_a: f64,
    #[serde(rename = "piC")]
    pi_c: f64,
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
    #[serde(default, rename = "Y")]
    y: Option<f64>,
    #[serde(default)]
    unit_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SampleBRow {
    cluster_id: String,
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
    #[serde(rename = "Y")]
    y: f64,
    #[serde(default)]
    unit_id: Option<String>,
}

impl ObservedData {
    /// Load external samples.
    ///
    /// Sample A: `cluster_id,piA,piC,x1,x2,x3,x4` plus optional `Y` and
    /// `unit_id`. Sample B: `cluster_id,x1,x2,x3,x4,Y` plus optional
    /// `unit_id`; a B row whose `unit_id` matches an A row is the same person.
    /// Clusters seen only in Sample B count as unsampled; their π^C is unknown
    /// and recorded as NaN.
    pub fn read_csv(sample_a: impl AsRef<Path>, sample_b: impl AsRef<Path>, population_size: usize) -> Result<Self> {
        let mut cluster_index: HashMap<String, usize> = HashMap::new();
        let mut cluster_pi: Vec<f64> = Vec::new();
        let mut sampled: Vec<bool> = Vec::new();
        let mut units: Vec<Unit> = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();

        let mut index_of = |id: &str, cluster_pi: &mut Vec<f64>, sampled: &mut Vec<bool>| -> usize {
            *cluster_index.entry(id.to_string()).or_insert_with(|| {
                cluster_pi.push(f64::NAN);
                sampled.push(false);
                cluster_pi.len() - 1
            })
        };

        let path_a = sample_a.as_ref();
        let mut reader = csv::Reader::from_path(path_a)?;
        for (line, row) in reader.deserialize::<SampleARow>().enumerate() {
            let row = row?;
            let c = index_of(&row.cluster_id, &mut cluster_pi, &mut sampled);
            if !(row.pi_c > 0.0 && row.pi_c <= 1.0 && row.pi_a > 0.0 && row.pi_a <= row.pi_c) {
                return Err(Error::Config(format!(
                    "{}: row {}: need 0 < piA <= piC <= 1",
                    path_a.display(),
                    line + 1
                )));
            }
            if sampled[c] && cluster_pi[c] != row.pi_c {
                return Err(Error::Config(format!(
                    "{}: cluster {} has more than one piC",
                    path_a.display(),
                    row.cluster_id
                )));
            }
            sampled[c] = true;
            cluster_pi[c] = row.pi_c;
            if let Some(id) = row.unit_id {
                by_id.insert(id, units.len());
            }
            units.push(Unit {
                cluster: c,
                x: [row.x1, row.x2, row.x3, row.x4],
                in_a: true,
                in_b: false,
                pi_a: row.pi_a,
                pi_a_given_c: row.pi_a / row.pi_c,
                y: row.y,
            });
        }

        let path_b = sample_b.as_ref();
        let mut reader = csv::Reader::from_path(path_b)?;
        for row in reader.deserialize::<SampleBRow>() {
            let row = row?;
            let c = index_of(&row.cluster_id, &mut cluster_pi, &mut sampled);
            let x = [row.x1, row.x2, row.x3, row.x4];
            if let Some(&i) = row.unit_id.as_ref().and_then(|id| by_id.get(id)) {
                let u = &mut units[i];
                if u.cluster != c {
                    return Err(Error::Config(format!(
                        "{}: unit {} changes cluster between samples",
                        path_b.display(),
                        row.unit_id.unwrap_or_default()
                    )));
                }
                u.in_b = true;
                u.y = Some(row.y);
                continue;
            }
            units.push(Unit {
                cluster: c,
                x,
                in_a: false,
                in_b: true,
                pi_a: 0.0,
                pi_a_given_c: 0.0,
                y: Some(row.y),
            });
        }
        let data = Self {
            population_size,
            cluster_pi,
            sampled,
            units,
        };
        data.validate()?;
        Ok(data)
    }

    /// True when every Sample-A unit carries an outcome.
    pub fn sample_a_has_outcomes(&self) -> bool {
        self.units.iter().filter(|u| u.in_a).all(|u| u.y.is_some())
    }
}
