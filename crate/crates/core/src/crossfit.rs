//! Cluster-level fold assignment and active-subset subsampling.
//!
//! Folds are built from cluster sampling indicators only, never from
//! outcomes or Sample-B membership.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Clusters split by rank of π^C into L near-equal sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGroups {
    pub group_of_cluster: Vec<usize>,
    /// Mean π^C of each group, used in place of a common group probability.
    pub mean_pi: Vec<f64>,
    /// J^(l).
    pub sizes: Vec<usize>,
}

impl ProbabilityGroups {
    pub fn count(&self) -> usize {
        self.mean_pi.len()
    }
}

pub fn build_groups(pi_c: &[f64], groups: usize) -> Result<ProbabilityGroups> {
    let j = pi_c.len();
    if groups == 0 || groups > j {
        return Err(Error::Config(format!(
            "need 1 <= L <= J probability groups, got L = {groups}, J = {j}"
        )));
    }
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| pi_c[a].total_cmp(&pi_c[b]).then(a.cmp(&b)));
    let mut group_of_cluster = vec![0; j];
    let mut sums = vec![0.0; groups];
    let mut sizes = vec![0; groups];
    for (rank, &c) in order.iter().enumerate() {
        let g = rank * groups / j;
        group_of_cluster[c] = g;
        sums[g] += pi_c[c];
        sizes[g] += 1;
    }
    let mean_pi = sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect();
    Ok(ProbabilityGroups {
        group_of_cluster,
        mean_pi,
        sizes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: usize,
    pub fold_of_cluster: Vec<usize>,
    /// M^(l)_k, indexed `[l][k]`.
    pub sampled_in_fold: Vec<Vec<usize>>,
    /// J^(l)_k, indexed `[l][k]`.
    pub clusters_in_fold: Vec<Vec<usize>>,
    /// M^(l).
    pub sampled_in_group: Vec<usize>,
    /// J^(l).
    pub clusters_in_group: Vec<usize>,
}

impl FoldPlan {
    /// Total sampled clusters in fold k across groups.
    pub fn sampled_total(&self, fold: usize) -> usize {
        self.sampled_in_fold.iter().map(|v| v[fold]).sum()
    }
}

/// Within each group, split sampled and unsampled clusters evenly across
/// K folds; the fewer-than-K leftovers go to distinct, uniformly chosen folds.
pub fn assign_folds<R: Rng + ?Sized>(
    groups: &ProbabilityGroups,
    rc: &[bool],
    folds: usize,
    rng: &mut R,
) -> Result<FoldPlan> {
    if folds == 0 {
        return Err(Error::Config("need at least one fold".into()));
    }
    let j = rc.len();
    if groups.group_of_cluster.len() != j {
        return Err(Error::Config("groups and cluster indicators disagree on J".into()));
    }
    let l_count = groups.count();
    let mut fold_of_cluster = vec![0; j];
    let mut sampled_in_fold = vec![vec![0; folds]; l_count];
    let mut clusters_in_fold = vec![vec![0; folds]; l_count];
    let mut sampled_in_group = vec![0; l_count];
    let mut clusters_in_group = vec![0; l_count];

    for l in 0..l_count {
        for sampled in [true, false] {
            let mut members: Vec<usize> = (0..j)
                .filter(|&c| groups.group_of_cluster[c] == l && rc[c] == sampled)
                .collect();
            members.shuffle(rng);
            let even = folds * (members.len() / folds);
            for (pos, &c) in members[..even].iter().enumerate() {
                fold_of_cluster[c] = pos % folds;
            }
            let leftovers = &members[even..];
            let targets = index::sample(rng, folds, leftovers.len());
            for (&c, k) in leftovers.iter().zip(targets) {
                fold_of_cluster[c] = k;
            }
            for &c in &members {
                let k = fold_of_cluster[c];
                clusters_in_fold[l][k] += 1;
                clusters_in_group[l] += 1;
                if sampled {
                    sampled_in_fold[l][k] += 1;
                    sampled_in_group[l] += 1;
                }
            }
        }
    }
    Ok(FoldPlan {
        folds,
        fold_of_cluster,
        sampled_in_fold,
        clusters_in_fold,
        sampled_in_group,
        clusters_in_group,
    })
}

/// Sample-A clusters used to fit π̂ᴮ_k, and the π^A rescaling per group.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubset {
    pub fold: usize,
    /// Per cluster.
    pub active: Vec<bool>,
    /// Factor applied to π^A of out-of-fold units, per group.
    pub multiplier: Vec<f64>,
    /// C^(l).
    pub subsample_sizes: Vec<usize>,
    /// Groups with out-of-fold sampled clusters but C^(l) = 0.
    pub degenerate_groups: usize,
}

impl ActiveSubset {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

pub fn choose_active_subset<R: Rng + ?Sized>(
    groups: &ProbabilityGroups,
    plan: &FoldPlan,
    rc: &[bool],
    fold: usize,
    delta: f64,
    rng: &mut R,
) -> Result<ActiveSubset> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("need 0 < delta < 1, got {delta}")));
    }
    if fold >= plan.folds {
        return Err(Error::Config(format!("fold {fold} out of range")));
    }
    let l_count = groups.count();
    let k = plan.folds as f64;
    let mut active = vec![false; rc.len()];
    let mut multiplier = vec![1.0; l_count];
    let mut subsample_sizes = vec![0; l_count];
    let mut degenerate_groups = 0;

    for l in 0..l_count {
        let candidates: Vec<usize> = (0..rc.len())
            .filter(|&c| {
                rc[c] && groups.group_of_cluster[c] == l && (plan.folds == 1 || plan.fold_of_cluster[c] != fold)
            })
            .collect();
        let m_l = plan.sampled_in_group[l];
        let (size, mult) = if plan.folds == 1 {
            (candidates.len(), 1.0)
        } else if l_count == 1 {
            // Equal-probability path.
            let keep = m_l - m_l.div_ceil(plan.folds);
            (keep, keep as f64 / (m_l as f64 - m_l as f64 / k))
        } else {
            let outside = (plan.clusters_in_group[l] - plan.clusters_in_fold[l][fold]) as f64;
            if outside == 0.0 {
                (0, 1.0)
            } else {
                let pi = groups.mean_pi[l];
                let base = (pi * (1.0 - delta) * outside).floor();
                ((base as usize).min(candidates.len()), base / (pi * outside))
            }
        };
        if size == 0 && !candidates.is_empty() {
            degenerate_groups += 1;
        }
        for i in index::sample(rng, candidates.len(), size) {
            active[candidates[i]] = true;
        }
        multiplier[l] = mult;
        subsample_sizes[l] = size;
    }
    Ok(ActiveSubset {
        fold,
        active,
        multiplier,
        subsample_sizes,
        degenerate_groups,
    })
}

/// Folds plus one active subset per fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    pub groups: ProbabilityGroups,
    pub plan: FoldPlan,
    pub active: Vec<ActiveSubset>,
}

impl CrossFit {
    /// Folds from the `Folds` stream of `seed`, active subsets from `Active`.
    pub fn build(groups: &ProbabilityGroups, rc: &[bool], folds: usize, delta: f64, seed: u64) -> Result<Self> {
        let plan = assign_folds(groups, rc, folds, &mut rng::stream(seed, Stream::Folds))?;
        let mut rng = rng::stream(seed, Stream::Active);
        let active = (0..folds)
            .map(|k| choose_active_subset(groups, &plan, rc, k, delta, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            groups: groups.clone(),
            plan,
            active,
        })
    }

    /// No cross-fitting: one fold holding every cluster, all of Sample A active.
    pub fn single(groups: &ProbabilityGroups, rc: &[bool]) -> Result<Self> {
        Self::build(groups, rc, 1, 0.5, 0)
    }

    pub fn folds(&self) -> usize {
        self.plan.folds
    }

    pub fn fold_of_cluster(&self, c: usize) -> usize {
        self.plan.fold_of_cluster[c]
    }

    pub fn degenerate_groups(&self) -> usize {
        self.active.iter().map(|a| a.degenerate_groups).sum()
    }

    /// Audit dump: one row per cluster with its fold, group, Sample-A flag,
    /// and per-fold active flags and multipliers. Folds are numbered from 1.
    pub fn write_csv(&self, rc: &[bool], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let k = self.folds();
        let mut header = String::from("cluster_id,fold,group,sampled");
        for f in 1..=k {
            header.push_str(&format!(",active_{f}"));
        }
        for f in 1..=k {
            header.push_str(&format!(",multiplier_{f}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for c in 0..rc.len() {
            let g = self.groups.group_of_cluster[c];
            let mut line = format!("{c},{},{},{}", self.plan.fold_of_cluster[c] + 1, g + 1, u8::from(rc[c]));
            for a in &self.active {
                line.push_str(&format!(",{}", u8::from(a.active[c])));
            }
            for a in &self.active {
                let m = if self.plan.fold_of_cluster[c] == a.fold {
                    1.0
                } else {
                    a.multiplier[g]
                };
                line.push_str(&format!(",{m}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
