//! Weighted gradient boosting with shallow histogram trees.
//!
//! Features are bucketed into at most `max_bins` quantile bins once per fit.
//! Trees are grown depth-wise using second-order gains with an l2 penalty on
//! leaf values; `min_leaf_weight` bounds the hessian mass in each child.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{expit, logit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf_weight: f64,
    pub subsample: f64,
    pub validation_fraction: f64,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
    pub max_bins: usize,
    pub lambda: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: 2,
            learning_rate: 0.1,
            min_leaf_weight: 10.0,
            subsample: 0.8,
            validation_fraction: 0.2,
            patience: 20,
            max_bins: 255,
            lambda: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("boosting: {m}")));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.min_leaf_weight >= 0.0) {
            return bad("min_leaf_weight must be non-negative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must lie in 2..=256");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Squared,
    /// Binary log-loss on the logit scale.
    Logistic,
}

impl Loss {
    fn grad_hess(self, f: f64, y: f64, w: f64) -> (f64, f64) {
        match self {
            Loss::Squared => (w * (f - y), w),
            Loss::Logistic => {
                let p = expit(f);
                (w * (p - y), w * (p * (1.0 - p)).max(1e-16))
            }
        }
    }

    fn loss(self, f: f64, y: f64) -> f64 {
        match self {
            Loss::Squared => 0.5 * (f - y) * (f - y),
            Loss::Logistic => {
                // y·softplus(−f) + (1 − y)·softplus(f)
                let sp = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
                y * sp(-f) + (1.0 - y) * sp(f)
            }
        }
    }

    fn link_inverse(self, f: f64) -> f64 {
        match self {
            Loss::Squared => f,
            Loss::Logistic => expit(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Quantile cut points per feature; bin b holds values in (cuts[b−1], cuts[b]].
#[derive(Debug, Clone, PartialEq)]
struct Binner {
    cuts: Vec<Vec<f64>>,
}

impl Binner {
    fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let cuts = (0..p)
            .map(|j| {
                let mut v: Vec<f64> = x.iter().map(|r| r[j]).collect();
                v.sort_by(f64::total_cmp);
                let mut uniq = v.clone();
                uniq.dedup();
                if uniq.len() <= max_bins {
                    uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut c: Vec<f64> = (1..max_bins).map(|b| v[b * v.len() / max_bins]).collect();
                    c.dedup();
                    // The top value must fall in the last bin, not on a cut.
                    if c.last() == v.last() {
                        c.pop();
                    }
                    c
                }
            })
            .collect();
        Self { cuts }
    }

    fn bin(&self, j: usize, value: f64) -> u8 {
        self.cuts[j].partition_point(|&c| c < value) as u8
    }

    fn n_bins(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    loss: Loss,
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    /// Validation loss after each round, starting with the base score.
    pub validation_trace: Vec<f64>,
}

struct Grower<'a> {
    binned: &'a [Vec<u8>],
    binner: &'a Binner,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a BoostParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn grow(&mut self, rows: &[u32], depth: usize) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i as usize], h + self.hess[i as usize])
        });
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.params.max_depth || h < 2.0 * self.params.min_leaf_weight {
            return at;
        }
        let parent = self.score(g, h);
        let mut best: Option<(f64, usize, usize)> = None;
        for (j, col) in self.binned.iter().enumerate() {
            let nb = self.binner.n_bins(j);
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            for &i in rows {
                let b = col[i as usize] as usize;
                hg[b] += self.grad[i as usize];
                hh[b] += self.hess[i as usize];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_leaf_weight || hr < self.params.min_leaf_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 1e-12 * parent.abs().max(1e-300) && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, b));
                }
            }
        }
        let Some((_, feature, b)) = best else {
            return at;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| (self.binned[feature][i as usize] as usize) <= b);
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold: self.binner.cuts[feature][b],
            left,
            right,
        };
        at
    }
}

impl BoostedModel {
    /// Fit on rows `x` with targets `y` (in {0, 1} for the logistic loss)
    /// and non-negative instance weights `w`.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        w: &[f64],
        loss: Loss,
        params: &BoostParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        let n = x.len();
        if n == 0 || y.len() != n || w.len() != n {
            return Err(Error::EmptySample("boosting needs matching non-empty x, y, w".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("boosting weights must be finite and non-negative".into()));
        }

        let n_val = (params.validation_fraction * n as f64).floor() as usize;
        let (train, val): (Vec<u32>, Vec<u32>) = if n_val == 0 || n_val == n {
            ((0..n as u32).collect(), Vec::new())
        } else {
            let mut is_val = vec![false; n];
            for i in sample(rng, n, n_val).iter() {
                is_val[i] = true;
            }
            (0..n as u32).partition(|&i| !is_val[i as usize])
        };

        let wsum: f64 = train.iter().map(|&i| w[i as usize]).sum();
        if !(wsum > 0.0) {
            return Err(Error::EmptySample("boosting training weights sum to zero".into()));
        }
        let ybar = train.iter().map(|&i| w[i as usize] * y[i as usize]).sum::<f64>() / wsum;
        let base = match loss {
            Loss::Squared => ybar,
            Loss::Logistic => {
                if !(ybar > 0.0 && ybar < 1.0) {
                    return Err(Error::Degenerate("logistic boosting needs both classes".into()));
                }
                logit(ybar)
            }
        };

        let binner = Binner::new(x, params.max_bins);
        let p = binner.cuts.len();
        let binned: Vec<Vec<u8>> = (0..p)
            .map(|j| x.iter().map(|r| binner.bin(j, r[j])).collect())
            .collect();

        let mut f = vec![base; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let val_w: f64 = val.iter().map(|&i| w[i as usize]).sum();
        let val_loss = |f: &[f64]| {
            val.iter()
                .map(|&i| w[i as usize] * loss.loss(f[i as usize], y[i as usize]))
                .sum::<f64>()
                / val_w
        };
        let use_val = !val.is_empty() && val_w > 0.0;
        let mut trace = Vec::new();
        if use_val {
            trace.push(val_loss(&f));
        }
        let (mut best_loss, mut best_len) = (trace.first().copied().unwrap_or(f64::INFINITY), 0);

        let n_sub = ((params.subsample * train.len() as f64).round() as usize).clamp(1, train.len());
        let mut trees = Vec::new();
        for _ in 0..params.n_trees {
            let rows: Vec<u32> = if n_sub == train.len() {
                train.clone()
            } else {
                sample(rng, train.len(), n_sub).iter().map(|k| train[k]).collect()
            };
            for &i in &rows {
                let i = i as usize;
                (grad[i], hess[i]) = loss.grad_hess(f[i], y[i], w[i]);
            }
            let mut grower = Grower {
                binned: &binned,
                binner: &binner,
                grad: &grad,
                hess: &hess,
                params,
                nodes: Vec::new(),
            };
            grower.grow(&rows, 0);
            let tree = Tree { nodes: grower.nodes };
            for (fi, xi) in f.iter_mut().zip(x) {
                *fi += params.learning_rate * tree.predict(xi);
            }
            trees.push(tree);
            if use_val {
                let l = val_loss(&f);
                trace.push(l);
                if l < best_loss {
                    best_loss = l;
                    best_len = trees.len();
                } else if trees.len() - best_len >= params.patience {
                    break;
                }
            } else {
                best_len = trees.len();
            }
        }
        trees.truncate(best_len);
        Ok(Self {
            loss,
            base,
            learning_rate: params.learning_rate,
            trees,
            validation_trace: trace,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Prediction on the link scale (logit for the logistic loss).
    pub fn predict_link(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.loss.link_inverse(self.predict_link(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_target_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let y = vec![3.25; 200];
        let w = vec![1.0; 200];
        let m = BoostedModel::fit(&x, &y, &w, Loss::Squared, &BoostParams::default(), &mut rng).unwrap();
        for xi in &x {
            assert!((m.predict(xi) - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn learns_a_step_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.3 { 2.0 } else { -1.0 }).collect();
        let w = vec![1.0; x.len()];
        let m = BoostedModel::fit(&x, &y, &w, Loss::Squared, &BoostParams::default(), &mut rng).unwrap();
        assert!((m.predict(&[0.8]) - 2.0).abs() < 0.05);
        assert!((m.predict(&[-0.5]) + 1.0).abs() < 0.05);
    }

    #[test]
    fn weighted_logistic_recovers_odds() {
        // Positives weight 1, negatives weight 10; the fitted probability in
        // each cell is n₊ / (n₊ + 10·n₋).
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        for (cell, pos, neg) in [(0.0, 300, 300), (1.0, 600, 100)] {
            for _ in 0..pos {
                x.push(vec![cell]);
                y.push(1.0);
                w.push(1.0);
            }
            for _ in 0..neg {
                x.push(vec![cell]);
                y.push(0.0);
                w.push(10.0);
            }
        }
        let params = BoostParams {
            n_trees: 2000,
            learning_rate: 0.3,
            subsample: 1.0,
            validation_fraction: 0.0,
            ..BoostParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = BoostedModel::fit(&x, &y, &w, Loss::Logistic, &params, &mut rng).unwrap();
        assert!((m.predict(&[0.0]) - 300.0 / 3300.0).abs() < 2e-3);
        assert!((m.predict(&[1.0]) - 600.0 / 1600.0).abs() < 2e-3);
    }

    #[test]
    fn leaves_respect_min_weight() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<f64> = (0..30).map(|i| if i == 0 { 100.0 } else { 0.0 }).collect();
        let w = vec![1.0; 30];
        let params = BoostParams {
            n_trees: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            validation_fraction: 0.0,
            max_depth: 1,
            ..BoostParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = BoostedModel::fit(&x, &y, &w, Loss::Squared, &params, &mut rng).unwrap();
        // The isolated outlier cannot get its own leaf; the first 10 rows share one.
        let t = &m.trees[0];
        assert_eq!(t.predict(&[0.0]), t.predict(&[9.0]));
    }

    #[test]
    fn rejects_bad_params() {
        let p = BoostParams {
            subsample: 0.0,
            ..BoostParams::default()
        };
        assert!(p.validate().is_err());
    }
}
