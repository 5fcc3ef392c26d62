//! Regression random forest with out-of-bag permutation importance.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mat, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `⌈d/3⌉`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 5,
            features_per_split: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees", "must be positive"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf", "must be positive"));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::config("features_per_split", "must be positive"));
        }
        Ok(())
    }

    fn mtry(&self, d: usize) -> usize {
        self.features_per_split.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    fn leaf_value(&self, row: &[f64], override_col: Option<(usize, f64)>) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let value = match override_col {
                        Some((col, v)) if col == feature => v,
                        _ => row[feature],
                    };
                    idx = if value <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.leaf_value(row, None)
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// `(feature, threshold)` of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct TreeBuilder<'a> {
    x: &'a Mat,
    y: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut RngStream) -> usize {
        let id = self.nodes.len();
        let n = rows.len() as f64;
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let sse: f64 = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum();
        if !(sse > 0.0) {
            return id;
        }
        let Some(best) = self.best_split(rows, rng) else {
            return id;
        };
        // Partition in place.
        let mut split_at = 0;
        for i in 0..rows.len() {
            if self.x[(rows[i], best.feature)] <= best.threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], rng: &mut RngStream) -> Option<BestSplit> {
        let d = self.x.cols();
        let features = rng.choose_indices(d, self.mtry);
        let min_leaf = self.cfg.min_leaf;
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[(r, f)], self.y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += pairs[i].1;
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                // SSE reduction up to the constant Σy²: S_L²/n_L + S_R²/n_R − S²/n
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - total * total / n as f64;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: 0.5 * (pairs[i].0 + pairs[i + 1].0),
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// `oob_masks[t][i]` is true when row `i` was not drawn for tree `t`.
    pub oob_masks: Vec<Vec<bool>>,
    pub cfg: ForestConfig,
    /// Set when the training target was constant.
    pub degenerate_target: bool,
}

/// Grows `cfg.n_trees` CART trees on bootstrap samples. Tree `t` draws from
/// `rng.derive(t)`, so the fit does not depend on scheduling.
pub fn fit_forest(x: &Mat, y: &[f64], cfg: &ForestConfig, rng: &RngStream) -> Result<ForestModel> {
    cfg.validate()?;
    if x.rows() != y.len() {
        return Err(Error::dims(x.rows(), y.len()));
    }
    let n = x.rows();
    if n < 2 * cfg.min_leaf {
        return Err(Error::Data(format!(
            "forest needs at least {} rows, got {n}",
            2 * cfg.min_leaf
        )));
    }
    let degenerate_target = y.iter().all(|v| *v == y[0]);
    if degenerate_target {
        warn!("forest target is constant; all importances will be zero");
    }
    let mtry = cfg.mtry(x.cols());
    let grown: Vec<(RegressionTree, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = rng.derive(t as u64);
            let mut rows: Vec<usize> = (0..n).map(|_| tree_rng.below(n)).collect();
            let mut oob = vec![true; n];
            for &r in &rows {
                oob[r] = false;
            }
            let mut builder = TreeBuilder {
                x,
                y,
                cfg,
                mtry,
                nodes: Vec::new(),
            };
            builder.grow(&mut rows, 0, &mut tree_rng);
            (
                RegressionTree {
                    nodes: builder.nodes,
                },
                oob,
            )
        })
        .collect();
    let (trees, oob_masks) = grown.into_iter().unzip();
    Ok(ForestModel {
        trees,
        oob_masks,
        cfg: cfg.clone(),
        degenerate_target,
    })
}

impl ForestModel {
    pub fn predict(&self, x: &Mat) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.rows())
            .map(|r| self.trees.iter().map(|t| t.predict_row(x.row(r))).sum::<f64>() / k)
            .collect()
    }

    /// Out-of-bag predictions averaged over the trees that did not see each
    /// row; `None` for rows that were in every bootstrap sample.
    pub fn oob_predictions(&self, x: &Mat) -> Vec<Option<f64>> {
        (0..x.rows())
            .map(|r| {
                let (sum, count) = self
                    .trees
                    .iter()
                    .zip(&self.oob_masks)
                    .filter(|(_, m)| m[r])
                    .fold((0.0, 0usize), |(s, c), (t, _)| (s + t.predict_row(x.row(r)), c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect()
    }
}

/// Per-tree increase in OOB MSE after permuting column `feature` among the OOB rows.
pub fn tree_permutation_increase(
    tree: &RegressionTree,
    x: &Mat,
    y: &[f64],
    oob_rows: &[usize],
    feature: usize,
    rng: &mut RngStream,
) -> f64 {
    let m = oob_rows.len() as f64;
    let baseline: f64 = oob_rows
        .iter()
        .map(|&r| (tree.predict_row(x.row(r)) - y[r]).powi(2))
        .sum::<f64>()
        / m;
    let mut perm = oob_rows.to_vec();
    rng.shuffle(&mut perm);
    let permuted: f64 = oob_rows
        .iter()
        .zip(&perm)
        .map(|(&r, &src)| {
            let pred = tree.leaf_value(x.row(r), Some((feature, x[(src, feature)])));
            (pred - y[r]).powi(2)
        })
        .sum::<f64>()
        / m;
    permuted - baseline
}

/// Mean decrease in accuracy (increase in OOB MSE) per feature, averaged
/// over trees with at least one OOB row. Tree `t` permutes with
/// `rng.derive(t)`.
pub fn oob_mda_importance(model: &ForestModel, x: &Mat, y: &[f64], rng: &RngStream) -> Result<Vec<f64>> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::dims(n, y.len()));
    }
    if model.oob_masks.first().is_some_and(|m| m.len() != n) {
        return Err(Error::dims(format!("{} training rows", model.oob_masks[0].len()), n));
    }
    let d = x.cols();
    let per_tree: Vec<Option<Vec<f64>>> = model
        .trees
        .par_iter()
        .zip(&model.oob_masks)
        .enumerate()
        .map(|(t, (tree, mask))| {
            let oob_rows: Vec<usize> = (0..n).filter(|&r| mask[r]).collect();
            if oob_rows.is_empty() {
                return None;
            }
            let mut tree_rng = rng.derive(t as u64);
            Some(
                (0..d)
                    .map(|j| tree_permutation_increase(tree, x, y, &oob_rows, j, &mut tree_rng))
                    .collect(),
            )
        })
        .collect();
    let skipped = per_tree.iter().filter(|v| v.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} tree(s) had no out-of-bag rows and were skipped");
    }
    let used = per_tree.len() - skipped;
    let mut importance = vec![0.0; d];
    for v in per_tree.into_iter().flatten() {
        for (acc, x) in importance.iter_mut().zip(v) {
            *acc += x;
        }
    }
    if used > 0 {
        importance.iter_mut().for_each(|v| *v /= used as f64);
    }
    Ok(importance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_standard_normal;

    #[test]
    fn constant_target() {
        let x = sample_standard_normal(&mut RngStream::new(1, 0), 40, 3);
        let y = vec![2.5; 40];
        let cfg = ForestConfig {
            n_trees: 10,
            ..Default::default()
        };
        let rng = RngStream::new(2, 0);
        let model = fit_forest(&x, &y, &cfg, &rng).unwrap();
        assert!(model.degenerate_target);
        assert!(model.predict(&x).iter().all(|p| *p == 2.5));
        let imp = oob_mda_importance(&model, &x, &y, &rng.derive(99)).unwrap();
        assert_eq!(imp, vec![0.0; 3]);
    }

    #[test]
    fn oob_masks_partition_rows() {
        let x = sample_standard_normal(&mut RngStream::new(3, 0), 50, 2);
        let y = x.column(0);
        let cfg = ForestConfig {
            n_trees: 5,
            ..Default::default()
        };
        let model = fit_forest(&x, &y, &cfg, &RngStream::new(4, 0)).unwrap();
        for mask in &model.oob_masks {
            assert_eq!(mask.len(), 50);
            let oob = mask.iter().filter(|m| **m).count();
            assert!(oob > 0 && oob < 50);
        }
    }

    #[test]
    fn depth_one_stump_finds_the_step() {
        let mut rng = RngStream::new(5, 0);
        let x = sample_standard_normal(&mut rng, 60, 3);
        let y: Vec<f64> = (0..60).map(|r| f64::from(x[(r, 0)] > 0.0)).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            features_per_split: Some(3),
        };
        let model = fit_forest(&x, &y, &cfg, &RngStream::new(6, 0)).unwrap();
        let (feature, threshold) = model.trees[0].root_split().unwrap();
        assert_eq!(feature, 0);
        // The split lies between the largest negative and smallest positive x₀.
        let below = (0..60).map(|r| x[(r, 0)]).filter(|v| *v <= 0.0).fold(f64::MIN, f64::max);
        let above = (0..60).map(|r| x[(r, 0)]).filter(|v| *v > 0.0).fold(f64::MAX, f64::min);
        assert!(threshold > below - 1e-12 && threshold < above + 1e-12);
        assert_eq!(model.trees[0].depth(), 1);
    }

    #[test]
    fn unused_feature_has_zero_increase() {
        let mut rng = RngStream::new(7, 0);
        let x = sample_standard_normal(&mut rng, 80, 3);
        let y: Vec<f64> = (0..80).map(|r| x[(r, 0)]).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 3,
            min_leaf: 5,
            features_per_split: Some(1),
        };
        let model = fit_forest(&x, &y, &cfg, &RngStream::new(8, 0)).unwrap();
        let used = model.trees[0].split_features();
        let oob: Vec<usize> = (0..80).filter(|&r| model.oob_masks[0][r]).collect();
        for j in (0..3).filter(|j| !used.contains(j)) {
            let inc =
                tree_permutation_increase(&model.trees[0], &x, &y, &oob, j, &mut RngStream::new(9, 0));
            assert_eq!(inc, 0.0);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let x = sample_standard_normal(&mut RngStream::new(10, 0), 60, 4);
        let y: Vec<f64> = (0..60).map(|r| x[(r, 1)].sin()).collect();
        let cfg = ForestConfig {
            n_trees: 8,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &cfg, &RngStream::new(11, 0)).unwrap();
        let b = fit_forest(&x, &y, &cfg, &RngStream::new(11, 0)).unwrap();
        assert_eq!(a.trees, b.trees);
        let ia = oob_mda_importance(&a, &x, &y, &RngStream::new(12, 0)).unwrap();
        let ib = oob_mda_importance(&b, &x, &y, &RngStream::new(12, 0)).unwrap();
        assert_eq!(ia, ib);
    }

    #[test]
    fn too_few_rows() {
        let x = Mat::zeros(6, 2);
        let cfg = ForestConfig::default();
        assert!(fit_forest(&x, &[0.0; 6], &cfg, &RngStream::new(0, 0)).is_err());
    }
}
