//! Path-dependent TreeSHAP over node covers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::ReportKey;
use crate::learn::{EnsembleKind, LearnError, Tree, TreeEnsemble};
use crate::prepare::FeatureMatrix;

/// Attributions for one row on the margin scale. Positive values push toward
/// Recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub key: ReportKey,
    pub phi: Vec<f64>,
    pub base_value: f64,
}

impl ShapVector {
    pub fn total(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

const EMPTY: PathElement = PathElement {
    feature: None,
    zero: 0.0,
    one: 0.0,
    weight: 0.0,
};

fn extend(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let PathElement { zero, one, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
}

fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let PathElement { zero, one, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct Walker<'a> {
    tree: &'a Tree,
    row: &'a [f64],
    phi: &'a mut [f64],
}

impl Walker<'_> {
    fn recurse(&mut self, node: usize, parent: &[PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
        let mut path = parent[..depth].to_vec();
        path.resize(depth + 1, EMPTY);
        extend(&mut path, depth, zero, one, feature);
        let n = &self.tree.nodes[node];
        let Some(f) = n.feature else {
            for i in 1..=depth {
                let w = unwound_sum(&path, depth, i);
                let el = path[i];
                self.phi[el.feature.expect("interior element")] += w * (el.one - el.zero) * n.value;
            }
            return;
        };
        let (hot, cold) = if self.row[f] <= n.threshold { (n.left, n.right) } else { (n.right, n.left) };
        let hot_zero = self.tree.nodes[hot].cover / n.cover;
        let cold_zero = self.tree.nodes[cold].cover / n.cover;
        let (mut in_zero, mut in_one) = (1.0, 1.0);
        let mut depth = depth;
        if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(f)) {
            in_zero = path[k].zero;
            in_one = path[k].one;
            unwind(&mut path, depth, k);
            depth -= 1;
        }
        self.recurse(hot, &path, depth + 1, hot_zero * in_zero, in_one, Some(f));
        self.recurse(cold, &path, depth + 1, cold_zero * in_zero, 0.0, Some(f));
    }
}

/// Adds the tree's attributions for `row` into `phi`.
pub fn tree_shap_into(tree: &Tree, row: &[f64], phi: &mut [f64]) {
    let mut w = Walker { tree, row, phi };
    w.recurse(0, &[], 0, 1.0, 1.0, None);
}

/// Cover-weighted mean leaf value.
pub fn expected_value(tree: &Tree) -> f64 {
    fn go(tree: &Tree, i: usize) -> f64 {
        let n = &tree.nodes[i];
        match n.feature {
            None => n.value,
            Some(_) => {
                let (l, r) = (&tree.nodes[n.left], &tree.nodes[n.right]);
                (l.cover * go(tree, n.left) + r.cover * go(tree, n.right)) / n.cover
            }
        }
    }
    go(tree, 0)
}

/// Ensemble attributions on the margin scale: boosted trees are summed and
/// scaled by the learning rate, forest trees are averaged.
pub fn tree_shap(model: &TreeEnsemble, key: &ReportKey, row: &[f64]) -> Result<ShapVector, LearnError> {
    let d = model.n_features();
    if row.len() != d {
        return Err(LearnError::Dimension {
            expected: d,
            found: row.len(),
        });
    }
    let mut phi = vec![0.0; d];
    let mut base = 0.0;
    for tree in &model.trees {
        tree_shap_into(tree, row, &mut phi);
        base += expected_value(tree);
    }
    let scale = match model.kind {
        EnsembleKind::Boosted => model.learning_rate,
        EnsembleKind::Forest => 1.0 / model.trees.len().max(1) as f64,
    };
    phi.iter_mut().for_each(|p| *p *= scale);
    let base_value = match model.kind {
        EnsembleKind::Boosted => model.base_score + scale * base,
        EnsembleKind::Forest => scale * base,
    };
    Ok(ShapVector {
        key: key.clone(),
        phi,
        base_value,
    })
}

/// Explains every row of `matrix`, in row order.
pub fn explain_matrix(model: &TreeEnsemble, matrix: &FeatureMatrix) -> Result<Vec<ShapVector>, LearnError> {
    (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| tree_shap(model, &matrix.keys[i], matrix.row(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::TreeNode;

    fn key() -> ReportKey {
        ReportKey::new("r").unwrap()
    }

    fn ensemble(trees: Vec<Tree>, d: usize) -> TreeEnsemble {
        TreeEnsemble {
            kind: EnsembleKind::Boosted,
            trees,
            learning_rate: 1.0,
            base_score: 0.0,
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
        }
    }

    fn split(f: usize, thr: f64, l: usize, r: usize, cover: f64) -> TreeNode {
        TreeNode {
            feature: Some(f),
            threshold: thr,
            left: l,
            right: r,
            value: 0.0,
            cover,
        }
    }

    #[test]
    fn single_leaf() {
        let e = ensemble(vec![Tree { nodes: vec![TreeNode::leaf(0.3, 10.0)] }], 3);
        let s = tree_shap(&e, &key(), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.phi, vec![0.0; 3]);
        assert_eq!(s.base_value, 0.3);
    }

    #[test]
    fn stump() {
        let t = Tree {
            nodes: vec![split(0, 0.5, 1, 2, 100.0), TreeNode::leaf(0.0, 50.0), TreeNode::leaf(1.0, 50.0)],
        };
        let s = tree_shap(&ensemble(vec![t], 1), &key(), &[0.7]).unwrap();
        assert_eq!(s.phi, vec![0.5]);
        assert_eq!(s.base_value, 0.5);
    }

    #[test]
    fn repeated_feature_on_path() {
        // f0 split twice, f1 once; x = (0.2, 5.0).
        let t = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 10.0),
                split(0, 0.1, 3, 4, 6.0),
                split(1, 1.0, 5, 6, 4.0),
                TreeNode::leaf(-1.0, 2.0),
                TreeNode::leaf(2.0, 4.0),
                TreeNode::leaf(3.0, 1.0),
                TreeNode::leaf(-4.0, 3.0),
            ],
        };
        let s = tree_shap(&ensemble(vec![t.clone()], 2), &key(), &[0.2, 5.0]).unwrap();
        assert!((s.total() - t.predict(&[0.2, 5.0])).abs() < 1e-12);
        // f1 only matters inside the right branch, which x does not visit.
        let e_left = (2.0 * -1.0 + 4.0 * 2.0) / 6.0;
        let e_right = (1.0 * 3.0 + 3.0 * -4.0) / 4.0;
        let full = 2.0;
        let none = (6.0 * e_left + 4.0 * e_right) / 10.0;
        let only0 = full;
        let only1 = (6.0 * e_left + 4.0 * -4.0) / 10.0;
        let phi0 = 0.5 * (only0 - none) + 0.5 * (full - only1);
        assert!((s.phi[0] - phi0).abs() < 1e-12);
    }

    #[test]
    fn forest_is_mean() {
        let t = Tree {
            nodes: vec![split(0, 0.5, 1, 2, 4.0), TreeNode::leaf(0.0, 2.0), TreeNode::leaf(1.0, 2.0)],
        };
        let mut e = ensemble(vec![t.clone(), t], 1);
        e.kind = EnsembleKind::Forest;
        let s = tree_shap(&e, &key(), &[1.0]).unwrap();
        assert_eq!(s.phi, vec![0.5]);
        assert_eq!(s.base_value, 0.5);
        assert!(tree_shap(&e, &key(), &[1.0, 2.0]).is_err());
    }
}
