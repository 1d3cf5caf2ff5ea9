use serde::{Deserialize, Serialize};

/// One node of an arena-allocated binary tree. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// `None` for leaves.
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// P(Recovered) for classification trees, raw score for boosted trees.
    /// Internal nodes keep the value they would have as a leaf.
    pub value: f64,
    /// Weighted training-sample count reaching the node.
    pub cover: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        TreeNode {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
            cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return i,
                Some(f) => i = if row[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left).max(go(t, n.right))
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Checks the structural invariants: children in range, positive cover,
    /// and parent cover equal to the sum of child covers.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.cover > 0.0) {
                return Err(format!("node {i} has non-positive cover"));
            }
            if n.is_leaf() {
                continue;
            }
            if n.left >= self.nodes.len() || n.right >= self.nodes.len() || n.left <= i || n.right <= i {
                return Err(format!("node {i} has invalid children"));
            }
            if !n.threshold.is_finite() {
                return Err(format!("node {i} has a non-finite threshold"));
            }
            let sum = self.nodes[n.left].cover + self.nodes[n.right].cover;
            if sum != n.cover {
                return Err(format!("node {i} cover {} != children {}", n.cover, sum));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// Mean of per-tree P(Recovered).
    Forest,
    /// sigmoid(base_score + learning_rate * sum of tree outputs).
    Boosted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    /// Log-odds of Recovered before any tree (Boosted only).
    pub base_score: f64,
    pub feature_names: Vec<String>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw output: log-odds of Recovered for Boosted, P(Recovered) for Forest.
    pub fn margin(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::Boosted => {
                self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
            }
            EnsembleKind::Forest => self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64,
        }
    }

    /// P(Recovered).
    pub fn predict_recovered(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::Boosted => sigmoid(self.margin(row)),
            EnsembleKind::Forest => self.margin(row),
        }
    }

    /// The ensemble of the first `t` trees.
    pub fn prefix(&self, t: usize) -> TreeEnsemble {
        TreeEnsemble {
            trees: self.trees[..t.min(self.trees.len())].to_vec(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> TreeEnsemble {
        TreeEnsemble {
            kind: self.kind,
            trees: Vec::new(),
            learning_rate: self.learning_rate,
            base_score: self.base_score,
            feature_names: self.feature_names.clone(),
        }
    }
}
