//! Greedy tree growing shared by CART, random forests and boosting.
//!
//! Candidate thresholds are midpoints of consecutive distinct values among the
//! samples reaching a node. In histogram mode ([`Presorted::with_bins`]) a
//! feature with more distinct values than bins only splits at its global
//! quantile cut points. The split with the largest gain wins; candidates
//! within [`TIE_EPS`] of the best gain count as ties and the lowest feature
//! index, then the lowest threshold, is taken.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeNode};
use super::LearnError;
use crate::prepare::FeatureMatrix;
use crate::rng::StreamRng;

pub const TIE_EPS: f64 = 1e-9;
/// Splits must improve the criterion by more than this.
pub const MIN_GAIN: f64 = 1e-12;

/// Additive per-node statistics. For Gini, `a`/`b` are the Death/Recovered
/// weights; for second-order boosting they are the gradient and hessian sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub w: f64,
    pub a: f64,
    pub b: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.w += o.w;
        self.a += o.a;
        self.b += o.b;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    Gini { min_leaf: f64 },
    SecondOrder { lambda: f64, min_child_weight: f64, min_leaf: f64 },
}

/// Gini impurity `1 − Σ p_c²` of a weighted two-class node.
pub fn gini(death: f64, recovered: f64) -> f64 {
    let w = death + recovered;
    if w <= 0.0 {
        return 0.0;
    }
    let (p, q) = (death / w, recovered / w);
    1.0 - p * p - q * q
}

impl Criterion {
    fn min_leaf(&self) -> f64 {
        match *self {
            Criterion::Gini { min_leaf } | Criterion::SecondOrder { min_leaf, .. } => min_leaf,
        }
    }

    fn admissible(&self, s: &Stats) -> bool {
        s.w >= self.min_leaf()
            && match *self {
                Criterion::Gini { .. } => true,
                Criterion::SecondOrder { min_child_weight, .. } => s.b >= min_child_weight,
            }
    }

    pub fn gain(&self, parent: &Stats, left: &Stats, right: &Stats) -> f64 {
        match *self {
            Criterion::Gini { .. } => {
                gini(parent.a, parent.b)
                    - (left.w / parent.w) * gini(left.a, left.b)
                    - (right.w / parent.w) * gini(right.a, right.b)
            }
            Criterion::SecondOrder { lambda, .. } => {
                let score = |s: &Stats| s.a * s.a / (s.b + lambda);
                0.5 * (score(left) + score(right) - score(parent))
            }
        }
    }

    pub fn leaf_value(&self, s: &Stats) -> f64 {
        match *self {
            Criterion::Gini { .. } => {
                if s.w > 0.0 {
                    s.b / (s.a + s.b)
                } else {
                    0.5
                }
            }
            Criterion::SecondOrder { lambda, .. } => {
                let denom = s.b + lambda;
                if denom > 0.0 {
                    -s.a / denom
                } else {
                    0.0
                }
            }
        }
    }

    fn is_pure(&self, s: &Stats) -> bool {
        match self {
            Criterion::Gini { .. } => s.a <= 0.0 || s.b <= 0.0,
            Criterion::SecondOrder { .. } => false,
        }
    }
}

/// Column-major feature values with every column's row order pre-sorted.
pub struct Presorted {
    pub cols: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
    /// Allowed thresholds per feature, ascending; `None` allows every midpoint.
    pub cuts: Vec<Option<Vec<f64>>>,
}

/// Up to `max_bins − 1` thresholds splitting `sorted` into near-equal-count
/// bins. Each threshold is the midpoint between two consecutive distinct values.
fn quantile_cuts(sorted: &[f64], max_bins: usize) -> Option<Vec<f64>> {
    let mut distinct = sorted.to_vec();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return None;
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins);
    for q in 1..max_bins {
        let v = sorted[q * n / max_bins];
        let pos = distinct.partition_point(|&d| d <= v);
        if pos < distinct.len() {
            let (a, b) = (distinct[pos - 1], distinct[pos]);
            let mut c = a + (b - a) / 2.0;
            if c >= b {
                c = a;
            }
            if cuts.last() != Some(&c) {
                cuts.push(c);
            }
        }
    }
    Some(cuts)
}

impl Presorted {
    pub fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let cols: Vec<Vec<f64>> = (0..x.n_cols()).map(|j| x.column(j)).collect();
        let order = cols
            .par_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let cuts = vec![None; cols.len()];
        Presorted { cols, order, cuts }
    }

    /// Histogram mode: at most `max_bins` bins per feature. `max_bins = 0`
    /// keeps every midpoint (same as [`Presorted::new`]).
    pub fn with_bins(x: &FeatureMatrix, max_bins: usize) -> Self {
        let mut p = Presorted::new(x);
        if max_bins >= 2 {
            p.cuts = p
                .cols
                .par_iter()
                .zip(&p.order)
                .map(|(c, o)| {
                    let sorted: Vec<f64> = o.iter().map(|&i| c[i as usize]).collect();
                    quantile_cuts(&sorted, max_bins)
                })
                .collect();
        }
        p
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    pub criterion: Criterion,
    /// Features drawn per split; `None` considers all.
    pub features_per_split: Option<usize>,
}

/// Best split of one node: `(feature, threshold, gain)`.
pub type Split = (usize, f64, f64);

/// Valid `(threshold, gain)` candidates of one feature, in ascending threshold order.
fn feature_candidates(
    col: &[f64],
    cuts: Option<&[f64]>,
    sorted: &[u32],
    stats: &[Stats],
    total: &Stats,
    crit: &Criterion,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut left = Stats::default();
    let mut next_cut = 0;
    for k in 0..sorted.len().saturating_sub(1) {
        let i = sorted[k] as usize;
        left.add(&stats[i]);
        let (v, next) = (col[i], col[sorted[k + 1] as usize]);
        if v == next {
            continue;
        }
        let thr = match cuts {
            None => {
                let mid = v + (next - v) / 2.0;
                if mid >= next {
                    v
                } else {
                    mid
                }
            }
            Some(cuts) => {
                while next_cut < cuts.len() && cuts[next_cut] < v {
                    next_cut += 1;
                }
                match cuts.get(next_cut) {
                    Some(&c) if c < next => c,
                    _ => continue,
                }
            }
        };
        let right = total.minus(&left);
        if !crit.admissible(&left) || !crit.admissible(&right) {
            continue;
        }
        out.push((thr, crit.gain(total, &left, &right)));
    }
    out
}

/// Picks the split by the gain/tie rule from per-feature candidate lists.
pub fn choose_split(candidates: &[(usize, Vec<(f64, f64)>)]) -> Option<Split> {
    let best = candidates
        .iter()
        .flat_map(|(_, c)| c.iter().map(|&(_, g)| g))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best > MIN_GAIN) {
        return None;
    }
    for (f, cands) in candidates {
        if let Some(&(thr, g)) = cands.iter().find(|&&(_, g)| g >= best - TIE_EPS) {
            return Some((*f, thr, g));
        }
    }
    None
}

struct Grower<'a> {
    data: &'a Presorted,
    stats: &'a [Stats],
    params: GrowParams,
    rng: Option<&'a mut StreamRng>,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn total(&self, members: &[u32]) -> Stats {
        let mut t = Stats::default();
        for &i in members {
            t.add(&self.stats[i as usize]);
        }
        t
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        match (self.params.features_per_split, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f: Vec<usize> = sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Grows the subtree over `sorted` (one ascending member list per feature)
    /// and returns its root index.
    fn grow(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let total = self.total(&sorted[0]);
        let crit = self.params.criterion;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::leaf(crit.leaf_value(&total), total.w));
        if depth >= self.params.max_depth || total.w < 2.0 * crit.min_leaf() || crit.is_pure(&total) {
            return id;
        }
        let features = self.candidate_features();
        let (data, stats) = (self.data, self.stats);
        let candidates: Vec<(usize, Vec<(f64, f64)>)> = features
            .par_iter()
            .map(|&f| (f, feature_candidates(&data.cols[f], data.cuts[f].as_deref(), &sorted[f], stats, &total, &crit)))
            .collect();
        let Some((f, thr, _)) = choose_split(&candidates) else {
            return id;
        };
        let col = &self.data.cols[f];
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| col[i as usize] <= thr);
            left.push(l);
            right.push(r);
        }
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        let cover = self.nodes[l].cover + self.nodes[r].cover;
        let node = &mut self.nodes[id];
        node.feature = Some(f);
        node.threshold = thr;
        node.left = l;
        node.right = r;
        node.cover = cover;
        id
    }
}

/// Grows one tree over the samples with positive `stats[i].w`.
pub fn grow_tree(data: &Presorted, stats: &[Stats], params: GrowParams, rng: Option<&mut StreamRng>) -> Result<Tree, LearnError> {
    let sorted: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| stats[i as usize].w > 0.0).collect())
        .collect();
    if sorted.is_empty() {
        return Err(LearnError::Input("matrix has no feature columns".into()));
    }
    if sorted[0].is_empty() {
        return Err(LearnError::Input("no training rows".into()));
    }
    let mut g = Grower {
        data,
        stats,
        params,
        rng,
        nodes: Vec::new(),
    };
    g.grow(sorted, 0);
    Ok(Tree { nodes: g.nodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_leaf: 1,
        }
    }
}

/// Per-row Gini statistics from labels and sample weights.
pub fn class_stats(train: &FeatureMatrix, multiplicity: Option<&[f64]>) -> Result<Vec<Stats>, LearnError> {
    let labels = train.labels()?;
    Ok((0..train.n_rows())
        .map(|i| {
            let w = train.weight(i) * multiplicity.map_or(1.0, |m| m[i]);
            let y = labels[i].target();
            Stats {
                w,
                a: w * (1.0 - y),
                b: w * y,
            }
        })
        .collect())
}

/// CART classification tree with Gini impurity.
pub fn fit_tree(train: &FeatureMatrix, params: &TreeParams) -> Result<Tree, LearnError> {
    if train.n_rows() == 0 {
        return Err(LearnError::Input("empty training set".into()));
    }
    if train.n_rows() < params.min_leaf {
        return Err(LearnError::Input(format!(
            "{} rows is fewer than min_leaf {}",
            train.n_rows(),
            params.min_leaf
        )));
    }
    let stats = class_stats(train, None)?;
    grow_tree(
        &Presorted::new(train),
        &stats,
        GrowParams {
            max_depth: params.max_depth,
            criterion: Criterion::Gini {
                min_leaf: params.min_leaf.max(1) as f64,
            },
            features_per_split: None,
        },
        None,
    )
}
