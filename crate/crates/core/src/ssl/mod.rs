//! Pseudo-labeling by area under the margin (AUM).
//!
//! A tree ensemble's prefixes (first `t` boosting rounds or trees) play the
//! role of training checkpoints. Each unlabeled row is scored by the mean of
//! `|2p − 1|` over the checkpoints; the most stable rows receive the final
//! checkpoint's label and join the training pool.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::ReportKey;
use crate::learn::{fit, EnsembleKind, LearnError, Model, ModelParams, TreeEnsemble};
use crate::prepare::{FeatureMatrix, Label, PrepareError};

pub const DEFAULT_MAX_CHECKPOINTS: usize = 50;
pub const MIN_KEEP_FRACTION: f64 = 0.2;
pub const MAX_KEEP_FRACTION: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum SslError {
    #[error("invalid ssl plan: {0}")]
    Plan(String),
    #[error("AUM needs a tree-ensemble base model, got {0}")]
    NotTreeModel(&'static str),
    #[error("labeled and unlabeled matrices have different columns")]
    Schema,
    #[error("no records to select from")]
    Empty,
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
}

/// Prefix sizes `t_1 < … < t_m` of an ensemble with `T` units. With
/// `m = min(T, max)`, `t_j = ⌈j·T/m⌉`, so the last checkpoint is the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSeries<'a> {
    pub ensemble: &'a TreeEnsemble,
    pub checkpoints: Vec<usize>,
}

impl<'a> CheckpointSeries<'a> {
    pub fn new(ensemble: &'a TreeEnsemble, max_checkpoints: usize) -> Result<Self, SslError> {
        let t = ensemble.trees.len();
        if t == 0 || max_checkpoints == 0 {
            return Err(SslError::Plan("a checkpoint series needs at least one tree and one checkpoint".into()));
        }
        let m = t.min(max_checkpoints);
        let checkpoints = (1..=m).map(|j| (j * t).div_ceil(m)).collect();
        Ok(CheckpointSeries { ensemble, checkpoints })
    }

    pub fn every_unit(ensemble: &'a TreeEnsemble) -> Result<Self, SslError> {
        Self::new(ensemble, usize::MAX)
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }
}

/// Death probability of every checkpoint (outer) for every row (inner), in
/// one pass over the trees with a running score per row.
pub fn staged_probabilities(series: &CheckpointSeries<'_>, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, SslError> {
    let e = series.ensemble;
    if x.n_cols() != e.n_features() {
        return Err(LearnError::Dimension {
            expected: e.n_features(),
            found: x.n_cols(),
        }
        .into());
    }
    let mut running = vec![0.0; x.n_rows()];
    let mut out = Vec::with_capacity(series.len());
    let mut done = 0;
    for &t in &series.checkpoints {
        let trees = &e.trees[done..t];
        running.par_iter_mut().enumerate().for_each(|(i, acc)| {
            for tree in trees {
                *acc += tree.predict(x.row(i));
            }
        });
        done = t;
        out.push(
            running
                .iter()
                .map(|&s| match e.kind {
                    EnsembleKind::Boosted => 1.0 - crate::learn::sigmoid(e.base_score + e.learning_rate * s),
                    EnsembleKind::Forest => 1.0 - s / t as f64,
                })
                .map(|p| p.clamp(0.0, 1.0))
                .collect(),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AumRecord {
    pub key: ReportKey,
    pub aum: f64,
    pub pseudo_label: Label,
    /// Larger class probability at the final checkpoint.
    pub final_top_prob: f64,
}

/// Mean binary margin `|2p − 1|` of one row's checkpoint probabilities.
pub fn aum(series: &[f64]) -> f64 {
    series.iter().map(|p| (2.0 * p - 1.0).abs()).sum::<f64>() / series.len() as f64
}

/// One record per row of `staged` (checkpoint-major Death probabilities).
/// The pseudo-label is the final checkpoint's argmax; 0.5 goes to Recovered.
pub fn compute_aum(staged: &[Vec<f64>], keys: &[ReportKey]) -> Vec<AumRecord> {
    let Some(last) = staged.last() else {
        return Vec::new();
    };
    keys.iter()
        .enumerate()
        .map(|(i, key)| {
            let series: Vec<f64> = staged.iter().map(|c| c[i]).collect();
            let p = last[i];
            AumRecord {
                key: key.clone(),
                aum: aum(&series),
                pseudo_label: if p > 0.5 { Label::Death } else { Label::Recovered },
                final_top_prob: p.max(1.0 - p),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslPlan {
    pub keep_fraction: f64,
    pub rounds: usize,
    pub base: ModelParams,
    /// Accept any fraction in [0, 1] instead of [0.2, 0.8].
    pub allow_any_fraction: bool,
    /// Sample weight of pseudo-labeled rows.
    pub pseudo_weight: f64,
    pub max_checkpoints: usize,
}

impl SslPlan {
    pub fn new(base: ModelParams) -> Self {
        SslPlan {
            keep_fraction: 0.3,
            rounds: 1,
            base,
            allow_any_fraction: false,
            pseudo_weight: 1.0,
            max_checkpoints: DEFAULT_MAX_CHECKPOINTS,
        }
    }

    pub fn validate(&self) -> Result<(), SslError> {
        let (lo, hi) = if self.allow_any_fraction {
            (0.0, 1.0)
        } else {
            (MIN_KEEP_FRACTION, MAX_KEEP_FRACTION)
        };
        if !(self.keep_fraction >= lo && self.keep_fraction <= hi) {
            return Err(SslError::Plan(format!(
                "keep_fraction {} is outside [{lo}, {hi}]",
                self.keep_fraction
            )));
        }
        if self.rounds == 0 {
            return Err(SslError::Plan("rounds must be at least 1".into()));
        }
        if !(self.pseudo_weight > 0.0 && self.pseudo_weight.is_finite()) {
            return Err(SslError::Plan("pseudo_weight must be positive".into()));
        }
        if self.max_checkpoints == 0 {
            return Err(SslError::Plan("max_checkpoints must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Vec<AumRecord>,
    /// Selected pseudo-labels as `[death, recovered]`.
    pub counts: [usize; 2],
}

/// Rows kept for a fraction: `⌈fraction · n⌉`.
pub fn keep_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// The first `⌈fraction·n⌉` records of the descending-AUM order (ties by key).
pub fn select_pseudo(records: &[AumRecord], plan: &SslPlan) -> Result<Selection, SslError> {
    plan.validate()?;
    if records.is_empty() {
        return Err(SslError::Empty);
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| b.aum.total_cmp(&a.aum).then_with(|| a.key.cmp(&b.key)));
    sorted.truncate(keep_count(plan.keep_fraction, records.len()));
    let mut counts = [0, 0];
    for r in &sorted {
        counts[r.pseudo_label.index()] += 1;
    }
    Ok(Selection {
        selected: sorted,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRow {
    pub key: ReportKey,
    pub aum: f64,
    pub pseudo_label: Label,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslOutcome {
    pub model: Model,
    pub provenance: Vec<ProvenanceRow>,
    /// Pool size (labeled + pseudo) after each round.
    pub pool_sizes: Vec<usize>,
}

fn tree_ensemble(m: &Model) -> Result<&TreeEnsemble, SslError> {
    m.tree_ensemble().ok_or(SslError::NotTreeModel(m.kind_name()))
}

/// Train, score the remaining unlabeled rows by AUM, move the selected rows
/// (with pseudo-labels) into the pool, retrain; repeated `plan.rounds` times.
pub fn ssl_train(labeled: &FeatureMatrix, unlabeled: &FeatureMatrix, plan: &SslPlan) -> Result<SslOutcome, SslError> {
    plan.validate()?;
    if labeled.columns != unlabeled.columns {
        return Err(SslError::Schema);
    }
    let mut pool = labeled.clone();
    let mut model = fit(&plan.base, &pool)?;
    tree_ensemble(&model)?;
    let mut remaining: Vec<usize> = (0..unlabeled.n_rows()).collect();
    let mut provenance = Vec::new();
    let mut pool_sizes = Vec::new();
    if remaining.is_empty() {
        log::warn!("no unlabeled rows; ssl reduces to supervised training");
    }
    for round in 1..=plan.rounds {
        if remaining.is_empty() {
            break;
        }
        let candidates = unlabeled.select_rows(&remaining);
        let series = CheckpointSeries::new(tree_ensemble(&model)?, plan.max_checkpoints)?;
        let staged = staged_probabilities(&series, &candidates)?;
        let records = compute_aum(&staged, &candidates.keys);
        let selection = select_pseudo(&records, plan)?;
        if selection.selected.is_empty() {
            break;
        }
        let position: std::collections::HashMap<&ReportKey, usize> =
            candidates.keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let picked: Vec<usize> = selection.selected.iter().map(|r| position[&r.key]).collect();
        let mut add = candidates.select_rows(&picked);
        add.labels = Some(selection.selected.iter().map(|r| r.pseudo_label).collect());
        if plan.pseudo_weight != 1.0 {
            add.weights = Some(vec![plan.pseudo_weight; add.n_rows()]);
        }
        pool = pool.concat(&add)?;
        let mut taken = vec![false; remaining.len()];
        for &p in &picked {
            taken[p] = true;
        }
        remaining = remaining.into_iter().zip(taken).filter(|(_, t)| !t).map(|(i, _)| i).collect();
        provenance.extend(selection.selected.into_iter().map(|r| ProvenanceRow {
            key: r.key,
            aum: r.aum,
            pseudo_label: r.pseudo_label,
            round,
        }));
        pool_sizes.push(pool.n_rows());
        model = fit(&plan.base, &pool)?;
    }
    Ok(SslOutcome {
        model,
        provenance,
        pool_sizes,
    })
}

/// `key,aum,pseudo_label,round`.
pub fn write_provenance_csv<W: io::Write>(rows: &[ProvenanceRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(["key", "aum", "pseudo_label", "round"])?;
    for r in rows {
        w.write_record([r.key.as_str(), &r.aum.to_string(), r.pseudo_label.as_str(), &r.round.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{fit_gbdt, GbdtParams, Tree, TreeNode};

    fn key(s: &str) -> ReportKey {
        ReportKey::new(s).unwrap()
    }

    #[test]
    fn worked_aum_cases() {
        assert_eq!(aum(&[0.5, 0.5, 0.5]), 0.0);
        assert_eq!(aum(&[1.0, 1.0]), 1.0);
        let staged = vec![vec![0.9], vec![0.8], vec![0.7]];
        let r = compute_aum(&staged, &[key("a")]);
        assert!((r[0].aum - 0.6).abs() < 1e-15);
        assert_eq!(r[0].pseudo_label, Label::Death);
        assert!((r[0].final_top_prob - 0.7).abs() < 1e-15);
    }

    fn records(aums: &[f64]) -> Vec<AumRecord> {
        aums.iter()
            .enumerate()
            .map(|(i, &a)| AumRecord {
                key: key(&format!("k{i:02}")),
                aum: a,
                pseudo_label: if i % 2 == 0 { Label::Death } else { Label::Recovered },
                final_top_prob: 0.9,
            })
            .collect()
    }

    #[test]
    fn selection_counts_and_ties() {
        let plan = SslPlan::new(ModelParams::Gbdt(GbdtParams::default()));
        let recs = records(&[0.1, 0.9, 0.5, 0.7, 0.2, 0.3, 0.8, 0.0, 0.4, 0.6]);
        let s = select_pseudo(&recs, &plan).unwrap();
        let keys: Vec<&str> = s.selected.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, vec!["k01", "k06", "k03"]);
        assert_eq!(s.counts, [1, 2]);
        let flat = select_pseudo(&records(&[0.5; 10]), &plan).unwrap();
        let keys: Vec<&str> = flat.selected.iter().map(|r| r.key.as_str()).collect();
        assert_eq!(keys, vec!["k00", "k01", "k02"]);
    }

    #[test]
    fn fraction_bounds() {
        let mut plan = SslPlan::new(ModelParams::Gbdt(GbdtParams::default()));
        plan.keep_fraction = 0.1;
        assert!(select_pseudo(&records(&[0.5]), &plan).is_err());
        plan.allow_any_fraction = true;
        assert_eq!(select_pseudo(&records(&[0.5]), &plan).unwrap().selected.len(), 1);
        plan.keep_fraction = 0.0;
        assert!(select_pseudo(&records(&[0.5, 0.7]), &plan).unwrap().selected.is_empty());
        plan.keep_fraction = 0.9;
        plan.allow_any_fraction = false;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn checkpoint_subsampling() {
        let leaf = Tree {
            nodes: vec![TreeNode::leaf(0.0, 1.0)],
        };
        let e = TreeEnsemble {
            kind: EnsembleKind::Boosted,
            trees: vec![leaf; 120],
            learning_rate: 0.1,
            base_score: 0.0,
            feature_names: vec!["a".into()],
        };
        let s = CheckpointSeries::new(&e, 50).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.checkpoints[0], 3);
        assert_eq!(*s.checkpoints.last().unwrap(), 120);
        assert!(s.checkpoints.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(CheckpointSeries::new(&e.prefix(7), 50).unwrap().checkpoints, (1..=7).collect::<Vec<_>>());
    }

    fn fixture() -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..80).map(|i| vec![(i % 10) as f64, (i % 7) as f64]).collect();
        let labels = rows.iter().map(|r| if r[0] + r[1] > 11.0 { Label::Death } else { Label::Recovered }).collect();
        FeatureMatrix::from_rows(&rows, Some(labels)).unwrap()
    }

    #[test]
    fn incremental_matches_naive() {
        let m = fixture();
        let e = fit_gbdt(&m, &GbdtParams { n_rounds: 12, ..Default::default() }).unwrap();
        let series = CheckpointSeries::new(&e, 5).unwrap();
        let staged = staged_probabilities(&series, &m).unwrap();
        for (c, &t) in series.checkpoints.iter().enumerate() {
            let prefix = e.prefix(t);
            for i in 0..m.n_rows() {
                let naive = 1.0 - prefix.predict_recovered(m.row(i));
                assert!((staged[c][i] - naive).abs() < 1e-12);
            }
        }
        let full = CheckpointSeries::new(&e, 1).unwrap();
        let last = staged_probabilities(&full, &m).unwrap();
        assert_eq!(last.len(), 1);
        for i in 0..m.n_rows() {
            assert!((last[0][i] - (1.0 - e.predict_recovered(m.row(i)))).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_grows_by_selection() {
        let m = fixture();
        let (lab, unl): (Vec<usize>, Vec<usize>) = (0..m.n_rows()).partition(|i| i % 3 != 0);
        let labeled = m.select_rows(&lab);
        let mut unlabeled = m.select_rows(&unl);
        unlabeled.labels = None;
        let base = ModelParams::Gbdt(GbdtParams {
            n_rounds: 8,
            ..Default::default()
        });
        let plan = SslPlan::new(base.clone());
        let out = ssl_train(&labeled, &unlabeled, &plan).unwrap();
        assert_eq!(out.provenance.len(), keep_count(0.3, unlabeled.n_rows()));
        assert_eq!(out.pool_sizes, vec![labeled.n_rows() + out.provenance.len()]);

        let mut zero = SslPlan::new(base.clone());
        zero.keep_fraction = 0.0;
        zero.allow_any_fraction = true;
        let sup = fit(&base, &labeled).unwrap();
        assert_eq!(ssl_train(&labeled, &unlabeled, &zero).unwrap().model, sup);

        let mut many = SslPlan::new(base);
        many.rounds = 3;
        let out = ssl_train(&labeled, &unlabeled, &many).unwrap();
        let mut keys: Vec<&ReportKey> = out.provenance.iter().map(|p| &p.key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), out.provenance.len());
    }
}
