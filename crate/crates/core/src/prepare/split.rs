use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, Label};
use super::PrepareError;
use crate::rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Row indices of each split, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
}

/// Splits `n` items into integer quotas proportional to `ratios` using
/// largest-remainder rounding; ties go to the earlier split.
pub fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut quota = [0usize; 3];
    for (q, e) in quota.iter_mut().zip(&exact) {
        *q = e.floor() as usize;
    }
    let assigned: usize = quota.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &s in order.iter().take(n.saturating_sub(assigned)) {
        quota[s] += 1;
    }
    quota
}

fn validate_ratios(ratios: &[f64; 3]) -> Result<(), PrepareError> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PrepareError::Config(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    Ok(())
}

/// Per-class shuffled allocation. Each class is shuffled with its own seeded
/// stream and cut into train/validation/test by [`largest_remainder`].
pub fn stratified_assignment(labels: &[Label], ratios: &[f64; 3], seed: u64) -> Result<SplitAssignment, PrepareError> {
    validate_ratios(ratios)?;
    let mut out = SplitAssignment {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 3 {
            return Err(PrepareError::TooFewRows {
                class,
                found: members.len(),
                needed: 3,
            });
        }
        members.shuffle(&mut rng::stream(rng::derive(seed, "split"), class.index() as u64));
        let [a, b, _] = largest_remainder(members.len(), ratios);
        out.train.extend_from_slice(&members[..a]);
        out.validation.extend_from_slice(&members[a..a + b]);
        out.test.extend_from_slice(&members[a + b..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

pub fn split_stratified(matrix: &FeatureMatrix, ratios: &[f64; 3], seed: u64) -> Result<SplitSet, PrepareError> {
    let a = stratified_assignment(matrix.labels()?, ratios, seed)?;
    Ok(SplitSet {
        train: matrix.select_rows(&a.train),
        validation: matrix.select_rows(&a.validation),
        test: matrix.select_rows(&a.test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(recovered: usize, death: usize) -> Vec<Label> {
        let mut l = vec![Label::Recovered; recovered];
        l.extend(vec![Label::Death; death]);
        l
    }

    fn counts(idx: &[usize], labels: &[Label]) -> (usize, usize) {
        let d = idx.iter().filter(|&&i| labels[i] == Label::Death).count();
        (idx.len() - d, d)
    }

    #[test]
    fn exact_proportional_allocation() {
        let l = labels(170, 30);
        let a = stratified_assignment(&l, &DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(counts(&a.train, &l), (136, 24));
        assert_eq!(counts(&a.validation, &l), (17, 3));
        assert_eq!(counts(&a.test, &l), (17, 3));
    }

    #[test]
    fn eighty_five_fifteen() {
        let l = labels(85, 15);
        let a = stratified_assignment(&l, &DEFAULT_RATIOS, 9).unwrap();
        assert_eq!(counts(&a.train, &l), (68, 12));
    }

    #[test]
    fn deterministic_and_partitioning() {
        let l = labels(50, 11);
        let a = stratified_assignment(&l, &DEFAULT_RATIOS, 3).unwrap();
        assert_eq!(a, stratified_assignment(&l, &DEFAULT_RATIOS, 3).unwrap());
        assert_ne!(a, stratified_assignment(&l, &DEFAULT_RATIOS, 4).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..l.len()).collect::<Vec<_>>());
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_assignment(&labels(10, 2), &DEFAULT_RATIOS, 0),
            Err(PrepareError::TooFewRows { class: Label::Death, found: 2, .. })
        ));
    }

    #[test]
    fn remainder_rounding() {
        assert_eq!(largest_remainder(11, &DEFAULT_RATIOS), [9, 1, 1]);
        assert_eq!(largest_remainder(3, &DEFAULT_RATIOS), [3, 0, 0]);
        // 3.5, 1.75, 1.75: the two largest remainders belong to the later splits.
        assert_eq!(largest_remainder(7, &[0.5, 0.25, 0.25]), [3, 2, 2]);
        assert_eq!(largest_remainder(10, &[0.45, 0.45, 0.1]), [5, 4, 1]);
        assert!(validate_ratios(&[0.8, 0.1, 0.2]).is_err());
    }
}
