use super::neighbors::{PointSet, Standardizer};
use super::{check_classes, minority_majority, EnnMode, ResampleError, ResamplePlan};
use crate::prepare::{FeatureMatrix, Label};

/// Majority label among `neighbors`; an even split goes to Recovered.
fn vote(labels: &[Label], neighbors: &[usize]) -> Label {
    let death = neighbors.iter().filter(|&&n| labels[n] == Label::Death).count();
    if 2 * death > neighbors.len() {
        Label::Death
    } else {
        Label::Recovered
    }
}

/// Row indices Wilson editing would delete, ascending. Neighborhoods are
/// computed once on the input (single pass).
pub fn enn_removals(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<Vec<usize>, ResampleError> {
    plan.validate()?;
    let counts = check_classes(matrix)?;
    let n = matrix.n_rows();
    if n <= plan.k_enn {
        return Err(ResampleError::TooFewRows { found: n, k: plan.k_enn });
    }
    let labels = matrix.labels()?;
    // On equal counts the Recovered class is treated as the majority.
    let majority = if counts[0] == counts[1] {
        Label::Recovered
    } else {
        minority_majority(counts).1
    };
    let z = Standardizer::fit(matrix).transform(matrix);
    let points = PointSet {
        data: &z,
        dim: matrix.n_cols(),
    };
    let queries: Vec<usize> = match plan.enn_mode {
        EnnMode::MajorityOnly => (0..n).filter(|&i| labels[i] == majority).collect(),
        EnnMode::AllClasses => (0..n).collect(),
    };
    let all: Vec<usize> = (0..n).collect();
    let neighborhoods = points.all_k_nearest(&queries, &all, plan.k_enn);
    Ok(queries
        .into_iter()
        .zip(neighborhoods)
        .filter(|(i, nb)| vote(labels, nb) != labels[*i])
        .map(|(i, _)| i)
        .collect())
}

/// Removes every (eligible) row whose `k_enn` nearest neighbors vote for a
/// different class.
pub fn enn(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<FeatureMatrix, ResampleError> {
    let removed = enn_removals(matrix, plan)?;
    let mut keep = vec![true; matrix.n_rows()];
    for i in removed {
        keep[i] = false;
    }
    let idx: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    Ok(matrix.select_rows(&idx))
}
