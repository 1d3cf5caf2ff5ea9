use rand::seq::index::sample;
use rand::Rng;

use super::{check_classes, minority_majority, oversample_target, undersample_target, ResampleError, ResamplePlan, Strategy};
use crate::ingest::ReportKey;
use crate::prepare::FeatureMatrix;
use crate::rng;

/// Random oversampling (duplicates of uniformly drawn minority rows, appended)
/// or undersampling (a uniform subset of majority rows, original order kept).
pub fn random_resample(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<FeatureMatrix, ResampleError> {
    plan.validate()?;
    let counts = check_classes(matrix)?;
    let labels = matrix.labels()?;
    let (minority, majority) = minority_majority(counts);
    let minority_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority).collect();
    let majority_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == majority).collect();
    match plan.strategy {
        Strategy::Oversample => {
            let target = oversample_target(majority_rows.len(), plan.target_ratio);
            let mut out = matrix.clone();
            let base = rng::derive(plan.seed, "oversample");
            for j in 0..target.saturating_sub(minority_rows.len()) {
                let mut r = rng::stream(base, j as u64);
                let src = minority_rows[r.gen_range(0..minority_rows.len())];
                let key = ReportKey::new(format!("{}~o{}", matrix.keys[src], j + 1)).expect("non-empty key");
                out.push_row(key, matrix.row(src), Some(minority), Some(matrix.weight(src)));
            }
            Ok(out)
        }
        Strategy::Undersample => {
            let target = undersample_target(minority_rows.len(), plan.target_ratio);
            if target >= majority_rows.len() {
                return Ok(matrix.clone());
            }
            let mut r = rng::stream(rng::derive(plan.seed, "undersample"), 0);
            let mut keep = vec![true; labels.len()];
            for &i in &majority_rows {
                keep[i] = false;
            }
            for pick in sample(&mut r, majority_rows.len(), target).iter() {
                keep[majority_rows[pick]] = true;
            }
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| keep[i]).collect();
            Ok(matrix.select_rows(&idx))
        }
        other => Err(ResampleError::Plan(format!("random_resample cannot run strategy {other}"))),
    }
}
