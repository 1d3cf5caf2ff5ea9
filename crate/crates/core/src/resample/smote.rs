use rand::Rng;
use rayon::prelude::*;

use super::neighbors::{PointSet, Standardizer};
use super::{check_classes, minority_majority, oversample_target, ResampleError, ResamplePlan};
use crate::ingest::ReportKey;
use crate::prepare::{ColumnKind, ColumnMeta, FeatureMatrix};
use crate::rng;

/// `x_i + λ (x_nn − x_i)` on numeric columns. Indicator and category-code
/// columns take the value of the nearer parent (`x_i` when λ < 0.5), which is
/// always a valid code.
pub fn interpolate(xi: &[f64], xnn: &[f64], lambda: f64, columns: &[ColumnMeta]) -> Vec<f64> {
    xi.iter()
        .zip(xnn)
        .zip(columns)
        .map(|((&a, &b), c)| match c.kind {
            ColumnKind::Numeric => a + lambda * (b - a),
            _ => {
                if lambda < 0.5 {
                    a
                } else {
                    b
                }
            }
        })
        .collect()
}

/// Appends synthetic minority rows until the plan's target ratio is reached.
///
/// Neighbors are the `k_smote` nearest minority rows in z-scored space (the
/// scaler is fit on the whole input). Synthetic row `j` draws its base row,
/// neighbor and λ from its own random stream.
pub fn smote(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<FeatureMatrix, ResampleError> {
    plan.validate()?;
    let counts = check_classes(matrix)?;
    let labels = matrix.labels()?;
    let (minority, majority) = minority_majority(counts);
    let minority_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority).collect();
    if minority_rows.len() <= plan.k_smote {
        return Err(ResampleError::TooFewMinority {
            found: minority_rows.len(),
            k: plan.k_smote,
        });
    }
    let target = oversample_target(counts[majority.index()], plan.target_ratio);
    let n_new = target.saturating_sub(minority_rows.len());
    if n_new == 0 {
        return Ok(matrix.clone());
    }
    let z = Standardizer::fit(matrix).transform(matrix);
    let points = PointSet {
        data: &z,
        dim: matrix.n_cols(),
    };
    let neighbors = points.all_k_nearest(&minority_rows, &minority_rows, plan.k_smote);
    let base = rng::derive(plan.seed, "smote");
    let synthetic: Vec<(usize, Vec<f64>)> = (0..n_new)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(base, j as u64);
            let a = r.gen_range(0..minority_rows.len());
            let nn = neighbors[a][r.gen_range(0..neighbors[a].len())];
            let lambda: f64 = r.gen();
            let i = minority_rows[a];
            (i, interpolate(matrix.row(i), matrix.row(nn), lambda, &matrix.columns))
        })
        .collect();
    let mut out = matrix.clone();
    for (j, (src, row)) in synthetic.into_iter().enumerate() {
        let key = ReportKey::new(format!("{}~s{}", matrix.keys[src], j + 1)).expect("non-empty key");
        out.push_row(key, &row, Some(minority), Some(1.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{imbalanced, labeled};
    use super::super::Strategy;
    use super::*;
    use crate::prepare::Label;

    fn numeric_cols(d: usize) -> Vec<ColumnMeta> {
        (0..d).map(|j| ColumnMeta::numeric(&format!("f{j}"))).collect()
    }

    #[test]
    fn interpolation_formula() {
        let c = numeric_cols(2);
        assert_eq!(interpolate(&[0.0, 0.0], &[2.0, 2.0], 0.25, &c), vec![0.5, 0.5]);
        assert_eq!(interpolate(&[3.0, 1.0], &[2.0, 2.0], 0.0, &c), vec![3.0, 1.0]);
    }

    #[test]
    fn non_numeric_snaps_to_parent() {
        let mut c = numeric_cols(2);
        c[1].kind = ColumnKind::MultiHot;
        assert_eq!(interpolate(&[0.0, 0.0], &[1.0, 1.0], 0.4, &c), vec![0.4, 0.0]);
        assert_eq!(interpolate(&[0.0, 0.0], &[1.0, 1.0], 0.6, &c), vec![0.6, 1.0]);
    }

    #[test]
    fn two_point_minority() {
        let m = labeled(
            &[vec![0.0, 0.0], vec![2.0, 2.0], vec![9.0, 9.0], vec![8.0, 9.0], vec![9.0, 8.0]],
            &[Label::Death, Label::Death, Label::Recovered, Label::Recovered, Label::Recovered],
        );
        let plan = ResamplePlan {
            strategy: Strategy::Smote,
            k_smote: 1,
            seed: 3,
            ..Default::default()
        };
        let out = smote(&m, &plan).unwrap();
        assert_eq!(out.class_counts(), [3, 3]);
        let s = out.row(5);
        assert_eq!(s[0], s[1]);
        assert!((0.0..=2.0).contains(&s[0]));
    }

    #[test]
    fn synthetic_rows_in_bounding_box() {
        let m = imbalanced(80, 12);
        let out = smote(&m, &ResamplePlan::new(Strategy::Smote, 9)).unwrap();
        assert_eq!(out.class_counts(), [80, 80]);
        let labels = m.labels().unwrap();
        for j in 0..2 {
            let vals: Vec<f64> = (0..m.n_rows()).filter(|&i| labels[i] == Label::Death).map(|i| m.value(i, j)).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in m.n_rows()..out.n_rows() {
                assert!(out.value(i, j) >= lo && out.value(i, j) <= hi);
            }
        }
    }

    #[test]
    fn too_few_minority() {
        let m = imbalanced(20, 5);
        assert!(matches!(
            smote(&m, &ResamplePlan::new(Strategy::Smote, 0)),
            Err(ResampleError::TooFewMinority { found: 5, k: 5 })
        ));
    }
}
