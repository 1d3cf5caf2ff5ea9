use serde::{Deserialize, Serialize};

use super::matrix::{ColumnKind, FeatureMatrix};
use super::PrepareError;

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    /// Zero variance on the fitting rows.
    Constant,
    /// |r| with a kept column reached the threshold.
    Correlated { with: String, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

/// Pearson correlation, accumulated with one-pass co-moment updates.
/// `None` when either column has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mut mx = 0.0;
    let mut my = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (i + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Removes redundant numeric columns.
///
/// Constant numeric columns go first. Then every pair of remaining numeric
/// columns (in column order) with |r| ≥ `threshold` loses one member: the
/// non-priority one if exactly one is in `priority`, otherwise the later one.
pub fn prune_correlated(
    matrix: &FeatureMatrix,
    threshold: f64,
    priority: &[String],
) -> Result<(FeatureMatrix, Vec<DroppedColumn>), PrepareError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PrepareError::Config(format!(
            "correlation threshold must be in (0, 1], got {threshold}"
        )));
    }
    let numeric: Vec<usize> = (0..matrix.n_cols())
        .filter(|&j| matrix.columns[j].kind == ColumnKind::Numeric)
        .collect();
    if numeric.len() < 2 {
        return Err(PrepareError::Config(format!(
            "correlation pruning needs at least 2 numeric columns, found {}",
            numeric.len()
        )));
    }
    let data: Vec<Vec<f64>> = numeric.iter().map(|&j| matrix.column(j)).collect();
    let name = |k: usize| matrix.columns[numeric[k]].name.clone();
    let is_priority = |k: usize| priority.contains(&matrix.columns[numeric[k]].name);

    let mut dropped = Vec::new();
    let mut alive = vec![true; numeric.len()];
    for k in 0..numeric.len() {
        if is_constant(&data[k]) {
            alive[k] = false;
            dropped.push(DroppedColumn {
                name: name(k),
                reason: DropReason::Constant,
            });
        }
    }
    for a in 0..numeric.len() {
        for b in a + 1..numeric.len() {
            if !(alive[a] && alive[b]) {
                continue;
            }
            let Some(r) = pearson(&data[a], &data[b]) else { continue };
            if r.abs() < threshold {
                continue;
            }
            let (keep, drop) = if is_priority(b) && !is_priority(a) { (b, a) } else { (a, b) };
            alive[drop] = false;
            dropped.push(DroppedColumn {
                name: name(drop),
                reason: DropReason::Correlated { with: name(keep), r },
            });
        }
    }
    let names: Vec<String> = dropped.iter().map(|d| d.name.clone()).collect();
    Ok((matrix.drop_columns(&names), dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prepare::matrix::ColumnMeta;

    fn matrix(cols: &[(&str, Vec<f64>)]) -> FeatureMatrix {
        let n = cols[0].1.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|(_, c)| c[i]).collect()).collect();
        let mut m = FeatureMatrix::from_rows(&rows, None).unwrap();
        m.columns = cols.iter().map(|(name, _)| ColumnMeta::numeric(name)).collect();
        m
    }

    /// Two-pass covariance oracle.
    fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn exact_linear_dependence() {
        let a = vec![1.0, 2.0, 3.0, 5.0, 8.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let (out, dropped) = prune_correlated(&matrix(&[("a", a), ("b", b)]), 0.95, &[]).unwrap();
        assert_eq!(out.column_names(), vec!["a"]);
        assert_eq!(dropped[0].name, "b");
        match &dropped[0].reason {
            DropReason::Correlated { with, r } => {
                assert_eq!(with, "a");
                assert!((r - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn priority_column_survives_even_when_later() {
        let mw = vec![180.16, 365.4, 351.4, 94.1, 46.07];
        let em: Vec<f64> = mw.iter().map(|v| v * 0.9995 + 0.01).collect();
        let priority = vec!["molecular_weight".to_string()];
        let (out, dropped) =
            prune_correlated(&matrix(&[("exact_mass", em.clone()), ("molecular_weight", mw.clone())]), 0.95, &priority).unwrap();
        assert_eq!(out.column_names(), vec!["molecular_weight"]);
        assert_eq!(dropped[0].name, "exact_mass");
        let (out, _) = prune_correlated(&matrix(&[("molecular_weight", mw), ("exact_mass", em)]), 0.95, &priority).unwrap();
        assert_eq!(out.column_names(), vec!["molecular_weight"]);
    }

    #[test]
    fn weakly_correlated_columns_kept() {
        // r = 0.3 by construction: y = 0.3 x + sqrt(0.91) z with x, z centered,
        // orthogonal and of equal norm.
        let x = [1.0, -1.0, 1.0, -1.0];
        let z = [1.0, 1.0, -1.0, -1.0];
        let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| 0.3 * a + 0.91f64.sqrt() * b).collect();
        let r = pearson_two_pass(&x, &y);
        assert!((r - 0.3).abs() < 1e-12);
        assert!((pearson(&x, &y).unwrap() - r).abs() < 1e-12);
        let (out, dropped) = prune_correlated(&matrix(&[("x", x.to_vec()), ("y", y)]), 0.95, &[]).unwrap();
        assert_eq!(out.n_cols(), 2);
        assert!(dropped.is_empty());
    }

    #[test]
    fn constant_column_has_own_reason() {
        let (out, dropped) =
            prune_correlated(&matrix(&[("a", vec![1.0, 2.0, 4.0]), ("c", vec![3.0; 3]), ("d", vec![0.0, 5.0, 1.0])]), 0.95, &[])
                .unwrap();
        assert_eq!(out.column_names(), vec!["a", "d"]);
        assert_eq!(dropped, vec![DroppedColumn { name: "c".into(), reason: DropReason::Constant }]);
    }

    #[test]
    fn threshold_validation() {
        let m = matrix(&[("a", vec![1.0, 2.0]), ("b", vec![2.0, 1.0])]);
        for t in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(prune_correlated(&m, t, &[]).is_err());
        }
        assert!(prune_correlated(&m, 1.0, &[]).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn one_pass_matches_two_pass(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..60)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Some(r) = pearson(&x, &y) {
                let oracle = pearson_two_pass(&x, &y);
                proptest::prop_assert!((r - oracle).abs() < 1e-9, "{r} vs {oracle}");
            }
        }
    }
}
