//! Line-oriented model files.
//!
//! ```text
//! vetpv-model 1
//! model gbdt
//! learning_rate 0.1
//! base_score 1.0986122886681098
//! features 2
//! feature age_years
//! feature weight_kg
//! trees 1
//! tree 0 3
//! 0	0	1.5	1	2	0.25	4
//! 1	-	-	-	-	-0.5	2
//! 2	-	-	-	-	0.75	2
//! end
//! ```
//!
//! Node lines are `id, feature, threshold, left, right, value, cover`, tab
//! separated, `-` for fields a leaf does not have. Floats use the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;
use std::str::FromStr;

use super::knn::KnnModel;
use super::linear::LinearModel;
use super::model::{EnsembleMode, EnsembleModel, Model};
use super::tree::{EnsembleKind, Tree, TreeEnsemble, TreeNode};
use super::LearnError;
use crate::prepare::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "vetpv-model";

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_ensemble(out: &mut String, e: &TreeEnsemble) {
    let _ = writeln!(out, "learning_rate {}", e.learning_rate);
    let _ = writeln!(out, "base_score {}", e.base_score);
    let _ = writeln!(out, "features {}", e.feature_names.len());
    for f in &e.feature_names {
        let _ = writeln!(out, "feature {f}");
    }
    let _ = writeln!(out, "trees {}", e.trees.len());
    for (t, tree) in e.trees.iter().enumerate() {
        let _ = writeln!(out, "tree {t} {}", tree.nodes.len());
        for (i, n) in tree.nodes.iter().enumerate() {
            match n.feature {
                Some(f) => {
                    let _ = writeln!(out, "{i}\t{f}\t{}\t{}\t{}\t{}\t{}", n.threshold, n.left, n.right, n.value, n.cover);
                }
                None => {
                    let _ = writeln!(out, "{i}\t-\t-\t-\t-\t{}\t{}", n.value, n.cover);
                }
            }
        }
    }
}

fn write_linear(out: &mut String, l: &LinearModel) {
    let _ = writeln!(out, "weights {}", floats(&l.weights));
    let _ = writeln!(out, "bias {}", l.bias);
}

fn write_model(out: &mut String, m: &Model) {
    let _ = writeln!(out, "model {}", m.kind_name());
    match m {
        Model::Tree(e) | Model::Forest(e) | Model::Gbdt(e) => write_ensemble(out, e),
        Model::Logistic(l) => write_linear(out, l),
        Model::Knn(k) => {
            let _ = writeln!(out, "k {}", k.k);
            let _ = writeln!(out, "mean {}", floats(&k.mean));
            let _ = writeln!(out, "scale {}", floats(&k.scale));
            let _ = writeln!(out, "rows {}", k.labels.len());
            let d = k.mean.len();
            for (i, l) in k.labels.iter().enumerate() {
                let _ = writeln!(out, "{} {}", l.as_str(), floats(&k.points[i * d..(i + 1) * d]));
            }
        }
        Model::Ensemble(e) => {
            let _ = writeln!(out, "members {}", e.members.len());
            for member in &e.members {
                write_model(out, member);
            }
            if let Some(meta) = &e.meta {
                let _ = writeln!(out, "meta");
                write_linear(out, meta);
            }
        }
    }
    let _ = writeln!(out, "end");
}

pub fn model_to_text(m: &Model) -> String {
    let mut out = format!("{MAGIC} {MODEL_FORMAT_VERSION}\n");
    write_model(&mut out, m);
    out
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> LearnError {
        LearnError::Format {
            line: self.pos,
            message: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, LearnError> {
        let l = self.lines.get(self.pos).copied().ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(l)
    }

    /// Reads `key rest` and returns `rest`.
    fn field(&mut self, key: &str) -> Result<&'a str, LearnError> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if l == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`, found `{l}`"))),
        }
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T, LearnError> {
        s.trim().parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn num<T: FromStr>(&mut self, key: &str) -> Result<T, LearnError> {
        let v = self.field(key)?;
        self.parse(v)
    }

    fn float_list(&mut self, key: &str) -> Result<Vec<f64>, LearnError> {
        let v = self.field(key)?;
        self.floats(v)
    }

    fn floats(&self, s: &str) -> Result<Vec<f64>, LearnError> {
        s.split_whitespace().map(|t| self.parse(t)).collect()
    }

    fn ensemble(&mut self, kind: EnsembleKind) -> Result<TreeEnsemble, LearnError> {
        let learning_rate = self.num("learning_rate")?;
        let base_score = self.num("base_score")?;
        let n_features: usize = self.num("features")?;
        let feature_names = (0..n_features)
            .map(|_| self.field("feature").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let n_trees: usize = self.num("trees")?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let header = self.field("tree")?;
            let (id, count) = header.split_once(' ').ok_or_else(|| self.err("tree header"))?;
            if self.parse::<usize>(id)? != t {
                return Err(self.err("tree ids out of order"));
            }
            let count: usize = self.parse(count)?;
            let mut nodes = Vec::with_capacity(count);
            for i in 0..count {
                let cells: Vec<&str> = self.next()?.split('\t').collect();
                if cells.len() != 7 || self.parse::<usize>(cells[0])? != i {
                    return Err(self.err("malformed node line"));
                }
                let node = if cells[1] == "-" {
                    TreeNode::leaf(self.parse(cells[5])?, self.parse(cells[6])?)
                } else {
                    TreeNode {
                        feature: Some(self.parse(cells[1])?),
                        threshold: self.parse(cells[2])?,
                        left: self.parse(cells[3])?,
                        right: self.parse(cells[4])?,
                        value: self.parse(cells[5])?,
                        cover: self.parse(cells[6])?,
                    }
                };
                if node.feature.is_some_and(|f| f >= n_features) {
                    return Err(self.err("node feature out of range"));
                }
                nodes.push(node);
            }
            let tree = Tree { nodes };
            tree.validate().map_err(|m| self.err(m))?;
            trees.push(tree);
        }
        Ok(TreeEnsemble {
            kind,
            trees,
            learning_rate,
            base_score,
            feature_names,
        })
    }

    fn linear(&mut self) -> Result<LinearModel, LearnError> {
        let weights = self.float_list("weights")?;
        let bias = self.num("bias")?;
        Ok(LinearModel { weights, bias })
    }

    fn model(&mut self) -> Result<Model, LearnError> {
        let kind = self.field("model")?;
        let m = match kind {
            "tree" => Model::Tree(self.ensemble(EnsembleKind::Forest)?),
            "forest" => Model::Forest(self.ensemble(EnsembleKind::Forest)?),
            "gbdt" => Model::Gbdt(self.ensemble(EnsembleKind::Boosted)?),
            "logistic" => Model::Logistic(self.linear()?),
            "knn" => {
                let k = self.num("k")?;
                let mean = self.float_list("mean")?;
                let scale = self.float_list("scale")?;
                let rows: usize = self.num("rows")?;
                let mut points = Vec::with_capacity(rows * mean.len());
                let mut labels = Vec::with_capacity(rows);
                for _ in 0..rows {
                    let line = self.next()?;
                    let (label, rest) = line.split_once(' ').unwrap_or((line, ""));
                    labels.push(label.parse::<Label>().map_err(|e| self.err(e))?);
                    let v = self.floats(rest)?;
                    if v.len() != mean.len() {
                        return Err(self.err("knn row width"));
                    }
                    points.extend(v);
                }
                Model::Knn(KnnModel {
                    k,
                    mean,
                    scale,
                    points,
                    labels,
                })
            }
            "vote" | "stack" => {
                let n: usize = self.num("members")?;
                let members = (0..n).map(|_| self.model()).collect::<Result<Vec<_>, _>>()?;
                let meta = if kind == "stack" {
                    self.field("meta")?;
                    Some(self.linear()?)
                } else {
                    None
                };
                Model::Ensemble(EnsembleModel {
                    mode: if kind == "stack" { EnsembleMode::Stack } else { EnsembleMode::SoftVote },
                    members,
                    meta,
                })
            }
            other => return Err(self.err(format!("unknown model kind `{other}`"))),
        };
        self.field("end")?;
        Ok(m)
    }
}

pub fn model_from_text(text: &str) -> Result<Model, LearnError> {
    let mut r = Reader {
        lines: text.lines().collect(),
        pos: 0,
    };
    let version: u32 = r.num(MAGIC)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(r.err(format!("model format version {version} is not supported")));
    }
    r.model()
}

#[cfg(test)]
mod tests {
    use super::super::model::{fit, ModelParams};
    use super::super::{GbdtParams, KnnParams, LogisticParams, TreeParams};
    use super::*;
    use crate::prepare::FeatureMatrix;

    #[test]
    fn round_trip_every_kind() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64 / 3.0, (i % 5) as f64 * 1.1]).collect();
        let labels = rows.iter().map(|r| if r[0] > r[1] { Label::Death } else { Label::Recovered }).collect();
        let m = FeatureMatrix::from_rows(&rows, Some(labels)).unwrap();
        let small = vec![
            ModelParams::Gbdt(GbdtParams {
                n_rounds: 5,
                ..Default::default()
            }),
            ModelParams::Tree(TreeParams::default()),
        ];
        let params = vec![
            small[0].clone(),
            small[1].clone(),
            ModelParams::Logistic(LogisticParams::default()),
            ModelParams::Knn(KnnParams::default()),
            ModelParams::Ensemble {
                mode: EnsembleMode::Stack,
                members: small.clone(),
                folds: 3,
                seed: 1,
            },
            ModelParams::Ensemble {
                mode: EnsembleMode::SoftVote,
                members: small,
                folds: 3,
                seed: 1,
            },
        ];
        for p in params {
            let model = fit(&p, &m).unwrap();
            let text = model_to_text(&model);
            let back = model_from_text(&text).unwrap();
            assert_eq!(back, model, "{}", p.kind_name());
            assert_eq!(model_to_text(&back), text);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(model_from_text("vetpv-model 2\nmodel gbdt\n").is_err());
        assert!(model_from_text("something else").is_err());
        let bad = "vetpv-model 1\nmodel tree\nlearning_rate 1\nbase_score 0\nfeatures 1\nfeature a\ntrees 1\ntree 0 1\n0\t-\t-\t-\t-\t0.5\t0\nend\n";
        assert!(model_from_text(bad).is_err());
    }
}
