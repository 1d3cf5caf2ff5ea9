//! Confusion-matrix metrics and results tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::prepare::Label;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} truth labels but {predicted} predictions")]
    Length { truth: usize, predicted: usize },
    #[error("nothing to evaluate")]
    Empty,
}

/// Counts with Death as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<Confusion, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::Length {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Label::Death, Label::Death) => c.tp += 1,
            (Label::Death, Label::Recovered) => c.fn_ += 1,
            (Label::Recovered, Label::Death) => c.fp += 1,
            (Label::Recovered, Label::Recovered) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub weighted_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub accuracy: f64,
    pub death_recall: f64,
    pub recovered_recall: f64,
    /// Indexed by class: Death, Recovered.
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
    /// Set when some ratio was 0/0 and reported as 0.
    pub undefined: bool,
}

impl MetricsReport {
    pub fn supports(&self) -> [u64; 2] {
        [self.per_class[0].support, self.per_class[1].support]
    }
}

/// `num / den` as an exact integer fraction.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    fn new(num: u128, den: u128) -> Ratio {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// `num / den`; 0/0 is 0 and sets `undefined`.
fn ratio(num: u64, den: u64, undefined: &mut bool) -> Option<Ratio> {
    if den == 0 {
        *undefined = true;
        None
    } else {
        Some(Ratio::new(num as u128, den as u128))
    }
}

fn value(r: Option<Ratio>) -> f64 {
    r.map_or(0.0, Ratio::value)
}

/// `Σ support_c · r_c / n`, reduced to one fraction before dividing.
fn weighted(terms: [(u64, Option<Ratio>); 2], n: u64) -> f64 {
    let mut acc = Ratio { num: 0, den: 1 };
    for (s, r) in terms {
        let Some(r) = r else { continue };
        let prod = (s as u128).checked_mul(r.num).and_then(|sn| {
            let num = acc.num.checked_mul(r.den)?.checked_add(sn.checked_mul(acc.den)?)?;
            Some(Ratio::new(num, acc.den.checked_mul(r.den)?))
        });
        match prod {
            Some(p) => acc = p,
            None => {
                return terms
                    .iter()
                    .map(|(s, r)| *s as f64 / n as f64 * value(*r))
                    .sum()
            }
        }
    }
    match acc.den.checked_mul(n as u128) {
        Some(den) => Ratio::new(acc.num, den).value(),
        None => acc.value() / n as f64,
    }
}

struct ClassRatios {
    precision: Option<Ratio>,
    recall: Option<Ratio>,
    f1: Option<Ratio>,
    support: u64,
}

fn class_ratios(tp: u64, fp: u64, fn_: u64, undefined: &mut bool) -> ClassRatios {
    let precision = ratio(tp, tp + fp, undefined);
    let recall = ratio(tp, tp + fn_, undefined);
    // 2PR / (P + R) = 2tp / (2tp + fp + fn); P + R = 0 exactly when tp = 0.
    let f1 = if tp == 0 {
        *undefined = true;
        None
    } else {
        Some(Ratio::new(2 * tp as u128, (2 * tp + fp + fn_) as u128))
    };
    ClassRatios {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

impl ClassRatios {
    fn metrics(&self) -> ClassMetrics {
        ClassMetrics {
            precision: value(self.precision),
            recall: value(self.recall),
            f1: value(self.f1),
            support: self.support,
        }
    }
}

/// Per-class and support-weighted metrics. 0/0 is reported as 0 and flags
/// the report. Every value is the correctly rounded quotient of its exact
/// fraction (for counts below 2^53).
pub fn metrics(c: &Confusion) -> Result<MetricsReport, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut undefined = false;
    let d = class_ratios(c.tp, c.fp, c.fn_, &mut undefined);
    let r = class_ratios(c.tn, c.fn_, c.fp, &mut undefined);
    let w = |f: fn(&ClassRatios) -> Option<Ratio>| weighted([(d.support, f(&d)), (r.support, f(&r))], total);
    Ok(MetricsReport {
        weighted_f1: w(|x| x.f1),
        weighted_precision: w(|x| x.precision),
        weighted_recall: w(|x| x.recall),
        accuracy: Ratio::new((c.tp + c.tn) as u128, total as u128).value(),
        death_recall: value(d.recall),
        recovered_recall: value(r.recall),
        per_class: [d.metrics(), r.metrics()],
        confusion: *c,
        undefined,
    })
}

/// Round half to even at two decimals, applied to the exact decimal
/// expansion of the binary value.
pub fn format_2dp(x: f64) -> String {
    let scaled = x * 100.0;
    let floor = scaled.floor();
    let diff = scaled - floor;
    let r = if diff > 0.5 {
        floor + 1.0
    } else if diff < 0.5 {
        floor
    } else {
        // `x * 100` landed exactly on .5; decide on the exact value of x.
        let exact = floor / 100.0 + 0.005;
        if x > exact {
            floor + 1.0
        } else if x < exact {
            floor
        } else if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    };
    format!("{:.2}", r / 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub sampling: String,
    pub report: MetricsReport,
}

pub const TABLE_METRICS: [&str; 5] = ["F1", "P", "R", "DR", "RR"];

fn table_values(r: &MetricsReport) -> [f64; 5] {
    [
        r.weighted_f1,
        r.weighted_precision,
        r.weighted_recall,
        r.death_recall,
        r.recovered_recall,
    ]
}

/// Rows per model in first-seen order, one five-metric column block per
/// sampling strategy in first-seen order. Missing cells are empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub models: Vec<String>,
    pub samplings: Vec<String>,
    pub cells: Vec<Vec<Option<[f64; 5]>>>,
}

pub fn results_table(runs: &[RunResult]) -> ResultsTable {
    let mut models: Vec<String> = Vec::new();
    let mut samplings: Vec<String> = Vec::new();
    for r in runs {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !samplings.contains(&r.sampling) {
            samplings.push(r.sampling.clone());
        }
    }
    let mut cells = vec![vec![None; samplings.len()]; models.len()];
    for r in runs {
        let i = models.iter().position(|m| *m == r.model).expect("collected");
        let j = samplings.iter().position(|s| *s == r.sampling).expect("collected");
        cells[i][j] = Some(table_values(&r.report));
    }
    ResultsTable {
        models,
        samplings,
        cells,
    }
}

impl ResultsTable {
    /// Adds the rows and columns of `other`; its filled cells win.
    pub fn merge(&mut self, other: &ResultsTable) {
        for s in &other.samplings {
            if !self.samplings.contains(s) {
                self.samplings.push(s.clone());
                for row in &mut self.cells {
                    row.push(None);
                }
            }
        }
        for (m, row) in other.models.iter().zip(&other.cells) {
            let i = match self.models.iter().position(|x| x == m) {
                Some(i) => i,
                None => {
                    self.models.push(m.clone());
                    self.cells.push(vec![None; self.samplings.len()]);
                    self.models.len() - 1
                }
            };
            for (s, cell) in other.samplings.iter().zip(row) {
                if let Some(v) = cell {
                    let j = self.samplings.iter().position(|x| x == s).expect("added");
                    self.cells[i][j] = Some(*v);
                }
            }
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["model".to_string()];
        for s in &self.samplings {
            h.extend(TABLE_METRICS.iter().map(|m| format!("{s}:{m}")));
        }
        h
    }

    fn rows(&self, fmt: impl Fn(f64) -> String) -> Vec<Vec<String>> {
        self.models
            .iter()
            .zip(&self.cells)
            .map(|(m, cells)| {
                let mut row = vec![m.clone()];
                for c in cells {
                    match c {
                        Some(v) => row.extend(v.iter().map(|x| fmt(*x))),
                        None => row.extend(std::iter::repeat_n(String::new(), 5)),
                    }
                }
                row
            })
            .collect()
    }

    /// Full-precision CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(std::io::Error::other)?;
        for row in self.rows(|x| x.to_string()) {
            w.write_record(row).map_err(std::io::Error::other)?;
        }
        w.flush()
    }

    /// Aligned text with two decimals.
    pub fn to_text(&self) -> String {
        let mut lines = vec![self.header()];
        lines.extend(self.rows(format_2dp));
        let n = lines[0].len();
        let widths: Vec<usize> = (0..n).map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Reads a CSV written by [`ResultsTable::write_csv`].
pub fn read_results_csv(text: &str) -> Result<ResultsTable, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("model") || (header.len() - 1) % 5 != 0 {
        return Err("not a results table".into());
    }
    let samplings: Vec<String> = header[1..]
        .chunks(5)
        .map(|c| c[0].rsplit_once(':').map(|(s, _)| s.to_string()).unwrap_or_default())
        .collect();
    let mut models = Vec::new();
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        models.push(rec[0].to_string());
        let vals: Vec<&str> = rec.iter().skip(1).collect();
        let row = vals
            .chunks(5)
            .map(|c| {
                if c.iter().all(|s| s.is_empty()) {
                    return Ok(None);
                }
                let mut v = [0.0; 5];
                for (k, s) in c.iter().enumerate() {
                    v[k] = s.parse().map_err(|_| format!("bad number `{s}`"))?;
                }
                Ok(Some(v))
            })
            .collect::<Result<Vec<_>, String>>()?;
        cells.push(row);
    }
    Ok(ResultsTable {
        models,
        samplings,
        cells,
    })
}
