//! Annotation statistics and annotation-quality reports.
//!
//! Text layouts: statistics list positive/negative/undefined percentages per attribute
//! with a total row and the mean ± standard deviation of defined annotations per
//! sample; quality tables list accuracy, precision and recall per attribute with a
//! pooled total row, optionally prefixed by main source, category and class.

use std::fmt::Write as _;

use crate::datamodel::{AnnotationMatrix, AttributeSchema};
use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};
use crate::pipeline::ProvenanceReport;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub attribute: String,
    pub positive: usize,
    pub negative: usize,
    pub undefined: usize,
}

impl StatsRow {
    fn pct(&self, count: usize) -> f64 {
        let n = self.positive + self.negative + self.undefined;
        if n == 0 {
            0.0
        } else {
            100.0 * count as f64 / n as f64
        }
    }

    pub fn positive_pct(&self) -> f64 {
        self.pct(self.positive)
    }

    pub fn negative_pct(&self) -> f64 {
        self.pct(self.negative)
    }

    pub fn undefined_pct(&self) -> f64 {
        self.pct(self.undefined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationStats {
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
    pub num_samples: usize,
    /// Defined annotations per sample: mean and population standard deviation.
    pub defined_mean: f64,
    pub defined_std: f64,
}

pub fn annotation_stats(matrix: &AnnotationMatrix, schema: &AttributeSchema) -> Result<AnnotationStats> {
    if matrix.num_attributes() != schema.len() {
        return Err(Error::Shape(format!(
            "{} columns for {} schema attributes",
            matrix.num_attributes(),
            schema.len()
        )));
    }
    let rows: Vec<StatsRow> = schema
        .names()
        .enumerate()
        .map(|(a, name)| {
            let col = matrix.column(a);
            StatsRow {
                attribute: name.to_string(),
                positive: col.iter().filter(|&&v| v == 1).count(),
                negative: col.iter().filter(|&&v| v == -1).count(),
                undefined: col.iter().filter(|&&v| v == 0).count(),
            }
        })
        .collect();
    let total = StatsRow {
        attribute: "Total".into(),
        positive: rows.iter().map(|r| r.positive).sum(),
        negative: rows.iter().map(|r| r.negative).sum(),
        undefined: rows.iter().map(|r| r.undefined).sum(),
    };
    let n = matrix.num_samples();
    let defined: Vec<f64> = (0..n).map(|i| matrix.defined_in_row(i) as f64).collect();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = defined.iter().sum::<f64>() / n as f64;
        let var = defined.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    Ok(AnnotationStats {
        rows,
        total,
        num_samples: n,
        defined_mean: mean,
        defined_std: std,
    })
}

/// Left-aligned first column, right-aligned rest, a rule under the header and
/// another before the final row when `total_rule` is set.
fn render(cells: &[Vec<String>], left_columns: usize, total_rule: bool) -> String {
    let ncol = cells[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let rule = widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ");
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        if total_rule && i == cells.len() - 1 && i > 1 {
            let _ = writeln!(out, "{rule}");
        }
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, &w))| if c < left_columns { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{rule}");
        }
    }
    out
}

impl AnnotationStats {
    /// `attribute,positive,negative,undefined,positive_pct,negative_pct,undefined_pct`
    pub fn to_csv(&self, header: Option<ArtifactHeader>) -> String {
        let mut out = String::from("attribute,positive,negative,undefined,positive_pct,negative_pct,undefined_pct\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.attribute,
                r.positive,
                r.negative,
                r.undefined,
                r.positive_pct(),
                r.negative_pct(),
                r.undefined_pct()
            );
        }
        io_util::with_header(header, out)
    }

    pub fn to_text(&self) -> String {
        let mut cells = vec![vec![
            "Attribute".to_string(),
            "Positive".into(),
            "Negative".into(),
            "Undefined".into(),
        ]];
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            cells.push(vec![
                r.attribute.clone(),
                format!("{:.1}%", r.positive_pct()),
                format!("{:.1}%", r.negative_pct()),
                format!("{:.1}%", r.undefined_pct()),
            ]);
        }
        let mut out = render(&cells, 1, true);
        let _ = writeln!(
            out,
            "\n{} samples; defined annotations per sample: {:.1} ± {:.1}",
            self.num_samples, self.defined_mean, self.defined_std
        );
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    tn: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, pred: i8, truth: i8) {
        match (pred, truth) {
            (1, 1) => self.tp += 1,
            (-1, -1) => self.tn += 1,
            (1, -1) => self.fp += 1,
            (-1, 1) => self.fn_ += 1,
            _ => {}
        }
    }

    fn merge(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    fn row(&self, attribute: &str) -> QualityRow {
        let n = self.tp + self.tn + self.fp + self.fn_;
        let recall = Self::ratio(self.tp, self.tp + self.fn_);
        let specificity = Self::ratio(self.tn, self.tn + self.fp);
        let balanced = match (recall, specificity) {
            (Some(a), Some(b)) => Some((a + b) / 2.0),
            (a, b) => a.or(b),
        };
        QualityRow {
            attribute: attribute.to_string(),
            support: n,
            accuracy: Self::ratio(self.tp + self.tn, n),
            precision: Self::ratio(self.tp, self.tp + self.fp),
            recall,
            balanced_accuracy: balanced,
        }
    }
}

/// Metrics over the cells defined in both prediction and truth. `None` where the
/// denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRow {
    pub attribute: String,
    pub support: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Mean recall over the truth classes present.
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
    /// All attributes pooled.
    pub total: QualityRow,
}

/// Compares predicted annotations with ground truth, column by column.
pub fn evaluate_labels(predicted: &AnnotationMatrix, truth: &AnnotationMatrix, attributes: &[String]) -> Result<QualityReport> {
    if predicted.values().dim() != truth.values().dim() || predicted.num_attributes() != attributes.len() {
        return Err(Error::Shape(format!(
            "predictions {:?}, truth {:?}, {} attribute names",
            predicted.values().dim(),
            truth.values().dim(),
            attributes.len()
        )));
    }
    let mut pooled = Confusion::default();
    let rows = attributes
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let mut c = Confusion::default();
            for (&p, &t) in predicted.column(a).iter().zip(truth.column(a).iter()) {
                c.add(p, t);
            }
            pooled.merge(&c);
            c.row(name)
        })
        .collect();
    Ok(QualityReport {
        rows,
        total: pooled.row("Total"),
    })
}

fn two(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.2}"))
}

impl QualityReport {
    /// `attribute,accuracy,precision,recall,balanced_accuracy,support`; empty fields are N/A.
    pub fn to_csv(&self, header: Option<ArtifactHeader>) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("attribute,accuracy,precision,recall,balanced_accuracy,support\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.attribute,
                opt(r.accuracy),
                opt(r.precision),
                opt(r.recall),
                opt(r.balanced_accuracy),
                r.support
            );
        }
        io_util::with_header(header, out)
    }

    /// Attribute, Acc, Precision, Recall with a Total row.
    pub fn to_text(&self) -> String {
        let mut cells = vec![vec![
            "Attribute".to_string(),
            "Acc".into(),
            "Precision".into(),
            "Recall".into(),
        ]];
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            cells.push(vec![r.attribute.clone(), two(r.accuracy), two(r.precision), two(r.recall)]);
        }
        render(&cells, 1, true)
    }

    /// Attribute and balanced accuracy, with the pooled value last.
    pub fn balanced_text(&self) -> String {
        let mut cells = vec![vec!["Attribute".to_string(), "Balanced acc".into()]];
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            cells.push(vec![r.attribute.clone(), two(r.balanced_accuracy)]);
        }
        render(&cells, 1, true)
    }

    /// Main source, Category, Class, Attribute, Accuracy, Precision, Recall.
    /// Category and class are left blank when they repeat the row above.
    pub fn to_text_with_sources(&self, provenance: &ProvenanceReport) -> Result<String> {
        let mut cells = vec![vec![
            "Main source".to_string(),
            "Category".into(),
            "Class".into(),
            "Attribute".into(),
            "Accuracy".into(),
            "Precision".into(),
            "Recall".into(),
        ]];
        let (mut last_cat, mut last_class) = (None, None);
        for r in &self.rows {
            let p = provenance
                .rows
                .iter()
                .find(|p| p.attribute == r.attribute)
                .ok_or_else(|| Error::Schema(format!("no provenance for attribute `{}`", r.attribute)))?;
            let cat = p.category.clone().unwrap_or_default();
            let show_cat = last_cat.as_ref() != Some(&cat);
            let show_class = show_cat || last_class.as_ref() != Some(&p.class);
            cells.push(vec![
                p.main_source.clone().unwrap_or_else(|| "-".into()),
                if show_cat { cat.clone() } else { String::new() },
                if show_class { p.class.clone() } else { String::new() },
                r.attribute.clone(),
                two(r.accuracy),
                two(r.precision),
                two(r.recall),
            ]);
            last_cat = Some(cat);
            last_class = Some(p.class.clone());
        }
        let t = &self.total;
        cells.push(vec![
            String::new(),
            String::new(),
            "Total".into(),
            String::new(),
            two(t.accuracy),
            two(t.precision),
            two(t.recall),
        ]);
        Ok(render(&cells, 4, true))
    }
}
