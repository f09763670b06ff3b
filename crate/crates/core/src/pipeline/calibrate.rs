use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datamodel::AnnotationMatrix;
use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};

/// Quality (`acc_min`) and quantity (`d_min`) constraints for threshold selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub acc_min: f64,
    pub d_min: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            acc_min: 0.90,
            d_min: 0.50,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("acc_min", self.acc_min), ("d_min", self.d_min)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationStatus {
    Retained { threshold: f64 },
    Discarded { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCalibration {
    pub attribute: String,
    pub status: CalibrationStatus,
    /// Fraction of target samples at or above the threshold (retained attributes only).
    pub coverage: Option<f64>,
    /// Balanced accuracy of the test predictions at or above the threshold.
    pub balanced_accuracy: Option<f64>,
    /// `(reliability, acc(reliability))` in ascending reliability order: the balanced
    /// accuracy of the test predictions whose reliability is at least that value.
    pub support: Vec<(f64, f64)>,
}

impl AttributeCalibration {
    pub fn threshold(&self) -> Option<f64> {
        match self.status {
            CalibrationStatus::Retained { threshold } => Some(threshold),
            CalibrationStatus::Discarded { .. } => None,
        }
    }

    /// Expected accuracy of a prediction with reliability `r`. Values outside the
    /// observed support clamp to its end points.
    pub fn map_back(&self, r: f64) -> Result<f64> {
        if let CalibrationStatus::Discarded { .. } = self.status {
            return Err(Error::Discarded(self.attribute.clone()));
        }
        let last = self
            .support
            .last()
            .ok_or_else(|| Error::Discarded(self.attribute.clone()))?;
        let at = self.support.partition_point(|&(rel, _)| rel < r);
        Ok(self.support.get(at).map_or(last.1, |p| p.1))
    }
}

/// Per-attribute thresholds and performance-reliability mappings of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub attributes: Vec<AttributeCalibration>,
}

impl CalibrationTable {
    pub fn get(&self, attribute: &str) -> Option<&AttributeCalibration> {
        self.attributes.iter().find(|a| a.attribute == attribute)
    }

    pub fn names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.attribute.clone()).collect()
    }

    pub fn map_back(&self, attribute: &str, r: f64) -> Result<f64> {
        self.get(attribute)
            .ok_or_else(|| Error::Schema(format!("attribute `{attribute}` not calibrated")))?
            .map_back(r)
    }

    /// `attribute,threshold,coverage,balanced_accuracy,status`
    pub fn to_csv(&self, header: Option<ArtifactHeader>) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("attribute,threshold,coverage,balanced_accuracy,status\n");
        for a in &self.attributes {
            let status = match &a.status {
                CalibrationStatus::Retained { .. } => "retained".to_string(),
                CalibrationStatus::Discarded { reason } => format!("discarded: {reason}"),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                a.attribute,
                opt(a.threshold()),
                opt(a.coverage),
                opt(a.balanced_accuracy),
                csv_quote(&status)
            );
        }
        io_util::with_header(header, out)
    }

    /// `attribute,reliability,accuracy`, one row per support point.
    pub fn support_csv(&self, header: Option<ArtifactHeader>) -> String {
        let mut out = String::from("attribute,reliability,accuracy\n");
        for a in &self.attributes {
            for (r, acc) in &a.support {
                let _ = writeln!(out, "{},{r},{acc}", a.attribute);
            }
        }
        io_util::with_header(header, out)
    }

    pub fn save(&self, table_path: &Path, support_path: &Path, header: Option<ArtifactHeader>) -> Result<()> {
        io_util::write_atomic(table_path, self.to_csv(header).as_bytes())?;
        io_util::write_atomic(support_path, self.support_csv(header).as_bytes())
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
}

/// Reads a table written by [`CalibrationTable::save`].
pub fn load_calibration(table_path: &Path, support_path: &Path) -> Result<CalibrationTable> {
    let parse_err = |path: &Path, line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let opt = |path: &Path, line: u64, s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| parse_err(path, line, format!("bad number `{s}`")))
        }
    };
    let mut attributes = Vec::new();
    for rec in reader(table_path)?.records() {
        let rec = rec.map_err(|e| parse_err(table_path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(parse_err(table_path, line, "expected 5 columns".into()));
        }
        let threshold = opt(table_path, line, &rec[1])?;
        let status = match (&rec[4], threshold) {
            ("retained", Some(threshold)) => CalibrationStatus::Retained { threshold },
            (s, _) if s.starts_with("discarded: ") => CalibrationStatus::Discarded {
                reason: s["discarded: ".len()..].to_string(),
            },
            (s, _) => return Err(parse_err(table_path, line, format!("bad status `{s}`"))),
        };
        attributes.push(AttributeCalibration {
            attribute: rec[0].to_string(),
            status,
            coverage: opt(table_path, line, &rec[2])?,
            balanced_accuracy: opt(table_path, line, &rec[3])?,
            support: Vec::new(),
        });
    }
    for rec in reader(support_path)?.records() {
        let rec = rec.map_err(|e| parse_err(support_path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(support_path, line, format!("bad number `{s}`")));
        let entry = attributes
            .iter_mut()
            .find(|a| a.attribute == rec[0])
            .ok_or_else(|| parse_err(support_path, line, format!("unknown attribute `{}`", &rec[0])))?;
        entry.support.push((num(&rec[1])?, num(&rec[2])?));
    }
    Ok(CalibrationTable { attributes })
}

/// Counts of (correct, total) for truth classes +1 and -1.
#[derive(Debug, Clone, Copy, Default)]
struct ClassCounts {
    pos: (usize, usize),
    neg: (usize, usize),
}

impl ClassCounts {
    fn add(&mut self, pred: i8, truth: i8) {
        let slot = if truth == 1 { &mut self.pos } else { &mut self.neg };
        slot.1 += 1;
        if pred == truth {
            slot.0 += 1;
        }
    }

    /// Mean recall over the truth classes that occur.
    fn balanced(&self) -> Option<f64> {
        let recalls: Vec<f64> = [self.pos, self.neg]
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|&(c, n)| c as f64 / n as f64)
            .collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }
}

/// Balanced accuracy (mean per-class recall over the truth classes present) of
/// `pred` against `truth`, ignoring cells where `truth` is 0.
pub fn balanced_accuracy(pred: &[i8], truth: &[i8]) -> Option<f64> {
    let mut c = ClassCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        if t != 0 {
            c.add(p, t);
        }
    }
    c.balanced()
}

fn calibrate_attribute(
    name: &str,
    pred: &[i8],
    rel: &[f64],
    truth: &[i8],
    target_rel: &[f64],
    config: &CalibrationConfig,
) -> AttributeCalibration {
    let discarded = |reason: String, support: Vec<(f64, f64)>| AttributeCalibration {
        attribute: name.to_string(),
        status: CalibrationStatus::Discarded { reason },
        coverage: None,
        balanced_accuracy: None,
        support,
    };
    let mut defined: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != 0).collect();
    let pos = defined.iter().filter(|&&i| truth[i] == 1).count();
    let neg = defined.len() - pos;
    if pos < 2 || neg < 2 {
        return discarded(
            format!("fewer than 2 defined test labels per class ({pos} true, {neg} false)"),
            Vec::new(),
        );
    }

    // Tail accuracies, walking reliabilities from the top down.
    defined.sort_by(|&a, &b| rel[b].total_cmp(&rel[a]));
    let mut support = Vec::new();
    let mut counts = ClassCounts::default();
    for (k, &i) in defined.iter().enumerate() {
        counts.add(pred[i], truth[i]);
        let group_ends = defined.get(k + 1).is_none_or(|&j| rel[j] != rel[i]);
        if group_ends {
            support.push((rel[i], counts.balanced().expect("non-empty tail")));
        }
    }
    support.reverse();

    let mut sorted_target = target_rel.to_vec();
    sorted_target.sort_by(f64::total_cmp);
    let coverage_at = |t: f64| {
        if sorted_target.is_empty() {
            0.0
        } else {
            let below = sorted_target.partition_point(|&r| r < t);
            (sorted_target.len() - below) as f64 / sorted_target.len() as f64
        }
    };

    for &(threshold, acc) in &support {
        let coverage = coverage_at(threshold);
        if coverage < config.d_min {
            break;
        }
        if acc >= config.acc_min {
            return AttributeCalibration {
                attribute: name.to_string(),
                status: CalibrationStatus::Retained { threshold },
                coverage: Some(coverage),
                balanced_accuracy: Some(acc),
                support,
            };
        }
    }
    let best = support
        .iter()
        .filter(|&&(t, _)| coverage_at(t) >= config.d_min)
        .map(|&(_, a)| a)
        .fold(f64::NAN, f64::max);
    let reason = if best.is_nan() {
        format!("no threshold keeps {} of the target samples", config.d_min)
    } else {
        format!("best balanced accuracy {best} below {} at the required coverage", config.acc_min)
    };
    discarded(reason, support)
}

/// Chooses, per attribute, the smallest reliability threshold (over the unique test
/// reliabilities) whose retained test predictions reach `acc_min` balanced accuracy
/// while at least `d_min` of the target samples stay at or above it.
///
/// `attributes` names the columns of all four matrices.
pub fn calibrate(
    attributes: &[String],
    test_predictions: &AnnotationMatrix,
    test_reliability: &Array2<f64>,
    test_truth: &AnnotationMatrix,
    target_reliability: &Array2<f64>,
    config: &CalibrationConfig,
) -> Result<CalibrationTable> {
    config.validate()?;
    let k = attributes.len();
    let n = test_predictions.num_samples();
    if test_predictions.num_attributes() != k
        || test_reliability.dim() != (n, k)
        || test_truth.values().dim() != (n, k)
        || target_reliability.ncols() != k
    {
        return Err(Error::Shape("calibration inputs disagree in shape".into()));
    }
    let table = (0..k)
        .map(|a| {
            calibrate_attribute(
                &attributes[a],
                &test_predictions.column(a).to_vec(),
                &test_reliability.column(a).to_vec(),
                &test_truth.column(a).to_vec(),
                &target_reliability.column(a).to_vec(),
                config,
            )
        })
        .collect();
    Ok(CalibrationTable { attributes: table })
}
