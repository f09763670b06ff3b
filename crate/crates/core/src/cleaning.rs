//! Binarization of continuous source annotations.
//!
//! Each attribute gets a lower and an upper score threshold: scores above the upper
//! one become +1, scores below the lower one -1, everything in between 0. The
//! thresholds are found by walking outward from zero over a quantile grid and
//! asking a correctness oracle about the samples just beyond each candidate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::datamodel::{AnnotationMatrix, ContinuousAnnotations, Label};
use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
    pub lower: f64,
    pub upper: f64,
}

impl ThresholdPair {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= 0.0 && 0.0 <= upper) {
            return Err(Error::Config(format!(
                "thresholds must satisfy lower <= 0 <= upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn apply(&self, score: f64) -> Label {
        if score > self.upper {
            Label::True
        } else if score < self.lower {
            Label::False
        } else {
            Label::Undefined
        }
    }
}

/// Judges whether a continuous annotation, read with the given polarity, is correct.
pub trait CorrectnessOracle {
    fn is_correct(&self, sample_id: &str, attribute: &str, polarity: Label) -> bool;
}

impl<F> CorrectnessOracle for F
where
    F: Fn(&str, &str, Label) -> bool,
{
    fn is_correct(&self, sample_id: &str, attribute: &str, polarity: Label) -> bool {
        self(sample_id, attribute, polarity)
    }
}

/// Oracle backed by a reference annotation set: a polarity is correct iff the
/// reference carries the same label. Samples unknown to the reference count as wrong.
pub struct ReferenceOracle {
    labels: BTreeMap<(String, String), i8>,
}

impl ReferenceOracle {
    pub fn new(sample_ids: &[String], attributes: &[String], reference: &AnnotationMatrix) -> Self {
        let mut labels = BTreeMap::new();
        for (i, id) in sample_ids.iter().enumerate() {
            for (a, name) in attributes.iter().enumerate() {
                labels.insert((id.clone(), name.clone()), reference.get(i, a));
            }
        }
        Self { labels }
    }
}

impl CorrectnessOracle for ReferenceOracle {
    fn is_correct(&self, sample_id: &str, attribute: &str, polarity: Label) -> bool {
        self.labels
            .get(&(sample_id.to_string(), attribute.to_string()))
            .is_some_and(|&v| v == polarity.value())
    }
}

/// Binarizes every column of `scores` with its threshold pair.
pub fn binarize(scores: &ContinuousAnnotations, thresholds: &BTreeMap<String, ThresholdPair>) -> Result<AnnotationMatrix> {
    let pairs: Vec<ThresholdPair> = scores
        .attributes
        .iter()
        .map(|a| {
            thresholds
                .get(a)
                .copied()
                .ok_or_else(|| Error::Config(format!("no threshold for attribute `{a}`")))
        })
        .collect::<Result<_>>()?;
    let values = Array2::from_shape_fn(scores.scores.dim(), |(i, a)| pairs[a].apply(scores.scores[[i, a]]).value());
    AnnotationMatrix::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Samples inspected per candidate.
    pub window: usize,
    /// Correct judgements needed to accept a candidate.
    pub required_correct: usize,
    /// Quantile increment of the candidate grid.
    pub quantile_step: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            window: 10,
            required_correct: 9,
            quantile_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Accepted(ThresholdPair),
    /// No candidate on the named side reached the required number of correct judgements.
    Unusable { side: Label },
}

/// Candidate magnitudes for one side: zero, then the `step, 2 step, ...` quantiles
/// (nearest rank below) of the side's absolute scores, deduplicated.
pub fn candidate_grid(magnitudes_sorted: &[f64], step: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if magnitudes_sorted.is_empty() {
        return out;
    }
    let n = magnitudes_sorted.len();
    let steps = (1.0 / step).round() as usize;
    for k in 1..steps {
        let q = k as f64 * step;
        let v = magnitudes_sorted[((q * (n - 1) as f64).floor() as usize).min(n - 1)];
        if v > *out.last().unwrap() {
            out.push(v);
        }
    }
    out
}

/// Searches one side. `side` holds (|score|, sample index) sorted by magnitude.
fn search_side(
    side: &[(f64, usize)],
    polarity: Label,
    sample_ids: &[String],
    attribute: &str,
    oracle: &dyn CorrectnessOracle,
    config: &SearchConfig,
) -> Option<f64> {
    let mags: Vec<f64> = side.iter().map(|p| p.0).collect();
    for c in candidate_grid(&mags, config.quantile_step) {
        let start = mags.partition_point(|&m| m <= c);
        let window = &side[start..];
        if window.len() < config.window {
            return None;
        }
        let correct = window[..config.window]
            .iter()
            .filter(|(_, i)| oracle.is_correct(&sample_ids[*i], attribute, polarity))
            .count();
        if correct >= config.required_correct {
            return Some(c);
        }
    }
    None
}

/// Finds the lower and upper threshold of `attribute`, each side independently.
///
/// At a candidate magnitude `c` the oracle sees the `window` samples closest to `c`
/// among those that binarization at `c` would label, i.e. the first ones strictly
/// beyond `c` on that side of zero.
pub fn search_thresholds(
    scores: &ContinuousAnnotations,
    attribute: &str,
    oracle: &dyn CorrectnessOracle,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    if config.window == 0 || config.required_correct > config.window {
        return Err(Error::Config("required_correct must be in [0, window] with window >= 1".into()));
    }
    if !(config.quantile_step > 0.0 && config.quantile_step < 1.0) {
        return Err(Error::Config("quantile_step must be in (0, 1)".into()));
    }
    let col = scores
        .column_of(attribute)
        .ok_or_else(|| Error::Config(format!("unknown attribute `{attribute}`")))?;
    let column = scores.scores.column(col);
    let mut pos: Vec<(f64, usize)> = Vec::new();
    let mut neg: Vec<(f64, usize)> = Vec::new();
    for (i, &s) in column.iter().enumerate() {
        if s > 0.0 {
            pos.push((s, i));
        } else if s < 0.0 {
            neg.push((-s, i));
        }
    }
    if pos.len() < config.window || neg.len() < config.window {
        return Err(Error::Config(format!(
            "attribute `{attribute}` needs >= {} samples on each side of zero ({} positive, {} negative)",
            config.window,
            pos.len(),
            neg.len()
        )));
    }
    pos.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    neg.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ids = &scores.sample_ids;
    let Some(upper) = search_side(&pos, Label::True, ids, attribute, oracle, config) else {
        return Ok(SearchOutcome::Unusable { side: Label::True });
    };
    let Some(lower) = search_side(&neg, Label::False, ids, attribute, oracle, config) else {
        return Ok(SearchOutcome::Unusable { side: Label::False });
    };
    Ok(SearchOutcome::Accepted(ThresholdPair::new(-lower, upper)?))
}

pub fn thresholds_csv(thresholds: &BTreeMap<String, ThresholdPair>, order: &[String], header: Option<ArtifactHeader>) -> String {
    let mut out = String::from("attribute,lower,upper\n");
    for name in order {
        if let Some(t) = thresholds.get(name) {
            let _ = writeln!(out, "{name},{},{}", t.lower, t.upper);
        }
    }
    io_util::with_header(header, out)
}

pub fn load_thresholds(path: &Path) -> Result<BTreeMap<String, ThresholdPair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("bad threshold `{s}`"),
            })
        };
        if rec.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "expected `attribute,lower,upper`".into(),
            });
        }
        out.insert(rec[0].to_string(), ThresholdPair::new(parse(&rec[1])?, parse(&rec[2])?)?);
    }
    Ok(out)
}
