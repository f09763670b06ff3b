use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::AnnotatedDataset;
use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};
use crate::seed::rng_for;

use super::features::{hamming_score, joint_features, overlap, HammingMode, JointFeature};

/// How training pairs are drawn from a labelled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSampling {
    pub min_overlap: usize,
    /// Upper bound on same-subject pairs per subject; `None` keeps all.
    pub max_genuine_per_subject: Option<usize>,
    /// Imposter pairs drawn per genuine pair.
    pub imposter_ratio: f64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self {
            min_overlap: 10,
            max_genuine_per_subject: Some(50),
            imposter_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub iterations: usize,
    /// Step size relative to the loss's curvature bound; below 2 converges.
    pub learning_rate: f64,
    pub l2: f64,
    pub sampling: PairSampling,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 1.0,
            l2: 1e-4,
            sampling: PairSampling::default(),
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::Config("logistic regression needs iterations >= 1, learning_rate > 0, l2 >= 0".into()));
        }
        if !(self.sampling.imposter_ratio > 0.0) {
            return Err(Error::Config("imposter_ratio must be > 0".into()));
        }
        Ok(())
    }
}

/// Linear model over joint features; `weights[3a + slot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegComparator {
    pub attributes: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub genuine_pairs: usize,
    pub imposter_pairs: usize,
    pub seed: u64,
}

impl LogRegComparator {
    pub fn zeros(attributes: Vec<String>) -> Self {
        let weights = vec![0.0; 3 * attributes.len()];
        Self {
            attributes,
            weights,
            bias: 0.0,
            genuine_pairs: 0,
            imposter_pairs: 0,
            seed: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        io_util::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io_util::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if model.weights.len() != 3 * model.attributes.len() {
            return Err(Error::Shape(format!(
                "{}: {} weights for {} attributes",
                path.display(),
                model.weights.len(),
                model.attributes.len()
            )));
        }
        Ok(model)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn logreg_score(model: &LogRegComparator, x: &JointFeature) -> f64 {
    let z: f64 = model
        .weights
        .iter()
        .zip(x.as_slice())
        .filter(|(_, &b)| b == 1)
        .map(|(w, _)| w)
        .sum::<f64>()
        + model.bias;
    sigmoid(z)
}

/// Same-subject pairs (capped per subject) and an equal-ratio draw of
/// different-subject pairs, all with enough overlap.
fn sample_pairs(ds: &AnnotatedDataset, sampling: &PairSampling, seed: u64) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let ann = ds.annotations();
    let valid = |i: usize, j: usize| overlap(ann.row(i), ann.row(j)) >= sampling.min_overlap;
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        by_subject.entry(&s.subject_id).or_default().push(i);
    }
    let mut rng = rng_for(seed, "recognition/pairs");
    let mut genuine = Vec::new();
    for members in by_subject.values() {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if valid(i, j) {
                    pairs.push((i, j));
                }
            }
        }
        if let Some(cap) = sampling.max_genuine_per_subject {
            if pairs.len() > cap {
                pairs.shuffle(&mut rng);
                pairs.truncate(cap);
                pairs.sort_unstable();
            }
        }
        genuine.extend(pairs);
    }
    if genuine.is_empty() {
        return Err(Error::Training("no valid same-subject pairs to train on".into()));
    }
    if by_subject.len() < 2 {
        return Err(Error::Training("imposter pairs need at least 2 subjects".into()));
    }
    let wanted = ((genuine.len() as f64) * sampling.imposter_ratio).round().max(1.0) as usize;
    let n = ds.len();
    let mut imposter = Vec::with_capacity(wanted);
    let mut attempts = 0usize;
    while imposter.len() < wanted && attempts < 100 * wanted {
        attempts += 1;
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if ds.samples()[i].subject_id != ds.samples()[j].subject_id && valid(i, j) {
            imposter.push((i.min(j), i.max(j)));
        }
    }
    if imposter.is_empty() {
        return Err(Error::Training("no valid different-subject pairs found".into()));
    }
    Ok((genuine, imposter))
}

/// Full-batch gradient descent on the mean logistic loss plus `l2/2 * |w|^2`.
/// The step is `learning_rate` divided by a bound on the loss curvature, so the
/// default converges whatever the number of attributes.
pub fn train_logreg(ds: &AnnotatedDataset, config: &LogRegConfig, seed: u64) -> Result<LogRegComparator> {
    config.validate()?;
    let (genuine, imposter) = sample_pairs(ds, &config.sampling, seed)?;
    let ann = ds.annotations();
    let d = 3 * ds.schema().len();
    let rows: Vec<((usize, usize), f64)> = genuine
        .iter()
        .map(|&p| (p, 1.0))
        .chain(imposter.iter().map(|&p| (p, 0.0)))
        .collect();
    let mut x = Array2::<f64>::zeros((rows.len(), d));
    let y = Array1::from_iter(rows.iter().map(|r| r.1));
    for (r, &((i, j), _)) in rows.iter().enumerate() {
        let f = joint_features(ann.row(i), ann.row(j))?;
        for (c, &b) in f.as_slice().iter().enumerate() {
            x[[r, c]] = f64::from(b);
        }
    }
    // Rows are binary, so |x|^2 + 1 (bias) bounds each row's curvature contribution.
    let max_sq = x.rows().into_iter().map(|r| r.sum()).fold(0.0, f64::max) + 1.0;
    let step = config.learning_rate / (0.25 * max_sq + config.l2);
    let n = rows.len() as f64;
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    for _ in 0..config.iterations {
        let z = x.dot(&w) + b;
        let residual = z.mapv(sigmoid) - &y;
        let gw = x.t().dot(&residual) / n + config.l2 * &w;
        let gb = residual.sum() / n;
        w.scaled_add(-step, &gw);
        b -= step * gb;
    }
    Ok(LogRegComparator {
        attributes: ds.schema().names().map(str::to_string).collect(),
        weights: w.to_vec(),
        bias: b,
        genuine_pairs: genuine.len(),
        imposter_pairs: imposter.len(),
        seed,
    })
}

/// Pairwise scoring rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparator {
    Hamming(HammingMode),
    LogReg(LogRegComparator),
}

impl Comparator {
    pub fn score(&self, reference: ArrayView1<i8>, probe: ArrayView1<i8>) -> Result<f64> {
        let x = joint_features(reference, probe)?;
        Ok(match self {
            Comparator::Hamming(mode) => hamming_score(&x, *mode),
            Comparator::LogReg(m) => {
                if m.attributes.len() != reference.len() {
                    return Err(Error::Shape(format!(
                        "comparator has {} attributes, annotations {}",
                        m.attributes.len(),
                        reference.len()
                    )));
                }
                logreg_score(m, &x)
            }
        })
    }
}

/// Signed weights per attribute and slot: positive supports a genuine decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    pub attributes: Vec<String>,
    pub true_true: Vec<f64>,
    pub false_false: Vec<f64>,
    pub true_false: Vec<f64>,
}

pub fn attribute_importance(model: &LogRegComparator) -> ImportanceTable {
    let slot = |s: usize| (0..model.attributes.len()).map(|a| model.weights[3 * a + s]).collect();
    ImportanceTable {
        attributes: model.attributes.clone(),
        true_true: slot(0),
        false_false: slot(1),
        true_false: slot(2),
    }
}

impl ImportanceTable {
    /// `attribute,true_true,false_false,true_false`
    pub fn to_csv(&self, header: Option<ArtifactHeader>) -> String {
        let mut out = String::from("attribute,true_true,false_false,true_false\n");
        for (a, name) in self.attributes.iter().enumerate() {
            let _ = writeln!(out, "{name},{},{},{}", self.true_true[a], self.false_false[a], self.true_false[a]);
        }
        io_util::with_header(header, out)
    }
}
