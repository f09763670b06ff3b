use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Three indicator slots per attribute: both true, both false, defined and different.
/// All three are 0 when either side is undefined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointFeature {
    bits: Vec<u8>,
}

impl JointFeature {
    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn num_attributes(&self) -> usize {
        self.bits.len() / 3
    }

    pub fn slots(&self, attribute: usize) -> [u8; 3] {
        let s = &self.bits[3 * attribute..3 * attribute + 3];
        [s[0], s[1], s[2]]
    }
}

pub fn joint_features(reference: ArrayView1<i8>, probe: ArrayView1<i8>) -> Result<JointFeature> {
    if reference.len() != probe.len() {
        return Err(Error::Shape(format!(
            "reference has {} attributes, probe {}",
            reference.len(),
            probe.len()
        )));
    }
    let mut bits = vec![0u8; 3 * reference.len()];
    for (a, (&r, &p)) in reference.iter().zip(probe.iter()).enumerate() {
        let slot = match (r, p) {
            (0, _) | (_, 0) => continue,
            (1, 1) => 0,
            (-1, -1) => 1,
            _ => 2,
        };
        bits[3 * a + slot] = 1;
    }
    Ok(JointFeature { bits })
}

/// Number of attributes defined in both rows.
pub fn overlap(reference: ArrayView1<i8>, probe: ArrayView1<i8>) -> usize {
    reference.iter().zip(probe.iter()).filter(|(&r, &p)| r != 0 && p != 0).count()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HammingMode {
    /// `1 - (#disagreeing attributes) / |A|`.
    #[default]
    Disagreement,
    /// `1 - (#set slots) / |A|`. Fully annotated pairs always score 0.
    Literal,
}

/// Normalized hamming similarity over all schema attributes.
pub fn hamming_score(x: &JointFeature, mode: HammingMode) -> f64 {
    let k = x.num_attributes();
    if k == 0 {
        return 1.0;
    }
    let count = match mode {
        HammingMode::Disagreement => (0..k).filter(|&a| x.bits[3 * a + 2] == 1).count(),
        HammingMode::Literal => x.bits.iter().filter(|&&b| b == 1).count(),
    };
    1.0 - count as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonPair {
    pub ref_sample_id: String,
    pub probe_sample_id: String,
    pub overlap_count: usize,
    pub is_genuine: bool,
}

/// Keeps the pairs with at least `min_overlap` jointly annotated attributes.
pub fn valid_filter(pairs: &[ComparisonPair], min_overlap: usize) -> Vec<ComparisonPair> {
    pairs.iter().filter(|p| p.overlap_count >= min_overlap).cloned().collect()
}
