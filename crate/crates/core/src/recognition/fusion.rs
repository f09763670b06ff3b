use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::eval_verification;
use super::scores::{score_set, ScoredPair};

/// How a system's EER turns into its fusion weight (before normalizing to sum 1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionWeighting {
    /// `1 - EER`
    #[default]
    OneMinusEer,
    /// `1 / EER`; systems with EER 0 share all the weight.
    InverseEer,
}

pub fn fusion_weights(eers: &[f64], weighting: FusionWeighting) -> Result<Vec<f64>> {
    if eers.is_empty() || eers.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Metric(format!("EERs must be in [0, 1]: {eers:?}")));
    }
    let raw: Vec<f64> = match weighting {
        FusionWeighting::OneMinusEer => eers.iter().map(|e| 1.0 - e).collect(),
        FusionWeighting::InverseEer if eers.contains(&0.0) => {
            eers.iter().map(|&e| if e == 0.0 { 1.0 } else { 0.0 }).collect()
        }
        FusionWeighting::InverseEer => eers.iter().map(|e| 1.0 / e).collect(),
    };
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0 / eers.len() as f64; eers.len()]);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Maps scores linearly onto [0, 1]; a constant list maps to 0.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| if hi > lo { (s - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Weighted sum of two min-max normalized systems scoring the same pairs in the
/// same order. Weights follow from each system's own EER on these pairs.
/// Returns the fused pairs and the two weights.
pub fn fuse_scores(
    primary: &[ScoredPair],
    secondary: &[ScoredPair],
    weighting: FusionWeighting,
) -> Result<(Vec<ScoredPair>, [f64; 2])> {
    if primary.len() != secondary.len() {
        return Err(Error::Metric(format!(
            "score lists differ in length: {} vs {}",
            primary.len(),
            secondary.len()
        )));
    }
    for (k, (a, b)) in primary.iter().zip(secondary).enumerate() {
        if a.ref_id != b.ref_id || a.probe_id != b.probe_id || a.is_genuine != b.is_genuine {
            return Err(Error::Metric(format!(
                "pair {k} differs: ({}, {}) vs ({}, {})",
                a.ref_id, a.probe_id, b.ref_id, b.probe_id
            )));
        }
    }
    let eer = |p: &[ScoredPair]| -> Result<f64> { Ok(eval_verification(&score_set(p)?, &[])?.eer) };
    let w = fusion_weights(&[eer(primary)?, eer(secondary)?], weighting)?;
    let sa = min_max_normalize(&primary.iter().map(|p| p.score).collect::<Vec<_>>());
    let sb = min_max_normalize(&secondary.iter().map(|p| p.score).collect::<Vec<_>>());
    let fused = primary
        .iter()
        .zip(sa.iter().zip(&sb))
        .map(|(p, (a, b))| ScoredPair {
            score: w[0] * a + w[1] * b,
            ..p.clone()
        })
        .collect();
    Ok((fused, [w[0], w[1]]))
}
