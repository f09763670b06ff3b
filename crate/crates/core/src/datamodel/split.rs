use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::AnnotatedDataset;

/// Disjoint train/test subject sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSplit {
    pub train_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
    pub seed: u64,
    /// Stored as parts per million so the split stays `Eq`.
    pub train_fraction_ppm: u32,
}

impl SubjectSplit {
    pub fn train_fraction(&self) -> f64 {
        f64::from(self.train_fraction_ppm) / 1e6
    }

    /// Row indices of `dataset` on each side, in dataset order.
    pub fn indices(&self, dataset: &AnnotatedDataset) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in dataset.samples().iter().enumerate() {
            if self.train_subjects.contains(&s.subject_id) {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        (train, test)
    }

    pub fn apply(&self, dataset: &AnnotatedDataset) -> (AnnotatedDataset, AnnotatedDataset) {
        let (train, test) = self.indices(dataset);
        (dataset.subset(&train), dataset.subset(&test))
    }
}

/// Subject-exclusive split.
///
/// Subject ids are sorted, shuffled with a seeded permutation, and the first
/// `ceil(train_fraction * S)` go to training. The train side is clamped to
/// `[1, S - 1]` so neither side is empty.
pub fn split_subject_exclusive(dataset: &AnnotatedDataset, train_fraction: f64, seed: u64) -> Result<SubjectSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction must be in (0, 1), got {train_fraction}")));
    }
    let subjects: BTreeSet<&str> = dataset.samples().iter().map(|s| s.subject_id.as_str()).collect();
    if subjects.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 subjects to split, found {}",
            subjects.len()
        )));
    }
    let mut order: Vec<&str> = subjects.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = order.len();
    let n_train = ((train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    Ok(SubjectSplit {
        train_subjects: order[..n_train].iter().map(|s| s.to_string()).collect(),
        test_subjects: order[n_train..].iter().map(|s| s.to_string()).collect(),
        seed,
        train_fraction_ppm: (train_fraction * 1e6).round() as u32,
    })
}
