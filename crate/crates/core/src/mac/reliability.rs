//! Monte-Carlo dropout reliability.
//!
//! For the `m` stochastic softmax values `x` of the predicted class,
//! `rel(x) = (1 - alpha) * mean(x) - alpha / m^2 * sum_i sum_j |x_i - x_j|`.
//! The first term rewards confident outputs, the second penalizes disagreement
//! between the dropout samples.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datamodel::AnnotationMatrix;
use crate::error::{Error, Result};

use super::network::{argmax_prefer_later, class_to_label};
use super::{ForwardMode, MacModel, Predictions, ReliabilityConfig};

/// `sum_i sum_j |x_i - x_j|` in `O(m log m)`: after sorting ascending, the k-th value
/// (0-based) exceeds `k` values and is exceeded by `m - 1 - k`.
pub fn pairwise_abs_sum(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    2.0 * sorted
        .iter()
        .enumerate()
        .map(|(k, &v)| (2.0 * k as f64 - m + 1.0) * v)
        .sum::<f64>()
}

/// Literal double loop, kept as a reference for [`pairwise_abs_sum`].
pub fn pairwise_abs_sum_reference(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for &a in x {
        for &b in x {
            s += (a - b).abs();
        }
    }
    s
}

fn check(x: &[f64], alpha: f64) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::Config(format!("reliability needs >= 2 passes, got {}", x.len())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

pub fn reliability(x: &[f64], alpha: f64) -> Result<f64> {
    check(x, alpha)?;
    let m = x.len() as f64;
    let mean = x.iter().sum::<f64>() / m;
    Ok((1.0 - alpha) * mean - alpha / (m * m) * pairwise_abs_sum(x))
}

/// Same quantity through the quadratic double sum.
pub fn reliability_reference(x: &[f64], alpha: f64) -> Result<f64> {
    check(x, alpha)?;
    let m = x.len() as f64;
    let centrality = (1.0 - alpha) / m * x.iter().sum::<f64>();
    let dispersion = alpha / (m * m) * pairwise_abs_sum_reference(x);
    Ok(centrality - dispersion)
}

/// Softmax outputs of `m` stochastic passes: one `(m, N, classes)` array per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticOutputs {
    pub probs: Vec<Array3<f64>>,
}

impl StochasticOutputs {
    pub fn num_passes(&self) -> usize {
        self.probs.first().map_or(0, |p| p.dim().0)
    }

    pub fn num_samples(&self) -> usize {
        self.probs.first().map_or(0, |p| p.dim().1)
    }

    /// Mean softmax row over passes for every sample of attribute `a`.
    pub fn mean_probs(&self, a: usize) -> Array2<f64> {
        self.probs[a].mean_axis(Axis(0)).expect("at least one pass")
    }

    /// Predicted class per sample: argmax of the mean row, ties to the higher index.
    pub fn predicted_class(&self, a: usize) -> Vec<usize> {
        self.mean_probs(a)
            .rows()
            .into_iter()
            .map(argmax_prefer_later)
            .collect()
    }

    /// The `m` softmax values of `class` for `sample`.
    pub fn class_values(&self, a: usize, sample: usize, class: usize) -> Vec<f64> {
        self.probs[a].slice(ndarray::s![.., sample, class]).to_vec()
    }
}

/// Runs `num_passes` dropout-active passes over `x`. Pass `i` draws its masks from a
/// ChaCha stream `i` keyed by `seed`, so the result does not depend on how passes are
/// scheduled across threads.
pub fn stochastic_outputs(model: &MacModel, x: ArrayView2<f64>, num_passes: usize, seed: u64) -> Result<StochasticOutputs> {
    model.check_input(&x)?;
    let passes: Vec<Vec<Array2<f64>>> = (0..num_passes)
        .into_par_iter()
        .map(|i| {
            let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            rng.set_stream(i as u64);
            model.forward(x, ForwardMode::Stochastic, &mut rng)
        })
        .collect::<Result<_>>()?;
    let n = x.nrows();
    let probs = model
        .config
        .schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let mut arr = Array3::<f64>::zeros((num_passes, n, spec.num_classes));
            for (p, pass) in passes.iter().enumerate() {
                arr.index_axis_mut(Axis(0), p).assign(&pass[a]);
            }
            arr
        })
        .collect();
    Ok(StochasticOutputs { probs })
}

/// Labels from the stochastic mean and the reliability of each label.
pub fn predict_with_reliability(
    model: &MacModel,
    x: ArrayView2<f64>,
    config: &ReliabilityConfig,
    seed: u64,
) -> Result<Predictions> {
    config.validate()?;
    let outputs = stochastic_outputs(model, x, config.num_passes, seed)?;
    let n = x.nrows();
    let k = model.num_attributes();
    let mut labels = Array2::<i8>::zeros((n, k));
    let mut rel = Array2::<f64>::zeros((n, k));
    for a in 0..k {
        for (i, class) in outputs.predicted_class(a).into_iter().enumerate() {
            labels[[i, a]] = class_to_label(class);
            rel[[i, a]] = reliability(&outputs.class_values(a, i, class), config.alpha)?;
        }
    }
    Ok(Predictions {
        labels: AnnotationMatrix::new(labels)?,
        reliability: rel,
    })
}
