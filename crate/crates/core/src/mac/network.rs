use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::datamodel::AnnotationMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::MacConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout off, frozen batch-norm statistics.
    Deterministic,
    /// Fresh dropout mask per call, frozen batch-norm statistics.
    Stochastic,
}

/// Dense layer followed by batch normalization, ReLU and dropout.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HiddenLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OutputLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Branch {
    pub hidden: HiddenLayer,
    pub out: OutputLayer,
}

/// Trained (or freshly initialized) classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MacModel {
    pub(crate) config: MacConfig,
    pub(crate) trunk: HiddenLayer,
    pub(crate) branches: Vec<Branch>,
}

/// Per-sample predicted labels (+1/-1) and their reliabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: AnnotationMatrix,
    pub reliability: Array2<f64>,
}

fn he_normal<R: Rng>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let std = (gain / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng))
}

impl HiddenLayer {
    fn init<R: Rng>(fan_in: usize, width: usize, rng: &mut R) -> Self {
        Self {
            w: he_normal(fan_in, width, 2.0, rng),
            b: Array1::zeros(width),
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    fn infer<R: Rng>(&self, x: ArrayView2<f64>, eps: f64, dropout: Option<(f64, &mut R)>) -> Array2<f64> {
        let mut z = x.dot(&self.w) + &self.b;
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + eps).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        z *= &scale;
        z += &shift;
        z.mapv_inplace(|v| v.max(0.0));
        if let Some((p, rng)) = dropout {
            apply_dropout(&mut z, p, rng);
        }
        z
    }
}

/// Inverted dropout: keep with probability `1 - p`, scale kept units by `1 / (1 - p)`.
/// Returns the mask (already scaled).
pub(crate) fn sample_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn apply_dropout<R: Rng>(z: &mut Array2<f64>, p: f64, rng: &mut R) {
    if p > 0.0 {
        let mask = sample_mask(z.nrows(), z.ncols(), p, rng);
        *z *= &mask;
    }
}

/// Row-wise softmax, in place.
pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Index of the largest entry; ties go to the higher index, so an exact
/// (0.5, 0.5) tie on a binary branch resolves to "false".
pub(crate) fn argmax_prefer_later(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v >= row[best] {
            best = i;
        }
    }
    best
}

/// Class index to tri-state label: class 0 is "true".
pub(crate) fn class_to_label(class: usize) -> i8 {
    if class == 0 {
        1
    } else {
        -1
    }
}

impl MacModel {
    /// Fan-in scaled normal weights (gain 2 for ReLU layers, 1 for softmax layers),
    /// zero biases, unit batch-norm scale.
    pub fn init(config: MacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, "mac/init");
        let trunk = HiddenLayer::init(config.input_dim, config.trunk_width, &mut rng);
        let branches = config
            .schema
            .attributes()
            .iter()
            .map(|a| Branch {
                hidden: HiddenLayer::init(config.trunk_width, config.branch_width, &mut rng),
                out: OutputLayer {
                    w: he_normal(config.branch_width, a.num_classes, 1.0, &mut rng),
                    b: Array1::zeros(a.num_classes),
                },
            })
            .collect();
        Ok(Self {
            config,
            trunk,
            branches,
        })
    }

    pub fn config(&self) -> &MacConfig {
        &self.config
    }

    pub fn num_attributes(&self) -> usize {
        self.branches.len()
    }

    pub fn trunk_weight_shape(&self) -> (usize, usize) {
        self.trunk.w.dim()
    }

    pub(crate) fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "embedding dimension {} does not match model input {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Inference pass. Returns one `N x num_classes` softmax matrix per attribute.
    ///
    /// In stochastic mode the dropout masks are drawn from `rng` (trunk first, then
    /// the branches in schema order); in deterministic mode `rng` is untouched.
    pub fn forward<R: Rng>(&self, x: ArrayView2<f64>, mode: ForwardMode, rng: &mut R) -> Result<Vec<Array2<f64>>> {
        self.check_input(&x)?;
        let eps = self.config.bn_epsilon;
        let p = self.config.dropout_rate;
        let stochastic = mode == ForwardMode::Stochastic && p > 0.0;
        let h = if stochastic {
            self.trunk.infer(x, eps, Some((p, &mut *rng)))
        } else {
            self.trunk.infer::<R>(x, eps, None)
        };
        let mut outputs = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let g = if stochastic {
                branch.hidden.infer(h.view(), eps, Some((p, &mut *rng)))
            } else {
                branch.hidden.infer::<R>(h.view(), eps, None)
            };
            let mut z = g.dot(&branch.out.w) + &branch.out.b;
            softmax_rows(&mut z);
            outputs.push(z);
        }
        Ok(outputs)
    }

    /// Deterministic softmax outputs.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        self.forward(x, ForwardMode::Deterministic, &mut unused)
    }

    /// Deterministic labels over {+1, -1}; exact ties resolve to -1.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<AnnotationMatrix> {
        let probs = self.predict_proba(x)?;
        let n = x.nrows();
        let mut labels = Array2::<i8>::zeros((n, probs.len()));
        for (a, p) in probs.iter().enumerate() {
            for (i, row) in p.axis_iter(Axis(0)).enumerate() {
                labels[[i, a]] = class_to_label(argmax_prefer_later(row));
            }
        }
        AnnotationMatrix::new(labels)
    }

    /// Trainable tensors in a fixed order: trunk (w, b, gamma, beta), then for each
    /// branch hidden (w, b, gamma, beta) and output (w, b).
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        let mut out = vec![
            s(&mut self.trunk.w),
            s(&mut self.trunk.b),
            s(&mut self.trunk.gamma),
            s(&mut self.trunk.beta),
        ];
        for br in &mut self.branches {
            out.push(s(&mut br.hidden.w));
            out.push(s(&mut br.hidden.b));
            out.push(s(&mut br.hidden.gamma));
            out.push(s(&mut br.hidden.beta));
            out.push(s(&mut br.out.w));
            out.push(s(&mut br.out.b));
        }
        out
    }

    pub(crate) fn trainable_sizes(&self) -> Vec<usize> {
        let mut me = self.clone();
        me.trainable_mut().iter().map(|t| t.len()).collect()
    }

    /// Every stored tensor, trainable and running statistics, in file order.
    pub(crate) fn all_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        fn layer(l: &mut HiddenLayer) -> [&mut [f64]; 6] {
            [
                s(&mut l.w),
                s(&mut l.b),
                s(&mut l.gamma),
                s(&mut l.beta),
                s(&mut l.running_mean),
                s(&mut l.running_var),
            ]
        }
        let mut out: Vec<&mut [f64]> = layer(&mut self.trunk).into_iter().collect();
        for br in &mut self.branches {
            out.extend(layer(&mut br.hidden));
            out.push(s(&mut br.out.w));
            out.push(s(&mut br.out.b));
        }
        out
    }
}
