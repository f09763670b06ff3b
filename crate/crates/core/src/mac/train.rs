use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::datamodel::AnnotatedDataset;
use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::network::{sample_mask, softmax_rows, HiddenLayer};
use super::{Adam, MacModel, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean over the epoch's batches of the summed per-attribute loss.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Attributes without a single defined training label; their branches stay untrained.
    pub skipped_attributes: Vec<String>,
}

struct HiddenCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    pre_act: Array2<f64>,
    inv_std: Array1<f64>,
    mask: Option<Array2<f64>>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

struct HiddenGrads {
    w: Array2<f64>,
    b: Array1<f64>,
    gamma: Array1<f64>,
    beta: Array1<f64>,
}

impl HiddenLayer {
    /// Training-mode pass with batch statistics.
    fn forward_train<R: Rng>(&self, x: ArrayView2<f64>, eps: f64, p: f64, rng: &mut R) -> (Array2<f64>, HiddenCache) {
        let z = x.dot(&self.w) + &self.b;
        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &z - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let pre_act = &xhat * &self.gamma + &self.beta;
        let mut out = pre_act.mapv(|v| v.max(0.0));
        let mask = (p > 0.0).then(|| sample_mask(out.nrows(), out.ncols(), p, rng));
        if let Some(m) = &mask {
            out *= m;
        }
        (
            out,
            HiddenCache {
                input: x.to_owned(),
                xhat,
                pre_act,
                inv_std,
                mask,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    fn backward(&self, cache: &HiddenCache, mut grad_out: Array2<f64>) -> (HiddenGrads, Array2<f64>) {
        if let Some(m) = &cache.mask {
            grad_out *= m;
        }
        ndarray::Zip::from(&mut grad_out)
            .and(&cache.pre_act)
            .for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            });
        let dy = grad_out;
        let n = dy.nrows() as f64;
        let gamma_grad = (&dy * &cache.xhat).sum_axis(Axis(0));
        let beta_grad = dy.sum_axis(Axis(0));
        let dxhat = &dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dz = (&dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat) * &(&cache.inv_std / n);
        let grads = HiddenGrads {
            w: cache.input.t().dot(&dz),
            b: dz.sum_axis(Axis(0)),
            gamma: gamma_grad,
            beta: beta_grad,
        };
        let dx = dz.dot(&self.w.t());
        (grads, dx)
    }

    fn update_running(&mut self, cache: &HiddenCache, momentum: f64) {
        let n = cache.input.nrows() as f64;
        let unbiased = if n > 1.0 {
            &cache.batch_var * (n / (n - 1.0))
        } else {
            cache.batch_var.clone()
        };
        self.running_mean = &self.running_mean * momentum + &cache.batch_mean * (1.0 - momentum);
        self.running_var = &self.running_var * momentum + &unbiased * (1.0 - momentum);
    }
}

struct StepResult {
    loss: f64,
    grads: Vec<Vec<f64>>,
    trunk_cache: HiddenCache,
    branch_caches: Vec<HiddenCache>,
}

fn flat<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// Training-mode forward and backward on one batch. `labels` is `N x K` tri-state;
/// cells at 0 do not contribute to their attribute's loss term.
fn step<R: Rng>(model: &MacModel, x: ArrayView2<f64>, labels: ArrayView2<i8>, rng: &mut R) -> StepResult {
    let eps = model.config.bn_epsilon;
    let p = model.config.dropout_rate;
    let n = x.nrows();
    let (h, trunk_cache) = model.trunk.forward_train(x, eps, p, rng);
    let mut loss = 0.0;
    let mut grad_h = Array2::<f64>::zeros(h.dim());
    let mut branch_grads = Vec::with_capacity(model.branches.len());
    let mut branch_caches = Vec::with_capacity(model.branches.len());
    for (a, branch) in model.branches.iter().enumerate() {
        let (g, cache) = branch.hidden.forward_train(h.view(), eps, p, rng);
        let mut probs = g.dot(&branch.out.w) + &branch.out.b;
        softmax_rows(&mut probs);
        let defined: Vec<usize> = (0..n).filter(|&i| labels[[i, a]] != 0).collect();
        if defined.is_empty() {
            branch_grads.push(None);
            branch_caches.push(cache);
            continue;
        }
        let count = defined.len() as f64;
        let mut dlogits = Array2::<f64>::zeros(probs.dim());
        for &i in &defined {
            let class = if labels[[i, a]] == 1 { 0 } else { 1 };
            loss -= probs[[i, class]].max(1e-300).ln() / count;
            for c in 0..probs.ncols() {
                let target = if c == class { 1.0 } else { 0.0 };
                dlogits[[i, c]] = (probs[[i, c]] - target) / count;
            }
        }
        let out_w = g.t().dot(&dlogits);
        let out_b = dlogits.sum_axis(Axis(0));
        let dg = dlogits.dot(&branch.out.w.t());
        let (hidden_grads, dh) = branch.hidden.backward(&cache, dg);
        grad_h += &dh;
        branch_grads.push(Some((hidden_grads, out_w, out_b)));
        branch_caches.push(cache);
    }
    let (trunk_grads, _) = model.trunk.backward(&trunk_cache, grad_h);
    let mut grads = vec![
        flat(trunk_grads.w),
        flat(trunk_grads.b),
        flat(trunk_grads.gamma),
        flat(trunk_grads.beta),
    ];
    for (branch, bg) in model.branches.iter().zip(branch_grads) {
        match bg {
            Some((hg, ow, ob)) => {
                grads.extend([flat(hg.w), flat(hg.b), flat(hg.gamma), flat(hg.beta), flat(ow), flat(ob)]);
            }
            None => {
                let h = &branch.hidden;
                grads.extend([
                    vec![0.0; h.w.len()],
                    vec![0.0; h.b.len()],
                    vec![0.0; h.gamma.len()],
                    vec![0.0; h.beta.len()],
                    vec![0.0; branch.out.w.len()],
                    vec![0.0; branch.out.b.len()],
                ]);
            }
        }
    }
    StepResult {
        loss,
        grads,
        trunk_cache,
        branch_caches,
    }
}

/// Total multi-task loss of one batch in training mode and its gradient with respect to
/// every trainable tensor (order as in the model file). Dropout masks come from `rng`.
/// Running statistics are not touched.
pub fn loss_and_gradients<R: Rng>(
    model: &MacModel,
    x: ArrayView2<f64>,
    labels: ArrayView2<i8>,
    rng: &mut R,
) -> Result<(f64, Vec<Vec<f64>>)> {
    model.check_input(&x)?;
    if labels.dim() != (x.nrows(), model.num_attributes()) {
        return Err(Error::Shape(format!(
            "labels are {:?}, expected ({}, {})",
            labels.dim(),
            x.nrows(),
            model.num_attributes()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let r = step(model, x, labels, rng);
    Ok((r.loss, r.grads))
}

/// Mini-batch Adam training with seeded shuffling and dropout.
///
/// A trailing batch of a single sample is dropped when `batch_size > 1`, since batch
/// normalization is degenerate on it.
pub fn train(mut model: MacModel, dataset: &AnnotatedDataset, config: &TrainingConfig) -> Result<(MacModel, TrainingLog)> {
    config.validate()?;
    if dataset.schema().attributes() != model.config.schema.attributes() {
        return Err(Error::Schema("dataset schema differs from the model schema".into()));
    }
    let x = dataset.embeddings();
    model.check_input(&x.view())?;
    if dataset.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let labels = dataset.annotations().values();
    let mut log = TrainingLog::default();
    for (a, spec) in dataset.schema().attributes().iter().enumerate() {
        if labels.column(a).iter().all(|&v| v == 0) {
            log.skipped_attributes.push(spec.name.clone());
        }
    }

    let mut shuffle_rng = rng_for(config.seed, "mac/shuffle");
    let mut dropout_rng = rng_for(config.seed, "mac/dropout");
    let mut adam = Adam::new(config.adam, &model.trainable_sizes());
    let momentum = model.config.bn_momentum;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() == 1 && config.batch_size > 1 && dataset.len() > 1 {
                continue;
            }
            let bx = x.select(Axis(0), chunk);
            let by = labels.select(Axis(0), chunk);
            let r = step(&model, bx.view(), by.view(), &mut dropout_rng);
            {
                let mut params = model.trainable_mut();
                adam.update(&mut params, &r.grads, lr);
            }
            model.trunk.update_running(&r.trunk_cache, momentum);
            for (branch, cache) in model.branches.iter_mut().zip(&r.branch_caches) {
                branch.hidden.update_running(cache, momentum);
            }
            total += r.loss;
            batches += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            learning_rate: lr,
            loss: if batches > 0 { total / batches as f64 } else { 0.0 },
        });
    }
    Ok((model, log))
}
