use annotransfer::datamodel::AttributeSchema;
use annotransfer::mac::{loss_and_gradients, MacConfig, MacModel};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn perturbed_loss(model: &MacModel, tensor: usize, index: usize, delta: f64, x: &Array2<f64>, y: &Array2<i8>) -> f64 {
    let mut m = model.clone();
    set_param(&mut m, tensor, index, delta);
    loss_and_gradients(&m, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(77))
        .unwrap()
        .0
}

fn set_param(model: &mut MacModel, tensor: usize, index: usize, delta: f64) {
    // Round-trip through the model file to reach the parameter blocks by position.
    let schema = model.config().schema.clone();
    let mut bytes = model.to_bytes();
    let header = 4 + 4 + 8 + 3 * 8 + 3 * 8 + 8 + 8 * schema.len() + 8;
    let mut pos = header;
    let trainable_to_block = trainable_block_index(schema.len());
    let target = trainable_to_block[tensor];
    for block in 0.. {
        let len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        if block == target {
            let at = pos + 8 * index;
            let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) + delta;
            bytes[at..at + 8].copy_from_slice(&v.to_le_bytes());
            break;
        }
        pos += 8 * len;
    }
    *model = MacModel::from_bytes(&bytes, &schema).unwrap();
}

/// File blocks interleave running statistics with trainable tensors.
fn trainable_block_index(k: usize) -> Vec<usize> {
    let mut map = vec![0, 1, 2, 3];
    let mut block = 6;
    for _ in 0..k {
        map.extend([block, block + 1, block + 2, block + 3, block + 6, block + 7]);
        block += 8;
    }
    map
}

/// Worst relative error between backpropagated gradients and central differences on a
/// tiny random network (input 4, trunk 7, branches 5, two attributes, batch 4).
pub fn max_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = AttributeSchema::binary_independent(2).unwrap();
    let cfg = MacConfig {
        trunk_width: 7,
        branch_width: 5,
        dropout_rate: 0.3,
        ..MacConfig::new(4, schema)
    };
    let model = MacModel::init(cfg, seed + 16).unwrap();
    let x = Array2::from_shape_simple_fn((4, 4), || StandardNormal.sample(&mut rng));
    let y = ndarray::array![[1i8, -1], [-1, 0], [1, 1], [-1, -1]];
    let (_, grads) = loss_and_gradients(&model, x.view(), y.view(), &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (t, g) in grads.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let numeric = (perturbed_loss(&model, t, i, eps, &x, &y) - perturbed_loss(&model, t, i, -eps, &x, &y)) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
