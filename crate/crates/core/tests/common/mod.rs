#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Per-attribute logistic probe fitted by plain gradient descent. Independent of the
/// crate's own classifiers; used as an oracle on synthetic data.
pub fn fit_probe(x: ArrayView2<f64>, y: ArrayView1<i8>, iters: usize, lr: f64) -> (Array1<f64>, f64) {
    let mut w = Array1::<f64>::zeros(x.ncols());
    let mut b = 0.0;
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| y[i] != 0).collect();
    let n = rows.len() as f64;
    for _ in 0..iters {
        let mut gw = Array1::<f64>::zeros(x.ncols());
        let mut gb = 0.0;
        for &i in &rows {
            let t = if y[i] == 1 { 1.0 } else { 0.0 };
            let p = 1.0 / (1.0 + (-(x.row(i).dot(&w) + b)).exp());
            gw.scaled_add(p - t, &x.row(i));
            gb += p - t;
        }
        w.scaled_add(-lr / n, &gw);
        b -= lr * gb / n;
    }
    (w, b)
}

pub fn probe_predict(x: ArrayView2<f64>, w: &Array1<f64>, b: f64) -> Vec<i8> {
    x.rows()
        .into_iter()
        .map(|r| if r.dot(w) + b > 0.0 { 1 } else { -1 })
        .collect()
}

/// Mean of per-class recalls over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[i8], truth: ArrayView1<i8>) -> f64 {
    let mut recalls = Vec::new();
    for class in [1i8, -1] {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        if !idx.is_empty() {
            let hit = idx.iter().filter(|&&i| pred[i] == class).count();
            recalls.push(hit as f64 / idx.len() as f64);
        }
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

pub fn accuracy(pred: &[i8], truth: ArrayView1<i8>) -> f64 {
    let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != 0).collect();
    idx.iter().filter(|&&i| pred[i] == truth[i]).count() as f64 / idx.len() as f64
}

pub fn column(m: &Array2<i8>, a: usize) -> Vec<i8> {
    m.column(a).to_vec()
}

pub mod transfer_oracle;
pub mod metric_oracle;
pub mod golden;
pub mod gradcheck;
