//! Per-threshold recounts of the recognition metrics, written with plain loops.

use annotransfer::datamodel::{generate_synthetic, AnnotatedDataset, SyntheticSpec};
use ndarray::Array2;
use rand::Rng;

pub fn thresholds(lists: &[&[f64]]) -> Vec<f64> {
    let mut t: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).filter(|s| s.is_finite()).collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    t.push(f64::INFINITY);
    t
}

pub fn fmr(imp: &[f64], t: f64) -> f64 {
    imp.iter().filter(|&&s| s >= t).count() as f64 / imp.len() as f64
}

pub fn fnmr(gen: &[f64], t: f64) -> f64 {
    gen.iter().filter(|&&s| s < t).count() as f64 / gen.len() as f64
}

/// Probability that a random genuine score beats a random imposter score, ties half.
pub fn auc(gen: &[f64], imp: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &g in gen {
        for &i in imp {
            if g > i {
                wins += 1.0;
            } else if g == i {
                wins += 0.5;
            }
        }
    }
    wins / (gen.len() * imp.len()) as f64
}

/// Intersection of the polyline through the sweep's (FMR, FNMR) points with FMR = FNMR.
pub fn eer(gen: &[f64], imp: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = thresholds(&[gen, imp]).iter().map(|&t| (fmr(imp, t), fnmr(gen, t))).collect();
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if y0 - x0 < 0.0 && y1 - x1 >= 0.0 {
            if y1 == x1 {
                return x1;
            }
            // Solve x0 + s(x1 - x0) = y0 + s(y1 - y0).
            let s = (y0 - x0) / ((x1 - x0) - (y1 - y0));
            return x0 + s * (x1 - x0);
        }
    }
    unreachable!("sweep starts at FMR 1, FNMR 0 and ends at FMR 0, FNMR 1")
}

pub fn fnmr_at(gen: &[f64], imp: &[f64], target: f64) -> f64 {
    let t = thresholds(&[gen, imp])
        .into_iter()
        .filter(|&t| fmr(imp, t) <= target)
        .fold(f64::INFINITY, f64::min);
    fnmr(gen, t)
}

/// Gallery sorted by descending score with the mate after its equals.
pub fn cmc(scores: &Array2<f64>, mated: &[usize]) -> (Vec<f64>, usize) {
    let g = scores.ncols();
    let mut ranks = Vec::new();
    let mut excluded = 0;
    for (i, &m) in mated.iter().enumerate() {
        if scores.row(i).iter().all(|&s| s == f64::NEG_INFINITY) {
            excluded += 1;
            continue;
        }
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| {
            scores[[i, b]]
                .partial_cmp(&scores[[i, a]])
                .unwrap()
                .then_with(|| (a == m).cmp(&(b == m)))
        });
        ranks.push(order.iter().position(|&c| c == m).unwrap() + 1);
    }
    let curve = (1..=g)
        .map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len().max(1) as f64)
        .collect();
    (curve, excluded)
}

/// (threshold, FPIR, FNIR) recounted per threshold.
pub fn det(enrolled: &Array2<f64>, mated: &[usize], unenrolled: &Array2<f64>) -> Vec<(f64, f64, f64)> {
    let valid = |r: ndarray::ArrayView1<f64>| r.iter().any(|&s| s > f64::NEG_INFINITY);
    let e: Vec<usize> = (0..enrolled.nrows()).filter(|&i| valid(enrolled.row(i))).collect();
    let u: Vec<usize> = (0..unenrolled.nrows()).filter(|&i| valid(unenrolled.row(i))).collect();
    let best = |i: usize| unenrolled.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = |i: usize| {
        let m = mated[i];
        (0..enrolled.ncols()).all(|j| j == m || enrolled[[i, j]] < enrolled[[i, m]])
    };
    let mut cand: Vec<f64> = e.iter().filter(|&&i| top(i)).map(|&i| enrolled[[i, mated[i]]]).collect();
    cand.extend(u.iter().map(|&i| best(i)));
    thresholds(&[&cand])
        .into_iter()
        .map(|t| {
            let fp = u.iter().filter(|&&i| best(i) >= t).count() as f64 / u.len() as f64;
            let fnr = e.iter().filter(|&&i| !(top(i) && enrolled[[i, mated[i]]] >= t)).count() as f64 / e.len() as f64;
            (t, fp, fnr)
        })
        .collect()
}

/// Scores on a coarse grid so ties occur.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(0..40u8)) / 40.0).collect()
}

/// Single annotated dataset whose attributes follow the subject, with
/// `flip[a]` the chance that a sample deviates on attribute `a`.
pub fn identity_dataset(subjects: usize, per_subject: usize, flip: Vec<f64>, seed: u64) -> AnnotatedDataset {
    let spec = SyntheticSpec {
        num_sources: 1,
        subjects_per_dataset: subjects,
        samples_per_subject: per_subject,
        dim: 8,
        num_attributes: flip.len(),
        noise_rate: 0.0,
        sample_flip_rate_per_attribute: Some(flip),
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, seed).unwrap().sources.remove(0)
}
