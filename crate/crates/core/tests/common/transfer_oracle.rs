//! Brute-force transfer: calibration by exhaustive sweep, then the per-attribute,
//! per-source, per-sample loops of the transfer algorithm written out literally.

use annotransfer::datamodel::{AnnotationMatrix, AttributeSchema, AttributeSpec};
use annotransfer::mac::Predictions;
use annotransfer::pipeline::{
    aggregate, calibrate, obtain_plausibility, transfer, CalibrationConfig, RepairScope, SourceAnnotations,
};
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SourceInstance {
    pub name: String,
    pub attributes: Vec<String>,
    /// Calibration set: rows are samples, columns follow `attributes`.
    pub test_pred: Array2<i8>,
    pub test_rel: Array2<f64>,
    pub test_truth: Array2<i8>,
    /// Target predictions.
    pub target_pred: Array2<i8>,
    pub target_rel: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub schema: AttributeSchema,
    pub sources: Vec<SourceInstance>,
    pub config: CalibrationConfig,
}

fn pm1<R: Rng>(rng: &mut R) -> i8 {
    if rng.random_bool(0.5) {
        1
    } else {
        -1
    }
}

/// Reliabilities come from a coarse grid so ties are common.
fn rel<R: Rng>(rng: &mut R) -> f64 {
    f64::from(rng.random_range(0..8u8)) / 8.0
}

/// Up to 3 attributes in at most 2 classes, up to 5 target samples, 2 sources each
/// covering a random non-empty subset of the attributes.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let k = rng.random_range(1..=3usize);
    let specs: Vec<AttributeSpec> = (0..k)
        .map(|a| AttributeSpec::binary(format!("a{a}"), format!("c{}", rng.random_range(0..2u8))))
        .collect();
    let schema = AttributeSchema::new(specs).unwrap();
    let n_target = rng.random_range(1..=5usize);
    let sources = (0..2)
        .map(|s| {
            let mut attributes: Vec<String> = (0..k).filter(|_| rng.random_bool(0.7)).map(|a| format!("a{a}")).collect();
            if attributes.is_empty() {
                attributes.push(format!("a{}", rng.random_range(0..k)));
            }
            let ka = attributes.len();
            let n_test = rng.random_range(3..=10usize);
            let correct_rate = rng.random_range(0.5..1.0);
            let test_truth = Array2::from_shape_fn((n_test, ka), |_| match rng.random_range(0..10u8) {
                0 => 0,
                1..=5 => 1,
                _ => -1,
            });
            let test_pred = Array2::from_shape_fn((n_test, ka), |(i, a)| {
                let t = test_truth[[i, a]];
                let t = if t == 0 { pm1(rng) } else { t };
                if rng.random_bool(correct_rate) {
                    t
                } else {
                    -t
                }
            });
            SourceInstance {
                name: format!("src{s}"),
                attributes,
                test_pred,
                test_rel: Array2::from_shape_fn((n_test, ka), |_| rel(rng)),
                test_truth,
                target_pred: Array2::from_shape_fn((n_target, ka), |_| pm1(rng)),
                target_rel: Array2::from_shape_fn((n_target, ka), |_| rel(rng)),
            }
        })
        .collect();
    let config = CalibrationConfig {
        acc_min: [0.5, 0.7, 0.9, 1.0][rng.random_range(0..4)],
        d_min: [0.2, 0.5, 0.8][rng.random_range(0..3)],
    };
    Instance { schema, sources, config }
}

/// Balanced accuracy of the defined-truth predictions with reliability >= r.
fn tail_balanced_accuracy(pred: &[i8], rel: &[f64], truth: &[i8], r: f64) -> Option<f64> {
    let mut recalls = Vec::new();
    for class in [1i8, -1] {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class && rel[i] >= r).collect();
        if !idx.is_empty() {
            let hits = idx.iter().filter(|&&i| pred[i] == class).count();
            recalls.push(hits as f64 / idx.len() as f64);
        }
    }
    (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[derive(Debug, Clone)]
pub struct OracleCalibration {
    pub threshold: Option<f64>,
    pub coverage: Option<f64>,
    pub accuracy: Option<f64>,
    /// Unique defined-truth test reliabilities, ascending.
    pub candidates: Vec<f64>,
    pub pred: Vec<i8>,
    pub rel: Vec<f64>,
    pub truth: Vec<i8>,
}

impl OracleCalibration {
    pub fn map_back(&self, r: f64) -> f64 {
        let r = r.min(*self.candidates.last().unwrap());
        tail_balanced_accuracy(&self.pred, &self.rel, &self.truth, r).unwrap()
    }
}

/// Exhaustive sweep over every candidate threshold.
pub fn oracle_calibrate(pred: &[i8], rel: &[f64], truth: &[i8], target_rel: &[f64], config: &CalibrationConfig) -> OracleCalibration {
    let defined: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != 0).collect();
    let mut candidates: Vec<f64> = defined.iter().map(|&i| rel[i]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut out = OracleCalibration {
        threshold: None,
        coverage: None,
        accuracy: None,
        candidates,
        pred: pred.to_vec(),
        rel: rel.to_vec(),
        truth: truth.to_vec(),
    };
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.iter().filter(|&&t| t == -1).count();
    if pos < 2 || neg < 2 {
        return out;
    }
    let feasible: Vec<(f64, f64, f64)> = out
        .candidates
        .iter()
        .filter_map(|&t| {
            let acc = tail_balanced_accuracy(pred, rel, truth, t)?;
            let cov = target_rel.iter().filter(|&&r| r >= t).count() as f64 / target_rel.len() as f64;
            (acc >= config.acc_min && cov >= config.d_min).then_some((t, cov, acc))
        })
        .collect();
    if let Some(&(t, cov, acc)) = feasible.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        out.threshold = Some(t);
        out.coverage = Some(cov);
        out.accuracy = Some(acc);
    }
    out
}

fn col<T: Copy>(m: &Array2<T>, a: usize) -> Vec<T> {
    m.column(a).to_vec()
}

/// Literal transfer, aggregation and class-scoped repair.
pub fn oracle_transfer(inst: &Instance) -> Array2<i8> {
    let n = inst.sources[0].target_pred.nrows();
    let k = inst.schema.len();
    let cals: Vec<Vec<OracleCalibration>> = inst
        .sources
        .iter()
        .map(|s| {
            (0..s.attributes.len())
                .map(|a| {
                    oracle_calibrate(&col(&s.test_pred, a), &col(&s.test_rel, a), &col(&s.test_truth, a), &col(&s.target_rel, a), &inst.config)
                })
                .collect()
        })
        .collect();

    let mut l_target = Array2::<i8>::zeros((n, k));
    for (a, name) in inst.schema.names().enumerate() {
        // l_Source for every source annotating `a`.
        let mut per_source: Vec<(usize, usize, Vec<i8>)> = Vec::new();
        for (s, src) in inst.sources.iter().enumerate() {
            let Some(c) = src.attributes.iter().position(|x| x == name) else { continue };
            let mut l = vec![0i8; n];
            if let Some(thr) = cals[s][c].threshold {
                for i in 0..n {
                    l[i] = if src.target_rel[[i, c]] < thr { 0 } else { src.target_pred[[i, c]] };
                }
            }
            per_source.push((s, c, l));
        }
        for i in 0..n {
            let mut best_acc = f64::NEG_INFINITY;
            for (s, c, l) in &per_source {
                if l[i] == 0 {
                    continue;
                }
                let acc = cals[*s][*c].map_back(inst.sources[*s].target_rel[[i, *c]]);
                if acc > best_acc {
                    best_acc = acc;
                    l_target[[i, a]] = l[i];
                }
            }
        }
    }

    let mut out = l_target.clone();
    for i in 0..n {
        for class in inst.schema.classes() {
            let trues = class.members.iter().filter(|&&a| l_target[[i, a]] == 1).count();
            if trues > 1 {
                for &a in &class.members {
                    out[[i, a]] = 0;
                }
            }
        }
    }
    out
}

/// The library's stages composed on the same instance.
pub fn library_transfer(inst: &Instance) -> Array2<i8> {
    let sources: Vec<SourceAnnotations> = inst
        .sources
        .iter()
        .map(|s| {
            let table = calibrate(
                &s.attributes,
                &AnnotationMatrix::new(s.test_pred.clone()).unwrap(),
                &s.test_rel,
                &AnnotationMatrix::new(s.test_truth.clone()).unwrap(),
                &s.target_rel,
                &inst.config,
            )
            .unwrap();
            let preds = Predictions {
                labels: AnnotationMatrix::new(s.target_pred.clone()).unwrap(),
                reliability: s.target_rel.clone(),
            };
            SourceAnnotations {
                name: s.name.clone(),
                labels: transfer(&preds, &table).unwrap(),
                reliability: s.target_rel.clone(),
                table,
            }
        })
        .collect();
    let agg = aggregate(&sources, &inst.schema).unwrap();
    obtain_plausibility(&agg, &inst.schema, RepairScope::Class)
        .unwrap()
        .into_values()
}
