//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! PASS/FAIL lines are always printed; exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use annotransfer::datamodel::{
    annotations_csv, continuous_csv, generate_synthetic, split_subject_exclusive, AnnotationMatrix, AttributeSchema,
    AttributeSpec, ContinuousAnnotations, SyntheticSpec,
};
use annotransfer::mac::{reliability, ReliabilityConfig, TrainingConfig};
use annotransfer::pipeline::{
    calibrate, obtain_plausibility, run_pipeline, CalibrationConfig, CalibrationStatus, MacSettings, PipelineConfig,
    PipelineOutput, PipelineSource, RepairScope, SourceInput,
};
use annotransfer::recognition::{
    cmc_from_scores, comparison_pairs, det_from_scores, eval_closed_set, eval_verification, score_pairs, score_set,
    train_logreg, Comparator, HammingMode, LogRegConfig, ScoreSet,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::gradcheck::max_gradient_error;
use common::metric_oracle as metric;
use common::transfer_oracle::{library_transfer, oracle_calibrate, oracle_transfer, random_instance};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let worst = max_gradient_error(5);
    if worst >= 1e-4 {
        return Err(format!("max relative error {worst:.2e}"));
    }
    within(t.elapsed(), Duration::from_secs(10), format!("max relative error {worst:.2e}"))
}

/// Literal double sum, written out here rather than taken from the library.
fn literal_reliability(x: &[f64], alpha: f64) -> f64 {
    let m = x.len() as f64;
    let mut mean = 0.0;
    let mut spread = 0.0;
    for &a in x {
        mean += a / m;
        for &b in x {
            spread += (a - b).abs();
        }
    }
    (1.0 - alpha) * mean - alpha / (m * m) * spread
}

fn reliability_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(2..200);
        let alpha = rng.random_range(0.0..=1.0);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..=1.0)).collect();
        let fast = reliability(&x, alpha).map_err(|e| e.to_string())?;
        worst = worst.max((fast - literal_reliability(&x, alpha)).abs());
    }
    if worst > 1e-9 {
        return Err(format!("max deviation {worst:.2e}"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..10_000 {
        // every tenth vector is drawn from {0, 1} to probe the extremes
        let x: Vec<f64> = if i % 10 == 0 {
            let p = rng.random_range(0.0..=1.0);
            (0..100).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()
        } else {
            (0..100).map(|_| rng.random_range(0.0..=1.0)).collect()
        };
        let r = reliability(&x, 0.5).map_err(|e| e.to_string())?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    check(
        lo >= -1.0 / 16.0 - 1e-12 && hi <= 0.5 + 1e-12,
        format!("max deviation {worst:.2e}; observed range [{lo:.4}, {hi:.4}]"),
    )
}

fn transfer_oracle() -> Outcome {
    for seed in 0..500 {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        if library_transfer(&inst) != oracle_transfer(&inst) {
            return Err(format!("instance {seed} differs"));
        }
    }
    Ok("500 instances identical".into())
}

fn column_i8(v: &[i8]) -> AnnotationMatrix {
    AnnotationMatrix::new(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()).unwrap()
}

fn column_f64(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

fn calibration_soundness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let names = vec!["a".to_string()];
    let config = CalibrationConfig::default();
    let (mut retained, mut discarded) = (0, 0);
    for case in 0..2000 {
        let n = rng.random_range(4..80);
        let grid = rng.random_range(2..30u32);
        let quality = rng.random_range(0.5..1.0);
        let truth: Vec<i8> = (0..n).map(|_| [1, -1, 0][rng.random_range(0..3)]).collect();
        let rel: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..grid)) / f64::from(grid)).collect();
        // more reliable predictions are more often right
        let pred: Vec<i8> = (0..n)
            .map(|i| {
                let t = if truth[i] == 0 { 1 } else { truth[i] };
                if rng.random_bool((quality * (0.5 + rel[i])).min(1.0)) {
                    t
                } else {
                    -t
                }
            })
            .collect();
        let target: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(0.0..1.0)).collect();
        let table = calibrate(&names, &column_i8(&pred), &column_f64(&rel), &column_i8(&truth), &column_f64(&target), &config)
            .map_err(|e| e.to_string())?;
        let oracle = oracle_calibrate(&pred, &rel, &truth, &target, &config);
        let attr = &table.attributes[0];
        match (&attr.status, oracle.threshold) {
            (CalibrationStatus::Retained { threshold }, Some(o)) => {
                let acc = attr.balanced_accuracy.unwrap_or(f64::NAN);
                let cov = attr.coverage.unwrap_or(f64::NAN);
                if *threshold != o || acc < config.acc_min || cov < config.d_min || Some(acc) != oracle.accuracy {
                    return Err(format!("case {case}: threshold {threshold} vs sweep {o}, acc {acc}, coverage {cov}"));
                }
                retained += 1;
            }
            (CalibrationStatus::Discarded { .. }, None) => discarded += 1,
            (status, o) => return Err(format!("case {case}: library {status:?}, sweep {o:?}")),
        }
    }
    within(t.elapsed(), Duration::from_secs(5), format!("{retained} retained, {discarded} discarded, all agree with the sweep"))
}

fn plausible(m: &AnnotationMatrix, schema: &AttributeSchema) -> bool {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (a, spec) in schema.attributes().iter().enumerate() {
        classes.entry(spec.class_name.as_str()).or_default().push(a);
    }
    (0..m.num_samples()).all(|i| classes.values().all(|attrs| attrs.iter().filter(|&&a| m.get(i, a) == 1).count() <= 1))
}

fn plausibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut fixtures = 0;
    for seed in 0..500 {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let out = AnnotationMatrix::new(library_transfer(&inst)).unwrap();
        if !plausible(&out, &inst.schema) {
            return Err(format!("transfer instance {seed}"));
        }
        fixtures += 1;
    }
    for case in 0..500 {
        let k = rng.random_range(1..8);
        let specs: Vec<AttributeSpec> = (0..k)
            .map(|a| AttributeSpec::binary(format!("a{a}"), format!("c{}", rng.random_range(0..3u8))))
            .collect();
        let schema = AttributeSchema::new(specs).unwrap();
        let n = rng.random_range(1..20);
        let m = AnnotationMatrix::new(Array2::from_shape_fn((n, k), |_| [1, -1, 0][rng.random_range(0..3)])).unwrap();
        for scope in [RepairScope::Class, RepairScope::Row] {
            let out = obtain_plausibility(&m, &schema, scope).map_err(|e| e.to_string())?;
            if !plausible(&out, &schema) {
                return Err(format!("random matrix {case}, {scope:?}"));
            }
            fixtures += 1;
        }
    }
    Ok(format!("{fixtures} repaired matrices, at most one positive per class"))
}

fn synthetic_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_sources: 2,
        subjects_per_dataset: 200,
        samples_per_subject: 5,
        num_attributes: 10,
        noise_rate: 0.05,
        ..SyntheticSpec::default()
    }
}

fn synthetic_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        mac: MacSettings {
            trunk_width: 64,
            branch_width: 32,
            dropout_rate: 0.3,
        },
        training: TrainingConfig {
            epochs: 30,
            learning_rate: 5e-3,
            batch_size: 128,
            ..TrainingConfig::default()
        },
        reliability: ReliabilityConfig {
            num_passes: 50,
            alpha: 0.5,
        },
        ..PipelineConfig::default()
    }
}

fn synthetic_run(seed: u64) -> (PipelineOutput, annotransfer::datamodel::SyntheticData) {
    let data = generate_synthetic(&synthetic_spec(), seed).unwrap();
    let sources = data
        .sources
        .iter()
        .enumerate()
        .map(|(s, ds)| SourceInput {
            name: format!("source{s}"),
            source: PipelineSource::Raw(ds.clone()),
        })
        .collect();
    let out = run_pipeline(sources, &data.target, &synthetic_config(seed)).unwrap();
    (out, data)
}

fn synthetic_transfer() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let (out, data) = pool.install(|| synthetic_run(1));
    let elapsed = t.elapsed();
    let (mut correct, mut labelled) = (0usize, 0usize);
    for ((&l, &truth), _) in out.labels.values().iter().zip(data.target_truth.values()).zip(0..) {
        if l != 0 && truth != 0 {
            labelled += 1;
            correct += usize::from(l == truth);
        }
    }
    let acc = correct as f64 / labelled.max(1) as f64;
    let coverage = labelled as f64 / out.labels.values().len() as f64;
    if acc < 0.9 {
        return Err(format!("accuracy {acc:.4} over {labelled} labels"));
    }
    within(
        elapsed,
        Duration::from_secs(60),
        format!("accuracy {acc:.4} on {labelled} labels ({:.1}% of target cells), single thread", 100.0 * coverage),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 || (a.is_infinite() && a == b)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let targets = [0.0, 0.01, 0.1, 0.25, 0.5, 1.0];
    for case in 0..100 {
        let ng = rng.random_range(1..100);
        let ni = rng.random_range(1..=200 - ng);
        let gen = metric::random_scores(&mut rng, ng);
        let imp = metric::random_scores(&mut rng, ni);
        let r = eval_verification(&ScoreSet::new(gen.clone(), imp.clone()).unwrap(), &targets).map_err(|e| e.to_string())?;
        let ok = close(r.auc, metric::auc(&gen, &imp))
            && close(r.eer, metric::eer(&gen, &imp))
            && r.fnmr_at_fmr.iter().zip(&targets).all(|(f, &t)| close(f.fnmr, metric::fnmr_at(&gen, &imp, t)))
            && r.roc.iter().all(|p| close(p.fmr, metric::fmr(&imp, p.threshold)) && close(p.fnmr, metric::fnmr(&gen, p.threshold)));
        if !ok {
            return Err(format!("verification case {case}"));
        }

        let g = rng.random_range(1..12);
        let n = rng.random_range(1..20);
        let grid = |rng: &mut ChaCha8Rng, rows: usize| {
            Array2::from_shape_fn((rows, g), |_| {
                if rng.random_bool(0.05) {
                    f64::NEG_INFINITY
                } else {
                    f64::from(rng.random_range(0..10u8)) / 10.0
                }
            })
        };
        let enrolled = grid(&mut rng, n);
        let mated: Vec<usize> = (0..n).map(|_| rng.random_range(0..g)).collect();
        let c = cmc_from_scores(&enrolled, &mated).map_err(|e| e.to_string())?;
        let (expect, excluded) = metric::cmc(&enrolled, &mated);
        if c.excluded != excluded || c.cmc.iter().zip(&expect).any(|(a, b)| !close(*a, *b)) {
            return Err(format!("cmc case {case}"));
        }
        let nu = rng.random_range(1..10);
        let unenrolled = grid(&mut rng, nu);
        if let Ok(d) = det_from_scores(&enrolled, &mated, &unenrolled) {
            let expect = metric::det(&enrolled, &mated, &unenrolled);
            let same = d.det.len() == expect.len()
                && d.det.iter().zip(&expect).all(|(p, &(t, fp, fnr))| p.threshold == t && close(p.fpir, fp) && close(p.fnir, fnr));
            if !same {
                return Err(format!("det case {case}"));
            }
        }
    }
    Ok("100 verification and identification cases within 1e-12".into())
}

fn verification_auc(ds: &annotransfer::datamodel::AnnotatedDataset, comparator: &Comparator) -> f64 {
    let pairs = comparison_pairs(ds, 10);
    let scores = score_set(&score_pairs(ds, &pairs, comparator).unwrap()).unwrap();
    eval_verification(&scores, &[]).unwrap().auc
}

fn recognition_sanity() -> Outcome {
    let hamming = Comparator::Hamming(HammingMode::Disagreement);
    let ds = metric::identity_dataset(50, 5, vec![0.0; 24], 4);
    let pairs = comparison_pairs(&ds, 10);
    let scores = score_set(&score_pairs(&ds, &pairs, &hamming).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let eer = eval_verification(&scores, &[]).map_err(|e| e.to_string())?.eer;
    let rank1 = eval_closed_set(&ds, &hamming, 10).map_err(|e| e.to_string())?.curve.cmc[0];

    // identity-linked attributes of mixed stability: six nearly stable, ten noisy
    let mut flip = vec![0.02; 6];
    flip.extend([0.35; 10]);
    let ds = metric::identity_dataset(150, 5, flip, 6);
    let (train, test) = split_subject_exclusive(&ds, 0.3, 7).map_err(|e| e.to_string())?.apply(&ds);
    let model = train_logreg(&train, &LogRegConfig::default(), 8).map_err(|e| e.to_string())?;
    let auc_h = verification_auc(&test, &hamming);
    let auc_l = verification_auc(&test, &Comparator::LogReg(model));
    check(
        eer <= 0.01 && rank1 == 1.0 && auc_l >= auc_h,
        format!("hamming EER {eer:.4}, rank-1 {rank1:.3}; AUC logistic {auc_l:.4} vs hamming {auc_h:.4}"),
    )
}

/// Every artifact a pipeline run writes, as bytes.
fn artifacts(out: &PipelineOutput, data: &annotransfer::datamodel::SyntheticData) -> Vec<(String, Vec<u8>)> {
    let ids = data.target.sample_ids();
    let mut files = vec![
        ("labels.csv".to_string(), annotations_csv(&ids, &data.schema, &out.labels, None).into_bytes()),
        ("aggregated.csv".into(), annotations_csv(&ids, &data.schema, &out.aggregated, None).into_bytes()),
        ("provenance.csv".into(), out.provenance.to_csv(None).into_bytes()),
        ("provenance.txt".into(), out.provenance.to_text().into_bytes()),
    ];
    for s in &out.sources {
        let names: Vec<String> = s.calibration.table.names().iter().map(|n| n.to_string()).collect();
        let rel = ContinuousAnnotations::new(ids.clone(), names, s.calibration.target.reliability.clone()).unwrap();
        files.push((format!("{}_reliability.csv", s.name), continuous_csv(&rel, None).into_bytes()));
        files.push((format!("{}_calibration.csv", s.name), s.calibration.table.to_csv(None).into_bytes()));
        files.push((format!("{}_support.csv", s.name), s.calibration.table.support_csv(None).into_bytes()));
        if let Some(t) = &s.trained {
            files.push((format!("{}.mac", s.name), t.model.to_bytes()));
        }
    }
    files
}

fn determinism() -> Outcome {
    let (a, da) = synthetic_run(2);
    let (b, db) = synthetic_run(2);
    let fa = artifacts(&a, &da);
    let fb = artifacts(&b, &db);
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        if x != y {
            return Err(format!("{name} differs"));
        }
    }
    check(fa.len() == fb.len(), format!("{} artifacts byte-identical", fa.len()))
}

fn report_formats() -> Outcome {
    let outputs = common::golden::golden_outputs();
    for (name, produced, expected) in &outputs {
        if produced != expected {
            return Err(format!("{name} differs from its golden file"));
        }
    }
    Ok(format!("{} golden tables match", outputs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient check", gradient_check),
        ("reliability formula", reliability_formula),
        ("transfer oracle", transfer_oracle),
        ("calibration soundness", calibration_soundness),
        ("plausibility", plausibility),
        ("synthetic end-to-end transfer", synthetic_transfer),
        ("metric oracles", metric_oracles),
        ("recognition sanity", recognition_sanity),
        ("determinism", determinism),
        ("report formats", report_formats),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
