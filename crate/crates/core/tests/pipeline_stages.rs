mod common;

use annotransfer::datamodel::{generate_synthetic, AnnotationMatrix, AttributeSchema, SyntheticSpec};
use annotransfer::mac::{MacModel, Predictions, ReliabilityConfig, TrainingConfig};
use annotransfer::pipeline::{
    aggregate_with_choices, calibrate, calibrate_source, obtain_plausibility, provenance, run_pipeline, train_source,
    transfer, CalibrationConfig, CalibrationStatus, MacSettings, PipelineConfig, PipelineSource, RepairScope,
    SourceAnnotations, SourceInput,
};
use annotransfer::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::transfer_oracle::{library_transfer, oracle_calibrate, oracle_transfer, random_instance};

#[test]
fn transfer_matches_literal_loops() {
    for seed in 0..500 {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(library_transfer(&inst), oracle_transfer(&inst), "instance {seed}: {inst:?}");
    }
}

/// 50 test samples; reliability sorts them so that the 40 most reliable are
/// correct. Target reliabilities are spread so the boundary keeps 60% of them.
#[test]
fn threshold_sits_at_correctness_boundary() {
    let n = 50;
    let truth: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let rel: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let pred: Vec<i8> = (0..n).map(|i| if i < 10 { -truth[i] } else { truth[i] }).collect();
    let target: Vec<f64> = (0..100).map(|i| 0.2 * (i as f64 / 100.0) + if i >= 40 { 0.1 } else { 0.0 }).collect();
    let col_i = |v: &[i8]| AnnotationMatrix::new(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()).unwrap();
    let col_f = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap();
    let names = vec!["a".to_string()];
    for acc_min in [0.9, 1.0] {
        let cfg = CalibrationConfig { acc_min, d_min: 0.5 };
        let table = calibrate(&names, &col_i(&pred), &col_f(&rel), &col_i(&truth), &col_f(&target), &cfg).unwrap();
        let oracle = oracle_calibrate(&pred, &rel, &truth, &target, &cfg);
        let got = &table.attributes[0];
        assert_eq!(got.threshold(), oracle.threshold, "acc_min {acc_min}");
        assert_eq!(got.coverage, oracle.coverage);
        assert_eq!(got.balanced_accuracy, oracle.accuracy);
    }
    // Perfect accuracy forces the boundary exactly.
    let cfg = CalibrationConfig { acc_min: 1.0, d_min: 0.5 };
    let table = calibrate(&names, &col_i(&pred), &col_f(&rel), &col_i(&truth), &col_f(&target), &cfg).unwrap();
    assert_eq!(table.attributes[0].threshold(), Some(rel[10]));
}

#[test]
fn map_back_matches_brute_force_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(4..30);
        let truth: Vec<i8> = (0..n).map(|i| [1, -1, 0][i % 3]).collect();
        let pred: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let rel: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect();
        let cfg = CalibrationConfig { acc_min: 0.01, d_min: 0.01 };
        let m = |v: &[i8]| AnnotationMatrix::new(Array2::from_shape_vec((n, 1), v.to_vec()).unwrap()).unwrap();
        let r = Array2::from_shape_vec((n, 1), rel.clone()).unwrap();
        let table = calibrate(&["a".into()], &m(&pred), &r, &m(&truth), &r, &cfg).unwrap();
        let oracle = oracle_calibrate(&pred, &rel, &truth, &rel, &cfg);
        if oracle.threshold.is_none() {
            continue;
        }
        for q in [-0.5, 0.0, 0.1, 0.2, 0.35, 0.4, 0.6, 0.8, 1.0, 3.0] {
            assert_eq!(table.map_back("a", q).unwrap(), oracle.map_back(q), "r={q}");
        }
    }
}

fn arb_column() -> impl Strategy<Value = (Vec<i8>, Vec<f64>, Vec<i8>, Vec<f64>, f64, f64)> {
    (4usize..40, 1usize..40).prop_flat_map(|(n, t)| {
        (
            prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n),
            prop::collection::vec(0u8..20, n).prop_map(|v| v.into_iter().map(|x| f64::from(x) / 20.0).collect()),
            prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8), Just(0i8)], n),
            prop::collection::vec(0u8..20, t).prop_map(|v| v.into_iter().map(|x| f64::from(x) / 20.0).collect()),
            prop_oneof![Just(0.5), Just(0.7), Just(0.9)],
            prop_oneof![Just(0.1), Just(0.5), Just(0.9)],
        )
    })
}

proptest! {
    #[test]
    fn retained_thresholds_meet_both_constraints((pred, rel, truth, target, acc_min, d_min) in arb_column()) {
        let n = pred.len();
        let m = |v: &[i8]| AnnotationMatrix::new(Array2::from_shape_vec((n, 1), v.to_vec()).unwrap()).unwrap();
        let cfg = CalibrationConfig { acc_min, d_min };
        let table = calibrate(
            &["a".into()], &m(&pred), &Array2::from_shape_vec((n, 1), rel.clone()).unwrap(), &m(&truth),
            &Array2::from_shape_vec((target.len(), 1), target.clone()).unwrap(), &cfg,
        ).unwrap();
        if let Some(thr) = table.attributes[0].threshold() {
            let kept: Vec<usize> = (0..n).filter(|&i| rel[i] >= thr && truth[i] != 0).collect();
            let mut recalls = Vec::new();
            for c in [1i8, -1] {
                let idx: Vec<&usize> = kept.iter().filter(|&&i| truth[i] == c).collect();
                if !idx.is_empty() {
                    recalls.push(idx.iter().filter(|&&&i| pred[i] == c).count() as f64 / idx.len() as f64);
                }
            }
            let ba = recalls.iter().sum::<f64>() / recalls.len() as f64;
            let cov = target.iter().filter(|&&r| r >= thr).count() as f64 / target.len() as f64;
            prop_assert!(ba >= acc_min);
            prop_assert!(cov >= d_min);
        }
    }

    #[test]
    fn transfer_never_flips(labels in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..50), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = labels.len();
        let truth: Vec<i8> = (0..n).map(|_| [1i8, -1][rng.random_range(0..2)]).collect();
        let rel: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let m = |v: &[i8]| AnnotationMatrix::new(Array2::from_shape_vec((n, 1), v.to_vec()).unwrap()).unwrap();
        let r = Array2::from_shape_vec((n, 1), rel).unwrap();
        let cfg = CalibrationConfig { acc_min: 0.3, d_min: 0.1 };
        let table = calibrate(&["a".into()], &m(&labels), &r, &m(&truth), &r, &cfg).unwrap();
        let preds = Predictions { labels: m(&labels), reliability: r };
        let out = transfer(&preds, &table).unwrap();
        for i in 0..n {
            prop_assert!(out.get(i, 0) == 0 || out.get(i, 0) == labels[i]);
        }
    }

    #[test]
    fn plausibility_leaves_at_most_one_true_per_class(
        values in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8), Just(0i8)], 6 * 8),
        row_scope: bool,
    ) {
        let schema = AttributeSchema::new(vec![
            annotransfer::datamodel::AttributeSpec::binary("x0", "X"),
            annotransfer::datamodel::AttributeSpec::binary("x1", "X"),
            annotransfer::datamodel::AttributeSpec::binary("x2", "X"),
            annotransfer::datamodel::AttributeSpec::binary("y0", "Y"),
            annotransfer::datamodel::AttributeSpec::binary("y1", "Y"),
            annotransfer::datamodel::AttributeSpec::binary("z", "Z"),
        ]).unwrap();
        let m = AnnotationMatrix::new(Array2::from_shape_vec((8, 6), values).unwrap()).unwrap();
        let scope = if row_scope { RepairScope::Row } else { RepairScope::Class };
        let out = obtain_plausibility(&m, &schema, scope).unwrap();
        prop_assert!(out.respects_schema(&schema));
        for i in 0..8 {
            for a in 0..6 {
                prop_assert!(out.get(i, a) == 0 || out.get(i, a) == m.get(i, a));
            }
        }
    }
}

fn small_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        mac: MacSettings { trunk_width: 32, branch_width: 16, dropout_rate: 0.3 },
        training: TrainingConfig { epochs: 15, learning_rate: 1e-2, batch_size: 64, ..TrainingConfig::default() },
        reliability: ReliabilityConfig { num_passes: 20, alpha: 0.5 },
        ..PipelineConfig::default()
    }
}

fn small_data() -> annotransfer::datamodel::SyntheticData {
    let spec = SyntheticSpec {
        subjects_per_dataset: 40,
        samples_per_subject: 4,
        dim: 12,
        num_attributes: 3,
        source_attributes: Some(vec![
            vec!["attr_00".into(), "attr_01".into()],
            vec!["attr_01".into(), "attr_02".into()],
        ]),
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, 11).unwrap()
}

#[test]
fn run_equals_stage_composition() {
    let data = small_data();
    let config = small_config(3);
    let inputs = vec![
        SourceInput { name: "A".into(), source: PipelineSource::Raw(data.sources[0].clone()) },
        SourceInput { name: "B".into(), source: PipelineSource::Raw(data.sources[1].clone()) },
    ];
    let out = run_pipeline(inputs, &data.target, &config).unwrap();

    let mut manual = Vec::new();
    for (name, ds) in [("A", &data.sources[0]), ("B", &data.sources[1])] {
        let trained = train_source(name, ds, &config).unwrap();
        let cal = calibrate_source(name, &trained.model, &trained.test, data.target.embeddings().view(), &config).unwrap();
        let labels = transfer(&cal.target, &cal.table).unwrap();
        manual.push(SourceAnnotations { name: name.into(), labels, reliability: cal.target.reliability.clone(), table: cal.table });
    }
    let (agg, chosen) = aggregate_with_choices(&manual, &data.schema).unwrap();
    let fin = obtain_plausibility(&agg, &data.schema, RepairScope::Class).unwrap();
    assert_eq!(out.aggregated, agg);
    assert_eq!(out.labels, fin);
    assert_eq!(out.provenance, provenance(&data.schema, &manual, &chosen));
    // attr_00 can only come from A, attr_02 only from B.
    assert!(out.provenance.rows[0].main_source.as_deref().is_none_or(|s| s == "A"));
    assert!(out.provenance.rows[2].main_source.as_deref().is_none_or(|s| s == "B"));
}

#[test]
fn pretrained_source_matches_raw_source() {
    let data = small_data();
    let config = small_config(9);
    let trained = train_source("A", &data.sources[0], &config).unwrap();
    let raw = run_pipeline(
        vec![SourceInput { name: "A".into(), source: PipelineSource::Raw(data.sources[0].clone()) }],
        &data.target,
        &config,
    )
    .unwrap();
    let pre = run_pipeline(
        vec![SourceInput {
            name: "A".into(),
            source: PipelineSource::Trained { model: trained.model, test: trained.test },
        }],
        &data.target,
        &config,
    )
    .unwrap();
    assert_eq!(raw.labels, pre.labels);
}

#[test]
fn empty_source_list_fails() {
    let data = small_data();
    let err = run_pipeline(Vec::new(), &data.target, &small_config(0)).unwrap_err();
    assert!(matches!(err, Error::Pipeline(_)));
}

#[test]
fn nothing_retained_gives_zero_matrix_and_reasons() {
    let data = small_data();
    let schema = data.sources[0].schema().clone();
    // An untrained network is near chance; perfect accuracy at full coverage is out of reach.
    let model = MacModel::init(MacSettings { trunk_width: 8, branch_width: 8, dropout_rate: 0.5 }.network(12, schema), 1).unwrap();
    let mut config = small_config(0);
    config.calibration = CalibrationConfig { acc_min: 1.0, d_min: 1.0 };
    let out = run_pipeline(
        vec![SourceInput {
            name: "A".into(),
            source: PipelineSource::Trained { model, test: data.sources[0].clone() },
        }],
        &data.target,
        &config,
    )
    .unwrap();
    assert!(out.labels.values().iter().all(|&v| v == 0));
    for run in &out.sources {
        for a in &run.calibration.table.attributes {
            assert!(matches!(a.status, CalibrationStatus::Discarded { .. }), "{a:?}");
        }
    }
    let rows = &out.provenance.rows;
    assert_eq!(rows[0].discarded.len(), 1);
    assert_eq!(rows[1].discarded.len(), 1);
    assert!(rows[2].discarded.is_empty() && rows[2].main_source.is_none());
    assert!(out.provenance.to_text().contains("Discarded:"));
}

#[test]
fn priority_reorders_sources() {
    let data = small_data();
    let mut config = small_config(4);
    config.priority = Some(vec!["B".into()]);
    let inputs = vec![
        SourceInput { name: "A".into(), source: PipelineSource::Raw(data.sources[0].clone()) },
        SourceInput { name: "B".into(), source: PipelineSource::Raw(data.sources[1].clone()) },
    ];
    let out = run_pipeline(inputs, &data.target, &config).unwrap();
    assert_eq!(out.sources[0].name, "B");
    config.priority = Some(vec!["C".into()]);
    let inputs = vec![SourceInput { name: "A".into(), source: PipelineSource::Raw(data.sources[0].clone()) }];
    assert!(matches!(run_pipeline(inputs, &data.target, &config), Err(Error::Config(_))));
}

#[test]
fn provenance_csv_round_trip() {
    let data = small_data();
    let out = run_pipeline(
        vec![SourceInput { name: "A".into(), source: PipelineSource::Raw(data.sources[0].clone()) }],
        &data.target,
        &small_config(2),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, t) = (dir.path().join("p.csv"), dir.path().join("p.txt"));
    out.provenance.save(&c, &t, None).unwrap();
    assert_eq!(annotransfer::pipeline::load_provenance(&c).unwrap(), out.provenance);
}
