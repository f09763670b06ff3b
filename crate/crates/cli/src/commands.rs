use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use annotransfer::cleaning::{binarize, search_thresholds, thresholds_csv, ReferenceOracle, SearchOutcome};
use annotransfer::datamodel::{
    annotations_csv, continuous_csv, generate_synthetic, load_annotations, load_continuous, load_dataset,
    load_embeddings, AnnotatedDataset, AnnotationMatrix, AttributeSchema, ContinuousAnnotations,
};
use annotransfer::io_util::write_atomic;
use annotransfer::mac::{MacModel, Predictions};
use annotransfer::pipeline::{
    aggregate_with_choices, calibrate_source, load_calibration, load_provenance, obtain_plausibility, priority_order,
    provenance, train_source, transfer, SourceAnnotations,
};
use annotransfer::recognition::{
    attribute_importance, comparison_pairs, cosine_scores, eval_closed_set, eval_open_set, eval_verification,
    fuse_scores, load_scores, score_pairs, score_set, scores_csv, train_logreg, Comparator, LogRegComparator,
    VerificationReport, VerificationSummary,
};
use annotransfer::report::{annotation_stats, evaluate_labels};
use annotransfer::seed::derive_seed;
use annotransfer::{Error, Result};
use ndarray::Axis;
use serde::Serialize;

use crate::config::RunConfig;

pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        write_atomic(&p, contents.as_bytes())?;
        println!("wrote {}", p.display());
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
            path: self.path(name),
            source: e,
        })? + "\n";
        self.write(name, &text)
    }
}

/// Fails with a configuration error when an input file is missing.
pub fn existing<'a>(path: &'a Path, what: &str) -> Result<&'a Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load_schema(path: &Path) -> Result<AttributeSchema> {
    AttributeSchema::load(existing(path, "schema")?)
}

fn dataset(emb: &Path, ann: &Path, schema: &Path) -> Result<AnnotatedDataset> {
    load_schema(schema)?;
    load_dataset(existing(emb, "embeddings")?, existing(ann, "annotations")?, schema)
}

pub fn generate(ctx: &Ctx) -> Result<()> {
    let data = generate_synthetic(&ctx.config.synthetic, ctx.config.seed)?;
    let h = ctx.config.header();
    data.schema.save(&ctx.path("schema.json"))?;
    for (s, ds) in data.sources.iter().enumerate() {
        ctx.write(&format!("src{s}_embeddings.csv"), &ds.embeddings_csv(h))?;
        ctx.write(&format!("src{s}_annotations.csv"), &ds.annotations_csv(h))?;
        ds.schema().save(&ctx.path(&format!("src{s}_schema.json")))?;
        let truth = annotations_csv(&ds.sample_ids(), &data.schema, &data.source_truth[s], h);
        ctx.write(&format!("src{s}_truth.csv"), &truth)?;
    }
    ctx.write("target_embeddings.csv", &data.target.embeddings_csv(h))?;
    let truth = annotations_csv(&data.target.sample_ids(), &data.schema, &data.target_truth, h);
    ctx.write("target_truth.csv", &truth)?;
    Ok(())
}

pub fn clean(ctx: &Ctx, scores: &Path, reference: &Path, schema_path: &Path) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let cont = load_continuous(existing(scores, "continuous annotations")?)?;
    let (ref_ids, ref_labels) = load_annotations(existing(reference, "reference annotations")?, &schema)?;
    let names: Vec<String> = schema.names().map(str::to_string).collect();
    let oracle = ReferenceOracle::new(&ref_ids, &names, &ref_labels);
    let mut accepted = BTreeMap::new();
    let mut report = String::from("attribute,status\n");
    for attr in &cont.attributes {
        if schema.index_of(attr).is_none() {
            return Err(Error::Schema(format!("continuous attribute `{attr}` not in schema")));
        }
        match search_thresholds(&cont, attr, &oracle, &ctx.config.cleaning)? {
            SearchOutcome::Accepted(pair) => {
                accepted.insert(attr.clone(), pair);
                let _ = writeln!(report, "{attr},accepted");
            }
            SearchOutcome::Unusable { side } => {
                let _ = writeln!(report, "{attr},unusable on the {side:?} side");
            }
        }
    }
    if accepted.is_empty() {
        return Err(Error::Pipeline("no attribute reached the required correctness".into()));
    }
    let kept = schema.restrict(&accepted.keys().cloned().collect::<Vec<_>>())?;
    let cols: Vec<usize> = kept.names().map(|n| cont.column_of(n).expect("accepted")).collect();
    let sub = ContinuousAnnotations::new(
        cont.sample_ids.clone(),
        kept.names().map(str::to_string).collect(),
        cont.scores.select(Axis(1), &cols),
    )?;
    let labels = binarize(&sub, &accepted)?;
    let h = ctx.config.header();
    let order: Vec<String> = kept.names().map(str::to_string).collect();
    ctx.write("thresholds.csv", &thresholds_csv(&accepted, &order, h))?;
    ctx.write("annotations.csv", &annotations_csv(&cont.sample_ids, &kept, &labels, h))?;
    ctx.write("clean_report.csv", &annotransfer::io_util::with_header(h, report))?;
    kept.save(&ctx.path("schema.json"))?;
    Ok(())
}

pub fn train_mac(ctx: &Ctx, emb: &Path, ann: &Path, schema: &Path, name: &str) -> Result<()> {
    let ds = dataset(emb, ann, schema)?;
    let trained = train_source(name, &ds, &ctx.config.pipeline)?;
    let h = ctx.config.header();
    let model_path = ctx.path(&format!("{name}.mac"));
    trained.model.save(&model_path)?;
    println!("wrote {}", model_path.display());
    ctx.write(&format!("{name}_test_embeddings.csv"), &trained.test.embeddings_csv(h))?;
    ctx.write(&format!("{name}_test_annotations.csv"), &trained.test.annotations_csv(h))?;
    ds.schema().save(&ctx.path(&format!("{name}_schema.json")))?;
    let mut log = String::from("epoch,learning_rate,loss\n");
    for e in &trained.log.epochs {
        let _ = writeln!(log, "{},{},{}", e.epoch, e.learning_rate, e.loss);
    }
    ctx.write(&format!("{name}_training_log.csv"), &annotransfer::io_util::with_header(h, log))?;
    for a in &trained.log.skipped_attributes {
        eprintln!("warning: attribute `{a}` has no defined training labels; its branch is untrained");
    }
    Ok(())
}

pub struct CalibrateArgs<'a> {
    pub model: &'a Path,
    pub schema: &'a Path,
    pub test_embeddings: &'a Path,
    pub test_annotations: &'a Path,
    pub target_embeddings: &'a Path,
    pub name: &'a str,
}

pub fn calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Result<()> {
    let schema = load_schema(a.schema)?;
    let model = MacModel::load(existing(a.model, "model")?, &schema)?;
    let test = dataset(a.test_embeddings, a.test_annotations, a.schema)?;
    let (samples, target_x) = load_embeddings(existing(a.target_embeddings, "target embeddings")?)?;
    let cal = calibrate_source(a.name, &model, &test, target_x.view(), &ctx.config.pipeline)?;
    let h = ctx.config.header();
    let name = a.name;
    cal.table.save(&ctx.path(&format!("{name}_calibration.csv")), &ctx.path(&format!("{name}_support.csv")), h)?;
    println!("wrote {}", ctx.path(&format!("{name}_calibration.csv")).display());
    let ids: Vec<String> = samples.iter().map(|s| s.sample_id.clone()).collect();
    ctx.write(&format!("{name}_target_labels.csv"), &annotations_csv(&ids, &schema, &cal.target.labels, h))?;
    let rel = ContinuousAnnotations::new(ids, schema.names().map(str::to_string).collect(), cal.target.reliability)?;
    ctx.write(&format!("{name}_target_reliability.csv"), &continuous_csv(&rel, h))?;
    Ok(())
}

fn load_source(name: &str, dir: &Path, target_ids: &[String]) -> Result<SourceAnnotations> {
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}"));
    let schema = load_schema(&file("schema.json"))?;
    let table = load_calibration(
        existing(&file("calibration.csv"), "calibration table")?,
        existing(&file("support.csv"), "calibration support")?,
    )?;
    let (ids, labels) = load_annotations(existing(&file("target_labels.csv"), "target predictions")?, &schema)?;
    let rel = load_continuous(existing(&file("target_reliability.csv"), "target reliabilities")?)?;
    if ids != target_ids || rel.sample_ids != target_ids {
        return Err(Error::Unmatched(format!("predictions of source `{name}` are not aligned with the target samples")));
    }
    if rel.attributes != table.names() || table.names() != schema.names().collect::<Vec<_>>() {
        return Err(Error::Schema(format!("source `{name}`: calibration, reliabilities and schema disagree")));
    }
    let preds = Predictions {
        labels,
        reliability: rel.scores,
    };
    Ok(SourceAnnotations {
        name: name.to_string(),
        labels: transfer(&preds, &table)?,
        reliability: preds.reliability,
        table,
    })
}

pub fn transfer_cmd(ctx: &Ctx, sources: &[(String, PathBuf)], schema_path: &Path, target_embeddings: &Path) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::Pipeline("at least one --source is required".into()));
    }
    let schema = load_schema(schema_path)?;
    let (samples, _) = load_embeddings(existing(target_embeddings, "target embeddings")?)?;
    let ids: Vec<String> = samples.iter().map(|s| s.sample_id.clone()).collect();
    let names: Vec<String> = sources.iter().map(|s| s.0.clone()).collect();
    let order = priority_order(&names, ctx.config.pipeline.priority.as_deref())?;
    let loaded: Vec<SourceAnnotations> = order
        .iter()
        .map(|&i| load_source(&sources[i].0, &sources[i].1, &ids))
        .collect::<Result<_>>()?;
    let (aggregated, chosen) = aggregate_with_choices(&loaded, &schema)?;
    let labels = obtain_plausibility(&aggregated, &schema, ctx.config.pipeline.repair_scope)?;
    let report = provenance(&schema, &loaded, &chosen);
    let h = ctx.config.header();
    for s in &loaded {
        let sub = schema.restrict(&s.table.names())?;
        ctx.write(&format!("{}_transferred.csv", s.name), &annotations_csv(&ids, &sub, &s.labels, h))?;
    }
    ctx.write("target_annotations.csv", &annotations_csv(&ids, &schema, &labels, h))?;
    ctx.write("provenance.csv", &report.to_csv(h))?;
    ctx.write("provenance.txt", &report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn stats(ctx: &Ctx, annotations: &Path, schema_path: &Path) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let (_, m) = load_annotations(existing(annotations, "annotations")?, &schema)?;
    let s = annotation_stats(&m, &schema)?;
    ctx.write("stats.csv", &s.to_csv(ctx.config.header()))?;
    ctx.write("stats.txt", &s.to_text())?;
    print!("{}", s.to_text());
    Ok(())
}

/// Rows of `truth` rearranged to follow `ids`.
fn align(ids: &[String], truth_ids: &[String], truth: &AnnotationMatrix) -> Result<AnnotationMatrix> {
    let index: HashMap<&str, usize> = truth_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows: Vec<usize> = ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| Error::Unmatched(id.clone())))
        .collect::<Result<_>>()?;
    Ok(truth.select_rows(&rows))
}

pub fn evaluate_labels_cmd(ctx: &Ctx, predicted: &Path, truth: &Path, schema_path: &Path, provenance_path: Option<&Path>) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let (ids, pred) = load_annotations(existing(predicted, "predicted annotations")?, &schema)?;
    let (truth_ids, truth_m) = load_annotations(existing(truth, "truth annotations")?, &schema)?;
    let truth_m = align(&ids, &truth_ids, &truth_m)?;
    let names: Vec<String> = schema.names().map(str::to_string).collect();
    let q = evaluate_labels(&pred, &truth_m, &names)?;
    ctx.write("quality.csv", &q.to_csv(ctx.config.header()))?;
    ctx.write("quality.txt", &q.to_text())?;
    ctx.write("balanced_accuracy.txt", &q.balanced_text())?;
    if let Some(p) = provenance_path {
        let prov = load_provenance(existing(p, "provenance report")?)?;
        ctx.write("quality_sources.txt", &q.to_text_with_sources(&prov)?)?;
    }
    print!("{}", q.to_text());
    Ok(())
}

/// Loads a dataset and keeps only the configured recognition attributes.
fn recognition_dataset(ctx: &Ctx, emb: &Path, ann: &Path, schema: &Path) -> Result<AnnotatedDataset> {
    let ds = dataset(emb, ann, schema)?;
    let Some(names) = &ctx.config.recognition.attributes else {
        return Ok(ds);
    };
    let kept = ds.schema().restrict(names)?;
    let cols: Vec<usize> = kept.names().map(|n| ds.schema().index_of(n).expect("restricted")).collect();
    let values = ds.annotations().values().select(Axis(1), &cols);
    ds.with_annotations(AnnotationMatrix::new(values)?, kept)
}

pub fn recog_train(ctx: &Ctx, emb: &Path, ann: &Path, schema: &Path) -> Result<()> {
    let ds = recognition_dataset(ctx, emb, ann, schema)?;
    let rec = &ctx.config.recognition;
    let seed = ctx.config.seed;
    let split = annotransfer::datamodel::split_subject_exclusive(&ds, rec.train_fraction, derive_seed(seed, "recognition/split"))?;
    let (train, test) = split.apply(&ds);
    let model = train_logreg(&train, &rec.logreg, derive_seed(seed, "recognition/train"))?;
    let h = ctx.config.header();
    model.save(&ctx.path("logreg.json"))?;
    println!("wrote {}", ctx.path("logreg.json").display());
    ctx.write("importance.csv", &attribute_importance(&model).to_csv(h))?;
    ctx.write("test_embeddings.csv", &test.embeddings_csv(h))?;
    ctx.write("test_annotations.csv", &test.annotations_csv(h))?;
    test.schema().save(&ctx.path("test_schema.json"))?;
    Ok(())
}

#[derive(Serialize)]
struct ClosedSetSummary {
    rank1: f64,
    gallery_size: usize,
    probes: usize,
    excluded_probes: usize,
}

#[derive(Serialize)]
struct OpenSetSummary {
    enrolled_probes: usize,
    unenrolled_probes: usize,
    excluded_probes: usize,
    unenrolled_subjects: Vec<String>,
}

#[derive(Serialize)]
struct RecognitionSummary {
    comparator: String,
    verification: VerificationSummary,
    closed_set: ClosedSetSummary,
    open_set: Option<OpenSetSummary>,
}

fn roc_csv(report: &VerificationReport, h: Option<annotransfer::io_util::ArtifactHeader>) -> String {
    let mut out = String::from("threshold,fmr,fnmr\n");
    for p in &report.roc {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fmr, p.fnmr);
    }
    annotransfer::io_util::with_header(h, out)
}

pub fn recog_eval(ctx: &Ctx, emb: &Path, ann: &Path, schema: &Path, model: Option<&Path>, embedding_scores: bool) -> Result<()> {
    let ds = recognition_dataset(ctx, emb, ann, schema)?;
    let rec = &ctx.config.recognition;
    let comparator = match model {
        Some(p) => {
            let m = LogRegComparator::load(existing(p, "comparator model")?)?;
            if m.attributes != ds.schema().names().collect::<Vec<_>>() {
                return Err(Error::Schema("comparator attributes differ from the annotation schema".into()));
            }
            Comparator::LogReg(m)
        }
        None => Comparator::Hamming(rec.hamming_mode),
    };
    let h = ctx.config.header();
    let pairs = comparison_pairs(&ds, rec.min_overlap);
    let scored = score_pairs(&ds, &pairs, &comparator)?;
    ctx.write("scores.csv", &scores_csv(&scored, h))?;
    if embedding_scores {
        ctx.write("embedding_scores.csv", &scores_csv(&cosine_scores(&ds, &pairs)?, h))?;
    }
    let set = score_set(&scored)?;
    let verification = eval_verification(&set, &rec.fmr_targets)?;
    ctx.write("roc.csv", &roc_csv(&verification, h))?;

    let closed = eval_closed_set(&ds, &comparator, rec.min_overlap)?;
    let mut cmc = String::from("k,cmc\n");
    for (k, v) in closed.curve.cmc.iter().enumerate() {
        let _ = writeln!(cmc, "{},{v}", k + 1);
    }
    ctx.write("cmc.csv", &annotransfer::io_util::with_header(h, cmc))?;

    let open = match eval_open_set(&ds, &comparator, rec.min_overlap, rec.unenrolled_fraction, derive_seed(ctx.config.seed, "recognition/open-set")) {
        Ok(open) => {
            let mut det = String::from("threshold,fpir,fnir\n");
            for p in &open.curve.det {
                let _ = writeln!(det, "{},{},{}", p.threshold, p.fpir, p.fnir);
            }
            ctx.write("det.csv", &annotransfer::io_util::with_header(h, det))?;
            Some(OpenSetSummary {
                enrolled_probes: open.curve.enrolled_probes,
                unenrolled_probes: open.curve.unenrolled_probes,
                excluded_probes: open.curve.excluded,
                unenrolled_subjects: open.unenrolled_subjects,
            })
        }
        Err(Error::Metric(msg)) => {
            eprintln!("warning: open-set evaluation skipped: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let summary = RecognitionSummary {
        comparator: match &comparator {
            Comparator::Hamming(_) => "hamming".into(),
            Comparator::LogReg(_) => "logistic_regression".into(),
        },
        verification: VerificationSummary::new(&verification, &set),
        closed_set: ClosedSetSummary {
            rank1: closed.curve.cmc.first().copied().unwrap_or(0.0),
            gallery_size: closed.gallery_size,
            probes: closed.curve.num_probes,
            excluded_probes: closed.curve.excluded,
        },
        open_set: open,
    };
    ctx.write_json("summary.json", &summary)?;
    println!("AUC {:.4}  EER {:.4}  rank-1 {:.4}", summary.verification.auc, summary.verification.eer, summary.closed_set.rank1);
    Ok(())
}

#[derive(Serialize)]
struct FusionSummary {
    weights: [f64; 2],
    verification: VerificationSummary,
}

pub fn fuse(ctx: &Ctx, primary: &Path, secondary: &Path) -> Result<()> {
    let a = load_scores(existing(primary, "primary scores")?)?;
    let b = load_scores(existing(secondary, "secondary scores")?)?;
    let (fused, weights) = fuse_scores(&a, &b, ctx.config.recognition.fusion)?;
    let h = ctx.config.header();
    ctx.write("fused_scores.csv", &scores_csv(&fused, h))?;
    let set = score_set(&fused)?;
    let report = eval_verification(&set, &ctx.config.recognition.fmr_targets)?;
    ctx.write("roc.csv", &roc_csv(&report, h))?;
    ctx.write_json(
        "summary.json",
        &FusionSummary {
            weights,
            verification: VerificationSummary::new(&report, &set),
        },
    )?;
    Ok(())
}
