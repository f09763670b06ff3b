use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datamodel::{split_subject_exclusive, AnnotatedDataset, AnnotationMatrix, AttributeSchema, SubjectSplit};
use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};
use crate::mac::{predict_with_reliability, train, MacConfig, MacModel, Predictions, ReliabilityConfig, TrainingConfig, TrainingLog};
use crate::seed::derive_seed;

use super::aggregate::{aggregate_with_choices, obtain_plausibility, transfer, RepairScope, SourceAnnotations};
use super::calibrate::{calibrate, CalibrationConfig, CalibrationStatus, CalibrationTable};

/// Layer widths and dropout of the per-source classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacSettings {
    pub trunk_width: usize,
    pub branch_width: usize,
    pub dropout_rate: f64,
}

impl Default for MacSettings {
    fn default() -> Self {
        Self {
            trunk_width: 512,
            branch_width: 512,
            dropout_rate: 0.5,
        }
    }
}

impl MacSettings {
    pub fn network(&self, input_dim: usize, schema: AttributeSchema) -> MacConfig {
        MacConfig {
            trunk_width: self.trunk_width,
            branch_width: self.branch_width,
            dropout_rate: self.dropout_rate,
            ..MacConfig::new(input_dim, schema)
        }
    }
}

/// Settings of a full transfer run. Every random stream is derived from `seed` and
/// the source name, so results do not depend on source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Share of each source's subjects used for training; the rest calibrates.
    pub train_fraction: f64,
    pub mac: MacSettings,
    /// `seed` inside is ignored; each source gets a derived one.
    pub training: TrainingConfig,
    pub reliability: ReliabilityConfig,
    pub calibration: CalibrationConfig,
    pub repair_scope: RepairScope,
    /// Source names in aggregation tie-break order. Unlisted sources follow in input order.
    pub priority: Option<Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: 0.8,
            mac: MacSettings::default(),
            training: TrainingConfig::default(),
            reliability: ReliabilityConfig::default(),
            calibration: CalibrationConfig::default(),
            repair_scope: RepairScope::Class,
            priority: None,
        }
    }
}

pub enum PipelineSource {
    /// Annotated data; split, trained and calibrated inside the run.
    Raw(AnnotatedDataset),
    /// Already trained classifier with its held-out calibration set.
    Trained { model: MacModel, test: AnnotatedDataset },
}

pub struct SourceInput {
    pub name: String,
    pub source: PipelineSource,
}

#[derive(Debug, Clone)]
pub struct TrainedSource {
    pub model: MacModel,
    pub split: SubjectSplit,
    pub test: AnnotatedDataset,
    pub log: TrainingLog,
}

/// Splits a source by subject and trains its classifier on the training side.
pub fn train_source(name: &str, dataset: &AnnotatedDataset, config: &PipelineConfig) -> Result<TrainedSource> {
    let split = split_subject_exclusive(dataset, config.train_fraction, derive_seed(config.seed, &format!("split/{name}")))?;
    let (train_set, test) = split.apply(dataset);
    let network = config.mac.network(dataset.dim(), dataset.schema().clone());
    let model = MacModel::init(network, derive_seed(config.seed, &format!("init/{name}")))?;
    let training = TrainingConfig {
        seed: derive_seed(config.seed, &format!("train/{name}")),
        ..config.training.clone()
    };
    let (model, log) = train(model, &train_set, &training)?;
    Ok(TrainedSource { model, split, test, log })
}

#[derive(Debug, Clone)]
pub struct SourceCalibration {
    pub test: Predictions,
    pub target: Predictions,
    pub table: CalibrationTable,
}

/// Predicts with reliabilities on the calibration set and the target, then picks
/// per-attribute thresholds.
pub fn calibrate_source(
    name: &str,
    model: &MacModel,
    test: &AnnotatedDataset,
    target_embeddings: ArrayView2<f64>,
    config: &PipelineConfig,
) -> Result<SourceCalibration> {
    let schema = &model.config().schema;
    if test.schema() != schema {
        return Err(Error::Schema(format!("source `{name}`: calibration data and model schemas differ")));
    }
    let test_pred = predict_with_reliability(
        model,
        test.embeddings().view(),
        &config.reliability,
        derive_seed(config.seed, &format!("mc-test/{name}")),
    )?;
    let target_pred = predict_with_reliability(
        model,
        target_embeddings,
        &config.reliability,
        derive_seed(config.seed, &format!("mc-target/{name}")),
    )?;
    let names: Vec<String> = schema.names().map(str::to_string).collect();
    let table = calibrate(
        &names,
        &test_pred.labels,
        &test_pred.reliability,
        test.annotations(),
        &target_pred.reliability,
        &config.calibration,
    )?;
    Ok(SourceCalibration {
        test: test_pred,
        target: target_pred,
        table,
    })
}

#[derive(Debug, Clone)]
pub struct SourceRun {
    pub name: String,
    /// Present when the source was trained inside the run.
    pub trained: Option<TrainedSource>,
    pub calibration: SourceCalibration,
    pub transferred: AnnotationMatrix,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final target annotations under the target schema.
    pub labels: AnnotationMatrix,
    /// Aggregated annotations before the plausibility repair.
    pub aggregated: AnnotationMatrix,
    /// Sources in priority order.
    pub sources: Vec<SourceRun>,
    pub provenance: ProvenanceReport,
}

/// Positions of `names` in aggregation order: the names listed in `priority`
/// first, in that order, then the rest in their given order.
pub fn priority_order(names: &[String], priority: Option<&[String]>) -> Result<Vec<usize>> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Config(format!("duplicate source name `{n}`")));
        }
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    if let Some(priority) = priority {
        for p in priority {
            if !seen.contains(p.as_str()) {
                return Err(Error::Config(format!("priority lists unknown source `{p}`")));
            }
        }
        let rank = |name: &str| priority.iter().position(|p| p == name).unwrap_or(usize::MAX);
        order.sort_by_key(|&i| (rank(&names[i]), i));
    }
    Ok(order)
}

fn order_by_priority(sources: Vec<SourceInput>, priority: Option<&[String]>) -> Result<Vec<SourceInput>> {
    let names: Vec<String> = sources.iter().map(|s| s.name.clone()).collect();
    let order = priority_order(&names, priority)?;
    let mut slots: Vec<Option<SourceInput>> = sources.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("each index once")).collect())
}

fn check_compatible(name: &str, source: &AttributeSchema, target: &AttributeSchema) -> Result<()> {
    for spec in source.attributes() {
        let t = target
            .index_of(&spec.name)
            .map(|i| &target.attributes()[i])
            .ok_or_else(|| Error::Schema(format!("source `{name}` attribute `{}` not in target schema", spec.name)))?;
        if t.class_name != spec.class_name {
            return Err(Error::Schema(format!(
                "attribute `{}` is in class `{}` for source `{name}` but `{}` for the target",
                spec.name, spec.class_name, t.class_name
            )));
        }
    }
    Ok(())
}

/// Full transfer: per source, split and train (raw sources only), predict with
/// reliabilities, calibrate and transfer; then aggregate and repair implausible
/// combinations. The target's own annotations are ignored.
pub fn run_pipeline(sources: Vec<SourceInput>, target: &AnnotatedDataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    if sources.is_empty() {
        return Err(Error::Pipeline("at least one source is required".into()));
    }
    config.calibration.validate()?;
    config.reliability.validate()?;
    config.training.validate()?;
    let sources = order_by_priority(sources, config.priority.as_deref())?;

    let mut runs = Vec::with_capacity(sources.len());
    for SourceInput { name, source } in sources {
        let (model, test, trained) = match source {
            PipelineSource::Raw(ds) => {
                check_compatible(&name, ds.schema(), target.schema())?;
                let t = train_source(&name, &ds, config)?;
                (t.model.clone(), t.test.clone(), Some(t))
            }
            PipelineSource::Trained { model, test } => {
                check_compatible(&name, &model.config().schema, target.schema())?;
                (model, test, None)
            }
        };
        if model.config().input_dim != target.dim() {
            return Err(Error::Shape(format!(
                "source `{name}` expects {}-dimensional embeddings, target has {}",
                model.config().input_dim,
                target.dim()
            )));
        }
        let calibration = calibrate_source(&name, &model, &test, target.embeddings().view(), config)?;
        let transferred = transfer(&calibration.target, &calibration.table)?;
        runs.push(SourceRun {
            name,
            trained,
            calibration,
            transferred,
        });
    }

    let annotated: Vec<SourceAnnotations> = runs
        .iter()
        .map(|r| SourceAnnotations {
            name: r.name.clone(),
            labels: r.transferred.clone(),
            reliability: r.calibration.target.reliability.clone(),
            table: r.calibration.table.clone(),
        })
        .collect();
    let (aggregated, chosen) = aggregate_with_choices(&annotated, target.schema())?;
    let labels = obtain_plausibility(&aggregated, target.schema(), config.repair_scope)?;
    let provenance = provenance(target.schema(), &annotated, &chosen);
    Ok(PipelineOutput {
        labels,
        aggregated,
        sources: runs,
        provenance,
    })
}

/// Where one target attribute came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceRow {
    /// Source contributing most cells; `None` when no source kept the attribute.
    pub main_source: Option<String>,
    pub category: Option<String>,
    pub class: String,
    pub attribute: String,
    pub threshold: Option<f64>,
    pub coverage: Option<f64>,
    pub calibration_accuracy: Option<f64>,
    /// `source: reason` for every source that discarded the attribute.
    pub discarded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceReport {
    pub rows: Vec<ProvenanceRow>,
}

/// Per target attribute: the main source (most chosen cells, earlier source on
/// ties, falling back to the first source that kept the attribute) and its
/// calibration figures.
pub fn provenance(schema: &AttributeSchema, sources: &[SourceAnnotations], chosen: &Array2<Option<usize>>) -> ProvenanceReport {
    let rows = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let mut counts = BTreeMap::<usize, usize>::new();
            for s in chosen.column(a).iter().flatten() {
                *counts.entry(*s).or_default() += 1;
            }
            let mut discarded = Vec::new();
            let mut first_retained = None;
            for (s, src) in sources.iter().enumerate() {
                match src.table.get(&spec.name).map(|c| &c.status) {
                    Some(CalibrationStatus::Discarded { reason }) => discarded.push(format!("{}: {reason}", src.name)),
                    Some(CalibrationStatus::Retained { .. }) if first_retained.is_none() => first_retained = Some(s),
                    _ => {}
                }
            }
            let main = counts
                .iter()
                .max_by_key(|&(&s, &c)| (c, std::cmp::Reverse(s)))
                .map(|(&s, _)| s)
                .or(first_retained);
            let cal = main.and_then(|s| sources[s].table.get(&spec.name));
            ProvenanceRow {
                main_source: main.map(|s| sources[s].name.clone()),
                category: spec.category.clone(),
                class: spec.class_name.clone(),
                attribute: spec.name.clone(),
                threshold: cal.and_then(|c| c.threshold()),
                coverage: cal.and_then(|c| c.coverage),
                calibration_accuracy: cal.and_then(|c| c.balanced_accuracy),
                discarded,
            }
        })
        .collect();
    ProvenanceReport { rows }
}

impl ProvenanceReport {
    /// `main_source,category,class,attribute,threshold,coverage,calibration_accuracy,discarded`
    pub fn to_csv(&self, header: Option<ArtifactHeader>) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            "main_source",
            "category",
            "class",
            "attribute",
            "threshold",
            "coverage",
            "calibration_accuracy",
            "discarded",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.main_source.clone().unwrap_or_default(),
                r.category.clone().unwrap_or_default(),
                r.class.clone(),
                r.attribute.clone(),
                opt(r.threshold),
                opt(r.coverage),
                opt(r.calibration_accuracy),
                r.discarded.join("; "),
            ])
            .expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        io_util::with_header(header, body)
    }

    /// Aligned plain-text table; discard reasons are listed underneath.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}%", 100.0 * x));
        let mut cells = vec![[
            "Main source".to_string(),
            "Category".into(),
            "Class".into(),
            "Attribute".into(),
            "Threshold".into(),
            "Coverage".into(),
            "Accuracy".into(),
        ]];
        for r in &self.rows {
            cells.push([
                r.main_source.clone().unwrap_or_else(|| "-".into()),
                r.category.clone().unwrap_or_else(|| "-".into()),
                r.class.clone(),
                r.attribute.clone(),
                r.threshold.map_or("-".into(), |t| format!("{t:.4}")),
                pct(r.coverage),
                pct(r.calibration_accuracy),
            ]);
        }
        let widths: Vec<usize> = (0..7).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, &w))| if c >= 4 { format!("{v:>w$}") } else { format!("{v:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            }
        }
        let reasons: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.discarded.iter().map(move |d| format!("  {}: {d}", r.attribute)))
            .collect();
        if !reasons.is_empty() {
            out.push_str("\nDiscarded:\n");
            for r in reasons {
                let _ = writeln!(out, "{r}");
            }
        }
        out
    }

    pub fn save(&self, csv_path: &Path, text_path: &Path, header: Option<ArtifactHeader>) -> Result<()> {
        io_util::write_atomic(csv_path, self.to_csv(header).as_bytes())?;
        io_util::write_atomic(text_path, self.to_text().as_bytes())
    }
}

/// Reads a report written by [`ProvenanceReport::to_csv`].
pub fn load_provenance(path: &Path) -> Result<ProvenanceReport> {
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 8 {
            return Err(err(line, format!("expected 8 columns, got {}", rec.len())));
        }
        let text = |i: usize| (!rec[i].is_empty()).then(|| rec[i].to_string());
        let num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| err(line, format!("bad number `{}`", &rec[i])))
            }
        };
        rows.push(ProvenanceRow {
            main_source: text(0),
            category: text(1),
            class: rec[2].to_string(),
            attribute: rec[3].to_string(),
            threshold: num(4)?,
            coverage: num(5)?,
            calibration_accuracy: num(6)?,
            discarded: if rec[7].is_empty() {
                Vec::new()
            } else {
                rec[7].split("; ").map(str::to_string).collect()
            },
        });
    }
    Ok(ProvenanceReport { rows })
}
