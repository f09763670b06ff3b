//! Report fixtures with hand-computed expected tables under `tests/fixtures/report`.

use std::path::PathBuf;

use annotransfer::datamodel::{load_annotations, AttributeSchema};
use annotransfer::pipeline::{ProvenanceReport, ProvenanceRow};
use annotransfer::report::{annotation_stats, evaluate_labels};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report")
}

fn row(source: Option<&str>, category: &str, class: &str, attribute: &str) -> ProvenanceRow {
    ProvenanceRow {
        main_source: source.map(str::to_string),
        category: Some(category.into()),
        class: class.into(),
        attribute: attribute.into(),
        threshold: None,
        coverage: None,
        calibration_accuracy: None,
        discarded: Vec::new(),
    }
}

/// `(name, produced, expected)` for every golden table.
pub fn golden_outputs() -> Vec<(&'static str, String, String)> {
    let d = dir();
    let schema = AttributeSchema::load(&d.join("schema.json")).unwrap();
    let (_, truth) = load_annotations(&d.join("truth.csv"), &schema).unwrap();
    let (_, pred) = load_annotations(&d.join("predicted.csv"), &schema).unwrap();
    let names: Vec<String> = schema.names().map(str::to_string).collect();
    let stats = annotation_stats(&pred, &schema).unwrap();
    let quality = evaluate_labels(&pred, &truth, &names).unwrap();
    let provenance = ProvenanceReport {
        rows: vec![
            row(Some("A"), "Demographics", "Gender", "Male"),
            row(Some("B"), "Demographics", "Age", "Young"),
            row(Some("B"), "Demographics", "Age", "Senior"),
            row(Some("A"), "Hair", "Haircolor", "Black Hair"),
            row(None, "Hair", "Haircolor", "Blond Hair"),
        ],
    };
    let read = |f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    vec![
        ("stats", stats.to_text(), read("stats.txt")),
        ("quality", quality.to_text(), read("quality.txt")),
        ("quality_sources", quality.to_text_with_sources(&provenance).unwrap(), read("quality_sources.txt")),
    ]
}
