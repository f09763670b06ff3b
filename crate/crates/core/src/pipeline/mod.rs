//! Annotation transfer: reliability-threshold calibration, per-source transfer,
//! multi-source aggregation and plausibility repair, plus the end-to-end driver.

mod aggregate;
mod calibrate;
mod run;

pub use aggregate::{aggregate, aggregate_with_choices, obtain_plausibility, transfer, RepairScope, SourceAnnotations};
pub use calibrate::{
    balanced_accuracy, calibrate, load_calibration, AttributeCalibration, CalibrationConfig, CalibrationStatus,
    CalibrationTable,
};
pub use run::{
    calibrate_source, load_provenance, priority_order, provenance, run_pipeline, train_source, MacSettings, PipelineConfig, PipelineOutput,
    PipelineSource, ProvenanceReport, ProvenanceRow, SourceCalibration, SourceInput, SourceRun, TrainedSource,
};
