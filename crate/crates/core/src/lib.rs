//! Reliability-aware transfer of attribute annotations between embedding-level
//! datasets, plus soft-biometric recognition evaluation on the transferred labels.
//!
//! The crate is organised by stage:
//!
//! * [`datamodel`]: schemas, tri-state annotations, CSV/JSON formats, subject-exclusive
//!   splits and the synthetic data generator.
//! * [`mac`]: the shared-trunk multi-branch attribute classifier, its training loop and
//!   the dropout-based reliability measure.
//! * [`cleaning`]: binarization of continuous source annotations and the threshold search.
//! * [`pipeline`]: reliability-threshold calibration, transfer, multi-source aggregation
//!   and plausibility repair.
//! * [`recognition`]: joint comparison features, comparators, verification and
//!   identification metrics, score fusion.
//! * [`report`]: annotation statistics and annotation-quality reports.

pub mod cleaning;
pub mod datamodel;
pub mod error;
pub mod io_util;
pub mod mac;
pub mod pipeline;
pub mod recognition;
pub mod report;
pub mod seed;

pub use error::{Error, ErrorCategory, Result};
