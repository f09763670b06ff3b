//! Datasets, attribute schemas, tri-state annotations and their file formats.

mod annotations;
mod dataset;
mod schema;
mod split;
mod synthetic;

pub use annotations::{AnnotationMatrix, ContinuousAnnotations, Label};
pub use dataset::{
    annotations_csv, continuous_csv, load_annotations, load_continuous, load_dataset, load_embeddings, AnnotatedDataset, Sample,
};
pub use schema::{AttributeClass, AttributeSchema, AttributeSpec};
pub use split::{split_subject_exclusive, SubjectSplit};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
