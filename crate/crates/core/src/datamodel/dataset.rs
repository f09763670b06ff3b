use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};

use super::{AnnotationMatrix, AttributeSchema, ContinuousAnnotations};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub sample_id: String,
    pub subject_id: String,
}

/// Embeddings, subject ids and tri-state annotations aligned row by row under one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDataset {
    samples: Vec<Sample>,
    embeddings: Array2<f64>,
    annotations: AnnotationMatrix,
    schema: AttributeSchema,
}

impl AnnotatedDataset {
    pub fn new(
        samples: Vec<Sample>,
        embeddings: Array2<f64>,
        annotations: AnnotationMatrix,
        schema: AttributeSchema,
    ) -> Result<Self> {
        if embeddings.nrows() != samples.len() {
            return Err(Error::Shape(format!(
                "{} embeddings for {} samples",
                embeddings.nrows(),
                samples.len()
            )));
        }
        if annotations.num_samples() != samples.len() || annotations.num_attributes() != schema.len() {
            return Err(Error::Shape(format!(
                "annotation matrix is {}x{}, expected {}x{}",
                annotations.num_samples(),
                annotations.num_attributes(),
                samples.len(),
                schema.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSample(s.sample_id.clone()));
            }
        }
        Ok(Self {
            samples,
            embeddings,
            annotations,
            schema,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn annotations(&self) -> &AnnotationMatrix {
        &self.annotations
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn sample_ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.sample_id.clone()).collect()
    }

    pub fn with_annotations(&self, annotations: AnnotationMatrix, schema: AttributeSchema) -> Result<Self> {
        Self::new(self.samples.clone(), self.embeddings.clone(), annotations, schema)
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            embeddings: self.embeddings.select(Axis(0), indices),
            annotations: self.annotations.select_rows(indices),
            schema: self.schema.clone(),
        }
    }

    pub fn embeddings_csv(&self, header: Option<ArtifactHeader>) -> String {
        let mut out = String::from("sample_id,subject_id");
        for d in 0..self.dim() {
            let _ = write!(out, ",e{d}");
        }
        out.push('\n');
        for (s, row) in self.samples.iter().zip(self.embeddings.rows()) {
            out.push_str(&s.sample_id);
            out.push(',');
            out.push_str(&s.subject_id);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        io_util::with_header(header, out)
    }

    pub fn annotations_csv(&self, header: Option<ArtifactHeader>) -> String {
        annotations_csv(&self.sample_ids(), &self.schema, &self.annotations, header)
    }

    pub fn save(
        &self,
        embeddings_path: &Path,
        annotations_path: &Path,
        schema_path: &Path,
        header: Option<ArtifactHeader>,
    ) -> Result<()> {
        io_util::write_atomic(embeddings_path, self.embeddings_csv(header).as_bytes())?;
        io_util::write_atomic(annotations_path, self.annotations_csv(header).as_bytes())?;
        self.schema.save(schema_path)
    }
}

/// Renders `sample_id,<attr_1>,...` with integer cells.
pub fn annotations_csv(
    sample_ids: &[String],
    schema: &AttributeSchema,
    annotations: &AnnotationMatrix,
    header: Option<ArtifactHeader>,
) -> String {
    let mut out = String::from("sample_id");
    for name in schema.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, row) in sample_ids.iter().zip(annotations.values().rows()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    io_util::with_header(header, out)
}

/// Renders `sample_id,<attribute>,...` with decimal cells; [`load_continuous`] reads it back.
pub fn continuous_csv(values: &ContinuousAnnotations, header: Option<ArtifactHeader>) -> String {
    let mut out = String::from("sample_id");
    for name in &values.attributes {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, row) in values.sample_ids.iter().zip(values.scores.rows()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    io_util::with_header(header, out)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn parse_error(path: &Path, record: &csv::StringRecord, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: record.position().map(|p| p.line()).unwrap_or(0),
        msg,
    }
}

/// Reads `sample_id,subject_id,e0,...` into samples and an embedding matrix.
pub fn load_embeddings(path: &Path) -> Result<(Vec<Sample>, Array2<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "sample_id" || &headers[1] != "subject_id" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header `sample_id,subject_id,e0,...`".into(),
        });
    }
    let dim = headers.len() - 2;
    let mut samples = Vec::new();
    let mut flat = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        samples.push(Sample {
            sample_id: record[0].to_string(),
            subject_id: record[1].to_string(),
        });
        for field in record.iter().skip(2) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(path, &record, format!("bad float `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, &record, format!("non-finite value `{field}`")));
            }
            flat.push(v);
        }
    }
    let n = samples.len();
    let emb = Array2::from_shape_vec((n, dim), flat).expect("row lengths checked by csv reader");
    Ok((samples, emb))
}

/// Maps each schema attribute to its column in the file header.
fn column_map(path: &Path, headers: &csv::StringRecord, schema: &AttributeSchema) -> Result<Vec<usize>> {
    if headers.is_empty() || &headers[0] != "sample_id" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header `sample_id,<attributes>`".into(),
        });
    }
    let file_attrs: Vec<&str> = headers.iter().skip(1).collect();
    for a in &file_attrs {
        if schema.index_of(a).is_none() {
            return Err(Error::Schema(format!("{}: column `{a}` not in schema", path.display())));
        }
    }
    schema
        .names()
        .map(|name| {
            file_attrs
                .iter()
                .position(|a| *a == name)
                .map(|p| p + 1)
                .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
        })
        .collect()
}

/// Reads a tri-state annotation file; columns are reordered to schema order.
pub fn load_annotations(path: &Path, schema: &AttributeSchema) -> Result<(Vec<String>, AnnotationMatrix)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = column_map(path, &headers, schema)?;
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let id = record[0].to_string();
        for (a, &c) in cols.iter().enumerate() {
            let field = record[c].trim();
            let v: i64 = field
                .parse()
                .map_err(|_| parse_error(path, &record, format!("bad integer `{field}`")))?;
            if !(-1..=1).contains(&v) {
                return Err(Error::Domain {
                    sample: id,
                    attribute: schema.attributes()[a].name.clone(),
                    value: field.to_string(),
                });
            }
            flat.push(v as i8);
        }
        ids.push(id);
    }
    let values = Array2::from_shape_vec((ids.len(), schema.len()), flat).expect("shape");
    Ok((ids, AnnotationMatrix::new(values)?))
}

/// Reads the continuous variant of the annotation file (decimal cells).
pub fn load_continuous(path: &Path) -> Result<ContinuousAnnotations> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || &headers[0] != "sample_id" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header `sample_id,<attributes>`".into(),
        });
    }
    let attributes: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(path, &record, format!("bad float `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, &record, format!("non-finite value `{field}`")));
            }
            flat.push(v);
        }
    }
    let scores = Array2::from_shape_vec((ids.len(), attributes.len()), flat).expect("shape");
    ContinuousAnnotations::new(ids, attributes, scores)
}

/// Joins an embeddings file and an annotation file on `sample_id`.
///
/// Row order follows the embeddings file. A sample present in only one of the
/// two files is an error.
pub fn load_dataset(embeddings_path: &Path, annotations_path: &Path, schema_path: &Path) -> Result<AnnotatedDataset> {
    let schema = AttributeSchema::load(schema_path)?;
    let (samples, embeddings) = load_embeddings(embeddings_path)?;
    let (ids, ann) = load_annotations(annotations_path, &schema)?;
    join(samples, embeddings, &ids, &ann, schema)
}

pub(crate) fn join(
    samples: Vec<Sample>,
    embeddings: Array2<f64>,
    ann_ids: &[String],
    ann: &AnnotationMatrix,
    schema: AttributeSchema,
) -> Result<AnnotatedDataset> {
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(ann_ids.len());
    for (i, id) in ann_ids.iter().enumerate() {
        if by_id.insert(id.as_str(), i).is_some() {
            return Err(Error::DuplicateSample(id.clone()));
        }
    }
    let mut rows = Vec::with_capacity(samples.len());
    let mut seen = std::collections::HashSet::with_capacity(samples.len());
    for s in &samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::DuplicateSample(s.sample_id.clone()));
        }
        match by_id.get(s.sample_id.as_str()) {
            Some(&r) => rows.push(r),
            None => return Err(Error::Unmatched(s.sample_id.clone())),
        }
    }
    if let Some(extra) = ann_ids.iter().find(|id| !seen.contains(id.as_str())) {
        return Err(Error::Unmatched(extra.clone()));
    }
    AnnotatedDataset::new(samples, embeddings, ann.select_rows(&rows), schema)
}
