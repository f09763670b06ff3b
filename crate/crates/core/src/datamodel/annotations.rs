use ndarray::Array2;

use crate::error::{Error, Result};

use super::AttributeSchema;

/// Tri-state annotation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Label {
    True = 1,
    False = -1,
    Undefined = 0,
}

impl Label {
    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Label::True),
            -1 => Some(Label::False),
            0 => Some(Label::Undefined),
            _ => None,
        }
    }

    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn is_defined(self) -> bool {
        self != Label::Undefined
    }
}

/// Samples × attributes matrix over {+1, -1, 0}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMatrix {
    values: Array2<i8>,
}

impl AnnotationMatrix {
    pub fn new(values: Array2<i8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !matches!(**v, -1..=1)) {
            return Err(Error::Shape(format!("annotation value {bad} outside {{-1, 0, 1}}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(samples: usize, attributes: usize) -> Self {
        Self {
            values: Array2::zeros((samples, attributes)),
        }
    }

    pub fn values(&self) -> &Array2<i8> {
        &self.values
    }

    pub fn into_values(self) -> Array2<i8> {
        self.values
    }

    pub fn num_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_attributes(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, sample: usize, attribute: usize) -> i8 {
        self.values[[sample, attribute]]
    }

    pub fn set(&mut self, sample: usize, attribute: usize, label: Label) {
        self.values[[sample, attribute]] = label.value();
    }

    pub fn row(&self, sample: usize) -> ndarray::ArrayView1<'_, i8> {
        self.values.row(sample)
    }

    pub fn column(&self, attribute: usize) -> ndarray::ArrayView1<'_, i8> {
        self.values.column(attribute)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(ndarray::Axis(0), rows),
        }
    }

    /// Number of defined (non-zero) annotations in `sample`'s row.
    pub fn defined_in_row(&self, sample: usize) -> usize {
        self.values.row(sample).iter().filter(|v| **v != 0).count()
    }

    /// True iff every (sample, class) has at most one attribute at +1.
    pub fn respects_schema(&self, schema: &AttributeSchema) -> bool {
        self.values.rows().into_iter().all(|row| {
            schema
                .classes()
                .iter()
                .all(|c| c.members.iter().filter(|&&m| row[m] == 1).count() <= 1)
        })
    }
}

/// Real-valued source annotations; the sign carries the polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousAnnotations {
    pub sample_ids: Vec<String>,
    pub attributes: Vec<String>,
    pub scores: Array2<f64>,
}

impl ContinuousAnnotations {
    pub fn new(sample_ids: Vec<String>, attributes: Vec<String>, scores: Array2<f64>) -> Result<Self> {
        if scores.dim() != (sample_ids.len(), attributes.len()) {
            return Err(Error::Shape(format!(
                "scores are {:?}, expected ({}, {})",
                scores.dim(),
                sample_ids.len(),
                attributes.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("continuous annotations must be finite".into()));
        }
        Ok(Self {
            sample_ids,
            attributes,
            scores,
        })
    }

    pub fn column_of(&self, attribute: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attribute)
    }
}
