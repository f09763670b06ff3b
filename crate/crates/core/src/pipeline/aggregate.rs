use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AnnotationMatrix, AttributeSchema};
use crate::error::{Error, Result};
use crate::mac::Predictions;

use super::calibrate::CalibrationTable;

/// Keeps each prediction whose reliability reaches its attribute's threshold and
/// sets the rest to 0. Columns follow the table's attribute order; a discarded
/// attribute becomes an all-zero column.
pub fn transfer(predictions: &Predictions, table: &CalibrationTable) -> Result<AnnotationMatrix> {
    let labels = predictions.labels.values();
    if labels.ncols() != table.attributes.len() || predictions.reliability.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} / reliabilities {:?} vs {} calibrated attributes",
            labels.dim(),
            predictions.reliability.dim(),
            table.attributes.len()
        )));
    }
    let mut out = Array2::<i8>::zeros(labels.dim());
    for (a, cal) in table.attributes.iter().enumerate() {
        let Some(thr) = cal.threshold() else { continue };
        for i in 0..labels.nrows() {
            if predictions.reliability[[i, a]] >= thr {
                out[[i, a]] = labels[[i, a]];
            }
        }
    }
    AnnotationMatrix::new(out)
}

/// One source's transferred annotations on the target, with the reliabilities and
/// calibration needed to rank it against other sources.
#[derive(Debug, Clone)]
pub struct SourceAnnotations {
    pub name: String,
    /// Transferred labels; columns follow `table.attributes`.
    pub labels: AnnotationMatrix,
    pub reliability: Array2<f64>,
    pub table: CalibrationTable,
}

/// Merges sources into one matrix under `schema`. Per cell, the nonzero label whose
/// source maps its reliability back to the highest expected accuracy wins; equal
/// values go to the source listed first.
pub fn aggregate(sources: &[SourceAnnotations], schema: &AttributeSchema) -> Result<AnnotationMatrix> {
    aggregate_with_choices(sources, schema).map(|(m, _)| m)
}

/// [`aggregate`] that also reports, per cell, the index of the source whose label was used.
pub fn aggregate_with_choices(
    sources: &[SourceAnnotations],
    schema: &AttributeSchema,
) -> Result<(AnnotationMatrix, Array2<Option<usize>>)> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Pipeline("no sources to aggregate".into()))?;
    let n = first.labels.num_samples();
    // Column of each target attribute in each source, if any.
    let mut columns = vec![Vec::<(usize, usize)>::new(); schema.len()];
    for (s, src) in sources.iter().enumerate() {
        let k = src.table.attributes.len();
        if src.labels.num_samples() != n || src.labels.num_attributes() != k || src.reliability.dim() != (n, k) {
            return Err(Error::Shape(format!("source `{}` does not match the target shape", src.name)));
        }
        for (c, cal) in src.table.attributes.iter().enumerate() {
            let a = schema.index_of(&cal.attribute).ok_or_else(|| {
                Error::Schema(format!("source `{}` attribute `{}` not in target schema", src.name, cal.attribute))
            })?;
            columns[a].push((s, c));
        }
    }

    let mut out = Array2::<i8>::zeros((n, schema.len()));
    let mut chosen = Array2::<Option<usize>>::from_elem((n, schema.len()), None);
    for (a, cols) in columns.iter().enumerate() {
        for i in 0..n {
            let mut best: Option<(f64, usize, i8)> = None;
            for &(s, c) in cols {
                let src = &sources[s];
                let label = src.labels.get(i, c);
                if label == 0 {
                    continue;
                }
                let acc = src.table.attributes[c].map_back(src.reliability[[i, c]])?;
                if best.is_none_or(|(b, _, _)| acc > b) {
                    best = Some((acc, s, label));
                }
            }
            if let Some((_, s, label)) = best {
                out[[i, a]] = label;
                chosen[[i, a]] = Some(s);
            }
        }
    }
    Ok((AnnotationMatrix::new(out)?, chosen))
}

/// How much of a sample is cleared when a class of exclusive attributes has more
/// than one true label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairScope {
    /// Only the attributes of the offending class.
    #[default]
    Class,
    /// Every attribute of the sample.
    Row,
}

/// Sets to 0 the annotations of every (sample, class) with two or more true labels.
pub fn obtain_plausibility(
    matrix: &AnnotationMatrix,
    schema: &AttributeSchema,
    scope: RepairScope,
) -> Result<AnnotationMatrix> {
    if matrix.num_attributes() != schema.len() {
        return Err(Error::Shape(format!(
            "{} columns for {} schema attributes",
            matrix.num_attributes(),
            schema.len()
        )));
    }
    let mut out = matrix.values().clone();
    for i in 0..matrix.num_samples() {
        let mut clear_row = false;
        for class in schema.classes() {
            let positives = class.members.iter().filter(|&&a| matrix.get(i, a) == 1).count();
            if positives < 2 {
                continue;
            }
            match scope {
                RepairScope::Class => class.members.iter().for_each(|&a| out[[i, a]] = 0),
                RepairScope::Row => clear_row = true,
            }
        }
        if clear_row {
            out.row_mut(i).fill(0);
        }
    }
    AnnotationMatrix::new(out)
}
