use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::datamodel::AnnotatedDataset;
use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::comparator::Comparator;
use super::features::overlap;
use super::metrics::{cmc_from_scores, det_from_scores, CmcCurve, OpenSetCurve};
use super::scores::ScoredPair;

/// Every unordered sample pair `(i, j)`, `i < j`, with at least `min_overlap`
/// jointly annotated attributes.
pub fn comparison_pairs(ds: &AnnotatedDataset, min_overlap: usize) -> Vec<(usize, usize)> {
    let ann = ds.annotations();
    (0..ds.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..ds.len())
                .filter(move |&j| overlap(ann.row(i), ann.row(j)) >= min_overlap)
                .map(move |j| (i, j))
        })
        .collect()
}

fn scored(ds: &AnnotatedDataset, pairs: &[(usize, usize)], f: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<Vec<ScoredPair>> {
    let samples = ds.samples();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            Ok(ScoredPair {
                ref_id: samples[i].sample_id.clone(),
                probe_id: samples[j].sample_id.clone(),
                is_genuine: samples[i].subject_id == samples[j].subject_id,
                score: f(i, j)?,
            })
        })
        .collect()
}

pub fn score_pairs(ds: &AnnotatedDataset, pairs: &[(usize, usize)], comparator: &Comparator) -> Result<Vec<ScoredPair>> {
    let ann = ds.annotations();
    scored(ds, pairs, |i, j| comparator.score(ann.row(i), ann.row(j)))
}

/// Cosine similarity of the embeddings of each pair.
pub fn cosine_scores(ds: &AnnotatedDataset, pairs: &[(usize, usize)]) -> Result<Vec<ScoredPair>> {
    let x = ds.embeddings();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    scored(ds, pairs, |i, j| {
        let denom = norms[i] * norms[j];
        Ok(if denom > 0.0 { x.row(i).dot(&x.row(j)) / denom } else { 0.0 })
    })
}

/// One reference per subject (the sample with the most defined annotations,
/// lowest sample id on ties); everything else is a probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSplit {
    /// Subjects in sorted order.
    pub subjects: Vec<String>,
    /// Reference sample row per subject.
    pub gallery: Vec<usize>,
    pub probes: Vec<usize>,
    /// Gallery position of each probe's subject.
    pub mates: Vec<usize>,
}

pub fn reference_split(ds: &AnnotatedDataset) -> Result<ReferenceSplit> {
    if ds.is_empty() {
        return Err(Error::Metric("empty gallery: dataset has no samples".into()));
    }
    let ann = ds.annotations();
    let samples = ds.samples();
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_subject.entry(&s.subject_id).or_default().push(i);
    }
    let mut out = ReferenceSplit {
        subjects: Vec::new(),
        gallery: Vec::new(),
        probes: Vec::new(),
        mates: Vec::new(),
    };
    for (g, (subject, members)) in by_subject.into_iter().enumerate() {
        let reference = *members
            .iter()
            .min_by(|&&a, &&b| {
                ann.defined_in_row(b)
                    .cmp(&ann.defined_in_row(a))
                    .then_with(|| samples[a].sample_id.cmp(&samples[b].sample_id))
            })
            .expect("non-empty group");
        out.subjects.push(subject.to_string());
        out.gallery.push(reference);
        for &m in &members {
            if m != reference {
                out.probes.push(m);
                out.mates.push(g);
            }
        }
    }
    Ok(out)
}

/// Probe-by-gallery scores; `-inf` for pairs below `min_overlap`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationScores {
    pub scores: Array2<f64>,
    pub mates: Vec<usize>,
}

fn score_matrix(
    ds: &AnnotatedDataset,
    probes: &[usize],
    gallery: &[usize],
    comparator: &Comparator,
    min_overlap: usize,
) -> Result<Array2<f64>> {
    let ann = ds.annotations();
    let rows: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|&p| {
            gallery
                .iter()
                .map(|&g| {
                    if overlap(ann.row(g), ann.row(p)) >= min_overlap {
                        comparator.score(ann.row(g), ann.row(p))
                    } else {
                        Ok(f64::NEG_INFINITY)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((probes.len(), gallery.len()), flat).map_err(|e| Error::Shape(e.to_string()))
}

pub fn closed_set_scores(
    ds: &AnnotatedDataset,
    split: &ReferenceSplit,
    comparator: &Comparator,
    min_overlap: usize,
) -> Result<IdentificationScores> {
    Ok(IdentificationScores {
        scores: score_matrix(ds, &split.probes, &split.gallery, comparator, min_overlap)?,
        mates: split.mates.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSetReport {
    pub curve: CmcCurve,
    pub gallery_size: usize,
}

pub fn eval_closed_set(ds: &AnnotatedDataset, comparator: &Comparator, min_overlap: usize) -> Result<ClosedSetReport> {
    let split = reference_split(ds)?;
    let s = closed_set_scores(ds, &split, comparator, min_overlap)?;
    Ok(ClosedSetReport {
        curve: cmc_from_scores(&s.scores, &s.mates)?,
        gallery_size: split.gallery.len(),
    })
}

/// Gallery positions that stay enrolled and those removed from the gallery.
/// `round(fraction * G)` subjects, clamped to `[1, G - 1]`, are removed.
pub fn unenrolled_split(split: &ReferenceSplit, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("unenrolled fraction must be in (0, 1), got {fraction}")));
    }
    let g = split.gallery.len();
    if g < 2 {
        return Err(Error::Metric("open-set evaluation needs at least 2 subjects".into()));
    }
    let k = ((fraction * g as f64).round() as usize).clamp(1, g - 1);
    let mut order: Vec<usize> = (0..g).collect();
    order.shuffle(&mut rng_for(seed, "recognition/unenrolled"));
    let mut unenrolled = order[..k].to_vec();
    let mut enrolled = order[k..].to_vec();
    unenrolled.sort_unstable();
    enrolled.sort_unstable();
    Ok((enrolled, unenrolled))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetReport {
    pub curve: OpenSetCurve,
    pub unenrolled_subjects: Vec<String>,
}

pub fn eval_open_set(
    ds: &AnnotatedDataset,
    comparator: &Comparator,
    min_overlap: usize,
    unenrolled_fraction: f64,
    seed: u64,
) -> Result<OpenSetReport> {
    let split = reference_split(ds)?;
    let (enrolled, unenrolled) = unenrolled_split(&split, unenrolled_fraction, seed)?;
    let mut position = vec![None; split.gallery.len()];
    for (new, &old) in enrolled.iter().enumerate() {
        position[old] = Some(new);
    }
    let gallery: Vec<usize> = enrolled.iter().map(|&g| split.gallery[g]).collect();
    let mut enrolled_probes = Vec::new();
    let mut mates = Vec::new();
    let mut unenrolled_probes = Vec::new();
    for (&p, &m) in split.probes.iter().zip(&split.mates) {
        match position[m] {
            Some(new) => {
                enrolled_probes.push(p);
                mates.push(new);
            }
            None => unenrolled_probes.push(p),
        }
    }
    let e = score_matrix(ds, &enrolled_probes, &gallery, comparator, min_overlap)?;
    let u = score_matrix(ds, &unenrolled_probes, &gallery, comparator, min_overlap)?;
    Ok(OpenSetReport {
        curve: det_from_scores(&e, &mates, &u)?,
        unenrolled_subjects: unenrolled.iter().map(|&g| split.subjects[g].clone()).collect(),
    })
}
