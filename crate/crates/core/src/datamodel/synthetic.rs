//! Synthetic datasets with a known generative process.
//!
//! Every subject draws a latent attribute vector that respects the schema's
//! exclusive classes. A sample's embedding is
//! `sum_a (separation_a / 2) * t_a * u_a + identity_scale * z_subject + noise * eps`
//! with `t_a = +-1`, fixed unit directions `u_a` shared by all generated datasets,
//! a per-subject identity vector `z` and isotropic noise. Observed annotations are
//! the hidden truth with label flips (`noise_rate`) and erasures (`undefined_rate`).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::{AnnotatedDataset, AnnotationMatrix, AttributeSchema, AttributeSpec, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_sources: usize,
    pub subjects_per_dataset: usize,
    pub samples_per_subject: usize,
    pub dim: usize,
    /// Explicit schema; when absent, `num_attributes` independent binary attributes.
    pub schema: Option<Vec<AttributeSpec>>,
    pub num_attributes: usize,
    /// Distance between class means along each attribute direction.
    pub separation: f64,
    pub separation_per_attribute: Option<Vec<f64>>,
    pub noise_rate: f64,
    pub undefined_rate: f64,
    /// Probability that a sample's true attribute deviates from its subject's.
    pub sample_flip_rate: f64,
    pub sample_flip_rate_per_attribute: Option<Vec<f64>>,
    /// Probability that a binary attribute is true for a subject.
    pub prevalence: f64,
    pub identity_scale: f64,
    pub embedding_noise: f64,
    /// Attribute names annotated by each source; absent means all.
    pub source_attributes: Option<Vec<Vec<String>>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_sources: 2,
            subjects_per_dataset: 200,
            samples_per_subject: 5,
            dim: 32,
            schema: None,
            num_attributes: 10,
            separation: 4.0,
            separation_per_attribute: None,
            noise_rate: 0.05,
            undefined_rate: 0.0,
            sample_flip_rate: 0.0,
            sample_flip_rate_per_attribute: None,
            prevalence: 0.5,
            identity_scale: 0.5,
            embedding_noise: 1.0,
            source_attributes: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub sources: Vec<AnnotatedDataset>,
    /// Target dataset; its annotation matrix is all zeros.
    pub target: AnnotatedDataset,
    /// Hidden truth for each source, under the full schema.
    pub source_truth: Vec<AnnotationMatrix>,
    pub target_truth: AnnotationMatrix,
    pub schema: AttributeSchema,
}

impl SyntheticSpec {
    pub fn build_schema(&self) -> Result<AttributeSchema> {
        match &self.schema {
            Some(attrs) => AttributeSchema::new(attrs.clone()),
            None => AttributeSchema::binary_independent(self.num_attributes),
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        rate("noise_rate", self.noise_rate)?;
        rate("undefined_rate", self.undefined_rate)?;
        rate("sample_flip_rate", self.sample_flip_rate)?;
        rate("prevalence", self.prevalence)?;
        if let Some(v) = &self.sample_flip_rate_per_attribute {
            if v.len() != k {
                return Err(Error::Config("sample_flip_rate_per_attribute length mismatch".into()));
            }
            for &r in v {
                rate("sample_flip_rate_per_attribute", r)?;
            }
        }
        if let Some(v) = &self.separation_per_attribute {
            if v.len() != k {
                return Err(Error::Config("separation_per_attribute length mismatch".into()));
            }
        }
        if self.dim == 0 || self.subjects_per_dataset == 0 || self.samples_per_subject == 0 {
            return Err(Error::Config("dim, subjects and samples per subject must be >= 1".into()));
        }
        if self.embedding_noise < 0.0 || self.identity_scale < 0.0 {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    fn separation_of(&self, a: usize) -> f64 {
        self.separation_per_attribute
            .as_ref()
            .map_or(self.separation, |v| v[a])
    }

    fn flip_rate_of(&self, a: usize) -> f64 {
        self.sample_flip_rate_per_attribute
            .as_ref()
            .map_or(self.sample_flip_rate, |v| v[a])
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    schema: &'a AttributeSchema,
    directions: Array2<f64>,
}

impl Generator<'_> {
    /// Schema-respecting latent attribute vector for a subject.
    fn subject_truth(&self, rng: &mut ChaCha8Rng) -> Vec<i8> {
        let mut t = vec![-1i8; self.schema.len()];
        for class in self.schema.classes() {
            if class.members.len() == 1 {
                if rng.random::<f64>() < self.spec.prevalence {
                    t[class.members[0]] = 1;
                }
            } else {
                let pick = rng.random_range(0..class.members.len());
                t[class.members[pick]] = 1;
            }
        }
        t
    }

    fn sample_truth(&self, subject: &[i8], rng: &mut ChaCha8Rng) -> Vec<i8> {
        let mut t = subject.to_vec();
        for class in self.schema.classes() {
            let lead = class.members[0];
            if rng.random::<f64>() >= self.spec.flip_rate_of(lead) {
                continue;
            }
            if class.members.len() == 1 {
                t[lead] = -t[lead];
            } else {
                for &m in &class.members {
                    t[m] = -1;
                }
                let pick = rng.random_range(0..class.members.len());
                t[class.members[pick]] = 1;
            }
        }
        t
    }

    fn dataset(
        &self,
        prefix: &str,
        annotated: Option<&[usize]>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(AnnotatedDataset, AnnotationMatrix)> {
        let spec = self.spec;
        let k = self.schema.len();
        let n = spec.subjects_per_dataset * spec.samples_per_subject;
        let mut samples = Vec::with_capacity(n);
        let mut emb = Array2::<f64>::zeros((n, spec.dim));
        let mut truth = Array2::<i8>::zeros((n, k));
        let mut observed = Array2::<i8>::zeros((n, k));
        let mut row = 0;
        for subj in 0..spec.subjects_per_dataset {
            let subject_id = format!("{prefix}_s{subj:04}");
            let latent = self.subject_truth(rng);
            let identity: Array1<f64> = (0..spec.dim).map(|_| StandardNormal.sample(rng)).collect();
            for j in 0..spec.samples_per_subject {
                let t = self.sample_truth(&latent, rng);
                let mut e = &identity * spec.identity_scale;
                for (a, &ta) in t.iter().enumerate() {
                    let w = 0.5 * spec.separation_of(a) * f64::from(ta);
                    e.scaled_add(w, &self.directions.row(a));
                }
                for v in e.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += spec.embedding_noise * z;
                }
                emb.row_mut(row).assign(&e);
                for a in 0..k {
                    truth[[row, a]] = t[a];
                    let flipped = rng.random::<f64>() < spec.noise_rate;
                    let erased = rng.random::<f64>() < spec.undefined_rate;
                    let annotated_here = annotated.is_none_or(|cols| cols.contains(&a));
                    observed[[row, a]] = if !annotated_here || erased {
                        0
                    } else if flipped {
                        -t[a]
                    } else {
                        t[a]
                    };
                }
                samples.push(Sample {
                    sample_id: format!("{subject_id}_{j:03}"),
                    subject_id: subject_id.clone(),
                });
                row += 1;
            }
        }
        let ds = AnnotatedDataset::new(samples, emb, AnnotationMatrix::new(observed)?, self.schema.clone())?;
        Ok((ds, AnnotationMatrix::new(truth)?))
    }
}

/// Generates `num_sources` annotated source datasets and an unannotated target, all
/// from one generative process, together with their hidden truth.
///
/// Sources restricted by `source_attributes` are returned under the restricted schema.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    let schema = spec.build_schema()?;
    let k = schema.len();
    spec.validate(k)?;
    let mut dir_rng = rng_for(seed, "synthetic/directions");
    let mut directions = Array2::<f64>::zeros((k, spec.dim));
    for mut row in directions.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut dir_rng);
        }
        let norm = row.dot(&row).sqrt().max(1e-12);
        row /= norm;
    }
    let generator = Generator {
        spec,
        schema: &schema,
        directions,
    };

    let mut sources = Vec::with_capacity(spec.num_sources);
    let mut source_truth = Vec::with_capacity(spec.num_sources);
    for s in 0..spec.num_sources {
        let cols: Option<Vec<usize>> = match &spec.source_attributes {
            Some(lists) => {
                let names = lists
                    .get(s)
                    .ok_or_else(|| Error::Config(format!("no attribute list for source {s}")))?;
                Some(
                    names
                        .iter()
                        .map(|n| {
                            schema
                                .index_of(n)
                                .ok_or_else(|| Error::Config(format!("unknown attribute `{n}`")))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            None => None,
        };
        let mut rng = rng_for(seed, &format!("synthetic/source{s}"));
        let (ds, truth) = generator.dataset(&format!("src{s}"), cols.as_deref(), &mut rng)?;
        let ds = match &spec.source_attributes {
            Some(lists) => {
                let sub = schema.restrict(&lists[s])?;
                let keep: Vec<usize> = sub.names().map(|n| schema.index_of(n).unwrap()).collect();
                let ann = ds.annotations().values().select(ndarray::Axis(1), &keep);
                ds.with_annotations(AnnotationMatrix::new(ann)?, sub)?
            }
            None => ds,
        };
        sources.push(ds);
        source_truth.push(truth);
    }
    let mut rng = rng_for(seed, "synthetic/target");
    let (target, target_truth) = generator.dataset("tgt", Some(&[]), &mut rng)?;
    Ok(SyntheticData {
        sources,
        target,
        source_truth,
        target_truth,
        schema,
    })
}
