use std::path::Path;

use annotransfer::cleaning::SearchConfig;
use annotransfer::datamodel::SyntheticSpec;
use annotransfer::io_util::ArtifactHeader;
use annotransfer::pipeline::PipelineConfig;
use annotransfer::recognition::{FusionWeighting, HammingMode, LogRegConfig};
use annotransfer::seed::fnv1a;
use annotransfer::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionSettings {
    pub min_overlap: usize,
    pub hamming_mode: HammingMode,
    pub fmr_targets: Vec<f64>,
    pub fusion: FusionWeighting,
    /// Share of gallery identities held out as unenrolled in open-set evaluation.
    pub unenrolled_fraction: f64,
    /// Share of subjects used to train the logistic comparator.
    pub train_fraction: f64,
    pub logreg: LogRegConfig,
    /// Attribute subset used for recognition, e.g. leaving out those hidden by a face mask.
    /// All schema attributes when absent.
    pub attributes: Option<Vec<String>>,
}

impl Default for RecognitionSettings {
    fn default() -> Self {
        Self {
            min_overlap: 10,
            hamming_mode: HammingMode::Disagreement,
            fmr_targets: vec![0.001, 0.01, 0.1],
            fusion: FusionWeighting::OneMinusEer,
            unenrolled_fraction: 0.2,
            train_fraction: 0.2,
            logreg: LogRegConfig::default(),
            attributes: None,
        }
    }
}

/// Everything a command may need. Omitted fields take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synthetic: SyntheticSpec,
    pub cleaning: SearchConfig,
    /// Its own `seed` field is replaced by the top-level seed.
    pub pipeline: PipelineConfig,
    pub recognition: RecognitionSettings,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        config.pipeline.seed = config.seed;
        Ok(config)
    }

    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn header(&self) -> Option<ArtifactHeader> {
        Some(ArtifactHeader {
            seed: self.seed,
            config_hash: self.hash(),
        })
    }
}
