use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{self, ArtifactHeader};

use super::metrics::{ScoreSet, VerificationReport};

/// One scored comparison, as stored in score files.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub ref_id: String,
    pub probe_id: String,
    pub is_genuine: bool,
    pub score: f64,
}

pub fn score_set(pairs: &[ScoredPair]) -> Result<ScoreSet> {
    let (g, i): (Vec<&ScoredPair>, Vec<&ScoredPair>) = pairs.iter().partition(|p| p.is_genuine);
    ScoreSet::new(g.iter().map(|p| p.score).collect(), i.iter().map(|p| p.score).collect())
}

/// `ref_id,probe_id,is_genuine,score` with `is_genuine` as 1/0.
pub fn scores_csv(pairs: &[ScoredPair], header: Option<ArtifactHeader>) -> String {
    let mut out = String::from("ref_id,probe_id,is_genuine,score\n");
    for p in pairs {
        let _ = writeln!(out, "{},{},{},{}", p.ref_id, p.probe_id, u8::from(p.is_genuine), p.score);
    }
    io_util::with_header(header, out)
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoredPair>> {
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ref_id", "probe_id", "is_genuine", "score"] {
        return Err(err(1, "expected header `ref_id,probe_id,is_genuine,score`".into()));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let is_genuine = match &rec[2] {
            "1" => true,
            "0" => false,
            v => return Err(err(line, format!("is_genuine must be 0 or 1, got `{v}`"))),
        };
        let score: f64 = rec[3].parse().map_err(|_| err(line, format!("bad score `{}`", &rec[3])))?;
        out.push(ScoredPair {
            ref_id: rec[0].to_string(),
            probe_id: rec[1].to_string(),
            is_genuine,
            score,
        });
    }
    Ok(out)
}

/// Headline verification numbers, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub auc: f64,
    pub eer: f64,
    /// Keyed by the FMR target as written.
    pub fnmr_at_fmr: BTreeMap<String, f64>,
    pub genuine_pairs: usize,
    pub imposter_pairs: usize,
}

impl VerificationSummary {
    pub fn new(report: &VerificationReport, scores: &ScoreSet) -> Self {
        Self {
            auc: report.auc,
            eer: report.eer,
            fnmr_at_fmr: report
                .fnmr_at_fmr
                .iter()
                .map(|f| (f.target_fmr.to_string(), f.fnmr))
                .collect(),
            genuine_pairs: scores.genuine.len(),
            imposter_pairs: scores.imposter.len(),
        }
    }
}
