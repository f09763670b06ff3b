use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison scores split by ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, imposter: Vec<f64>) -> Result<Self> {
        if genuine.is_empty() || imposter.is_empty() {
            return Err(Error::Metric(format!(
                "need genuine and imposter scores, got {} and {}",
                genuine.len(),
                imposter.len()
            )));
        }
        if genuine.iter().chain(&imposter).any(|s| s.is_nan()) {
            return Err(Error::Metric("NaN score".into()));
        }
        Ok(Self { genuine, imposter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Share of imposter scores `>= threshold`.
    pub fmr: f64,
    /// Share of genuine scores `< threshold`.
    pub fnmr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnmrAtFmr {
    pub target_fmr: f64,
    pub threshold: f64,
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// One point per unique score plus a final `+inf` threshold, ascending.
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    pub fnmr_at_fmr: Vec<FnmrAtFmr>,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn unique_thresholds<'a>(lists: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut t: Vec<f64> = lists.into_iter().flatten().copied().filter(|s| s.is_finite()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t
}

/// Threshold sweep over every unique score.
///
/// AUC is the trapezoid area under (FMR, 1 - FNMR). EER interpolates linearly
/// between the two sweep points where FNMR - FMR changes sign. FNMR at a target
/// FMR uses the smallest threshold whose FMR does not exceed the target.
pub fn eval_verification(scores: &ScoreSet, fmr_targets: &[f64]) -> Result<VerificationReport> {
    let scores = ScoreSet::new(scores.genuine.clone(), scores.imposter.clone())?;
    for &t in fmr_targets {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("FMR target {t} outside [0, 1]")));
        }
    }
    let gen = sorted(&scores.genuine);
    let imp = sorted(&scores.imposter);
    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let roc: Vec<RocPoint> = unique_thresholds([gen.as_slice(), imp.as_slice()])
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            fmr: (imp.len() - imp.partition_point(|&s| s < t)) as f64 / ni,
            fnmr: gen.partition_point(|&s| s < t) as f64 / ng,
        })
        .collect();

    let auc = roc
        .windows(2)
        .map(|w| (w[0].fmr - w[1].fmr) * ((1.0 - w[0].fnmr) + (1.0 - w[1].fnmr)) / 2.0)
        .sum::<f64>();

    let k = roc
        .iter()
        .position(|p| p.fnmr - p.fmr >= 0.0)
        .expect("the +inf threshold has FNMR 1 and FMR 0");
    let eer = if k == 0 || roc[k].fnmr == roc[k].fmr {
        (roc[k].fnmr + roc[k].fmr) / 2.0
    } else {
        let (a, b) = (roc[k - 1], roc[k]);
        let (da, db) = (a.fnmr - a.fmr, b.fnmr - b.fmr);
        let t = -da / (db - da);
        a.fmr + t * (b.fmr - a.fmr)
    };

    let fnmr_at_fmr = fmr_targets
        .iter()
        .map(|&target| {
            let p = roc.iter().find(|p| p.fmr <= target).expect("FMR reaches 0 at +inf");
            FnmrAtFmr {
                target_fmr: target,
                threshold: p.threshold,
                fnmr: p.fnmr,
            }
        })
        .collect();
    Ok(VerificationReport {
        roc,
        auc,
        eer,
        fnmr_at_fmr,
    })
}

/// Closed-set identification result. `cmc[k - 1]` is the share of probes whose
/// mated reference ranks within the top `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    pub cmc: Vec<f64>,
    /// Probes that were ranked.
    pub num_probes: usize,
    /// Probes without any valid comparison (every score `-inf`).
    pub excluded: usize,
}

/// Rank of the mated score; every non-mated score at or above it ranks ahead.
fn mated_rank(row: ndarray::ArrayView1<f64>, mated: usize) -> usize {
    let m = row[mated];
    1 + row.iter().enumerate().filter(|&(j, &s)| j != mated && s >= m).count()
}

/// CMC from a probe-by-gallery score matrix. `-inf` marks an invalid comparison.
pub fn cmc_from_scores(scores: &Array2<f64>, mated: &[usize]) -> Result<CmcCurve> {
    let (n, g) = scores.dim();
    if g == 0 {
        return Err(Error::Metric("empty gallery".into()));
    }
    if mated.len() != n || mated.iter().any(|&m| m >= g) {
        return Err(Error::Shape("mated indices do not match the score matrix".into()));
    }
    let mut hits = vec![0usize; g];
    let mut excluded = 0;
    for (i, &m) in mated.iter().enumerate() {
        let row = scores.row(i);
        if row.iter().all(|&s| s == f64::NEG_INFINITY) {
            excluded += 1;
            continue;
        }
        hits[mated_rank(row, m) - 1] += 1;
    }
    let num_probes = n - excluded;
    let mut acc = 0;
    let cmc = hits
        .iter()
        .map(|&h| {
            acc += h;
            if num_probes == 0 {
                0.0
            } else {
                acc as f64 / num_probes as f64
            }
        })
        .collect();
    Ok(CmcCurve {
        cmc,
        num_probes,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fpir: f64,
    pub fnir: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetCurve {
    pub det: Vec<DetPoint>,
    pub enrolled_probes: usize,
    pub unenrolled_probes: usize,
    /// Probes without any valid comparison.
    pub excluded: usize,
}

/// Open-set identification sweep. An enrolled probe is a miss at `t` unless its
/// mated score is `>= t` and ranks first; an unenrolled probe is a false positive
/// when its best score is `>= t`.
pub fn det_from_scores(enrolled: &Array2<f64>, mated: &[usize], unenrolled: &Array2<f64>) -> Result<OpenSetCurve> {
    if enrolled.ncols() == 0 {
        return Err(Error::Metric("empty gallery".into()));
    }
    if mated.len() != enrolled.nrows() || mated.iter().any(|&m| m >= enrolled.ncols()) {
        return Err(Error::Shape("mated indices do not match the score matrix".into()));
    }
    if unenrolled.ncols() != enrolled.ncols() {
        return Err(Error::Shape("enrolled and unenrolled probes see different galleries".into()));
    }
    let all_invalid = |row: ndarray::ArrayView1<f64>| row.iter().all(|&s| s == f64::NEG_INFINITY);
    let mut excluded = 0;
    // Mated score of enrolled probes, or -inf when the mate is not ranked first.
    let mut hit_scores = Vec::new();
    for (i, &m) in mated.iter().enumerate() {
        let row = enrolled.row(i);
        if all_invalid(row) {
            excluded += 1;
        } else if mated_rank(row, m) == 1 {
            hit_scores.push(row[m]);
        } else {
            hit_scores.push(f64::NEG_INFINITY);
        }
    }
    let mut best_unenrolled = Vec::new();
    for row in unenrolled.rows() {
        if all_invalid(row) {
            excluded += 1;
        } else {
            best_unenrolled.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    if best_unenrolled.is_empty() {
        return Err(Error::Metric("no unenrolled probes to evaluate".into()));
    }
    if hit_scores.is_empty() {
        return Err(Error::Metric("no enrolled probes to evaluate".into()));
    }
    let hits = sorted(&hit_scores);
    let best = sorted(&best_unenrolled);
    let det = unique_thresholds([hits.as_slice(), best.as_slice()])
        .into_iter()
        .map(|t| DetPoint {
            threshold: t,
            fpir: (best.len() - best.partition_point(|&s| s < t)) as f64 / best.len() as f64,
            fnir: hits.partition_point(|&s| s < t) as f64 / hits.len() as f64,
        })
        .collect();
    Ok(OpenSetCurve {
        det,
        enrolled_probes: hits.len(),
        unenrolled_probes: best.len(),
        excluded,
    })
}
