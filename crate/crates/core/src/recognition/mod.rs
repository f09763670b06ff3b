//! Identity recognition from soft-biometric annotations: joint comparison features,
//! hamming and logistic-regression comparators, verification and identification
//! metrics, and score fusion.

mod comparator;
mod features;
mod fusion;
mod metrics;
mod protocol;
mod scores;

pub use comparator::{
    attribute_importance, logreg_score, train_logreg, Comparator, ImportanceTable, LogRegComparator, LogRegConfig,
    PairSampling,
};
pub use features::{hamming_score, joint_features, overlap, valid_filter, ComparisonPair, HammingMode, JointFeature};
pub use fusion::{fuse_scores, fusion_weights, min_max_normalize, FusionWeighting};
pub use metrics::{
    cmc_from_scores, det_from_scores, eval_verification, CmcCurve, DetPoint, FnmrAtFmr, OpenSetCurve, RocPoint,
    ScoreSet, VerificationReport,
};
pub use protocol::{
    closed_set_scores, comparison_pairs, cosine_scores, eval_closed_set, eval_open_set, reference_split,
    score_pairs, unenrolled_split, ClosedSetReport, IdentificationScores, OpenSetReport, ReferenceSplit,
};
pub use scores::{load_scores, score_set, scores_csv, ScoredPair, VerificationSummary};
