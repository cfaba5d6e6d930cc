//! From ranked neighbors to scores: top-n voting, per-diagnosis F1,
//! organ macro-F1 summaries, win counts, misclassification profiles and
//! patient-grouped stratified folds.

pub mod folds;
pub mod metrics;
pub mod misclass;
pub mod vote;
pub mod wins;

pub use folds::{grouped_stratified_folds, FoldAssignment};
pub use metrics::{organ_macro_f1, organ_summary, per_diagnosis_f1, pooled_f1, LabelScore, Summary};
pub use misclass::misclassification_profile;
pub use vote::{aggregate_patients, majority_vote, PatientAggregation, Prediction, SlideInfo, SlideTable};
pub use wins::{win_counts, WinLevel};
