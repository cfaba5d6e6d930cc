use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use super::vote::Prediction;
use crate::cohort::DiagnosisLabel;

/// true label -> model -> predicted label -> count
pub type Profile = BTreeMap<DiagnosisLabel, BTreeMap<String, BTreeMap<DiagnosisLabel, usize>>>;

/// Tallies wrong predictions for every true label whose case count lies in
/// `support_range`. Labels in range with no errors map to an empty table.
pub fn misclassification_profile(
    preds_by_model: &BTreeMap<String, Vec<Prediction>>,
    supports: &BTreeMap<DiagnosisLabel, usize>,
    support_range: RangeInclusive<usize>,
) -> Profile {
    let mut out: Profile = supports
        .iter()
        .filter(|(_, n)| support_range.contains(n))
        .map(|(l, _)| (l.clone(), BTreeMap::new()))
        .collect();
    for (model, preds) in preds_by_model {
        for p in preds.iter().filter(|p| !p.is_correct()) {
            if let Some(per_model) = out.get_mut(&p.true_label) {
                *per_model
                    .entry(model.clone())
                    .or_default()
                    .entry(p.predicted_label.clone())
                    .or_insert(0) += 1;
            }
        }
    }
    out
}
