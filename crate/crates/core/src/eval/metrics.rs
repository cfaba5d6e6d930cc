use std::collections::BTreeMap;

use serde::Serialize;

use super::vote::Prediction;
use crate::cohort::DiagnosisLabel;
use crate::error::{Error, Result};
use crate::stats::dist::student_t_quantile;

/// One-vs-rest scores for one label within one organ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: DiagnosisLabel,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of predictions whose true label is this label.
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-label precision, recall and F1 over the predictions whose true label
/// belongs to `organ`. Zero denominators score 0. Rows come back in label
/// order and include labels that were only predicted (support 0).
pub fn per_diagnosis_f1(preds: &[Prediction], organ: &str) -> Vec<LabelScore> {
    let mut counts: BTreeMap<&DiagnosisLabel, [usize; 3]> = BTreeMap::new();
    for p in preds.iter().filter(|p| p.true_label.organ == organ) {
        if p.is_correct() {
            counts.entry(&p.true_label).or_default()[0] += 1;
        } else {
            counts.entry(&p.predicted_label).or_default()[1] += 1;
            counts.entry(&p.true_label).or_default()[2] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(label, [tp, fp, fn_])| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            LabelScore {
                label: label.clone(),
                true_positives: tp,
                false_positives: fp,
                false_negatives: fn_,
                precision,
                recall,
                f1,
                support: tp + fn_,
            }
        })
        .collect()
}

/// Unweighted mean F1 over labels with support > 0; `None` if there are none.
pub fn organ_macro_f1(scores: &[LabelScore]) -> Option<f64> {
    let (sum, n) = scores
        .iter()
        .filter(|s| s.support > 0)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.f1, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Concatenates per-fold test predictions and scores them once.
pub fn pooled_f1(folds: &[Vec<Prediction>], organ: &str) -> (Vec<LabelScore>, Option<f64>) {
    let pooled: Vec<Prediction> = folds.iter().flatten().cloned().collect();
    let scores = per_diagnosis_f1(&pooled, organ);
    let macro_f1 = organ_macro_f1(&scores);
    (scores, macro_f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean, sample sd and a Student-t confidence interval. The interval is not
/// clipped to [0, 1]. A single value gives sd 0 and a point interval.
pub fn organ_summary(values: &[f64], confidence: f64) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Config("summary of an empty list".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence {confidence} outside (0, 1)")));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary {
            n,
            mean,
            sd: 0.0,
            ci_low: mean,
            ci_high: mean,
        });
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(summary_from_moments(n, mean, sd, confidence))
}

/// Interval from already-computed moments.
pub fn summary_from_moments(n: usize, mean: f64, sd: f64, confidence: f64) -> Summary {
    let half = if n > 1 {
        student_t_quantile(0.5 + confidence / 2.0, (n - 1) as f64) * sd / (n as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        n,
        mean,
        sd,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(truth: &str, predicted: &str) -> Prediction {
        Prediction {
            query_slide_id: format!("{truth}{predicted}"),
            patient_id: String::new(),
            true_label: DiagnosisLabel::new("Lung", truth),
            predicted_label: DiagnosisLabel::new("Lung", predicted),
            n_used: 1,
            top_distance: 0.0,
        }
    }

    fn preds(truths: &[&str], predicted: &[&str]) -> Vec<Prediction> {
        truths.iter().zip(predicted).map(|(t, p)| pred(t, p)).collect()
    }

    #[test]
    fn hand_computed_confusion() {
        let s = per_diagnosis_f1(&preds(&["A", "A", "B", "B"], &["A", "B", "B", "B"]), "Lung");
        assert_eq!(s.len(), 2);
        assert!((s[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1].f1 - 0.8).abs() < 1e-15);
        assert_eq!((s[0].precision, s[0].recall), (1.0, 0.5));
        assert!((organ_macro_f1(&s).unwrap() - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn all_correct_scores_one() {
        let s = per_diagnosis_f1(&preds(&["A", "B", "C"], &["A", "B", "C"]), "Lung");
        assert!(s.iter().all(|x| x.f1 == 1.0));
    }

    #[test]
    fn predicted_only_label_excluded_from_macro() {
        // C is predicted but never true: support 0, F1 0, not averaged
        let s = per_diagnosis_f1(&preds(&["A", "A", "B"], &["A", "C", "B"]), "Lung");
        let c = s.iter().find(|x| x.label.diagnosis == "C").unwrap();
        assert_eq!((c.support, c.f1), (0, 0.0));
        let a_f1 = 2.0 * 1.0 * 0.5 / 1.5;
        assert!((organ_macro_f1(&s).unwrap() - (a_f1 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn other_organs_ignored() {
        let mut p = preds(&["A"], &["A"]);
        p.push(Prediction {
            true_label: DiagnosisLabel::new("Brain", "X"),
            predicted_label: DiagnosisLabel::new("Brain", "Y"),
            ..p[0].clone()
        });
        assert_eq!(per_diagnosis_f1(&p, "Lung").len(), 1);
    }

    #[test]
    fn macro_of_explicit_values() {
        let mk = |f1: f64, support: usize| LabelScore {
            label: DiagnosisLabel::new("o", format!("{f1}")),
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
            precision: 0.0,
            recall: 0.0,
            f1,
            support,
        };
        assert_eq!(organ_macro_f1(&[mk(1.0, 3), mk(0.5, 2)]), Some(0.75));
        assert_eq!(organ_macro_f1(&[mk(0.4, 3)]), Some(0.4));
        assert_eq!(organ_macro_f1(&[mk(0.4, 0)]), None);
    }

    #[test]
    fn six_label_organ_matches_confusion_table_oracle() {
        let labels = ["a", "b", "c", "d", "e", "f"];
        let mut p = Vec::new();
        for i in 0..60usize {
            let t = labels[i % 6];
            let q = labels[(i * 7 + i / 6) % 6];
            p.push(pred(t, q));
        }
        // independent route: full confusion matrix
        let mut cm = [[0usize; 6]; 6];
        for x in &p {
            let ti = labels.iter().position(|l| *l == x.true_label.diagnosis).unwrap();
            let pi = labels.iter().position(|l| *l == x.predicted_label.diagnosis).unwrap();
            cm[ti][pi] += 1;
        }
        let mut f1s = Vec::new();
        for k in 0..6 {
            let tp = cm[k][k] as f64;
            let col: usize = (0..6).map(|r| cm[r][k]).sum();
            let row: usize = cm[k].iter().sum();
            let prec = if col == 0 { 0.0 } else { tp / col as f64 };
            let rec = if row == 0 { 0.0 } else { tp / row as f64 };
            f1s.push(if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) });
        }
        let want = f1s.iter().sum::<f64>() / 6.0;
        let got = organ_macro_f1(&per_diagnosis_f1(&p, "Lung")).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn summary_reproduces_published_interval() {
        let s = summary_from_moments(17, 0.689, 0.209, 0.95);
        assert!((s.ci_low - 0.581).abs() <= 0.002);
        assert!((s.ci_high - 0.796).abs() <= 0.002);
    }

    #[test]
    fn constant_list_has_point_interval() {
        let s = organ_summary(&[0.4; 5], 0.95).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!((s.ci_low, s.ci_high), (0.4, 0.4));
    }

    #[test]
    fn two_values_use_wide_t_interval_unclipped() {
        let s = organ_summary(&[0.0, 1.0], 0.95).unwrap();
        assert_eq!(s.mean, 0.5);
        assert!((s.sd - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        // 0.5 -/+ 12.7062 * 0.7071 / sqrt(2)
        assert!((s.ci_low - (0.5 - 6.353_102_368_087)).abs() < 1e-9);
        assert!((s.ci_high - 6.853_102_368_087).abs() < 1e-9);
        assert!(s.ci_low < 0.0 && s.ci_high > 1.0);
    }

    #[test]
    fn pooling() {
        let fold = preds(&["A", "A", "B"], &["A", "B", "B"]);
        let (single, m1) = pooled_f1(std::slice::from_ref(&fold), "Lung");
        assert_eq!(single, per_diagnosis_f1(&fold, "Lung"));
        let (_, m2) = pooled_f1(&[fold.clone(), fold.clone()], "Lung");
        assert!((m1.unwrap() - m2.unwrap()).abs() < 1e-15);
        let (_, m3) = pooled_f1(&[fold.clone(), Vec::new()], "Lung");
        assert_eq!(m1, m3);

        let f1 = preds(&["A", "B"], &["B", "B"]);
        let f2 = preds(&["A", "B", "C"], &["A", "C", "C"]);
        let concat: Vec<_> = f1.iter().chain(&f2).cloned().collect();
        let (pooled, _) = pooled_f1(&[f1, f2], "Lung");
        assert_eq!(pooled, per_diagnosis_f1(&concat, "Lung"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn macro_invariant_under_relabeling(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40)) {
                let names = ["w", "x", "y", "z"];
                let renamed = ["q", "a", "m", "b"];
                let p1: Vec<_> = pairs.iter().map(|&(t, q)| pred(names[t], names[q])).collect();
                let p2: Vec<_> = pairs.iter().map(|&(t, q)| pred(renamed[t], renamed[q])).collect();
                let m1 = organ_macro_f1(&per_diagnosis_f1(&p1, "Lung")).unwrap();
                let m2 = organ_macro_f1(&per_diagnosis_f1(&p2, "Lung")).unwrap();
                prop_assert!((m1 - m2).abs() < 1e-12);
                let s = per_diagnosis_f1(&p1, "Lung");
                prop_assert_eq!(s.iter().map(|x| x.support).sum::<usize>(), pairs.len());
                for x in &s {
                    prop_assert!((0.0..=1.0).contains(&x.f1));
                }
            }
        }
    }
}
