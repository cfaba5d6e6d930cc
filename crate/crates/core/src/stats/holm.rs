use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolmStep {
    /// Position in the caller's p-value list.
    pub index: usize,
    pub p_value: f64,
    /// 1-based rank after sorting ascending.
    pub rank: usize,
    pub threshold: f64,
    pub rejected: bool,
}

/// Step-down decisions, ordered by ascending p-value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolmDecision {
    pub alpha: f64,
    pub steps: Vec<HolmStep>,
}

impl HolmDecision {
    /// Rejection flags in the caller's original order.
    pub fn rejected(&self) -> Vec<bool> {
        let mut out = vec![false; self.steps.len()];
        for s in &self.steps {
            out[s.index] = s.rejected;
        }
        out
    }
}

/// Holm-Bonferroni: the k-th smallest p-value is compared with
/// `alpha / (m - k + 1)`; rejection stops at the first p-value that is not
/// strictly below its threshold. Equal p-values keep their input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<HolmDecision> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut still_rejecting = true;
    let steps = order
        .into_iter()
        .enumerate()
        .map(|(i, index)| {
            let rank = i + 1;
            let threshold = alpha / (m - rank + 1) as f64;
            let p_value = p_values[index];
            still_rejecting &= p_value < threshold;
            HolmStep {
                index,
                p_value,
                rank,
                threshold,
                rejected: still_rejecting,
            }
        })
        .collect();
    Ok(HolmDecision { alpha, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_rejected() {
        let d = holm_bonferroni(&[0.001, 0.01, 0.04], 0.05).unwrap();
        let thresholds: Vec<f64> = d.steps.iter().map(|s| s.threshold).collect();
        assert!((thresholds[0] - 0.05 / 3.0).abs() < 1e-15);
        assert_eq!(thresholds[1], 0.025);
        assert_eq!(thresholds[2], 0.05);
        assert_eq!(d.rejected(), vec![true, true, true]);
    }

    #[test]
    fn stops_at_first_failure() {
        let d = holm_bonferroni(&[0.02, 0.03, 0.9], 0.05).unwrap();
        assert_eq!(d.rejected(), vec![false, false, false]);
        // a later p that would pass its own threshold is still not rejected
        let d = holm_bonferroni(&[0.001, 0.03, 0.026], 0.05).unwrap();
        assert_eq!(d.rejected(), vec![true, false, false]);
    }

    #[test]
    fn threshold_is_strict() {
        let d = holm_bonferroni(&[0.025, 0.5], 0.05).unwrap();
        assert_eq!(d.rejected(), vec![false, false]);
    }

    #[test]
    fn original_order_restored() {
        let d = holm_bonferroni(&[0.5, 0.0001, 0.01], 0.05).unwrap();
        assert_eq!(d.steps[0].index, 1);
        assert_eq!(d.rejected(), vec![false, true, true]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(holm_bonferroni(&[1.5], 0.05).is_err());
        assert!(holm_bonferroni(&[f64::NAN], 0.05).is_err());
        assert!(holm_bonferroni(&[], 0.05).unwrap().steps.is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dominates_bonferroni_and_monotone_in_alpha(
                p in prop::collection::vec(0.0f64..=1.0, 1..15),
                a1 in 0.001f64..0.2,
                bump in 0.0f64..0.2,
            ) {
                let m = p.len() as f64;
                let d = holm_bonferroni(&p, a1).unwrap();
                let rej = d.rejected();
                for (i, &pi) in p.iter().enumerate() {
                    if pi < a1 / m {
                        prop_assert!(rej[i]);
                    }
                }
                let looser = holm_bonferroni(&p, a1 + bump).unwrap().rejected();
                for i in 0..p.len() {
                    prop_assert!(!rej[i] || looser[i]);
                }
                // once a step fails, none after it is rejected
                let flags: Vec<bool> = d.steps.iter().map(|s| s.rejected).collect();
                prop_assert!(flags.windows(2).all(|w| w[0] || !w[1]));
            }
        }
    }
}
