use serde::Serialize;

use super::dist::student_t_two_sided_p;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTestResult {
    pub t_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub n_pairs: usize,
}

/// Two-sided paired t-test on `a - b`, paired by index.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("paired t-test input"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // Differences equal up to rounding noise count as zero variance.
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sd <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateDifferences);
    }
    let t_stat = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(PairedTestResult {
        t_stat,
        df,
        p_value: student_t_two_sided_p(t_stat, df as f64),
        n_pairs: n,
    })
}
