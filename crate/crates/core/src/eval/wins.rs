use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinLevel {
    Organ,
    Diagnosis,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Rows are organs or diagnoses, columns are models. Each row awards a win
/// to every model tied at the row maximum after rounding to two decimals.
/// At diagnosis level, rows where every model scores 0 or every model
/// scores 1 award nothing. NaN marks a missing score and is ignored.
pub fn win_counts(scores: &[Vec<f64>], level: WinLevel) -> Vec<usize> {
    let n_models = scores.iter().map(Vec::len).max().unwrap_or(0);
    let mut wins = vec![0; n_models];
    for row in scores {
        let rounded: Vec<Option<f64>> = row
            .iter()
            .map(|&x| (!x.is_nan()).then(|| round2(x)))
            .collect();
        let present: Vec<f64> = rounded.iter().flatten().copied().collect();
        let Some(best) = present.iter().copied().reduce(f64::max) else {
            continue;
        };
        if level == WinLevel::Diagnosis
            && (present.iter().all(|&x| x == 0.0) || present.iter().all(|&x| x == 1.0))
        {
            continue;
        }
        for (w, r) in wins.iter_mut().zip(&rounded) {
            if *r == Some(best) {
                *w += 1;
            }
        }
    }
    wins
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn ties_awarded_to_all() {
        let m = vec![vec![0.9, 0.8], vec![0.7, 0.7]];
        assert_eq!(win_counts(&m, WinLevel::Organ), vec![2, 1]);
    }

    #[test]
    fn all_zero_or_all_one_rows_skipped_for_diagnoses() {
        let m = vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.2, 0.5, 0.5]];
        assert_eq!(win_counts(&m, WinLevel::Diagnosis), vec![0, 1, 1]);
        assert_eq!(win_counts(&m, WinLevel::Organ), vec![2, 3, 3]);
    }

    #[test]
    fn rounding_merges_near_ties() {
        let m = vec![vec![0.684, 0.6849, 0.674]];
        assert_eq!(win_counts(&m, WinLevel::Organ), vec![1, 1, 0]);
    }

    #[test]
    fn missing_scores_ignored() {
        let m = vec![vec![f64::NAN, 0.3], vec![f64::NAN, f64::NAN]];
        assert_eq!(win_counts(&m, WinLevel::Organ), vec![0, 1]);
    }

    #[test]
    fn matches_row_argmax_oracle() {
        let mut rng = seed::rng(21);
        for _ in 0..200 {
            // values on a 0.01 grid so rounding is the identity
            let m: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| f64::from(rng.random_range(0..=20u8)) / 20.0).collect())
                .collect();
            let mut want = vec![0; 3];
            for row in &m {
                let mut best_idx = vec![0];
                for j in 1..3 {
                    if row[j] > row[best_idx[0]] {
                        best_idx = vec![j];
                    } else if row[j] == row[best_idx[0]] {
                        best_idx.push(j);
                    }
                }
                for j in best_idx {
                    want[j] += 1;
                }
            }
            assert_eq!(win_counts(&m, WinLevel::Organ), want);
        }
    }
}
