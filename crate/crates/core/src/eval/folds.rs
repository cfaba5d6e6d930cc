use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::cohort::{Cohort, DiagnosisLabel};
use crate::error::{Error, Result};
use crate::seed;

/// Patient-level fold assignment; every slide follows its patient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.folds.get(patient_id).copied()
    }

    /// Fold index of each slide in `cohort`, in cohort order.
    pub fn slide_folds(&self, cohort: &Cohort) -> Vec<(String, usize)> {
        cohort
            .slides
            .iter()
            .filter_map(|s| Some((s.slide_id.clone(), self.fold_of(&s.patient_id)?)))
            .collect()
    }
}

/// The label a patient is stratified under: its most frequent slide label,
/// ties to the smallest label.
pub fn patient_labels(cohort: &Cohort) -> BTreeMap<&str, &DiagnosisLabel> {
    let mut counts: BTreeMap<&str, BTreeMap<DiagnosisLabel, usize>> = BTreeMap::new();
    for s in &cohort.slides {
        *counts
            .entry(&s.patient_id)
            .or_default()
            .entry(s.label())
            .or_insert(0) += 1;
    }
    let labels: BTreeSet<&DiagnosisLabel> = cohort.labels.iter().collect();
    counts
        .into_iter()
        .map(|(p, c)| {
            let top = *c.values().max().unwrap();
            let label = c.into_iter().find(|(_, n)| *n == top).unwrap().0;
            let interned = *labels.get(&label).expect("cohort label set covers its slides");
            (p, interned)
        })
        .collect()
}

/// Greedy grouped stratification. Diagnoses are visited by descending
/// patient count; within a diagnosis patients are shuffled with a
/// seed-derived stream, then each goes to the fold with the fewest
/// patients of that diagnosis, ties to the fold with the fewest patients
/// overall, then the lowest index.
pub fn grouped_stratified_folds(cohort: &Cohort, k: usize, seed_: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::Config("number of folds must be at least 1".into()));
    }
    let by_patient = patient_labels(cohort);
    let mut by_label: BTreeMap<&DiagnosisLabel, Vec<&str>> = BTreeMap::new();
    for (p, l) in &by_patient {
        by_label.entry(l).or_default().push(p);
    }
    let mut labels: Vec<(&DiagnosisLabel, Vec<&str>)> = by_label.into_iter().collect();
    labels.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

    let mut totals = vec![0usize; k];
    let mut folds = BTreeMap::new();
    let mut warnings = Vec::new();
    for (i, (label, mut patients)) in labels.into_iter().enumerate() {
        if patients.len() < k {
            warnings.push(format!(
                "{label}: {} patients for {k} folds; some folds lack this diagnosis",
                patients.len()
            ));
        }
        patients.shuffle(&mut seed::rng(seed::derive(seed_, "folds", i as u64)));
        let mut per_fold = vec![0usize; k];
        for p in patients {
            let f = (0..k)
                .min_by_key(|&f| (per_fold[f], totals[f], f))
                .expect("k >= 1");
            per_fold[f] += 1;
            totals[f] += 1;
            folds.insert(p.to_owned(), f);
        }
    }
    Ok(FoldAssignment { k, folds, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{apply_exclusions, ExclusionParams, SlideRecord};
    use std::path::PathBuf;

    fn cohort(rows: &[(&str, &str, &str)]) -> Cohort {
        let slides: Vec<SlideRecord> = rows
            .iter()
            .map(|(s, p, d)| SlideRecord {
                slide_id: (*s).into(),
                patient_id: (*p).into(),
                organ: "Lung".into(),
                diagnosis: (*d).into(),
                patch_features: PathBuf::new(),
                slide_vectors: Default::default(),
            })
            .collect();
        apply_exclusions(&slides, ExclusionParams { min_patients: 1, min_diagnoses: 1 })
    }

    #[test]
    fn six_patients_two_per_fold() {
        let rows: Vec<(String, String)> = (0..6).map(|i| (format!("s{i}"), format!("p{i}"))).collect();
        let rows: Vec<_> = rows.iter().map(|(s, p)| (s.as_str(), p.as_str(), "A")).collect();
        let f = grouped_stratified_folds(&cohort(&rows), 3, 1).unwrap();
        let mut counts = [0; 3];
        for v in f.folds.values() {
            counts[*v] += 1;
        }
        assert_eq!(counts, [2, 2, 2]);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn slides_follow_patient() {
        let c = cohort(&[("a", "p1", "A"), ("b", "p1", "A"), ("c", "p1", "A"), ("d", "p2", "A"), ("e", "p3", "A")]);
        let f = grouped_stratified_folds(&c, 3, 2).unwrap();
        let sf = f.slide_folds(&c);
        assert_eq!(sf[0].1, sf[1].1);
        assert_eq!(sf[1].1, sf[2].1);
    }

    #[test]
    fn small_diagnosis_warns() {
        let c = cohort(&[("a", "p1", "A"), ("b", "p2", "A")]);
        let f = grouped_stratified_folds(&c, 3, 0).unwrap();
        assert_eq!(f.warnings.len(), 1);
        assert_eq!(f.folds.len(), 2);
    }

    #[test]
    fn four_diagnoses_seven_patients_balanced() {
        let mut rows = Vec::new();
        for d in ["A", "B", "C", "D"] {
            for p in 0..7 {
                rows.push((format!("{d}s{p}"), format!("{d}p{p}"), d));
            }
        }
        let rows: Vec<_> = rows.iter().map(|(s, p, d)| (s.as_str(), p.as_str(), *d)).collect();
        let c = cohort(&rows);
        for seed_ in 0..20 {
            let f = grouped_stratified_folds(&c, 3, seed_).unwrap();
            assert_eq!(f.folds.len(), 28);
            for d in ["A", "B", "C", "D"] {
                let mut per = [0usize; 3];
                for (p, fold) in &f.folds {
                    if p.starts_with(d) {
                        per[*fold] += 1;
                    }
                }
                assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1, "{per:?}");
            }
            let mut tot = [0usize; 3];
            f.folds.values().for_each(|&v| tot[v] += 1);
            assert!(tot.iter().max().unwrap() - tot.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let rows: Vec<(String, String)> = (0..30).map(|i| (format!("s{i}"), format!("p{i}"))).collect();
        let rows: Vec<_> = rows.iter().map(|(s, p)| (s.as_str(), p.as_str(), "A")).collect();
        let c = cohort(&rows);
        let a = grouped_stratified_folds(&c, 3, 5).unwrap();
        assert_eq!(a, grouped_stratified_folds(&c, 3, 5).unwrap());
        assert_ne!(a, grouped_stratified_folds(&c, 3, 6).unwrap());
    }
}
