use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, DiagnosisLabel};
use crate::error::{Error, Result};
use crate::results::RetrievalResult;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideInfo {
    pub patient_id: String,
    pub label: DiagnosisLabel,
}

pub type SlideTable = HashMap<String, SlideInfo>;

pub fn slide_table(cohort: &Cohort) -> SlideTable {
    cohort
        .slides
        .iter()
        .map(|s| {
            (
                s.slide_id.clone(),
                SlideInfo {
                    patient_id: s.patient_id.clone(),
                    label: s.label(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Slide id, or patient id after patient-level aggregation.
    pub query_slide_id: String,
    pub patient_id: String,
    pub true_label: DiagnosisLabel,
    pub predicted_label: DiagnosisLabel,
    pub n_used: usize,
    /// Distance to the rank-1 neighbor.
    pub top_distance: f64,
}

impl Prediction {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

/// Most frequent label among the first `n` neighbors. Ties go to the tied
/// label that appears nearest.
pub fn majority_vote(result: &RetrievalResult, slides: &SlideTable, n: usize) -> Result<Prediction> {
    if result.neighbors.is_empty() {
        return Err(Error::EmptyNeighbors(result.query_slide_id.clone()));
    }
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let query = slides
        .get(&result.query_slide_id)
        .ok_or_else(|| Error::UnknownSlide(result.query_slide_id.clone()))?;
    let used = &result.neighbors[..n.min(result.neighbors.len())];

    // label -> (count, first rank)
    let mut tally: BTreeMap<&DiagnosisLabel, (usize, usize)> = BTreeMap::new();
    for (rank, nb) in used.iter().enumerate() {
        let info = slides
            .get(&nb.slide_id)
            .ok_or_else(|| Error::UnknownSlide(nb.slide_id.clone()))?;
        let e = tally.entry(&info.label).or_insert((0, rank));
        e.0 += 1;
    }
    let (winner, _) = tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("non-empty neighbors");

    Ok(Prediction {
        query_slide_id: result.query_slide_id.clone(),
        patient_id: query.patient_id.clone(),
        true_label: query.label.clone(),
        predicted_label: winner.clone(),
        n_used: used.len(),
        top_distance: result.neighbors[0].distance,
    })
}

/// How slide predictions of one patient become one reported case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatientAggregation {
    /// Majority over the patient's slide predictions; ties go to the slide
    /// with the smallest rank-1 distance.
    #[default]
    Vote,
    /// The prediction of the slide with the smallest rank-1 distance.
    BestSlide,
    /// No aggregation.
    PerSlide,
}

impl FromStr for PatientAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(Self::Vote),
            "best-slide" => Ok(Self::BestSlide),
            "per-slide" => Ok(Self::PerSlide),
            other => Err(Error::Config(format!("unknown patient aggregation {other:?}"))),
        }
    }
}

impl fmt::Display for PatientAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vote => "vote",
            Self::BestSlide => "best-slide",
            Self::PerSlide => "per-slide",
        })
    }
}

/// Groups predictions by (patient, true label), in order of first
/// appearance, and reduces each group to one prediction keyed by patient.
pub fn aggregate_patients(preds: &[Prediction], mode: PatientAggregation) -> Vec<Prediction> {
    if mode == PatientAggregation::PerSlide {
        return preds.to_vec();
    }
    let mut order: Vec<(&str, &DiagnosisLabel)> = Vec::new();
    let mut groups: HashMap<(&str, &DiagnosisLabel), Vec<&Prediction>> = HashMap::new();
    for p in preds {
        let key = (p.patient_id.as_str(), &p.true_label);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(p);
    }

    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let best = |cands: &mut dyn Iterator<Item = &&Prediction>| -> Prediction {
                (*cands
                    .min_by(|a, b| a.top_distance.total_cmp(&b.top_distance))
                    .expect("non-empty group"))
                .clone()
            };
            let chosen = match mode {
                PatientAggregation::BestSlide => best(&mut group.iter()),
                _ => {
                    let mut counts: BTreeMap<&DiagnosisLabel, usize> = BTreeMap::new();
                    for p in group {
                        *counts.entry(&p.predicted_label).or_insert(0) += 1;
                    }
                    let top = *counts.values().max().unwrap();
                    best(&mut group.iter().filter(|p| counts[&p.predicted_label] == top))
                }
            };
            Prediction {
                query_slide_id: chosen.patient_id.clone(),
                n_used: chosen.n_used,
                ..chosen
            }
        })
        .collect()
}
