//! Evaluation tables and their CSV/JSON emitters.
//!
//! All tables are long-format rows keyed by model and top-n, except
//! `wins.csv`, which has one column per model.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, DiagnosisLabel};
use crate::error::{Error, Result};
use crate::eval::vote::slide_table;
use crate::eval::{
    aggregate_patients, majority_vote, misclassification_profile, organ_macro_f1, organ_summary,
    per_diagnosis_f1, win_counts, PatientAggregation, Prediction, WinLevel,
};
use crate::results::RetrievalResult;
use crate::seed;
use crate::stats::{fit_gmm_1d, gmm_intersection, holm_bonferroni, paired_t_test};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub n_values: Vec<usize>,
    pub patient_agg: PatientAggregation,
    pub confidence: f64,
    /// Inclusive case-count range for the misclassification analysis.
    pub misclass_range: [usize; 2],
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_values: vec![1, 3],
            patient_agg: PatientAggregation::Vote,
            confidence: 0.95,
            misclass_range: [5, 7],
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config("n values must be non-empty and at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence {} outside (0, 1)", self.confidence)));
        }
        if self.misclass_range[0] > self.misclass_range[1] {
            return Err(Error::Config("misclassification range is empty".into()));
        }
        Ok(())
    }

    pub fn max_n(&self) -> usize {
        self.n_values.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub model: String,
    pub n: usize,
    pub organ: String,
    pub diagnosis: String,
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganRow {
    pub model: String,
    pub n: usize,
    pub organ: String,
    pub macro_f1: f64,
    pub labels: usize,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub n: usize,
    pub organs: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisclassRow {
    pub model: String,
    pub n: usize,
    pub organ: String,
    pub diagnosis: String,
    pub support: usize,
    pub predicted_diagnosis: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinRow {
    pub level: WinLevel,
    pub n: usize,
    pub wins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedQuery {
    pub model: String,
    pub slide_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub options: EvalOptions,
    pub models: Vec<String>,
    pub per_diagnosis: Vec<DiagnosisRow>,
    pub per_organ: Vec<OrganRow>,
    pub summary: Vec<SummaryRow>,
    pub wins: Vec<WinRow>,
    pub misclassification: Vec<MisclassRow>,
    pub skipped: Vec<SkippedQuery>,
}

/// Case counts per label under the chosen aggregation.
fn case_supports(cohort: &Cohort, agg: PatientAggregation) -> BTreeMap<DiagnosisLabel, usize> {
    if agg == PatientAggregation::PerSlide {
        let mut m = BTreeMap::new();
        for s in &cohort.slides {
            *m.entry(s.label()).or_insert(0) += 1;
        }
        m
    } else {
        cohort.label_patients.clone()
    }
}

/// Votes, aggregates and scores every model's results. `results` keeps the
/// caller's model order, which is also the column order of the win table.
pub fn evaluate(
    cohort: &Cohort,
    results: &[(String, Vec<RetrievalResult>)],
    options: &EvalOptions,
) -> Result<Evaluation> {
    options.validate()?;
    let slides = slide_table(cohort);
    let models: Vec<String> = results.iter().map(|(m, _)| m.clone()).collect();
    let organs: Vec<&str> = cohort.organs().collect();

    let mut skipped = Vec::new();
    let mut per_diagnosis = Vec::new();
    let mut per_organ = Vec::new();
    let mut summary = Vec::new();
    let mut wins = Vec::new();
    let mut misclassification = Vec::new();
    let supports = case_supports(cohort, options.patient_agg);
    let [lo, hi] = options.misclass_range;

    for (model, res) in results {
        for r in res.iter().filter(|r| r.neighbors.is_empty()) {
            skipped.push(SkippedQuery {
                model: model.clone(),
                slide_id: r.query_slide_id.clone(),
                reason: "no eligible candidates".into(),
            });
        }
    }

    for &n in &options.n_values {
        let mut preds_by_model: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
        let mut organ_scores: Vec<Vec<f64>> = vec![vec![f64::NAN; models.len()]; organs.len()];
        let mut label_scores: BTreeMap<DiagnosisLabel, Vec<f64>> = BTreeMap::new();
        for (mi, (model, res)) in results.iter().enumerate() {
            let slide_preds = res
                .iter()
                .filter(|r| !r.neighbors.is_empty())
                .map(|r| majority_vote(r, &slides, n))
                .collect::<Result<Vec<_>>>()?;
            let preds = aggregate_patients(&slide_preds, options.patient_agg);
            let mut macros = Vec::new();
            for (oi, organ) in organs.iter().enumerate() {
                let scores = per_diagnosis_f1(&preds, organ);
                for s in &scores {
                    per_diagnosis.push(DiagnosisRow {
                        model: model.clone(),
                        n,
                        organ: s.label.organ.clone(),
                        diagnosis: s.label.diagnosis.clone(),
                        support: s.support,
                        true_positives: s.true_positives,
                        false_positives: s.false_positives,
                        false_negatives: s.false_negatives,
                        precision: s.precision,
                        recall: s.recall,
                        f1: s.f1,
                    });
                    if s.support > 0 {
                        label_scores
                            .entry(s.label.clone())
                            .or_insert_with(|| vec![f64::NAN; models.len()])[mi] = s.f1;
                    }
                }
                if let Some(m) = organ_macro_f1(&scores) {
                    per_organ.push(OrganRow {
                        model: model.clone(),
                        n,
                        organ: (*organ).to_owned(),
                        macro_f1: m,
                        labels: scores.iter().filter(|s| s.support > 0).count(),
                        cases: scores.iter().map(|s| s.support).sum(),
                    });
                    organ_scores[oi][mi] = m;
                    macros.push(m);
                }
            }
            if !macros.is_empty() {
                let s = organ_summary(&macros, options.confidence)?;
                summary.push(SummaryRow {
                    model: model.clone(),
                    n,
                    organs: s.n,
                    mean: s.mean,
                    sd: s.sd,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                });
            }
            preds_by_model.insert(model.clone(), preds);
        }
        wins.push(WinRow {
            level: WinLevel::Organ,
            n,
            wins: win_counts(&organ_scores, WinLevel::Organ),
        });
        let label_rows: Vec<Vec<f64>> = label_scores.into_values().collect();
        let mut dx_wins = win_counts(&label_rows, WinLevel::Diagnosis);
        dx_wins.resize(models.len(), 0);
        wins.push(WinRow {
            level: WinLevel::Diagnosis,
            n,
            wins: dx_wins,
        });

        let profile = misclassification_profile(&preds_by_model, &supports, lo..=hi);
        for model in &models {
            for (label, per_model) in &profile {
                for (pred, count) in per_model.get(model).into_iter().flatten() {
                    misclassification.push(MisclassRow {
                        model: model.clone(),
                        n,
                        organ: label.organ.clone(),
                        diagnosis: label.diagnosis.clone(),
                        support: supports[label],
                        predicted_diagnosis: pred.diagnosis.clone(),
                        count: *count,
                    });
                }
            }
        }
    }

    Ok(Evaluation {
        options: options.clone(),
        models,
        per_diagnosis,
        per_organ,
        summary,
        wins,
        misclassification,
        skipped,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Like [`write_csv`] but writes the header even when there are no rows.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
        return w.flush().map_err(|e| Error::io(path, e));
    }
    write_csv(path, rows)
}

fn parse_csv<T: DeserializeOwned>(text: &str, what: &'static str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::format(what, e.to_string())))
        .collect()
}

pub fn parse_organ_rows(text: &str) -> Result<Vec<OrganRow>> {
    let rows: Vec<OrganRow> = parse_csv(text, "per-organ table")?;
    if rows.iter().any(|r| !r.macro_f1.is_finite()) {
        return Err(Error::NonFinite("per-organ table"));
    }
    Ok(rows)
}

pub fn parse_diagnosis_rows(text: &str) -> Result<Vec<DiagnosisRow>> {
    let rows: Vec<DiagnosisRow> = parse_csv(text, "per-diagnosis table")?;
    if rows.iter().any(|r| !r.f1.is_finite()) {
        return Err(Error::NonFinite("per-diagnosis table"));
    }
    Ok(rows)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_wins(path: &Path, models: &[String], rows: &[WinRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let err = |e: csv::Error| Error::io(path, e.into());
    let mut header = vec!["level".to_owned(), "n".to_owned()];
    header.extend(models.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let level = match r.level {
            WinLevel::Organ => "organ",
            WinLevel::Diagnosis => "diagnosis",
        };
        let mut rec = vec![level.to_owned(), r.n.to_string()];
        rec.extend(r.wins.iter().map(usize::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the five evaluation tables into `dir`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("per_diagnosis.csv"), &eval.per_diagnosis)?;
    write_csv(&dir.join("per_organ.csv"), &eval.per_organ)?;
    write_csv(&dir.join("summary.csv"), &eval.summary)?;
    write_wins(&dir.join("wins.csv"), &eval.models, &eval.wins)?;
    write_csv_with_header(
        &dir.join("misclassification.csv"),
        &["model", "n", "organ", "diagnosis", "support", "predicted_diagnosis", "count"],
        &eval.misclassification,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestRow {
    pub n: usize,
    pub baseline: String,
    pub model: String,
    pub pairs: usize,
    pub t_stat: Option<f64>,
    pub df: Option<usize>,
    pub p_value: Option<f64>,
    pub rank: Option<usize>,
    pub threshold: Option<f64>,
    pub rejected: bool,
    pub status: String,
}

/// Paired t-tests of every model against `baseline` over shared organs,
/// Holm-corrected per top-n across the comparisons that produced a p-value.
pub fn paired_ttests(rows: &[OrganRow], baseline: &str, alpha: f64) -> Result<Vec<TTestRow>> {
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    if !models.contains(&baseline) {
        return Err(Error::Config(format!("baseline model {baseline:?} not among {models:?}")));
    }
    let ns: BTreeSet<usize> = rows.iter().map(|r| r.n).collect();
    let mut out = Vec::new();
    for n in ns {
        let scores = |model: &str| -> BTreeMap<&str, f64> {
            rows.iter()
                .filter(|r| r.n == n && r.model == model)
                .map(|r| (r.organ.as_str(), r.macro_f1))
                .collect()
        };
        let base = scores(baseline);
        let mut block = Vec::new();
        for &model in models.iter().filter(|&&m| m != baseline) {
            let other = scores(model);
            let (a, b): (Vec<f64>, Vec<f64>) = base
                .iter()
                .filter_map(|(o, x)| Some((*x, *other.get(o)?)))
                .unzip();
            let mut row = TTestRow {
                n,
                baseline: baseline.to_owned(),
                model: model.to_owned(),
                pairs: a.len(),
                t_stat: None,
                df: None,
                p_value: None,
                rank: None,
                threshold: None,
                rejected: false,
                status: "ok".into(),
            };
            match paired_t_test(&a, &b) {
                Ok(t) => {
                    row.t_stat = Some(t.t_stat);
                    row.df = Some(t.df);
                    row.p_value = Some(t.p_value);
                }
                Err(Error::DegenerateDifferences) => row.status = "degenerate differences".into(),
                Err(Error::Config(_)) => row.status = "too few pairs".into(),
                Err(e) => return Err(e),
            }
            block.push(row);
        }
        let tested: Vec<usize> = (0..block.len()).filter(|&i| block[i].p_value.is_some()).collect();
        let p: Vec<f64> = tested.iter().map(|&i| block[i].p_value.unwrap()).collect();
        for step in holm_bonferroni(&p, alpha)?.steps {
            let row = &mut block[tested[step.index]];
            row.rank = Some(step.rank);
            row.threshold = Some(step.threshold);
            row.rejected = step.rejected;
        }
        out.extend(block);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub model: String,
    pub n: usize,
    /// `case_count` (x) or `f1` (y).
    pub axis: &'static str,
    pub threshold: Option<f64>,
    pub weight1: Option<f64>,
    pub mean1: Option<f64>,
    pub sd1: Option<f64>,
    pub weight2: Option<f64>,
    pub mean2: Option<f64>,
    pub sd2: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub n_init: usize,
    pub seed: u64,
    /// Fit case counts on a log scale; the threshold is mapped back.
    pub log_x: bool,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            seed: 0,
            log_x: false,
        }
    }
}

/// Case-count (x) and F1 (y) cut-offs per model and top-n from the
/// per-diagnosis scatter.
pub fn gmm_thresholds(rows: &[DiagnosisRow], opts: GmmOptions) -> Vec<ThresholdRow> {
    let mut groups: Vec<((String, usize), Vec<&DiagnosisRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.support > 0) {
        let key = (r.model.clone(), r.n);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = Vec::new();
    for ((model, n), members) in groups {
        let xs: Vec<f64> = members
            .iter()
            .map(|r| {
                let x = r.support as f64;
                if opts.log_x {
                    x.ln()
                } else {
                    x
                }
            })
            .collect();
        let ys: Vec<f64> = members.iter().map(|r| r.f1).collect();
        for (axis, data) in [("case_count", xs), ("f1", ys)] {
            let seed_ = seed::derive_str(opts.seed, "gmm", &format!("{model}/{n}/{axis}"));
            let mut row = ThresholdRow {
                model: model.clone(),
                n,
                axis,
                threshold: None,
                weight1: None,
                mean1: None,
                sd1: None,
                weight2: None,
                mean2: None,
                sd2: None,
                note: String::new(),
            };
            match fit_gmm_1d(&data, opts.n_init, seed_).and_then(|f| gmm_intersection(f.components)) {
                Ok(t) => {
                    let [c1, c2] = t.components;
                    let back = |v: f64| if opts.log_x && axis == "case_count" { v.exp() } else { v };
                    row.threshold = Some(back(t.threshold));
                    (row.weight1, row.mean1, row.sd1) = (Some(c1.weight), Some(c1.mean), Some(c1.sd));
                    (row.weight2, row.mean2, row.sd2) = (Some(c2.weight), Some(c2.mean), Some(c2.sd));
                    row.note = match t.note {
                        None => String::new(),
                        Some(crate::stats::gmm::IntersectionNote::OutsideMeans) => "outside_means".into(),
                        Some(crate::stats::gmm::IntersectionNote::NoRealRoot) => "no_real_root".into(),
                    };
                }
                Err(e) => row.note = e.to_string(),
            }
            out.push(row);
        }
    }
    out
}

pub fn write_ttests(path: &Path, rows: &[TTestRow]) -> Result<()> {
    write_csv_with_header(
        path,
        &[
            "n", "baseline", "model", "pairs", "t_stat", "df", "p_value", "rank", "threshold",
            "rejected", "status",
        ],
        rows,
    )
}

pub fn write_thresholds(path: &Path, rows: &[ThresholdRow]) -> Result<()> {
    write_csv_with_header(
        path,
        &[
            "model", "n", "axis", "threshold", "weight1", "mean1", "sd1", "weight2", "mean2", "sd2",
            "note",
        ],
        rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CohortRow<'a> {
    slide_id: &'a str,
    patient_id: &'a str,
    organ: &'a str,
    diagnosis: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedRow {
    pub slide_id: String,
    pub organ: String,
    pub diagnosis: String,
    pub reason: String,
}

/// Writes `cohort.csv` (kept slides) and `excluded.csv` (dropped slides with
/// reasons, plus any `extra` exclusions from later stages).
pub fn write_cohort_tables(dir: &Path, cohort: &Cohort, extra: &[ExcludedRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kept: Vec<CohortRow> = cohort
        .slides
        .iter()
        .map(|s| CohortRow {
            slide_id: &s.slide_id,
            patient_id: &s.patient_id,
            organ: &s.organ,
            diagnosis: &s.diagnosis,
        })
        .collect();
    write_csv_with_header(
        &dir.join("cohort.csv"),
        &["slide_id", "patient_id", "organ", "diagnosis"],
        &kept,
    )?;
    let mut excluded: Vec<ExcludedRow> = cohort
        .excluded
        .iter()
        .map(|x| ExcludedRow {
            slide_id: x.slide_id.clone(),
            organ: x.label.organ.clone(),
            diagnosis: x.label.diagnosis.clone(),
            reason: x.reason.to_string(),
        })
        .collect();
    excluded.extend_from_slice(extra);
    write_csv_with_header(
        &dir.join("excluded.csv"),
        &["slide_id", "organ", "diagnosis", "reason"],
        &excluded,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{apply_exclusions, ExclusionParams, SlideRecord};
    use crate::results::Neighbor;

    fn slide(id: &str, patient: &str, organ: &str, dx: &str) -> SlideRecord {
        SlideRecord {
            slide_id: id.into(),
            patient_id: patient.into(),
            organ: organ.into(),
            diagnosis: dx.into(),
            patch_features: Default::default(),
            slide_vectors: Default::default(),
        }
    }

    fn result(q: &str, model: &str, nbs: &[(&str, f64)]) -> RetrievalResult {
        RetrievalResult {
            query_slide_id: q.into(),
            model: model.into(),
            neighbors: nbs
                .iter()
                .map(|(s, d)| Neighbor {
                    slide_id: (*s).into(),
                    distance: *d,
                })
                .collect(),
            shortfall: false,
        }
    }

    fn tiny_cohort() -> Cohort {
        let slides = vec![
            slide("a1", "p1", "Lung", "A"),
            slide("a2", "p2", "Lung", "A"),
            slide("b1", "p3", "Lung", "B"),
            slide("b2", "p4", "Lung", "B"),
        ];
        apply_exclusions(&slides, ExclusionParams { min_patients: 1, min_diagnoses: 1 })
    }

    #[test]
    fn hand_computed_tables() {
        let cohort = tiny_cohort();
        // perfect model and one that predicts B for everyone
        let good = vec![
            result("a1", "good", &[("a2", 1.0)]),
            result("a2", "good", &[("a1", 1.0)]),
            result("b1", "good", &[("b2", 1.0)]),
            result("b2", "good", &[("b1", 1.0)]),
        ];
        let bad = vec![
            result("a1", "bad", &[("b1", 1.0)]),
            result("a2", "bad", &[("b1", 1.0)]),
            result("b1", "bad", &[("b2", 1.0)]),
            result("b2", "bad", &[("b1", 1.0)]),
        ];
        let opts = EvalOptions {
            n_values: vec![1],
            misclass_range: [2, 2],
            ..Default::default()
        };
        let eval = evaluate(&cohort, &[("good".into(), good), ("bad".into(), bad)], &opts).unwrap();
        let organ: Vec<f64> = eval.per_organ.iter().map(|r| r.macro_f1).collect();
        // bad: F1(A) = 0, F1(B) = 2 * 0.5 * 1 / 1.5 = 2/3
        assert_eq!(organ[0], 1.0);
        assert!((organ[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(eval.wins[0].wins, vec![1, 0]);
        // diagnosis rows: A [1, 0] -> good; B [1, 0.67] -> good
        assert_eq!(eval.wins[1].wins, vec![2, 0]);
        assert_eq!(eval.misclassification.len(), 1);
        assert_eq!(eval.misclassification[0].count, 2);
        assert_eq!(eval.misclassification[0].predicted_diagnosis, "B");
        assert_eq!(eval.summary[0].organs, 1);
    }

    #[test]
    fn empty_neighbor_lists_are_reported() {
        let cohort = tiny_cohort();
        let res = vec![result("a1", "m", &[]), result("a2", "m", &[("a1", 0.5)])];
        let eval = evaluate(&cohort, &[("m".into(), res)], &EvalOptions::default()).unwrap();
        assert_eq!(eval.skipped.len(), 1);
        assert_eq!(eval.skipped[0].slide_id, "a1");
    }

    #[test]
    fn ttests_follow_holm() {
        let mut rows = Vec::new();
        let organs = ["o1", "o2", "o3", "o4", "o5"];
        for (i, o) in organs.iter().enumerate() {
            let base = 0.5 + 0.05 * i as f64;
            for (model, f) in [("base", base), ("worse", base - 0.2 - 0.01 * (i % 2) as f64), ("same", base)] {
                rows.push(OrganRow {
                    model: model.into(),
                    n: 1,
                    organ: (*o).into(),
                    macro_f1: f,
                    labels: 2,
                    cases: 10,
                });
            }
        }
        let t = paired_ttests(&rows, "base", 0.05).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].rejected);
        assert_eq!(t[0].rank, Some(1));
        assert_eq!(t[0].threshold, Some(0.05));
        assert_eq!(t[1].status, "degenerate differences");
        assert!(paired_ttests(&rows, "missing", 0.05).unwrap_err().is_config());
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![OrganRow {
            model: "m".into(),
            n: 3,
            organ: "Lung".into(),
            macro_f1: 0.25,
            labels: 2,
            cases: 9,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        write_csv(&p, &rows).unwrap();
        assert_eq!(parse_organ_rows(&read_text(&p).unwrap()).unwrap(), rows);
        assert!(parse_organ_rows("model,n\nx,1\n").is_err());
    }

    #[test]
    fn thresholds_on_bimodal_scatter() {
        let mut rows = Vec::new();
        for i in 0..40 {
            let (support, f1) = if i < 20 { (5 + i % 3, 0.1 + 0.01 * (i % 5) as f64) } else { (60 + i % 7, 0.9 - 0.01 * (i % 4) as f64) };
            rows.push(DiagnosisRow {
                model: "m".into(),
                n: 1,
                organ: "O".into(),
                diagnosis: format!("d{i}"),
                support,
                true_positives: 0,
                false_positives: 0,
                false_negatives: 0,
                precision: 0.0,
                recall: 0.0,
                f1,
            });
        }
        let t = gmm_thresholds(&rows, GmmOptions::default());
        assert_eq!(t.len(), 2);
        let x = t[0].threshold.unwrap();
        let y = t[1].threshold.unwrap();
        assert!(x > 8.0 && x < 60.0, "{x}");
        assert!(y > 0.15 && y < 0.87, "{y}");
        assert_eq!(t, gmm_thresholds(&rows, GmmOptions::default()));
    }
}
