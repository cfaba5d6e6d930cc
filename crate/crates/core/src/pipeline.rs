//! End-to-end benchmark run.
//!
//! Stages write their outputs under `out_dir` so an interrupted run can be
//! resumed: `mosaics/<model>/<slide>.csv`, `index/<model>.bob`,
//! `results/<model>.csv`, then the report tables at the top level.
//!
//! Every random draw is seeded from `seed` through [`seed::derive_str`]
//! with the tag `"mosaic"` and the slide id, or `"gmm"` and the
//! model/top-n/axis triple; fold assignment uses tag `"folds"`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barcode::{BarcodeIndex, Bob, BobQuery, IndexEntry};
use crate::cohort::{apply_exclusions, load_manifest, Cohort, ExclusionParams};
use crate::error::{Error, Result};
use crate::eval::{grouped_stratified_folds, PatientAggregation};
use crate::features::{self, FeatureBlock};
use crate::mosaic::{build_mosaic, read_mosaic, write_mosaic, Mosaic, DEFAULT_K_CHROMA};
use crate::report::{
    self, evaluate, gmm_thresholds, paired_ttests, EvalOptions, Evaluation, ExcludedRow, GmmOptions,
    TTestRow, ThresholdRow,
};
use crate::results::{write_results, RetrievalResult};
use crate::seed;
use crate::vsearch::{knn_search, l2_normalize, SlideVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Slide-vector models, as named in the manifest.
    pub vector_models: Vec<String>,
    /// Mosaic sampling rates; one barcode model per rate.
    pub barcode_rates: Vec<f64>,
    pub k_chroma: usize,
    pub n_values: Vec<usize>,
    pub seed: u64,
    pub min_patients: usize,
    pub min_diagnoses: usize,
    pub patient_agg: PatientAggregation,
    /// L2-normalize slide vectors before ranking.
    pub normalize_vectors: bool,
    /// Divide Hamming distances by the barcode length.
    pub normalize_hamming: bool,
    pub alpha: f64,
    /// Reference model for the t-tests; defaults to the first model.
    pub baseline: Option<String>,
    pub confidence: f64,
    pub folds: usize,
    pub gmm_n_init: usize,
    pub log_x: bool,
    /// Reuse stage outputs already on disk.
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            out_dir: PathBuf::from("report"),
            vector_models: Vec::new(),
            barcode_rates: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            k_chroma: DEFAULT_K_CHROMA,
            n_values: vec![1, 3],
            seed: 0,
            min_patients: ExclusionParams::default().min_patients,
            min_diagnoses: ExclusionParams::default().min_diagnoses,
            patient_agg: PatientAggregation::Vote,
            normalize_vectors: false,
            normalize_hamming: false,
            alpha: 0.05,
            baseline: None,
            confidence: 0.95,
            folds: 3,
            gmm_n_init: 10,
            log_x: false,
            resume: false,
        }
    }
}

/// Name of the barcode model at `rate`, e.g. `bob-0.05`.
pub fn barcode_model(rate: f64) -> String {
    format!("bob-{rate}")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector_models.is_empty() && self.barcode_rates.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        if let Some(r) = self
            .barcode_rates
            .iter()
            .find(|r| !(r.is_finite() && **r > 0.0 && **r <= 1.0))
        {
            return Err(Error::Config(format!("sampling rate {r} outside (0, 1]")));
        }
        let names = self.models();
        for (i, m) in names.iter().enumerate() {
            if names[..i].contains(m) {
                return Err(Error::Config(format!("model {m:?} listed twice")));
            }
        }
        if let Some(b) = &self.baseline {
            if !names.contains(b) {
                return Err(Error::Config(format!("baseline {b:?} is not a configured model")));
            }
        }
        if self.k_chroma == 0 {
            return Err(Error::Config("k_chroma must be at least 1".into()));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.gmm_n_init == 0 {
            return Err(Error::Config("gmm_n_init must be at least 1".into()));
        }
        self.eval_options().validate()
    }

    /// Model names in report order: vector models, then barcode rates.
    pub fn models(&self) -> Vec<String> {
        self.vector_models
            .iter()
            .cloned()
            .chain(self.barcode_rates.iter().map(|&r| barcode_model(r)))
            .collect()
    }

    pub fn exclusion(&self) -> ExclusionParams {
        ExclusionParams {
            min_patients: self.min_patients,
            min_diagnoses: self.min_diagnoses,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            n_values: self.n_values.clone(),
            patient_agg: self.patient_agg,
            confidence: self.confidence,
            ..EvalOptions::default()
        }
    }
}

/// Neighbors that break leave-one-patient-out or organ scoping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LopoCheck {
    pub queries: usize,
    pub neighbors: usize,
    pub same_patient: usize,
    pub cross_organ: usize,
}

pub fn lopo_check(cohort: &Cohort, results: &[RetrievalResult]) -> Result<LopoCheck> {
    let by_id: HashMap<&str, (&str, &str)> = cohort
        .slides
        .iter()
        .map(|s| (s.slide_id.as_str(), (s.patient_id.as_str(), s.organ.as_str())))
        .collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSlide(id.to_owned()))
    };
    let mut c = LopoCheck::default();
    for r in results {
        let (qp, qo) = lookup(&r.query_slide_id)?;
        c.queries += 1;
        for nb in &r.neighbors {
            let (p, o) = lookup(&nb.slide_id)?;
            c.neighbors += 1;
            c.same_patient += usize::from(p == qp);
            c.cross_organ += usize::from(o != qo);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortCounts {
    pub slides: usize,
    pub patients: usize,
    pub organs: usize,
    pub labels: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub cohort: CohortCounts,
    pub fold_warnings: Vec<String>,
    pub lopo: BTreeMap<String, LopoCheck>,
    pub evaluation: Evaluation,
    pub ttests: Vec<TTestRow>,
    pub thresholds: Vec<ThresholdRow>,
}

fn stage<T>(r: Result<T>, name: &'static str, slide: Option<&str>) -> Result<T> {
    r.map_err(|e| e.in_stage(name, slide))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_results_file(path: &Path, results: &[RetrievalResult]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(BufWriter::new(f), results, true)
}

fn load_blocks(cohort: &Cohort) -> Result<Vec<FeatureBlock>> {
    cohort
        .slides
        .par_iter()
        .map(|s| stage(features::read(&s.patch_features), "features", Some(&s.slide_id)))
        .collect()
}

fn mosaics_for_rate(
    cohort: &Cohort,
    blocks: &[FeatureBlock],
    cfg: &RunConfig,
    rate: f64,
    dir: &Path,
) -> Result<Vec<Mosaic>> {
    create_dir(dir)?;
    cohort
        .slides
        .par_iter()
        .zip(blocks)
        .map(|(s, block)| {
            let path = dir.join(format!("{}.csv", s.slide_id));
            let m = if cfg.resume && path.exists() {
                read_mosaic(&path, rate).and_then(|m| {
                    if m.slide_id != s.slide_id || m.selected_indices.iter().any(|&i| i >= block.len()) {
                        Err(Error::format("mosaic file", "does not match its slide"))
                    } else {
                        Ok(m)
                    }
                })
            } else {
                let seed_ = seed::derive_str(cfg.seed, "mosaic", &s.slide_id);
                build_mosaic(&s.slide_id, &block.patches, rate, cfg.k_chroma, seed_)
                    .and_then(|m| write_mosaic(&path, &m).map(|()| m))
            };
            stage(m, "mosaic", Some(&s.slide_id))
        })
        .collect()
}

fn build_index(cohort: &Cohort, blocks: &[FeatureBlock], mosaics: &[Mosaic]) -> Result<BarcodeIndex> {
    let entries = cohort
        .slides
        .par_iter()
        .zip(blocks)
        .zip(mosaics)
        .map(|((s, block), m)| {
            let bob = Bob::from_embeddings(
                s.slide_id.as_str(),
                m.selected_indices
                    .iter()
                    .map(|&i| block.patches[i].embedding.as_slice()),
            );
            let bob = stage(bob, "barcode", Some(&s.slide_id))?;
            Ok(IndexEntry {
                patient_id: s.patient_id.clone(),
                label: s.label(),
                bob,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    stage(BarcodeIndex::build(entries), "index", None)
}

fn barcode_results(
    index: &BarcodeIndex,
    model: &str,
    n: usize,
    normalize: bool,
) -> Result<Vec<RetrievalResult>> {
    index
        .entries()
        .par_iter()
        .map(|e| {
            let q = BobQuery {
                patient_id: &e.patient_id,
                organ: &e.label.organ,
                bob: &e.bob,
            };
            stage(index.search(q, n, model, normalize), "search", Some(e.slide_id()))
        })
        .collect()
}

fn vector_results(cohort: &Cohort, model: &str, n: usize, normalize: bool) -> Result<Vec<RetrievalResult>> {
    let pool = cohort
        .slides
        .par_iter()
        .map(|s| {
            let path = s.slide_vectors.get(model).ok_or_else(|| {
                Error::format("manifest", format!("no slide vector for model {model:?}"))
            });
            let mut vector = stage(path.and_then(|p| features::read_slide_vector(p)), "vectors", Some(&s.slide_id))?;
            if normalize {
                l2_normalize(&mut vector);
            }
            Ok(SlideVector {
                slide_id: s.slide_id.clone(),
                patient_id: s.patient_id.clone(),
                organ: s.organ.clone(),
                vector,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pool.par_iter()
        .map(|q| stage(knn_search(q, &pool, n, model), "vsearch", Some(&q.slide_id)))
        .collect()
}

/// Runs every stage and writes the report bundle into `cfg.out_dir`.
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    create_dir(out)?;

    let slides = stage(load_manifest(&cfg.manifest), "cohort", None)?;
    let cohort = apply_exclusions(&slides, cfg.exclusion());
    if cohort.slides.is_empty() {
        return Err(Error::Config("no slides survive the exclusion criteria".into()).in_stage("cohort", None));
    }
    let folds = stage(grouped_stratified_folds(&cohort, cfg.folds, seed::derive(cfg.seed, "folds", 0)), "folds", None)?;
    report::write_csv(
        &out.join("folds.csv"),
        &folds
            .slide_folds(&cohort)
            .into_iter()
            .map(|(slide_id, fold)| {
                let patient_id = cohort.slide(&slide_id).map(|s| s.patient_id.clone()).unwrap_or_default();
                (slide_id, patient_id, fold)
            })
            .collect::<Vec<_>>(),
    )?;

    let max_n = cfg.eval_options().max_n();
    let mut all: Vec<(String, Vec<RetrievalResult>)> = Vec::new();
    let results_dir = out.join("results");
    create_dir(&results_dir)?;

    for model in &cfg.vector_models {
        let res = vector_results(&cohort, model, max_n, cfg.normalize_vectors)?;
        write_results_file(&results_dir.join(format!("{model}.csv")), &res)?;
        all.push((model.clone(), res));
    }

    if !cfg.barcode_rates.is_empty() {
        let blocks = load_blocks(&cohort)?;
        let index_dir = out.join("index");
        create_dir(&index_dir)?;
        for &rate in &cfg.barcode_rates {
            let model = barcode_model(rate);
            let index_path = index_dir.join(format!("{model}.bob"));
            let index = if cfg.resume && index_path.exists() {
                stage(BarcodeIndex::read(&index_path), "index", None)?
            } else {
                let mosaics = mosaics_for_rate(&cohort, &blocks, cfg, rate, &out.join("mosaics").join(&model))?;
                let index = build_index(&cohort, &blocks, &mosaics)?;
                stage(index.write(&index_path), "index", None)?;
                index
            };
            let res = barcode_results(&index, &model, max_n, cfg.normalize_hamming)?;
            write_results_file(&results_dir.join(format!("{model}.csv")), &res)?;
            all.push((model, res));
        }
    }

    let mut lopo = BTreeMap::new();
    for (model, res) in &all {
        lopo.insert(model.clone(), stage(lopo_check(&cohort, res), "lopo", None)?);
    }

    let evaluation = stage(evaluate(&cohort, &all, &cfg.eval_options()), "evaluate", None)?;
    report::write_evaluation(out, &evaluation)?;
    let extra: Vec<ExcludedRow> = evaluation
        .skipped
        .iter()
        .filter_map(|q| {
            let s = cohort.slide(&q.slide_id)?;
            Some(ExcludedRow {
                slide_id: q.slide_id.clone(),
                organ: s.organ.clone(),
                diagnosis: s.diagnosis.clone(),
                reason: format!("{}: {}", q.model, q.reason),
            })
        })
        .collect();
    report::write_cohort_tables(out, &cohort, &extra)?;

    let models = cfg.models();
    let baseline = cfg.baseline.clone().unwrap_or_else(|| models[0].clone());
    let ttests = if models.len() > 1 && !evaluation.per_organ.is_empty() {
        stage(paired_ttests(&evaluation.per_organ, &baseline, cfg.alpha), "stats", None)?
    } else {
        Vec::new()
    };
    report::write_ttests(&out.join("ttests.csv"), &ttests)?;
    let gmm = GmmOptions {
        n_init: cfg.gmm_n_init,
        seed: cfg.seed,
        log_x: cfg.log_x,
    };
    let thresholds = gmm_thresholds(&evaluation.per_diagnosis, gmm);
    report::write_thresholds(&out.join("thresholds.csv"), &thresholds)?;

    let patients: std::collections::BTreeSet<&str> = cohort.slides.iter().map(|s| s.patient_id.as_str()).collect();
    let run = RunReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        seeds: BTreeMap::from([
            ("master".to_owned(), cfg.seed),
            ("folds".to_owned(), seed::derive(cfg.seed, "folds", 0)),
        ]),
        cohort: CohortCounts {
            slides: cohort.slides.len(),
            patients: patients.len(),
            organs: cohort.organ_labels.len(),
            labels: cohort.labels.len(),
            excluded: cohort.excluded.len(),
        },
        fold_warnings: folds.warnings.clone(),
        lopo,
        evaluation,
        ttests,
        thresholds,
    };
    write_json(&out.join("report.json"), &run)?;
    Ok(run)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("report", e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
