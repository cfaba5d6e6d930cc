//! Slide manifest ingestion and cohort exclusion rules.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = [
    "slide_id",
    "patient_id",
    "organ",
    "diagnosis",
    "patch_features",
    "slide_vectors",
];

/// An organ-scoped diagnosis. "Adenocarcinoma" in lung and in colon are
/// different labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiagnosisLabel {
    pub organ: String,
    pub diagnosis: String,
}

impl DiagnosisLabel {
    pub fn new(organ: impl Into<String>, diagnosis: impl Into<String>) -> Self {
        Self {
            organ: organ.into(),
            diagnosis: diagnosis.into(),
        }
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.organ, self.diagnosis)
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRecord {
    pub slide_id: String,
    pub patient_id: String,
    pub organ: String,
    pub diagnosis: String,
    /// Feature file path, resolved against the manifest directory.
    pub patch_features: PathBuf,
    /// Slide-level vector files keyed by model name, resolved likewise.
    pub slide_vectors: BTreeMap<String, PathBuf>,
}

impl SlideRecord {
    pub fn label(&self) -> DiagnosisLabel {
        DiagnosisLabel::new(self.organ.clone(), self.diagnosis.clone())
    }
}

/// Parses manifest text. Relative paths are resolved against `base_dir`.
/// Referenced files are not checked here; see [`load_manifest`].
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<SlideRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| Error::Manifest {
        line: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Manifest {
            line: 1,
            msg: format!("expected header {:?}, found {:?}", MANIFEST_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Manifest {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Manifest { line, msg };
        if row.len() != MANIFEST_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                MANIFEST_HEADER.len(),
                row.len()
            )));
        }
        for (i, name) in MANIFEST_HEADER[..5].iter().enumerate() {
            if row[i].is_empty() {
                return Err(bad(format!("empty {name}")));
            }
        }
        let slide_id = row[0].to_owned();
        if !seen.insert(slide_id.clone()) {
            return Err(Error::DuplicateSlide { line, slide_id });
        }
        let mut slide_vectors = BTreeMap::new();
        for pair in row[5].split(';').filter(|s| !s.is_empty()) {
            let (model, path) = pair
                .split_once('=')
                .filter(|(m, p)| !m.is_empty() && !p.is_empty())
                .ok_or_else(|| bad(format!("slide_vectors entry {pair:?} is not model=path")))?;
            if slide_vectors
                .insert(model.to_owned(), base_dir.join(path))
                .is_some()
            {
                return Err(bad(format!("model {model:?} listed twice")));
            }
        }
        out.push(SlideRecord {
            slide_id,
            patient_id: row[1].to_owned(),
            organ: row[2].to_owned(),
            diagnosis: row[3].to_owned(),
            patch_features: base_dir.join(&row[4]),
            slide_vectors,
        });
    }
    Ok(out)
}

/// Reads a manifest file, preserving row order, and checks that every
/// referenced feature file exists.
pub fn load_manifest(path: &Path) -> Result<Vec<SlideRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let slides = parse_manifest(&text, base)?;
    for s in &slides {
        let refs = std::iter::once(&s.patch_features).chain(s.slide_vectors.values());
        for p in refs {
            if !p.is_file() {
                return Err(Error::DanglingReference {
                    slide_id: s.slide_id.clone(),
                    path: p.clone(),
                });
            }
        }
    }
    Ok(slides)
}

/// One manifest row as raw strings, for writing.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub slide_id: String,
    pub patient_id: String,
    pub organ: String,
    pub diagnosis: String,
    pub patch_features: String,
    pub slide_vectors: Vec<(String, String)>,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for r in rows {
        let vectors = r
            .slide_vectors
            .iter()
            .map(|(m, p)| format!("{m}={p}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            &r.slide_id,
            &r.patient_id,
            &r.organ,
            &r.diagnosis,
            &r.patch_features,
            &vectors,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionParams {
    pub min_patients: usize,
    pub min_diagnoses: usize,
}

impl Default for ExclusionParams {
    fn default() -> Self {
        Self {
            min_patients: 4,
            min_diagnoses: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    TooFewPatients { patients: usize, min: usize },
    TooFewDiagnoses { diagnoses: usize, min: usize },
    /// Set by later stages, e.g. a query with no eligible candidates.
    Other { detail: String },
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewPatients { patients, min } => {
                write!(f, "diagnosis has {patients} unique patients (< {min})")
            }
            Self::TooFewDiagnoses { diagnoses, min } => {
                write!(f, "organ has {diagnoses} eligible diagnoses (< {min})")
            }
            Self::Other { detail } => f.write_str(detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub slide_id: String,
    pub label: DiagnosisLabel,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

/// The evaluable cohort after exclusion rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub slides: Vec<SlideRecord>,
    pub labels: BTreeSet<DiagnosisLabel>,
    pub label_patients: BTreeMap<DiagnosisLabel, usize>,
    pub organ_labels: BTreeMap<String, usize>,
    pub excluded: Vec<Exclusion>,
}

impl Cohort {
    pub fn organs(&self) -> impl Iterator<Item = &str> {
        self.organ_labels.keys().map(String::as_str)
    }

    pub fn slide(&self, slide_id: &str) -> Option<&SlideRecord> {
        self.slides.iter().find(|s| s.slide_id == slide_id)
    }

    pub fn label_map(&self) -> BTreeMap<String, DiagnosisLabel> {
        self.slides
            .iter()
            .map(|s| (s.slide_id.clone(), s.label()))
            .collect()
    }

    fn from_slides(slides: Vec<SlideRecord>, excluded: Vec<Exclusion>) -> Self {
        let label_patients = unique_patients(&slides)
            .into_iter()
            .map(|(l, p)| (l, p.len()))
            .collect::<BTreeMap<_, _>>();
        let labels: BTreeSet<_> = label_patients.keys().cloned().collect();
        let mut organ_labels = BTreeMap::new();
        for l in &labels {
            *organ_labels.entry(l.organ.clone()).or_insert(0) += 1;
        }
        Self {
            slides,
            labels,
            label_patients,
            organ_labels,
            excluded,
        }
    }
}

fn unique_patients(slides: &[SlideRecord]) -> BTreeMap<DiagnosisLabel, BTreeSet<&str>> {
    let mut m: BTreeMap<DiagnosisLabel, BTreeSet<&str>> = BTreeMap::new();
    for s in slides {
        m.entry(s.label()).or_default().insert(&s.patient_id);
    }
    m
}

/// Drops diagnoses with too few unique patients, then organs left with too
/// few diagnoses. Both passes run once, in that order.
pub fn apply_exclusions(slides: &[SlideRecord], params: ExclusionParams) -> Cohort {
    let patients = unique_patients(slides);
    let mut excluded = Vec::new();

    let mut surviving_labels: BTreeMap<&str, usize> = BTreeMap::new();
    for (label, p) in &patients {
        if p.len() >= params.min_patients {
            *surviving_labels.entry(label.organ.as_str()).or_insert(0) += 1;
        }
    }

    let mut kept = Vec::new();
    for s in slides {
        let label = s.label();
        let n_patients = patients[&label].len();
        let reason = if n_patients < params.min_patients {
            Some(ExclusionReason::TooFewPatients {
                patients: n_patients,
                min: params.min_patients,
            })
        } else {
            let n_diag = surviving_labels.get(s.organ.as_str()).copied().unwrap_or(0);
            (n_diag < params.min_diagnoses).then_some(ExclusionReason::TooFewDiagnoses {
                diagnoses: n_diag,
                min: params.min_diagnoses,
            })
        };
        match reason {
            Some(reason) => excluded.push(Exclusion {
                slide_id: s.slide_id.clone(),
                label,
                reason,
            }),
            None => kept.push(s.clone()),
        }
    }
    Cohort::from_slides(kept, excluded)
}
