//! Synthetic cohorts with a tunable class separation.
//!
//! Every diagnosis gets one centroid; patch embeddings are the centroid
//! plus unit-variance Gaussian noise. Centroid coordinates are drawn with
//! sd `separation / sqrt(2d)`, so the expected distance between two class
//! centroids is about `separation` noise standard deviations.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{write_manifest, ManifestRow};
use crate::error::{Error, Result};
use crate::features::{self, FeatureBlock, PatchFeature};
use crate::seed;

/// Model name of the patch-mean slide vector.
pub const MEAN_MODEL: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub organs: usize,
    /// Diagnoses per organ.
    pub diagnoses: usize,
    /// Patients per diagnosis.
    pub patients: usize,
    /// Slides per patient.
    pub slides: usize,
    /// Patches per slide.
    pub patches: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            organs: 2,
            diagnoses: 3,
            patients: 8,
            slides: 1,
            patches: 64,
            dim: 32,
            separation: 4.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("organs", self.organs),
            ("diagnoses", self.diagnoses),
            ("patients", self.patients),
            ("slides", self.slides),
            ("patches", self.patches),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synthetic {name} must be at least 1")));
        }
        if self.dim < 2 {
            return Err(Error::Config("synthetic embedding dim must be at least 2".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn slide_count(&self) -> usize {
        self.organs * self.diagnoses * self.patients * self.slides
    }
}

/// Writes `manifest.csv`, `features/*.ssb` and `vectors/*.ssb` under
/// `out_dir` and returns the manifest path.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    let feat_dir = out_dir.join("features");
    let vec_dir = out_dir.join("vectors");
    for d in [out_dir, &feat_dir, &vec_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let side = (spec.patches as f64).sqrt().ceil() as usize;
    let centroid_sd = spec.separation / (2.0 * spec.dim as f64).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(spec.slide_count());

    for o in 0..spec.organs {
        for d in 0..spec.diagnoses {
            let label_index = (o * spec.diagnoses + d) as u64;
            let mut crng = seed::rng(seed::derive(spec.seed, "synth-centroid", label_index));
            let centroid: Vec<f64> = (0..spec.dim)
                .map(|_| centroid_sd * unit.sample(&mut crng))
                .collect();
            for p in 0..spec.patients {
                let patient_id = format!("P{o}-{d}-{p}");
                for s in 0..spec.slides {
                    let slide_id = format!("S{o}-{d}-{p}-{s}");
                    let mut rng = seed::rng(seed::derive_str(spec.seed, "synth-slide", &slide_id));
                    let patches: Vec<PatchFeature> = (0..spec.patches)
                        .map(|i| {
                            // stored as f32; keep the in-memory copy identical
                            let embedding: Vec<f64> = centroid
                                .iter()
                                .map(|c| (c + unit.sample(&mut rng)) as f32 as f64)
                                .collect();
                            PatchFeature {
                                coords: [(i % side) as f64, (i / side) as f64],
                                chromatic: Some([embedding[0], embedding[1], embedding.get(2).copied().unwrap_or(0.0)]),
                                embedding,
                            }
                        })
                        .collect();
                    let mut mean = vec![0.0; spec.dim];
                    for patch in &patches {
                        for (m, x) in mean.iter_mut().zip(&patch.embedding) {
                            *m += x;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= spec.patches as f64);

                    let feat_rel = format!("features/{slide_id}.ssb");
                    let vec_rel = format!("vectors/{slide_id}.{MEAN_MODEL}.ssb");
                    let block = FeatureBlock {
                        dim: spec.dim,
                        has_coords: true,
                        has_chromatic: true,
                        patches,
                    };
                    features::write(&out_dir.join(&feat_rel), &block)?;
                    features::write_slide_vector(&out_dir.join(&vec_rel), &mean)?;
                    rows.push(ManifestRow {
                        slide_id,
                        patient_id: patient_id.clone(),
                        organ: format!("Organ{o}"),
                        diagnosis: format!("Dx{d}"),
                        patch_features: feat_rel,
                        slide_vectors: vec![(MEAN_MODEL.to_owned(), vec_rel)],
                    });
                }
            }
        }
    }
    let manifest = out_dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}
