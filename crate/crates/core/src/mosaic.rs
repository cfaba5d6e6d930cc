//! Two-stage patch selection: chromatic k-means, then spatial k-means
//! within each chromatic cluster, keeping the patch nearest each spatial
//! centroid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PatchFeature;
use crate::kmeans::kmeans;
use crate::seed;

pub const DEFAULT_K_CHROMA: usize = 9;

/// Selected rows of one slide's patch block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mosaic {
    pub slide_id: String,
    /// Sorted, unique row indices.
    pub selected_indices: Vec<usize>,
    pub rate: f64,
}

/// Patches kept from a cluster of `m` at sampling `rate`:
/// `max(1, round(m * rate))`, never more than `m`.
pub fn selection_count(m: usize, rate: f64) -> usize {
    if m == 0 {
        return 0;
    }
    // f64::round is half-away-from-zero.
    ((m as f64 * rate).round() as usize).clamp(1, m)
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sampling rate {rate} outside (0, 1]")))
    }
}

/// Chromatic clustering. Uses each patch's chromatic descriptor, or the
/// first three embedding dimensions when the descriptor is absent.
pub fn chromatic_cluster(patches: &[PatchFeature], k: usize, seed: u64) -> Vec<usize> {
    if patches.is_empty() {
        return Vec::new();
    }
    let points: Vec<f64> = patches
        .iter()
        .flat_map(|p| p.chromatic_or_fallback())
        .collect();
    kmeans(&points, 3, k.max(1), &mut seed::rng(seed)).assignment
}

/// One spatial cluster inside a chromatic cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGroup {
    pub chromatic_cluster: usize,
    pub members: Vec<usize>,
    pub representative: usize,
}

fn nearest_to_centroid(patches: &[PatchFeature], members: &[usize]) -> usize {
    let m = members.len() as f64;
    let cx = members.iter().map(|&i| patches[i].coords[0]).sum::<f64>() / m;
    let cy = members.iter().map(|&i| patches[i].coords[1]).sum::<f64>() / m;
    let mut best = (usize::MAX, f64::INFINITY);
    for &i in members {
        let [x, y] = patches[i].coords;
        let d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if d < best.1 || (d == best.1 && i < best.0) {
            best = (i, d);
        }
    }
    best.0
}

/// Spatial grouping and representative choice for every chromatic cluster.
///
/// When spatial k-means yields fewer clusters than requested (duplicate
/// coordinates), the shortfall is topped up with the unselected members
/// farthest from any selected patch, so the per-cluster count is exact.
pub fn spatial_groups(
    patches: &[PatchFeature],
    assignment: &[usize],
    rate: f64,
    seed: u64,
) -> Result<Vec<SpatialGroup>> {
    check_rate(rate)?;
    if assignment.len() != patches.len() {
        return Err(Error::LengthMismatch {
            left: patches.len(),
            right: assignment.len(),
        });
    }
    let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut by_cluster = vec![Vec::new(); n_clusters];
    for (i, &c) in assignment.iter().enumerate() {
        by_cluster[c].push(i);
    }

    let mut groups = Vec::new();
    for (c, members) in by_cluster.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let want = selection_count(members.len(), rate);
        if want == members.len() {
            groups.extend(members.iter().map(|&i| SpatialGroup {
                chromatic_cluster: c,
                members: vec![i],
                representative: i,
            }));
            continue;
        }
        let coords: Vec<f64> = members.iter().flat_map(|&i| patches[i].coords).collect();
        let km = kmeans(
            &coords,
            2,
            want,
            &mut seed::rng(seed::derive(seed, "spatial", c as u64)),
        );
        let mut local = vec![Vec::new(); km.k()];
        for (&i, &a) in members.iter().zip(&km.assignment) {
            local[a].push(i);
        }
        let mut chosen = Vec::new();
        for g in local.into_iter().filter(|g| !g.is_empty()) {
            let rep = nearest_to_centroid(patches, &g);
            chosen.push(rep);
            groups.push(SpatialGroup {
                chromatic_cluster: c,
                members: g,
                representative: rep,
            });
        }
        while chosen.len() < want {
            let far = members
                .iter()
                .filter(|i| !chosen.contains(i))
                .map(|&i| {
                    let d = chosen
                        .iter()
                        .map(|&j| {
                            let [x0, y0] = patches[i].coords;
                            let [x1, y1] = patches[j].coords;
                            (x0 - x1).powi(2) + (y0 - y1).powi(2)
                        })
                        .fold(f64::INFINITY, f64::min);
                    (i, d)
                })
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                })
                .0;
            chosen.push(far);
            groups.push(SpatialGroup {
                chromatic_cluster: c,
                members: vec![far],
                representative: far,
            });
        }
    }
    Ok(groups)
}

pub fn spatial_sample(
    slide_id: &str,
    patches: &[PatchFeature],
    assignment: &[usize],
    rate: f64,
    seed: u64,
) -> Result<Mosaic> {
    let groups = spatial_groups(patches, assignment, rate, seed)?;
    let mut selected_indices: Vec<usize> = groups.iter().map(|g| g.representative).collect();
    selected_indices.sort_unstable();
    Ok(Mosaic {
        slide_id: slide_id.to_owned(),
        selected_indices,
        rate,
    })
}

/// Builds the mosaic for one slide. Chromatic and spatial stages draw from
/// independent streams derived from `seed`.
pub fn build_mosaic(
    slide_id: &str,
    patches: &[PatchFeature],
    rate: f64,
    k_chroma: usize,
    seed: u64,
) -> Result<Mosaic> {
    check_rate(rate)?;
    if patches.is_empty() {
        return Err(Error::EmptySlide(slide_id.to_owned()));
    }
    let assignment = chromatic_cluster(patches, k_chroma, seed::derive(seed, "chromatic", 0));
    spatial_sample(slide_id, patches, &assignment, rate, seed::derive(seed, "spatial", 0))
}

/// Writes `slide_id,row_index` rows.
pub fn write_mosaic(path: &Path, mosaic: &Mosaic) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["slide_id", "row_index"]).map_err(err)?;
    for i in &mosaic.selected_indices {
        w.write_record([mosaic.slide_id.as_str(), &i.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a mosaic CSV. The rate is not stored in the file and is
/// reported as `rate`.
pub fn parse_mosaic(text: &str, rate: f64) -> Result<Mosaic> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| Error::format("mosaic file", e.to_string()))?;
    if headers.iter().ne(["slide_id", "row_index"]) {
        return Err(Error::format("mosaic file", "expected header slide_id,row_index"));
    }
    let mut slide_id: Option<String> = None;
    let mut selected_indices = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::format("mosaic file", e.to_string()))?;
        if row.len() != 2 {
            return Err(Error::format("mosaic file", "expected 2 fields"));
        }
        match &slide_id {
            None => slide_id = Some(row[0].to_owned()),
            Some(s) if s != &row[0] => {
                return Err(Error::format("mosaic file", "mixed slide ids"));
            }
            _ => {}
        }
        let idx: usize = row[1]
            .parse()
            .map_err(|_| Error::format("mosaic file", format!("bad row index {:?}", &row[1])))?;
        selected_indices.push(idx);
    }
    let before = selected_indices.len();
    selected_indices.sort_unstable();
    selected_indices.dedup();
    if selected_indices.len() != before {
        return Err(Error::format("mosaic file", "duplicate row index"));
    }
    Ok(Mosaic {
        slide_id: slide_id.unwrap_or_default(),
        selected_indices,
        rate,
    })
}

pub fn read_mosaic(path: &Path, rate: f64) -> Result<Mosaic> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mosaic(&text, rate)
}
