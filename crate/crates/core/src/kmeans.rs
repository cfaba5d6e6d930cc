//! Lloyd k-means with k-means++ seeding over small dense point sets.

use rand::Rng;

pub const MAX_ITER: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster id per point, contiguous from 0.
    pub assignment: Vec<usize>,
    /// Row-major centroids, `k_effective x dim`.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_trace: Vec<f64>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim.max(1)
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// D²-weighted seeding. Stops early when every remaining point coincides
/// with a chosen centre, so duplicates never yield empty clusters.
fn seed_centroids<R: Rng>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / dim;
    let first = rng.random_range(0..n);
    let mut centroids = points[first * dim..(first + 1) * dim].to_vec();
    let mut d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| sq_dist(p, &centroids))
        .collect();
    while centroids.len() / dim < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        let c = &points[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(c);
        for (w, p) in d2.iter_mut().zip(points.chunks_exact(dim)) {
            *w = w.min(sq_dist(p, c));
        }
    }
    centroids
}

/// Clusters `points` (row-major, `dim` columns) into at most `k` groups.
///
/// Empty clusters are dropped rather than re-seeded, and the returned ids are
/// renumbered to stay contiguous. Ties in assignment go to the lowest
/// centroid index.
pub fn kmeans<R: Rng>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> KMeans {
    assert!(dim > 0 && points.len() % dim == 0, "ragged point matrix");
    let n = points.len() / dim;
    assert!(n > 0 && k > 0, "kmeans needs at least one point and one cluster");

    let mut centroids = seed_centroids(points, dim, k.min(n), rng);
    let mut assignment = vec![0usize; n];
    let mut wcss_trace = Vec::new();

    for _ in 0..MAX_ITER {
        let mut wcss = 0.0;
        for (a, p) in assignment.iter_mut().zip(points.chunks_exact(dim)) {
            let (c, d) = nearest(p, &centroids, dim);
            *a = c;
            wcss += d;
        }
        wcss_trace.push(wcss);

        let k_cur = centroids.len() / dim;
        let mut sums = vec![0.0; k_cur * dim];
        let mut counts = vec![0usize; k_cur];
        for (&a, p) in assignment.iter().zip(points.chunks_exact(dim)) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }

        let mut next = Vec::with_capacity(centroids.len());
        let mut remap = vec![usize::MAX; k_cur];
        let mut shift: f64 = 0.0;
        for c in 0..k_cur {
            if counts[c] == 0 {
                continue;
            }
            remap[c] = next.len() / dim;
            let old = &centroids[c * dim..(c + 1) * dim];
            let new: Vec<f64> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|s| s / counts[c] as f64)
                .collect();
            shift = shift.max(sq_dist(old, &new).sqrt());
            next.extend(new);
        }
        for a in assignment.iter_mut() {
            *a = remap[*a];
        }
        let dropped = next.len() != centroids.len();
        centroids = next;
        if shift < TOLERANCE && !dropped {
            break;
        }
    }

    // Final assignment against the final centroids keeps the two consistent.
    let mut wcss = 0.0;
    for (a, p) in assignment.iter_mut().zip(points.chunks_exact(dim)) {
        let (c, d) = nearest(p, &centroids, dim);
        *a = c;
        wcss += d;
    }
    wcss_trace.push(wcss);
    compact(&mut assignment, &mut centroids, dim);

    KMeans {
        assignment,
        centroids,
        dim,
        wcss_trace,
    }
}

fn compact(assignment: &mut [usize], centroids: &mut Vec<f64>, dim: usize) {
    let k = centroids.len() / dim;
    let mut used = vec![false; k];
    for &a in assignment.iter() {
        used[a] = true;
    }
    if used.iter().all(|&u| u) {
        return;
    }
    let mut remap = vec![usize::MAX; k];
    let mut kept = Vec::new();
    for c in 0..k {
        if used[c] {
            remap[c] = kept.len() / dim;
            kept.extend_from_slice(&centroids[c * dim..(c + 1) * dim]);
        }
    }
    for a in assignment.iter_mut() {
        *a = remap[*a];
    }
    *centroids = kept;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn single_point() {
        let km = kmeans(&[1.0, 2.0, 3.0], 3, 9, &mut seed::rng(1));
        assert_eq!(km.assignment, vec![0]);
        assert_eq!(km.k(), 1);
    }

    #[test]
    fn identical_points_collapse_to_one_cluster() {
        let pts = vec![0.5; 30];
        for k in [1, 2, 9] {
            let km = kmeans(&pts, 3, k, &mut seed::rng(3));
            assert!(km.assignment.iter().all(|&a| a == 0));
            assert_eq!(km.k(), 1);
        }
    }

    #[test]
    fn fewer_distinct_points_than_k_each_get_own_cluster() {
        let pts = [0.0, 0.0, 5.0, 5.0, 10.0, 0.0];
        let km = kmeans(&pts, 2, 9, &mut seed::rng(4));
        let mut a = km.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 3);
    }

    /// Exhaustive optimal 2-partition by within-cluster sum of squares.
    fn best_two_partition(pts: &[[f64; 3]]) -> Vec<bool> {
        let n = pts.len();
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let members: Vec<&[f64; 3]> = (0..n)
                    .filter(|&i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| &pts[i])
                    .collect();
                let mut c = [0.0; 3];
                for m in &members {
                    for j in 0..3 {
                        c[j] += m[j] / members.len() as f64;
                    }
                }
                cost += members.iter().map(|m| sq_dist(*m, &c)).sum::<f64>();
            }
            if cost < best.0 {
                best = (cost, mask);
            }
        }
        (0..n).map(|i| (best.1 >> i) & 1 == 1).collect()
    }

    #[test]
    fn two_blobs_match_exhaustive_partition() {
        let mut rng = seed::rng(11);
        for _ in 0..20 {
            let n = rng.random_range(4..=12);
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let base = if i % 2 == 0 { 0.0 } else { 20.0 };
                    [
                        base + rng.random::<f64>(),
                        base + rng.random::<f64>(),
                        rng.random::<f64>(),
                    ]
                })
                .collect();
            let flat: Vec<f64> = pts.iter().flatten().copied().collect();
            let km = kmeans(&flat, 3, 2, &mut seed::rng(rng.random()));
            let oracle = best_two_partition(&pts);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(
                        km.assignment[i] == km.assignment[j],
                        oracle[i] == oracle[j]
                    );
                }
            }
        }
    }

    #[test]
    fn wcss_is_non_increasing() {
        let mut rng = seed::rng(5);
        for _ in 0..50 {
            let n = rng.random_range(5..200);
            let pts: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 10.0).collect();
            let km = kmeans(&pts, 2, rng.random_range(1..12), &mut seed::rng(rng.random()));
            for w in km.wcss_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", km.wcss_trace);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = seed::rng(6);
        let pts: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let a = kmeans(&pts, 3, 7, &mut seed::rng(42));
        let b = kmeans(&pts, 3, 7, &mut seed::rng(42));
        assert_eq!(a, b);
    }
}
