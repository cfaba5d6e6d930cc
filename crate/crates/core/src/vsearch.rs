//! Exact Euclidean search over slide-level vectors.
//!
//! Ranking uses squared distances; the square root is taken only for the
//! reported distance, so emitted values are true Euclidean distances.

use crate::error::{Error, Result};
use crate::results::{top_n, Neighbor, RetrievalResult};

/// One slide's vector for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideVector {
    pub slide_id: String,
    pub patient_id: String,
    pub organ: String,
    pub vector: Vec<f64>,
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

pub fn euclidean(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let d = squared_distance(u, v).sqrt();
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFinite("euclidean distance"))
    }
}

/// Scales `v` to unit L2 norm; zero vectors are left unchanged.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = squared_distance(v, &vec![0.0; v.len()]).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Exact top-`n` among same-organ pool entries from other patients.
pub fn knn_search(
    query: &SlideVector,
    pool: &[SlideVector],
    n: usize,
    model: &str,
) -> Result<RetrievalResult> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let dim = query.vector.len();
    if let Some(bad) = pool.iter().find(|p| p.vector.len() != dim) {
        return Err(Error::DimensionMismatch {
            slide_id: bad.slide_id.clone(),
            expected: dim,
            got: bad.vector.len(),
        });
    }
    let scored: Vec<(f64, String)> = pool
        .iter()
        .filter(|p| p.organ == query.organ && p.patient_id != query.patient_id)
        .map(|p| (squared_distance(&query.vector, &p.vector), p.slide_id.clone()))
        .collect();
    if scored.iter().any(|(d, _)| !d.is_finite()) {
        return Err(Error::NonFinite("euclidean distance"));
    }
    let (top, shortfall) = top_n(scored, n);
    Ok(RetrievalResult {
        query_slide_id: query.slide_id.clone(),
        model: model.to_owned(),
        neighbors: top
            .into_iter()
            .map(|(d2, slide_id)| Neighbor {
                slide_id,
                distance: d2.sqrt(),
            })
            .collect(),
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn sv(id: &str, patient: &str, organ: &str, v: Vec<f64>) -> SlideVector {
        SlideVector {
            slide_id: id.into(),
            patient_id: patient.into(),
            organ: organ.into(),
            vector: v,
        }
    }

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean(&[0.0], &[1.0, 2.0]).is_err());
        assert!(euclidean(&[f64::MAX], &[-f64::MAX]).is_err());
    }

    /// Double-double accumulation of the squared differences.
    fn euclidean_dd(u: &[f64], v: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for (a, b) in u.iter().zip(v) {
            // two-sum: a - b = d + err_d exactly
            let d = a - b;
            let bv = d - a;
            let err_d = (a - (d - bv)) + (-b - bv);
            let p = d * d;
            let p_err = d.mul_add(d, -p) + 2.0 * d * err_d;
            let s = hi + p;
            let bb = s - hi;
            let e = (hi - (s - bb)) + (p - bb);
            hi = s;
            lo += e + p_err;
        }
        (hi + lo).sqrt()
    }

    #[test]
    fn euclidean_matches_extended_precision() {
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let u: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
            let got = euclidean(&u, &v).unwrap();
            let want = euclidean_dd(&u, &v);
            assert!(((got - want) / want).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_under_other_patient_ranks_first() {
        let q = sv("q", "p0", "Lung", vec![1.0, 2.0, 3.0]);
        let pool = vec![sv("x", "p1", "Lung", vec![0.0, 0.0, 0.0]), sv("dup", "p2", "Lung", q.vector.clone())];
        let r = knn_search(&q, &pool, 1, "m").unwrap();
        assert_eq!(r.neighbors[0].slide_id, "dup");
        assert_eq!(r.neighbors[0].distance, 0.0);
    }

    #[test]
    fn line_positions() {
        let q = sv("q", "pq", "Lung", vec![0.0]);
        let pool: Vec<_> = [0.0, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| sv(&format!("s{x}"), if i == 0 { "pq" } else { "other" }, "Lung", vec![x]))
            .collect();
        let r = knn_search(&q, &pool, 3, "m").unwrap();
        let ids: Vec<_> = r.neighbors.iter().map(|n| n.slide_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s2", "s4"]);
    }

    #[test]
    fn excludes_other_organs_and_flags_shortfall() {
        let q = sv("q", "p0", "Lung", vec![0.0]);
        let pool = vec![sv("a", "p1", "Lung", vec![1.0]), sv("b", "p2", "Brain", vec![0.0])];
        let r = knn_search(&q, &pool, 2, "m").unwrap();
        assert_eq!(r.neighbors.len(), 1);
        assert!(r.shortfall);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = sv("q", "p0", "Lung", vec![0.0, 1.0]);
        let pool = vec![sv("a", "p1", "Lung", vec![1.0])];
        assert!(matches!(knn_search(&q, &pool, 1, "m"), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matches_full_sort_and_is_order_independent() {
        let mut rng = seed::rng(2);
        for _ in 0..30 {
            let d = rng.random_range(1..16);
            let mut pool: Vec<SlideVector> = (0..20)
                .map(|i| {
                    sv(
                        &format!("s{i:02}"),
                        &format!("p{}", i % 7),
                        if i % 4 == 0 { "Brain" } else { "Lung" },
                        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            pool[5].vector = pool[9].vector.clone();
            let q = sv("q", "p3", "Lung", (0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mut oracle: Vec<(f64, String)> = pool
                .iter()
                .filter(|p| p.organ == "Lung" && p.patient_id != "p3")
                .map(|p| {
                    let s: f64 = q.vector.iter().zip(&p.vector).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, p.slide_id.clone())
                })
                .collect();
            oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let r = knn_search(&q, &pool, 5, "m").unwrap();
            let ids: Vec<_> = r.neighbors.iter().map(|n| n.slide_id.clone()).collect();
            let want: Vec<_> = oracle.iter().take(5).map(|x| x.1.clone()).collect();
            assert_eq!(ids, want);
            pool.shuffle(&mut rng);
            assert_eq!(knn_search(&q, &pool, 5, "m").unwrap(), r);
        }
    }

    #[test]
    fn normalize_gives_unit_norm() {
        let mut v = vec![3.0, 4.0];
        l2_normalize(&mut v);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let mut z = vec![0.0; 3];
        l2_normalize(&mut z);
        assert_eq!(z, vec![0.0; 3]);
    }
}
