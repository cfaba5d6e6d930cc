//! Ranked retrieval results and their CSV form.
//!
//! Rows are `query_slide,rank,neighbor_slide,distance` with an optional
//! trailing `model` column. Ranks are 1-based.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub slide_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query_slide_id: String,
    pub model: String,
    /// Ordered by (distance, slide_id) ascending.
    pub neighbors: Vec<Neighbor>,
    /// Fewer candidates than requested were available.
    pub shortfall: bool,
}

/// Total order used by every search: distance ascending, then slide id.
pub(crate) fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Keeps the `n` best of `scored` under [`rank_order`].
pub(crate) fn top_n(mut scored: Vec<(f64, String)>, n: usize) -> (Vec<(f64, String)>, bool) {
    let shortfall = scored.len() < n;
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, |a, b| rank_order((a.0, &a.1), (b.0, &b.1)));
        scored.truncate(n);
    }
    scored.sort_by(|a, b| rank_order((a.0, &a.1), (b.0, &b.1)));
    (scored, shortfall)
}

pub fn write_results<W: Write>(out: W, results: &[RetrievalResult], with_model: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::format("results csv", e.to_string());
    if with_model {
        w.write_record(["query_slide", "rank", "neighbor_slide", "distance", "model"])
    } else {
        w.write_record(["query_slide", "rank", "neighbor_slide", "distance"])
    }
    .map_err(err)?;
    for r in results {
        for (rank, nb) in r.neighbors.iter().enumerate() {
            let rank = (rank + 1).to_string();
            let dist = nb.distance.to_string();
            let mut rec = vec![r.query_slide_id.as_str(), &rank, &nb.slide_id, &dist];
            if with_model {
                rec.push(&r.model);
            }
            w.write_record(rec).map_err(err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::format("results csv", e.to_string()))
}

/// Parses a results CSV. Rows without a `model` column are attributed to
/// `default_model`. Queries come back in order of first appearance, with
/// neighbors ordered by rank; ranks must be contiguous from 1.
pub fn parse_results(text: &str, default_model: &str) -> Result<Vec<RetrievalResult>> {
    let bad = |msg: String| Error::format("results csv", msg);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let base = ["query_slide", "rank", "neighbor_slide", "distance"];
    let with_model = match headers.len() {
        4 => false,
        5 if headers.get(4) == Some("model") => true,
        _ => return Err(bad(format!("unexpected header {:?}", headers))),
    };
    if headers.iter().take(4).ne(base) {
        return Err(bad(format!("unexpected header {:?}", headers)));
    }

    let mut order: Vec<(String, String)> = Vec::new();
    let mut rows: BTreeMap<(String, String), Vec<(usize, Neighbor)>> = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != headers.len() {
            return Err(bad(format!("row has {} fields", row.len())));
        }
        let rank: usize = row[1]
            .parse()
            .map_err(|_| bad(format!("bad rank {:?}", &row[1])))?;
        let distance: f64 = row[3]
            .parse()
            .map_err(|_| bad(format!("bad distance {:?}", &row[3])))?;
        if !distance.is_finite() {
            return Err(bad("non-finite distance".into()));
        }
        let model = if with_model { row[4].to_owned() } else { default_model.to_owned() };
        let key = (model, row[0].to_owned());
        let entry = rows.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push((
            rank,
            Neighbor {
                slide_id: row[2].to_owned(),
                distance,
            },
        ));
    }

    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let mut nbs = rows.remove(&key).unwrap();
        nbs.sort_by_key(|(rank, _)| *rank);
        if nbs.iter().enumerate().any(|(i, (rank, _))| *rank != i + 1) {
            return Err(bad(format!("ranks for query {} are not 1..n", key.1)));
        }
        out.push(RetrievalResult {
            query_slide_id: key.1,
            model: key.0,
            neighbors: nbs.into_iter().map(|(_, n)| n).collect(),
            shortfall: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn round_trip_with_and_without_model() {
        let rs = vec![
            result("q1", "TITAN", &[("a", 0.0), ("b", 1.5)]),
            result("q2", "TITAN", &[("c", 0.1)]),
        ];
        for with_model in [true, false] {
            let mut buf = Vec::new();
            write_results(&mut buf, &rs, with_model).unwrap();
            let text = String::from_utf8(buf).unwrap();
            assert_eq!(parse_results(&text, "TITAN").unwrap(), rs);
        }
    }

    #[test]
    fn top_n_orders_ties_by_slide_id() {
        let scored = vec![(1.0, "c".to_owned()), (1.0, "a".to_owned()), (0.5, "z".into()), (3.0, "b".into())];
        let (top, short) = top_n(scored.clone(), 3);
        assert!(!short);
        let ids: Vec<_> = top.iter().map(|x| x.1.as_str()).collect();
        assert_eq!(ids, ["z", "a", "c"]);
        let (all, short) = top_n(scored, 9);
        assert!(short);
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn rejects_gaps_and_bad_headers() {
        assert!(parse_results("query_slide,rank,neighbor_slide,distance\nq,2,a,0\n", "m").is_err());
        assert!(parse_results("q,r,n,d\n", "m").is_err());
        assert!(parse_results("query_slide,rank,neighbor_slide,distance\nq,1,a,NaN\n", "m").is_err());
    }
}
