//! Two-component univariate Gaussian mixtures fitted by EM, and the point
//! where the two weighted densities are equal.

use rand::Rng;
use serde::Serialize;

use super::dist::normal_pdf;
use crate::error::{Error, Result};
use crate::seed;

pub const MAX_ITER: usize = 500;
pub const LL_TOLERANCE: f64 = 1e-8;
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl Component {
    pub fn weighted_density(&self, x: f64) -> f64 {
        self.weight * normal_pdf(x, self.mean, self.sd)
    }

    fn ln_weighted_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        self.weight.ln() - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    /// Ordered by ascending mean.
    pub components: [Component; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at every E-step.
    pub ll_trace: Vec<f64>,
}

fn ln_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs EM from `init` until the log-likelihood gain drops below
/// [`LL_TOLERANCE`] or [`MAX_ITER`] E-steps have run. Standard deviations
/// never go below `sd_floor`.
pub fn run_em(data: &[f64], init: [Component; 2], sd_floor: f64) -> GmmFit {
    let n = data.len() as f64;
    let mut comps = init;
    for c in comps.iter_mut() {
        c.sd = c.sd.max(sd_floor);
        c.weight = c.weight.max(MIN_WEIGHT);
    }
    let mut resp = vec![0.0; data.len()];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..MAX_ITER {
        // E-step: responsibility of component 0.
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(data) {
            let a = comps[0].ln_weighted_density(x);
            let b = comps[1].ln_weighted_density(x);
            let total = ln_sum_exp(a, b);
            ll += total;
            *r = (a - total).exp();
        }
        let gain = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if gain.is_some_and(|g| g < LL_TOLERANCE) {
            converged = true;
            break;
        }

        // M-step.
        let mut next = comps;
        for (k, c) in next.iter_mut().enumerate() {
            let w = |r: f64| if k == 0 { r } else { 1.0 - r };
            let nk: f64 = resp.iter().map(|&r| w(r)).sum();
            if nk <= MIN_WEIGHT * n {
                c.weight = MIN_WEIGHT;
                continue;
            }
            let mean = resp.iter().zip(data).map(|(&r, &x)| w(r) * x).sum::<f64>() / nk;
            let var = resp
                .iter()
                .zip(data)
                .map(|(&r, &x)| w(r) * (x - mean) * (x - mean))
                .sum::<f64>()
                / nk;
            c.weight = nk / n;
            c.mean = mean;
            c.sd = var.sqrt().max(sd_floor);
        }
        let total_w = next[0].weight + next[1].weight;
        next.iter_mut().for_each(|c| c.weight /= total_w);
        comps = next;
    }

    if comps[1].mean < comps[0].mean {
        comps.swap(0, 1);
    }
    GmmFit {
        components: comps,
        log_likelihood: *trace.last().expect("at least one E-step"),
        iterations: trace.len(),
        converged,
        ll_trace: trace,
    }
}

/// Initial parameters for each restart: the first uses the 25th and 75th
/// percentiles as means; the rest pick two distinct data points at random.
pub fn initializations(data: &[f64], n_init: usize, seed_: u64) -> Vec<[Component; 2]> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let make = |m0: f64, m1: f64| {
        [
            Component { weight: 0.5, mean: m0, sd },
            Component { weight: 0.5, mean: m1, sd },
        ]
    };
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut q1 = percentile(&sorted, 0.25);
    let mut q3 = percentile(&sorted, 0.75);
    if q1 == q3 {
        (q1, q3) = (lo, hi);
    }
    let mut inits = vec![make(q1, q3)];
    for r in 1..n_init.max(1) {
        let mut rng = seed::rng(seed::derive(seed_, "gmm-init", r as u64));
        let mut pair = (lo, hi);
        for _ in 0..16 {
            let a = data[rng.random_range(0..data.len())];
            let b = data[rng.random_range(0..data.len())];
            if a != b {
                pair = (a.min(b), a.max(b));
                break;
            }
        }
        inits.push(make(pair.0, pair.1));
    }
    inits
}

/// Fits a two-component mixture with `n_init` EM restarts and keeps the
/// highest final log-likelihood (earliest restart on ties).
pub fn fit_gmm_1d(data: &[f64], n_init: usize, seed_: u64) -> Result<GmmFit> {
    if data.len() < 4 {
        return Err(Error::Config(format!(
            "two-component GMM needs at least 4 values, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("GMM data"));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::DegenerateData);
    }
    let sd_floor = 1e-6 * (hi - lo);
    let mut best: Option<GmmFit> = None;
    for init in initializations(data, n_init, seed_) {
        let fit = run_em(data, init, sd_floor);
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one initialization"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionNote {
    /// No root between the means; the real root nearest the midpoint is used.
    OutsideMeans,
    /// The weighted densities never cross; the point of closest approach
    /// in log space is returned.
    NoRealRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmThreshold {
    pub components: [Component; 2],
    pub threshold: f64,
    pub note: Option<IntersectionNote>,
}

/// Solves `w1 N(x; m1, s1) = w2 N(x; m2, s2)`.
pub fn gmm_intersection(components: [Component; 2]) -> Result<GmmThreshold> {
    let [c1, c2] = components;
    if c1.mean == c2.mean {
        return Err(Error::IdenticalMeans);
    }
    let (v1, v2) = (c1.sd * c1.sd, c2.sd * c2.sd);
    // log-density difference f(x) = a x^2 + b x + c
    let a = 0.5 / v2 - 0.5 / v1;
    let b = c1.mean / v1 - c2.mean / v2;
    let c = 0.5 * c2.mean * c2.mean / v2 - 0.5 * c1.mean * c1.mean / v1
        + (c1.weight * c2.sd / (c2.weight * c1.sd)).ln();
    let f = |x: f64| c1.ln_weighted_density(x) - c2.ln_weighted_density(x);
    let df = |x: f64| -(x - c1.mean) / v1 + (x - c2.mean) / v2;

    let (lo, hi) = (c1.mean.min(c2.mean), c1.mean.max(c2.mean));
    let mid = 0.5 * (lo + hi);
    let scale = a.abs().max(b.abs() / (hi - lo).max(1.0));

    let roots: Vec<f64> = if a.abs() <= 1e-12 * scale {
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Ok(GmmThreshold {
                components,
                threshold: -b / (2.0 * a),
                note: Some(IntersectionNote::NoRealRoot),
            });
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let mut r = vec![q / a];
        if q != 0.0 {
            r.push(c / q);
        }
        r
    };

    let polish = |mut x: f64| {
        for _ in 0..8 {
            let step = f(x) / df(x);
            if !step.is_finite() {
                break;
            }
            let next = x - step;
            if f(next).abs() >= f(x).abs() {
                break;
            }
            x = next;
        }
        x
    };

    let between = roots
        .iter()
        .copied()
        .filter(|r| (lo..=hi).contains(r))
        .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()));
    let (root, note) = match between {
        Some(r) => (r, None),
        None => (
            roots
                .iter()
                .copied()
                .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()))
                .expect("at least one root"),
            Some(IntersectionNote::OutsideMeans),
        ),
    };
    Ok(GmmThreshold {
        components,
        threshold: polish(root),
        note,
    })
}
