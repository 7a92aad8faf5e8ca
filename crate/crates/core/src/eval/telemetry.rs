use std::io::Write;

use serde::Serialize;

use crate::geometry::Parametrization;
use crate::scene::GaussianSet;
use crate::{Error, Result};

pub const W_HISTOGRAM_BINS: usize = 64;

/// Log-spaced histogram of homogeneous weights with the mean decoded
/// distance of the Gaussians in each bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WHistogram {
    /// `W_HISTOGRAM_BINS + 1` edges spanning `[min w, max w]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_distance: Vec<Option<f64>>,
}

impl WHistogram {
    pub fn build(ws: &[f64], distances: &[f64]) -> Option<Self> {
        let (lo, hi) = ws
            .iter()
            .filter(|w| w.is_finite() && **w > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
        if !(lo <= hi) {
            return None;
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let span = lhi - llo;
        let edges = (0..=W_HISTOGRAM_BINS)
            .map(|k| (llo + span * k as f64 / W_HISTOGRAM_BINS as f64).exp())
            .collect();
        let mut counts = vec![0usize; W_HISTOGRAM_BINS];
        let mut sums = vec![0.0; W_HISTOGRAM_BINS];
        for (&w, &d) in ws.iter().zip(distances) {
            if !(w.is_finite() && w > 0.0 && d.is_finite()) {
                continue;
            }
            let bin = if span > 0.0 {
                (((w.ln() - llo) / span * W_HISTOGRAM_BINS as f64) as usize).min(W_HISTOGRAM_BINS - 1)
            } else {
                0
            };
            counts[bin] += 1;
            sums[bin] += d;
        }
        let mean_distance = counts
            .iter()
            .zip(&sums)
            .map(|(&c, &s)| (c > 0).then(|| s / c as f64))
            .collect();
        Some(Self {
            edges,
            counts,
            mean_distance,
        })
    }

    /// Geometric bin centers and mean distances of occupied bins.
    pub fn occupied(&self) -> Vec<(f64, f64)> {
        self.mean_distance
            .iter()
            .enumerate()
            .filter_map(|(k, d)| d.map(|d| ((self.edges[k] * self.edges[k + 1]).sqrt(), d)))
            .collect()
    }

    /// Rank correlation between bin weight and mean distance over occupied
    /// bins.
    pub fn spearman_w_vs_distance(&self) -> Option<f64> {
        let (w, d): (Vec<f64>, Vec<f64>) = self.occupied().into_iter().unzip();
        spearman(&w, &d)
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either input is constant or shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelemetrySnapshot {
    pub iteration: usize,
    pub count: usize,
    /// Mean decoded distance from the origin of the farthest 10% (at least
    /// one Gaussian).
    pub mean_dist_farthest_10pct: f64,
    /// Present for homogeneous sets only.
    pub w_histogram: Option<WHistogram>,
}

pub fn telemetry_snapshot(set: &GaussianSet, iteration: usize) -> TelemetrySnapshot {
    let mut dist = Vec::with_capacity(set.len());
    let mut ws = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let Ok(mu) = set.decode_mean(i) else { continue };
        dist.push(mu.norm());
        if set.parametrization == Parametrization::Homogeneous {
            ws.push(set.params.weights[i].exp());
        }
    }
    let mut sorted = dist.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = sorted.len().div_ceil(10);
    let mean_far = if top == 0 {
        0.0
    } else {
        sorted[..top].iter().sum::<f64>() / top as f64
    };
    let w_histogram = (set.parametrization == Parametrization::Homogeneous)
        .then(|| WHistogram::build(&ws, &dist))
        .flatten();
    TelemetrySnapshot {
        iteration,
        count: set.len(),
        mean_dist_farthest_10pct: mean_far,
        w_histogram,
    }
}

/// Rows `iter,bin,w_lo,w_hi,count,mean_distance` for every bin.
pub fn write_histogram_csv<W: Write>(out: W, snapshots: &[TelemetrySnapshot]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["iter", "bin", "w_lo", "w_hi", "count", "mean_distance"])?;
    for s in snapshots {
        let Some(h) = &s.w_histogram else { continue };
        for k in 0..h.counts.len() {
            wtr.write_record([
                s.iteration.to_string(),
                k.to_string(),
                h.edges[k].to_string(),
                h.edges[k + 1].to_string(),
                h.counts[k].to_string(),
                h.mean_distance[k].map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("histogram csv", e))
}
