use log::warn;

use crate::image::DepthMap;
use crate::{Error, Result};

/// Indices of the training and held-out views.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Every eighth view (starting with the first) is held out.
pub fn split_train_test(view_count: usize) -> Split {
    if view_count < 8 {
        warn!("only {view_count} views; the test split holds a single view");
    }
    let (test, train) = (0..view_count).partition(|i| i % 8 == 0);
    Split { train, test }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMask {
    pub width: usize,
    pub height: usize,
    pub threshold: f64,
    pub far: Vec<bool>,
}

impl DepthMask {
    pub fn near(&self) -> Vec<bool> {
        self.far.iter().map(|f| !f).collect()
    }

    pub fn far_count(&self) -> usize {
        self.far.iter().filter(|&&f| f).count()
    }
}

/// Linear-interpolation quantile of sorted values, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Marks pixels at or beyond the `percentile` quantile of all finite depths
/// pooled across `maps`. Non-finite depths are never far.
pub fn compute_far_masks(maps: &[&DepthMap], percentile: f64) -> Result<Vec<DepthMask>> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie in [0, 100], got {percentile}"
        )));
    }
    let mut pooled = Vec::new();
    for (k, m) in maps.iter().enumerate() {
        let before = pooled.len();
        pooled.extend(m.data.iter().copied().filter(|d| d.is_finite()));
        if pooled.len() == before {
            return Err(Error::InvalidArgument(format!("depth map {k} has no finite depth")));
        }
    }
    if pooled.is_empty() {
        return Ok(Vec::new());
    }
    pooled.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&pooled, percentile / 100.0);
    Ok(maps
        .iter()
        .map(|m| DepthMask {
            width: m.width,
            height: m.height,
            threshold,
            far: m.data.iter().map(|&d| d.is_finite() && d >= threshold).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_eighth_view_is_held_out() {
        let s = split_train_test(16);
        assert_eq!(s.test, vec![0, 8]);
        assert_eq!(s.train.len(), 14);
        assert!(!s.train.contains(&0) && !s.train.contains(&8));
        let s = split_train_test(1);
        assert_eq!(s.test, vec![0]);
        assert!(s.train.is_empty());
        assert_eq!(split_train_test(24).test.len(), 3);
    }

    fn ramp(w: usize, h: usize) -> DepthMap {
        let n = w * h;
        DepthMap::from_data(w, h, (0..n).map(|i| i as f64 / (n - 1) as f64).collect()).unwrap()
    }

    #[test]
    fn constant_map_is_all_far() {
        let m = DepthMap::from_data(4, 4, vec![3.0; 16]).unwrap();
        let masks = compute_far_masks(&[&m], 95.0).unwrap();
        assert_eq!(masks[0].far_count(), 16);
        assert_eq!(masks[0].threshold, 3.0);
    }

    #[test]
    fn ramp_marks_top_five_percent() {
        let m = ramp(20, 20);
        let masks = compute_far_masks(&[&m], 95.0).unwrap();
        let frac = masks[0].far_count() as f64 / 400.0;
        assert!((frac - 0.05).abs() <= 1.0 / 400.0, "{frac}");
    }

    #[test]
    fn far_count_decreases_with_percentile() {
        let m = ramp(16, 9);
        let mut last = usize::MAX;
        for p in [90.0, 93.0, 95.0, 97.0, 99.0] {
            let c = compute_far_masks(&[&m], p).unwrap()[0].far_count();
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn threshold_is_pooled_across_views() {
        let a = DepthMap::from_data(2, 2, vec![1.0; 4]).unwrap();
        let b = DepthMap::from_data(2, 2, vec![10.0; 4]).unwrap();
        let masks = compute_far_masks(&[&a, &b], 50.0).unwrap();
        assert_eq!(masks[0].far_count(), 0);
        assert_eq!(masks[1].far_count(), 4);
        assert_eq!(masks[0].threshold, masks[1].threshold);
    }

    #[test]
    fn near_and_far_partition_the_image() {
        let m = ramp(7, 5);
        let mask = &compute_far_masks(&[&m], 80.0).unwrap()[0];
        let near = mask.near().iter().filter(|&&v| v).count();
        assert_eq!(near + mask.far_count(), 35);
    }

    #[test]
    fn all_invalid_map_is_an_error() {
        let m = DepthMap::from_data(2, 1, vec![f64::NAN, f64::INFINITY]).unwrap();
        assert!(compute_far_masks(&[&m], 95.0).is_err());
    }
}
