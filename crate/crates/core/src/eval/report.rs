use std::io::Write;

use rayon::prelude::*;

use super::masks::DepthMask;
use super::metrics::{masked_psnr, masked_ssim, psnr, ssim};
use crate::image::Image;
use crate::render::{render, Camera, RenderConfig};
use crate::scene::GaussianSet;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub view_id: usize,
    pub split: String,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_near: Option<f64>,
    pub ssim_near: Option<f64>,
    pub psnr_far: Option<f64>,
    pub ssim_far: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    pub fn mean_psnr(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| Some(r.psnr)))
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| Some(r.ssim)))
    }

    pub fn mean_psnr_near(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.psnr_near))
    }

    pub fn mean_psnr_far(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.psnr_far))
    }

    pub fn mean_ssim_near(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.ssim_near))
    }

    pub fn mean_ssim_far(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.ssim_far))
    }

    /// Columns `view_id,split,psnr,ssim,psnr_near,ssim_near,psnr_far,
    /// ssim_far,lpips`; missing values are empty and lpips is always `n/a`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "view_id", "split", "psnr", "ssim", "psnr_near", "ssim_near", "psnr_far", "ssim_far", "lpips",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.view_id.to_string(),
                r.split.clone(),
                r.psnr.to_string(),
                r.ssim.to_string(),
                opt(r.psnr_near),
                opt(r.ssim_near),
                opt(r.psnr_far),
                opt(r.ssim_far),
                "n/a".to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("metric report", e))
    }
}

pub fn evaluate_pair(
    view_id: usize,
    split: &str,
    pred: &Image,
    gt: &Image,
    mask: Option<&DepthMask>,
) -> Result<MetricRow> {
    let (mut psnr_near, mut ssim_near, mut psnr_far, mut ssim_far) = (None, None, None, None);
    if let Some(m) = mask {
        let near = m.near();
        psnr_near = masked_psnr(pred, gt, &near)?;
        ssim_near = masked_ssim(pred, gt, &near)?;
        psnr_far = masked_psnr(pred, gt, &m.far)?;
        ssim_far = masked_ssim(pred, gt, &m.far)?;
    }
    Ok(MetricRow {
        view_id,
        split: split.to_string(),
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        psnr_near,
        ssim_near,
        psnr_far,
        ssim_far,
    })
}

/// Renders `set` from each listed view and scores it against the ground
/// truth. `masks`, when given, is parallel to `views`.
pub fn evaluate_views(
    set: &GaussianSet,
    cameras: &[Camera],
    images: &[Image],
    views: &[usize],
    split: &str,
    masks: Option<&[DepthMask]>,
    cfg: &RenderConfig,
) -> Result<MetricReport> {
    if let Some(m) = masks {
        if m.len() != views.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masks for {} views",
                m.len(),
                views.len()
            )));
        }
    }
    let rows = views
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let out = render(set, &cameras[v], cfg);
            evaluate_pair(v, split, &out.radiance, &images[v], masks.map(|m| &m[k]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { rows })
}
