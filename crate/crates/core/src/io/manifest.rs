use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{read_pfm, read_ply_points, read_png};
use crate::image::{DepthMap, Image};
use crate::render::{orthonormalize, rotation_deviation, Camera};
use crate::scene::PointCloud;
use crate::{Error, Result};

/// Rotations further than this from orthonormal are rejected.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<String>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    /// World-to-camera translation.
    pub translation: [f64; 3],
}

impl ViewEntry {
    pub fn from_camera(cam: &Camera, image_path: String, depth_path: Option<String>) -> Self {
        let r = &cam.rotation;
        Self {
            image_path,
            depth_path,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: cam.translation.into(),
        }
    }

    /// Builds the camera, re-orthonormalizing a slightly skewed rotation.
    /// Returns a warning when that happened.
    pub fn camera(&self) -> Result<(Camera, Option<String>)> {
        let r = Matrix3::from_row_slice(&self.rotation);
        let dev = rotation_deviation(&r);
        if !(dev <= ROTATION_TOLERANCE) || r.determinant() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "view {}: rotation is not a proper rotation (deviation {dev:e})",
                self.image_path
            )));
        }
        let (r, warning) = if dev > 1e-12 {
            let warning = format!(
                "view {}: rotation re-orthonormalized (deviation {dev:e})",
                self.image_path
            );
            (orthonormalize(&r), Some(warning))
        } else {
            (r, None)
        };
        let cam = Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            r,
            Vector3::from(self.translation),
        )?;
        Ok((cam, warning))
    }
}

/// Declarative scene description; relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: u32,
    pub point_cloud_path: String,
    pub views: Vec<ViewEntry>,
}

impl SceneManifest {
    pub const VERSION: u32 = 1;

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: SceneManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.version != Self::VERSION {
            return Err(Error::format(
                path,
                format!("manifest version {} is not supported (expected {})", m.version, Self::VERSION),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A manifest with every asset decoded.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub root: PathBuf,
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    /// `None` for views without a depth map.
    pub depths: Vec<Option<DepthMap>>,
    pub point_cloud: PointCloud,
    pub warnings: Vec<String>,
}

impl LoadedScene {
    pub fn has_all_depths(&self) -> bool {
        self.depths.iter().all(Option::is_some)
    }
}

pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let manifest = SceneManifest::load(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut warnings = Vec::new();
    let point_cloud = read_ply_points(&root.join(&manifest.point_cloud_path))?;
    let mut cameras = Vec::with_capacity(manifest.views.len());
    let mut images = Vec::with_capacity(manifest.views.len());
    let mut depths = Vec::with_capacity(manifest.views.len());
    for view in &manifest.views {
        let (cam, warning) = view.camera().map_err(|e| Error::format(path, e.to_string()))?;
        warnings.extend(warning);
        let image_path = root.join(&view.image_path);
        let image = read_png(&image_path)?;
        if image.width != view.width || image.height != view.height {
            return Err(Error::format(
                &image_path,
                format!(
                    "image is {}x{}, manifest says {}x{}",
                    image.width, image.height, view.width, view.height
                ),
            ));
        }
        let depth = match &view.depth_path {
            Some(p) => {
                let depth_path = root.join(p);
                let d = read_pfm(&depth_path)?;
                if d.width != view.width || d.height != view.height {
                    return Err(Error::format(
                        &depth_path,
                        format!("depth map is {}x{}, image is {}x{}", d.width, d.height, view.width, view.height),
                    ));
                }
                Some(d)
            }
            None => {
                warnings.push(format!(
                    "view {}: no depth map, near/far evaluation unavailable",
                    view.image_path
                ));
                None
            }
        };
        cameras.push(cam);
        images.push(image);
        depths.push(depth);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(LoadedScene {
        manifest,
        root,
        cameras,
        images,
        depths,
        point_cloud,
        warnings,
    })
}
