use std::fmt;
use std::str::FromStr;

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{logit, sh, GaussianSet, PointCloud};
use crate::geometry::{encode_from_cartesian, Parametrization};
use crate::{Error, Result};

const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];
const MIN_INIT_SCALE: f64 = 1e-7;
const INIT_OPACITY: f64 = 0.1;

/// Initial homogeneous weight assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WInit {
    /// `w = 1 / |p|`.
    #[default]
    InverseDistance,
    Constant(f64),
    /// Log-uniform in `[0.01, 100]`.
    Random,
}

impl FromStr for WInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1/d" | "inverse-distance" => Ok(WInit::InverseDistance),
            "random" => Ok(WInit::Random),
            other => match other.parse::<f64>() {
                Ok(w) if w > 0.0 && w.is_finite() => Ok(WInit::Constant(w)),
                _ => Err(Error::InvalidArgument(format!(
                    "w init must be `1/d`, `random` or a positive number, got `{other}`"
                ))),
            },
        }
    }
}

impl TryFrom<String> for WInit {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for WInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WInit::InverseDistance => f.write_str("1/d"),
            WInit::Random => f.write_str("random"),
            WInit::Constant(w) => write!(f, "{w}"),
        }
    }
}

impl From<WInit> for String {
    fn from(w: WInit) -> String {
        w.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkyboxConfig {
    pub count: usize,
    pub radius: f64,
    pub color: [f64; 3],
    pub up: [f64; 3],
}

impl Default for SkyboxConfig {
    fn default() -> Self {
        Self {
            count: 100_000,
            radius: 1000.0,
            color: [0.0, 0.0, 1.0],
            up: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    pub sh_degree: usize,
    pub w_init: WInit,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            sh_degree: sh::MAX_DEGREE,
            w_init: WInit::InverseDistance,
        }
    }
}

/// Mean distance to the (up to) three nearest other points. Isolated points
/// get a unit scale.
pub(crate) fn knn_mean_distance(points: &[[f64; 3]]) -> Vec<f64> {
    let mut tree: KdTree<f64, 3> = KdTree::new();
    for (i, p) in points.iter().enumerate() {
        tree.add(p, i as u64);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let found = tree.nearest_n::<SquaredEuclidean>(p, 4);
            let dists: Vec<f64> = found
                .iter()
                .filter(|n| n.item != i as u64)
                .take(3)
                .map(|n| n.distance.sqrt())
                .collect();
            if dists.is_empty() {
                1.0
            } else {
                (dists.iter().sum::<f64>() / dists.len() as f64).max(MIN_INIT_SCALE)
            }
        })
        .collect()
}

fn initial_weight<R: Rng>(w_init: WInit, p: &Vector3<f64>, rng: &mut R) -> f64 {
    match w_init {
        WInit::InverseDistance => 1.0 / p.norm().max(1e-9),
        WInit::Constant(w) => w,
        WInit::Random => rng.gen_range(0.01f64.ln()..100f64.ln()).exp(),
    }
}

/// One isotropic Gaussian per point, scaled by nearest-neighbour spacing.
pub fn init_from_points<R: Rng>(
    cloud: &PointCloud,
    parametrization: Parametrization,
    cfg: &InitConfig,
    rng: &mut R,
) -> Result<GaussianSet> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("point cloud is empty".into()));
    }
    if cloud.colors.len() != cloud.len() {
        return Err(Error::ShapeMismatch("point cloud colors".into()));
    }
    let scales = knn_mean_distance(&cloud.positions);
    let mut set = GaussianSet::new(parametrization, cfg.sh_degree);
    for ((pos, color), s) in cloud.positions.iter().zip(&cloud.colors).zip(scales) {
        let mu = Vector3::from(*pos);
        let hint = (parametrization == Parametrization::Homogeneous)
            .then(|| initial_weight(cfg.w_init, &mu, rng));
        let raw = encode_from_cartesian(mu, Vector3::repeat(s), IDENTITY, parametrization, hint)?;
        set.push(&raw, logit(INIT_OPACITY), sh::rgb_to_dc(*color), &[]);
    }
    Ok(set)
}

/// Appends `cfg.count` points sampled uniformly on the upper hemisphere.
pub fn add_skybox<R: Rng>(set: &mut GaussianSet, cfg: &SkyboxConfig, rng: &mut R) -> Result<()> {
    if !(cfg.radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "skybox radius must be positive, got {}",
            cfg.radius
        )));
    }
    if cfg.count == 0 {
        return Ok(());
    }
    let up = Vector3::from(cfg.up);
    if !(up.norm() > 0.0) {
        return Err(Error::InvalidArgument("skybox up axis is zero".into()));
    }
    let up = up.normalize();
    let helper = if up.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = up.cross(&helper).normalize();
    let e2 = up.cross(&e1);
    // Mean spacing of `count` points spread over a hemisphere.
    let spacing = cfg.radius * (2.0 * std::f64::consts::PI / cfg.count as f64).sqrt();
    let dc = sh::rgb_to_dc(cfg.color);
    for _ in 0..cfg.count {
        let cos_t: f64 = rng.gen_range(0.0..=1.0);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let az: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let dir = up * cos_t + e1 * (sin_t * az.cos()) + e2 * (sin_t * az.sin());
        let mu = dir * cfg.radius;
        let raw = encode_from_cartesian(
            mu,
            Vector3::repeat(spacing),
            IDENTITY,
            set.parametrization,
            None,
        )?;
        set.push(&raw, logit(INIT_OPACITY), dc, &[]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::decode_position;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud {
            positions: points.to_vec(),
            colors: vec![[0.2, 0.4, 0.6]; points.len()],
        }
    }

    fn brute_force_knn(points: &[[f64; 3]], i: usize) -> f64 {
        let mut d: Vec<f64> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (Vector3::from(*q) - Vector3::from(points[i])).norm())
            .collect();
        d.sort_by(f64::total_cmp);
        d.truncate(3);
        d.iter().sum::<f64>() / d.len() as f64
    }

    #[test]
    fn homogeneous_weight_is_inverse_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = init_from_points(
            &cloud(&[[0.0, 0.0, 10.0]]),
            Parametrization::Homogeneous,
            &InitConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!((set.params.weights[0] - 0.1f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cartesian_keeps_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = init_from_points(
            &cloud(&[[1.5, -2.0, 7.25]]),
            Parametrization::Cartesian,
            &InitConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(set.params.positions[0], [1.5, -2.0, 7.25]);
        assert!((set.opacity(0) - 0.1).abs() < 1e-12);
        assert_eq!(set.params.rotations[0], IDENTITY);
        assert!(set.params.sh_rest.iter().all(|&v| v == 0.0));
        let rgb = sh::dc_to_rgb(set.params.sh_dc[0]);
        assert!((rgb[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn collinear_scale_matches_brute_force() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = init_from_points(
            &cloud(&pts),
            Parametrization::Cartesian,
            &InitConfig::default(),
            &mut rng,
        )
        .unwrap();
        for i in 0..3 {
            let s = set.decode_scale(i).unwrap();
            assert!((s.x - brute_force_knn(&pts, i)).abs() < 1e-12);
        }
        assert!((set.decode_scale(1).unwrap().x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knn_matches_brute_force_on_random_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|_| [0; 3].map(|_| rng.gen_range(-5.0..5.0)))
            .collect();
        let fast = knn_mean_distance(&pts);
        for i in 0..pts.len() {
            assert!((fast[i] - brute_force_knn(&pts, i)).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(init_from_points(
            &PointCloud::default(),
            Parametrization::Cartesian,
            &InitConfig::default(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn homogeneous_init_round_trips_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|_| [0; 3].map(|_| rng.gen_range(-500.0..500.0)))
            .collect();
        let set = init_from_points(
            &cloud(&pts),
            Parametrization::Homogeneous,
            &InitConfig::default(),
            &mut rng,
        )
        .unwrap();
        for (i, p) in pts.iter().enumerate() {
            let mu = decode_position(&set.raw_geometry(i), Parametrization::Homogeneous).unwrap();
            let p = Vector3::from(*p);
            assert!((mu - p).norm() <= 1e-9 * p.norm());
        }
    }

    #[test]
    fn constant_w_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = InitConfig {
            w_init: "0.01".parse().unwrap(),
            ..Default::default()
        };
        let set = init_from_points(
            &cloud(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]),
            Parametrization::Homogeneous,
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(set.params.weights.iter().all(|&r| (r - 0.01f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn skybox_counts_and_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut set = GaussianSet::new(Parametrization::Homogeneous, 0);
        add_skybox(
            &mut set,
            &SkyboxConfig {
                count: 0,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        assert!(set.is_empty());

        let cfg = SkyboxConfig {
            count: 1000,
            radius: 50.0,
            ..Default::default()
        };
        add_skybox(&mut set, &cfg, &mut rng).unwrap();
        assert_eq!(set.len(), 1000);
        for i in 0..set.len() {
            let mu = set.decode_mean(i).unwrap();
            assert!((mu.norm() - 50.0).abs() <= 1e-6);
            assert!(mu.z >= 0.0);
            assert!((set.params.weights[i] - (1.0f64 / 50.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn skybox_default_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = GaussianSet::new(Parametrization::Cartesian, 0);
        add_skybox(&mut set, &SkyboxConfig::default(), &mut rng).unwrap();
        assert_eq!(set.len(), 100_000);
    }

    #[test]
    fn skybox_custom_up_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut set = GaussianSet::new(Parametrization::Cartesian, 0);
        let cfg = SkyboxConfig {
            count: 500,
            radius: 10.0,
            up: [0.0, -1.0, 0.0],
            ..Default::default()
        };
        add_skybox(&mut set, &cfg, &mut rng).unwrap();
        assert!((0..set.len()).all(|i| set.decode_mean(i).unwrap().y <= 1e-12));
    }

    #[test]
    fn w_init_parsing() {
        assert_eq!("1/d".parse::<WInit>().unwrap(), WInit::InverseDistance);
        assert_eq!("random".parse::<WInit>().unwrap(), WInit::Random);
        assert_eq!("10".parse::<WInit>().unwrap(), WInit::Constant(10.0));
        assert!("-1".parse::<WInit>().is_err());
        assert!("nope".parse::<WInit>().is_err());
    }
}
