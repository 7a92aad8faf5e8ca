//! Coordinate parametrizations of Gaussian position and scale.
//!
//! Every Gaussian stores a raw position triple, a raw scalar weight, a raw
//! log-scale triple and an unnormalized quaternion. Their meaning depends on
//! the [`Parametrization`]:
//!
//! | variant              | `position`              | `weight`        | decoded mean              | decoded scale                 |
//! |----------------------|-------------------------|-----------------|---------------------------|-------------------------------|
//! | `Cartesian`          | `mu`                    | unused (0)      | `mu`                      | `exp(log_scale)`              |
//! | `Homogeneous`        | `mu_tilde`              | `rho = ln w`    | `mu_tilde / w`            | `exp(log_scale_tilde) / w`    |
//! | `InvertedSpherical`  | `[theta, phi, 0]`       | `ln w'`         | unit(theta, phi) / w'     | `exp(log_scale)`              |
//!
//! Unused slots are held at zero and never receive gradient.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on the inverted depth `w'`.
pub const MAX_INVERTED_DEPTH: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    Cartesian,
    Homogeneous,
    InvertedSpherical,
}

impl Parametrization {
    pub const ALL: [Parametrization; 3] = [
        Parametrization::Cartesian,
        Parametrization::Homogeneous,
        Parametrization::InvertedSpherical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Parametrization::Cartesian => "cartesian",
            Parametrization::Homogeneous => "homogeneous",
            Parametrization::InvertedSpherical => "inverted-spherical",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Parametrization::Cartesian => 0,
            Parametrization::Homogeneous => 1,
            Parametrization::InvertedSpherical => 2,
        }
    }
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parametrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartesian" => Ok(Parametrization::Cartesian),
            "homogeneous" => Ok(Parametrization::Homogeneous),
            "inverted-spherical" => Ok(Parametrization::InvertedSpherical),
            other => Err(Error::InvalidArgument(format!(
                "unknown parametrization `{other}` (expected cartesian, homogeneous or inverted-spherical)"
            ))),
        }
    }
}

/// Raw (pre-activation) geometry of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawGeometry {
    pub position: [f64; 3],
    pub weight: f64,
    pub log_scale: [f64; 3],
    /// `[w, x, y, z]`, not necessarily unit length.
    pub rotation: [f64; 4],
}

impl RawGeometry {
    pub fn cartesian(mu: [f64; 3], log_scale: [f64; 3], rotation: [f64; 4]) -> Self {
        Self {
            position: mu,
            weight: 0.0,
            log_scale,
            rotation,
        }
    }
}

fn finite3(v: Vector3<f64>) -> Result<Vector3<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::InvalidGaussian("decoded value is not finite"))
    }
}

#[inline]
fn clamped_log_inverted_depth(raw: f64) -> f64 {
    raw.min(MAX_INVERTED_DEPTH.ln())
}

/// Unit direction for azimuth `theta` and polar angle `phi` (from +z).
#[inline]
pub fn spherical_direction(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(sp * ct, sp * st, cp)
}

pub fn decode_position(raw: &RawGeometry, p: Parametrization) -> Result<Vector3<f64>> {
    let [a, b, c] = raw.position;
    let mu = match p {
        Parametrization::Cartesian => Vector3::new(a, b, c),
        Parametrization::Homogeneous => Vector3::new(a, b, c) * (-raw.weight).exp(),
        Parametrization::InvertedSpherical => {
            let inv_depth = clamped_log_inverted_depth(raw.weight).exp();
            spherical_direction(a, b) / inv_depth
        }
    };
    finite3(mu)
}

pub fn decode_scale(raw: &RawGeometry, p: Parametrization) -> Result<Vector3<f64>> {
    let ls = Vector3::from(raw.log_scale);
    let s = match p {
        Parametrization::Homogeneous => ls.map(|l| (l - raw.weight).exp()),
        Parametrization::Cartesian | Parametrization::InvertedSpherical => ls.map(f64::exp),
    };
    finite3(s)
}

/// Rotation matrix of the normalized quaternion `[w, x, y, z]`.
pub fn rotation_matrix(q: [f64; 4]) -> Result<Matrix3<f64>> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-30) || !norm.is_finite() {
        return Err(Error::InvalidGaussian("zero quaternion"));
    }
    let [r, x, y, z] = q.map(|v| v / norm);
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - r * z),
        2.0 * (x * z + r * y),
        2.0 * (x * y + r * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - r * x),
        2.0 * (x * z - r * y),
        2.0 * (y * z + r * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// `Sigma = R S S^T R^T` from a rotation matrix and per-axis scales.
pub fn covariance_from(rot: &Matrix3<f64>, scale: &Vector3<f64>) -> Matrix3<f64> {
    let m = rot * Matrix3::from_diagonal(scale);
    m * m.transpose()
}

pub fn decode_covariance(raw: &RawGeometry, p: Parametrization) -> Result<Matrix3<f64>> {
    let rot = rotation_matrix(raw.rotation)?;
    let scale = decode_scale(raw, p)?;
    Ok(covariance_from(&rot, &scale))
}

/// Encodes a world-space Gaussian. `w_hint` only affects the homogeneous
/// parametrization; without it `w = 1 / |mu|` (or 1 at the origin).
pub fn encode_from_cartesian(
    mu: Vector3<f64>,
    scale: Vector3<f64>,
    rotation: [f64; 4],
    p: Parametrization,
    w_hint: Option<f64>,
) -> Result<RawGeometry> {
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scales must be positive and finite, got {scale:?}"
        )));
    }
    let qn = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(qn > 1e-30) {
        return Err(Error::InvalidGaussian("zero quaternion"));
    }
    let rotation = rotation.map(|v| v / qn);
    let log_scale = [scale.x.ln(), scale.y.ln(), scale.z.ln()];
    match p {
        Parametrization::Cartesian => Ok(RawGeometry::cartesian(mu.into(), log_scale, rotation)),
        Parametrization::Homogeneous => {
            let w = match w_hint {
                Some(w) if w > 0.0 && w.is_finite() => w,
                Some(w) => {
                    return Err(Error::InvalidArgument(format!(
                        "homogeneous weight must be positive, got {w}"
                    )))
                }
                None => {
                    let d = mu.norm();
                    if d > 0.0 {
                        1.0 / d
                    } else {
                        1.0
                    }
                }
            };
            let rho = w.ln();
            Ok(RawGeometry {
                position: (mu * w).into(),
                weight: rho,
                log_scale: log_scale.map(|l| l + rho),
                rotation,
            })
        }
        Parametrization::InvertedSpherical => {
            let r = mu.norm();
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(
                    "inverted spherical encoding is undefined at the origin".into(),
                ));
            }
            let theta = mu.y.atan2(mu.x);
            let phi = (mu.z / r).clamp(-1.0, 1.0).acos();
            Ok(RawGeometry {
                position: [theta, phi, 0.0],
                weight: -r.ln(),
                log_scale,
                rotation,
            })
        }
    }
}

/// Moves a homogeneous Gaussian along its projective equivalence class:
/// `(mu_tilde, s_tilde, w) -> k (mu_tilde, s_tilde, w)`.
pub fn rescale_homogeneous(raw: &RawGeometry, k: f64) -> Result<RawGeometry> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rescale factor must be positive, got {k}"
        )));
    }
    let ln_k = k.ln();
    Ok(RawGeometry {
        position: raw.position.map(|v| v * k),
        weight: raw.weight + ln_k,
        log_scale: raw.log_scale.map(|l| l + ln_k),
        rotation: raw.rotation,
    })
}

/// Pulls a gradient on the decoded mean back to the raw position and weight.
pub fn position_vjp(
    raw: &RawGeometry,
    p: Parametrization,
    d_mean: &Vector3<f64>,
) -> ([f64; 3], f64) {
    match p {
        Parametrization::Cartesian => ((*d_mean).into(), 0.0),
        Parametrization::Homogeneous => {
            let inv_w = (-raw.weight).exp();
            let mt = Vector3::from(raw.position);
            ((d_mean * inv_w).into(), -d_mean.dot(&mt) * inv_w)
        }
        Parametrization::InvertedSpherical => {
            let [theta, phi, _] = raw.position;
            let clamped = raw.weight > MAX_INVERTED_DEPTH.ln();
            let r = (-clamped_log_inverted_depth(raw.weight)).exp();
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let d_theta = Vector3::new(-sp * st, sp * ct, 0.0) * r;
            let d_phi = Vector3::new(cp * ct, cp * st, -sp) * r;
            let mean = spherical_direction(theta, phi) * r;
            let d_weight = if clamped { 0.0 } else { -d_mean.dot(&mean) };
            ([d_mean.dot(&d_theta), d_mean.dot(&d_phi), 0.0], d_weight)
        }
    }
}

/// Pulls a gradient on the decoded scale back to the raw log-scale and weight.
pub fn scale_vjp(
    scale: &Vector3<f64>,
    p: Parametrization,
    d_scale: &Vector3<f64>,
) -> ([f64; 3], f64) {
    let d_log = d_scale.component_mul(scale);
    let d_weight = match p {
        Parametrization::Homogeneous => -d_log.sum(),
        _ => 0.0,
    };
    (d_log.into(), d_weight)
}

/// Pulls `dL/dR` back to the raw (unnormalized) quaternion.
pub fn rotation_vjp(q: [f64; 4], d_rot: &Matrix3<f64>) -> [f64; 4] {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [r, x, y, z] = q.map(|v| v / norm);
    let g = d_rot;
    let dot = |m: [[f64; 3]; 3]| -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += g[(i, j)] * m[i][j];
            }
        }
        acc
    };
    let dr = dot([
        [0.0, -2.0 * z, 2.0 * y],
        [2.0 * z, 0.0, -2.0 * x],
        [-2.0 * y, 2.0 * x, 0.0],
    ]);
    let dx = dot([
        [0.0, 2.0 * y, 2.0 * z],
        [2.0 * y, -4.0 * x, -2.0 * r],
        [2.0 * z, 2.0 * r, -4.0 * x],
    ]);
    let dy = dot([
        [-4.0 * y, 2.0 * x, 2.0 * r],
        [2.0 * x, 0.0, 2.0 * z],
        [-2.0 * r, 2.0 * z, -4.0 * y],
    ]);
    let dz = dot([
        [-4.0 * z, -2.0 * r, 2.0 * x],
        [2.0 * r, -4.0 * z, 2.0 * y],
        [2.0 * x, 2.0 * y, 0.0],
    ]);
    let dn = [dr, dx, dy, dz];
    let qn = [r, x, y, z];
    let proj: f64 = dn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (dn[i] - qn[i] * proj) / norm)
}

/// Wraps an azimuth into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

    fn rel_close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn decode_examples() {
        let hom = RawGeometry {
            position: [2.0, 4.0, 6.0],
            weight: 2f64.ln(),
            log_scale: [0.0; 3],
            rotation: IDENTITY,
        };
        let mu = decode_position(&hom, Parametrization::Homogeneous).unwrap();
        assert!(rel_close(&mu, &Vector3::new(1.0, 2.0, 3.0), 1e-15));

        let cart = RawGeometry::cartesian([1.0, 2.0, 3.0], [0.0; 3], IDENTITY);
        assert_eq!(
            decode_position(&cart, Parametrization::Cartesian).unwrap(),
            Vector3::new(1.0, 2.0, 3.0)
        );

        let sph = RawGeometry {
            position: [0.0, PI / 2.0, 0.0],
            weight: 0.5f64.ln(),
            log_scale: [0.0; 3],
            rotation: IDENTITY,
        };
        let mu = decode_position(&sph, Parametrization::InvertedSpherical).unwrap();
        assert!((mu - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn extreme_weight_is_invalid() {
        let raw = RawGeometry {
            position: [1.0, 1.0, 1.0],
            weight: -800.0,
            log_scale: [0.0; 3],
            rotation: IDENTITY,
        };
        assert!(decode_position(&raw, Parametrization::Homogeneous).is_err());
    }

    #[test]
    fn covariance_examples() {
        let raw = RawGeometry::cartesian([0.0; 3], [0.0; 3], IDENTITY);
        let cov = decode_covariance(&raw, Parametrization::Cartesian).unwrap();
        assert!((cov - Matrix3::identity()).norm() < 1e-15);

        let hom = RawGeometry {
            weight: 2f64.ln(),
            ..raw
        };
        let cov = decode_covariance(&hom, Parametrization::Homogeneous).unwrap();
        assert!((cov - Matrix3::identity() * 0.25).norm() < 1e-15);

        // 90 degrees about z maps the x axis onto y.
        let h = (0.5f64).sqrt();
        let rz = RawGeometry::cartesian([0.0; 3], [2f64.ln(), 0.0, 0.0], [h, 0.0, 0.0, h]);
        let cov = decode_covariance(&rz, Parametrization::Cartesian).unwrap();
        // Independent route: explicit rotation matrix.
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let expected = r * Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)) * r.transpose();
        assert!((cov - expected).norm() < 1e-12);
        assert!((cov - Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0))).norm() < 1e-12);
    }

    #[test]
    fn zero_quaternion_is_invalid() {
        let raw = RawGeometry::cartesian([0.0; 3], [0.0; 3], [0.0; 4]);
        assert!(decode_covariance(&raw, Parametrization::Cartesian).is_err());
    }

    #[test]
    fn encode_examples() {
        let one = Vector3::new(1.0, 1.0, 1.0);
        let raw = encode_from_cartesian(
            Vector3::new(0.0, 0.0, 5.0),
            one,
            IDENTITY,
            Parametrization::Homogeneous,
            None,
        )
        .unwrap();
        assert!((raw.weight - (0.2f64).ln()).abs() < 1e-15);
        assert!((Vector3::from(raw.position) - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);

        let raw = encode_from_cartesian(
            Vector3::new(1.0, 2.0, 3.0),
            one,
            IDENTITY,
            Parametrization::Homogeneous,
            Some(1.0),
        )
        .unwrap();
        assert_eq!(raw.position, [1.0, 2.0, 3.0]);
        assert_eq!(raw.weight, 0.0);

        let mu = Vector3::new(3.0, 4.0, 0.0);
        let raw =
            encode_from_cartesian(mu, one, IDENTITY, Parametrization::Homogeneous, None).unwrap();
        let p = Parametrization::Homogeneous;
        assert!(rel_close(&decode_position(&raw, p).unwrap(), &mu, 1e-12));
        assert!(rel_close(&decode_scale(&raw, p).unwrap(), &one, 1e-12));
    }

    #[test]
    fn encode_errors_and_fallbacks() {
        let one = Vector3::new(1.0, 1.0, 1.0);
        assert!(encode_from_cartesian(
            Vector3::zeros(),
            one,
            IDENTITY,
            Parametrization::InvertedSpherical,
            None
        )
        .is_err());
        let raw = encode_from_cartesian(
            Vector3::zeros(),
            one,
            IDENTITY,
            Parametrization::Homogeneous,
            None,
        )
        .unwrap();
        assert_eq!(raw.weight, 0.0);
        assert!(encode_from_cartesian(
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 1.0),
            IDENTITY,
            Parametrization::Cartesian,
            None
        )
        .is_err());
    }

    #[test]
    fn rescale_examples() {
        let raw = RawGeometry {
            position: [1.0, 2.0, 3.0],
            weight: 0.0,
            log_scale: [0.1, 0.2, 0.3],
            rotation: IDENTITY,
        };
        let p = Parametrization::Homogeneous;
        let scaled = rescale_homogeneous(&raw, 2.0).unwrap();
        assert!(rel_close(
            &decode_position(&scaled, p).unwrap(),
            &Vector3::new(1.0, 2.0, 3.0),
            1e-15
        ));
        assert_eq!(rescale_homogeneous(&raw, 1.0).unwrap(), raw);
        assert!(rescale_homogeneous(&raw, 0.0).is_err());
        assert!(rescale_homogeneous(&raw, -1.0).is_err());
    }

    fn quat() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(-1.0f64..1.0).prop_filter("non-degenerate", |q| {
            q.iter().map(|v| v * v).sum::<f64>() > 1e-3
        })
    }

    fn point(min: f64, max: f64) -> impl Strategy<Value = Vector3<f64>> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            min.ln()..max.ln(),
        )
            .prop_filter_map("non-zero direction", |(d, log_r)| {
                let d = Vector3::from(d);
                (d.norm() > 1e-3).then(|| d.normalize() * log_r.exp())
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn projective_equivalence(
            pos in prop::array::uniform3(-10.0f64..10.0),
            ls in prop::array::uniform3(-3.0f64..3.0),
            rho in -5.0f64..5.0,
            q in quat(),
            log_k in -7.0f64..7.0,
        ) {
            let p = Parametrization::Homogeneous;
            let raw = RawGeometry { position: pos, weight: rho, log_scale: ls, rotation: q };
            let scaled = rescale_homogeneous(&raw, log_k.exp()).unwrap();
            let (m0, m1) = (decode_position(&raw, p).unwrap(), decode_position(&scaled, p).unwrap());
            prop_assert!((m0 - m1).norm() <= 1e-12 * m0.norm().max(1e-12));
            let (c0, c1) = (decode_covariance(&raw, p).unwrap(), decode_covariance(&scaled, p).unwrap());
            prop_assert!((c0 - c1).norm() <= 1e-12 * c0.norm());
        }

        #[test]
        fn round_trip_all_parametrizations(
            mu in point(0.1, 1e6),
            s in prop::array::uniform3(-5.0f64..5.0),
            q in quat(),
        ) {
            let s = Vector3::from(s).map(f64::exp);
            for p in Parametrization::ALL {
                let raw = encode_from_cartesian(mu, s, q, p, None).unwrap();
                let mu2 = decode_position(&raw, p).unwrap();
                prop_assert!((mu2 - mu).norm() <= 1e-9 * mu.norm(), "{p}: {mu2} vs {mu}");
                let s2 = decode_scale(&raw, p).unwrap();
                prop_assert!((s2 - s).norm() <= 1e-9 * s.norm());
                let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                let same = (0..4).all(|i| (raw.rotation[i] - q[i] / qn).abs() < 1e-9);
                let flipped = (0..4).all(|i| (raw.rotation[i] + q[i] / qn).abs() < 1e-9);
                prop_assert!(same || flipped);
            }
        }

        #[test]
        fn covariance_is_psd(
            ls in prop::array::uniform3(-4.0f64..4.0),
            q in quat(),
        ) {
            let raw = RawGeometry::cartesian([0.0; 3], ls, q);
            let cov = decode_covariance(&raw, Parametrization::Cartesian).unwrap();
            let eig = cov.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e >= -1e-12 * cov.trace()));
        }

        #[test]
        fn distance_decreases_with_rho(
            pos in prop::array::uniform3(-10.0f64..10.0),
            rho in -5.0f64..5.0,
            delta in 1e-3f64..3.0,
        ) {
            prop_assume!(Vector3::from(pos).norm() > 1e-3);
            let p = Parametrization::Homogeneous;
            let a = RawGeometry { position: pos, weight: rho, log_scale: [0.0; 3], rotation: IDENTITY };
            let b = RawGeometry { weight: rho + delta, ..a };
            prop_assert!(decode_position(&b, p).unwrap().norm() < decode_position(&a, p).unwrap().norm());
        }
    }
}
