use super::*;
use crate::fixtures::{random_gradcheck_scene, GradcheckSceneSpec};
use crate::geometry::{rescale_homogeneous, Parametrization, RawGeometry};
use crate::render::{render, RenderConfig};
use crate::scene::{logit, sh::rgb_to_dc, ParamGroup};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weighted_loss(weights: &Image) -> impl Fn(&RenderOutput) -> f64 + Sync + '_ {
    move |out: &RenderOutput| {
        out.radiance
            .data
            .iter()
            .zip(&weights.data)
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn random_weights(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    let data = (0..w * h * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Image::from_data(w, h, data).unwrap()
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / (a.abs() + f.abs() + 1e-8)
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = GradcheckSceneSpec::default();
    let (set, cam) = random_gradcheck_scene(&mut rng, Parametrization::Homogeneous, &spec);
    let out = render(&set, &cam, &RenderConfig::default());
    let zero = Image::new(cam.width, cam.height);
    let g = backward(&set, &cam, &out, &zero).unwrap();
    assert!(g.params.group(ParamGroup::Position).iter().all(|&v| v == 0.0));
    for group in ParamGroup::ALL {
        assert!(g.params.group(group).iter().all(|&v| v == 0.0), "{}", group.name());
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (set, cam) =
        random_gradcheck_scene(&mut rng, Parametrization::Cartesian, &GradcheckSceneSpec::default());
    let out = render(&set, &cam, &RenderConfig::default());
    let wrong = Image::new(cam.width + 1, cam.height);
    assert!(backward(&set, &cam, &out, &wrong).is_err());
    let smaller = set.select(&[0]);
    let d = Image::new(cam.width, cam.height);
    assert!(backward(&smaller, &cam, &out, &d).is_err());
}

fn single_gaussian_setup(p: Parametrization) -> (GaussianSet, Camera) {
    let cam = Camera::new(
        20.0,
        20.0,
        0.0,
        0.0,
        1,
        1,
        Matrix3::identity(),
        Vector3::zeros(),
    )
    .unwrap();
    let mut set = GaussianSet::new(p, 0);
    let raw = crate::geometry::encode_from_cartesian(
        Vector3::new(0.01, -0.02, 3.0),
        Vector3::new(0.2, 0.15, 0.25),
        [0.9, 0.1, -0.2, 0.3],
        p,
        None,
    )
    .unwrap();
    set.push(&raw, logit(0.6), rgb_to_dc([0.7, 0.4, 0.2]), &[]);
    (set, cam)
}

#[test]
fn single_pixel_opacity_gradient() {
    let (set, cam) = single_gaussian_setup(Parametrization::Cartesian);
    let cfg = RenderConfig::default();
    let out = render(&set, &cam, &cfg);
    let mut d = Image::new(1, 1);
    d.data[0] = 1.0;
    let g = backward(&set, &cam, &out, &d).unwrap();
    let loss = |s: &GaussianSet| render(s, &cam, &cfg).radiance.data[0];
    let fd = finite_diff_scalar(&set, &loss, ParamGroup::Opacity, 0, 1e-4);
    let a = g.params.opacities[0];
    assert!((a - fd).abs() <= 1e-5 * fd.abs(), "{a} vs {fd}");
}

#[test]
fn homogeneous_weight_gradient_chain() {
    let (set, cam) = single_gaussian_setup(Parametrization::Homogeneous);
    let cfg = RenderConfig::default();
    let out = render(&set, &cam, &cfg);
    let mut d = Image::new(1, 1);
    d.data = vec![1.0, 0.5, -0.25];
    let g = backward(&set, &cam, &out, &d).unwrap();
    let loss = |s: &GaussianSet| {
        let r = render(s, &cam, &cfg).radiance.data;
        r[0] + 0.5 * r[1] - 0.25 * r[2]
    };
    let fd = finite_diff_scalar(&set, &loss, ParamGroup::Weight, 0, 1e-4);
    let a = g.params.weights[0];
    assert!((a - fd).abs() <= 1e-4 * fd.abs() + 1e-12, "{a} vs {fd}");

    // The same value through the explicit chain: dL/drho =
    // -(dL/dmu . mu_tilde) e^-rho - sum_i dL/ds_i e^(log s~_i - rho).
    let raw = set.raw_geometry(0);
    let cart_grad = {
        let mut c = GaussianSet::new(Parametrization::Cartesian, 0);
        let mu = set.decode_mean(0).unwrap();
        let s = set.decode_scale(0).unwrap();
        let cr = RawGeometry::cartesian(mu.into(), s.map(f64::ln).into(), raw.rotation);
        c.push(&cr, set.params.opacities[0], set.params.sh_dc[0], &[]);
        let o = render(&c, &cam, &cfg);
        backward(&c, &cam, &o, &d).unwrap()
    };
    let d_mu = Vector3::from(cart_grad.params.positions[0]);
    // Cartesian log-scale gradient is dL/ds * s.
    let d_s_times_s: f64 = cart_grad.params.log_scales[0].iter().sum();
    let e = (-raw.weight).exp();
    let expected = -d_mu.dot(&Vector3::from(raw.position)) * e - d_s_times_s;
    assert!((a - expected).abs() <= 1e-9 * expected.abs().max(1e-12), "{a} vs {expected}");
}

#[test]
fn backward_is_linear_in_upstream() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = GradcheckSceneSpec::default();
    let (set, cam) = random_gradcheck_scene(&mut rng, Parametrization::InvertedSpherical, &spec);
    let out = render(&set, &cam, &RenderConfig::default());
    let g1 = random_weights(&mut rng, cam.width, cam.height);
    let g2 = random_weights(&mut rng, cam.width, cam.height);
    let (a, b) = (0.7, -1.3);
    let mut combo = g1.clone();
    for (c, v) in combo.data.iter_mut().zip(&g2.data) {
        *c = a * *c + b * v;
    }
    let r1 = backward(&set, &cam, &out, &g1).unwrap();
    let r2 = backward(&set, &cam, &out, &g2).unwrap();
    let rc = backward(&set, &cam, &out, &combo).unwrap();
    for group in ParamGroup::ALL {
        for ((x, y), z) in r1
            .params
            .group(group)
            .iter()
            .zip(r2.params.group(group))
            .zip(rc.params.group(group))
        {
            assert!((a * x + b * y - z).abs() <= 1e-10, "{}", group.name());
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for p in Parametrization::ALL {
        for _ in 0..3 {
            let (set, cam) = random_gradcheck_scene(&mut rng, p, &GradcheckSceneSpec::default());
            let weights = random_weights(&mut rng, cam.width, cam.height);
            let cfg = RenderConfig::default();
            let out = render(&set, &cam, &cfg);
            let analytic = backward(&set, &cam, &out, &weights).unwrap();
            let numeric = finite_diff_gradients(&set, &cam, &cfg, weighted_loss(&weights), 1e-4);
            for group in ParamGroup::ALL {
                for (k, (a, f)) in analytic
                    .params
                    .group(group)
                    .iter()
                    .zip(numeric.params.group(group))
                    .enumerate()
                {
                    assert!(
                        rel_err(*a, *f) <= 1e-3,
                        "{p} {}[{k}]: analytic {a} numeric {f}",
                        group.name()
                    );
                }
            }
        }
    }
}

#[test]
fn rescale_keeps_loss_and_transforms_weight_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (set, cam) =
        random_gradcheck_scene(&mut rng, Parametrization::Homogeneous, &GradcheckSceneSpec::default());
    let weights = random_weights(&mut rng, cam.width, cam.height);
    let cfg = RenderConfig::default();
    let loss = weighted_loss(&weights);
    let k = 7.5;
    let mut scaled = set.clone();
    for i in 0..set.len() {
        let r = rescale_homogeneous(&set.raw_geometry(i), k).unwrap();
        scaled.set_raw_geometry(i, &r);
    }
    let (o0, o1) = (render(&set, &cam, &cfg), render(&scaled, &cam, &cfg));
    assert!((loss(&o0) - loss(&o1)).abs() <= 1e-8 * loss(&o0).abs().max(1.0));
    let g0 = backward(&set, &cam, &o0, &weights).unwrap();
    let g1 = backward(&scaled, &cam, &o1, &weights).unwrap();
    // Decoded quantities are invariant, so dL/dmu~ scales by 1/k while the
    // weight and log-scale gradients are unchanged. Invariance along the
    // class also gives dL/dmu~ . mu~ + dL/drho + sum dL/dls = 0.
    for i in 0..set.len() {
        let gp0 = Vector3::from(g0.params.positions[i]);
        let gp1 = Vector3::from(g1.params.positions[i]);
        let tol = 1e-8 * gp0.norm().max(g0.params.weights[i].abs()).max(1e-12);
        assert!((gp1 * k - gp0).norm() <= tol);
        assert!((g1.params.weights[i] - g0.params.weights[i]).abs() <= tol);
        for a in 0..3 {
            assert!((g1.params.log_scales[i][a] - g0.params.log_scales[i][a]).abs() <= tol);
        }
        let ls0: f64 = g0.params.log_scales[i].iter().sum();
        let euler = gp0.dot(&Vector3::from(set.params.positions[i])) + g0.params.weights[i] + ls0;
        assert!(euler.abs() <= tol, "gaussian {i}: {euler}");
    }
}

#[test]
fn worker_count_does_not_change_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let spec = GradcheckSceneSpec {
        max_gaussians: 40,
        min_size: 40,
        max_size: 40,
    };
    let (set, cam) = random_gradcheck_scene(&mut rng, Parametrization::Cartesian, &spec);
    let weights = random_weights(&mut rng, cam.width, cam.height);
    let out = render(&set, &cam, &RenderConfig::default());
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(5).build().unwrap();
    let a = one.install(|| backward(&set, &cam, &out, &weights).unwrap());
    let b = many.install(|| backward(&set, &cam, &out, &weights).unwrap());
    assert_eq!(a, b);
}

#[test]
fn fd_of_constant_loss_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (set, cam) =
        random_gradcheck_scene(&mut rng, Parametrization::Cartesian, &GradcheckSceneSpec::default());
    let g = finite_diff_gradients(&set, &cam, &RenderConfig::default(), |_| 3.0, 1e-4);
    for group in ParamGroup::ALL {
        assert!(g.params.group(group).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn fd_of_quadratic_position_loss() {
    // L = sum_i |mu_i - c|^2 has gradient 2 (mu_i - c); central differences
    // are exact for quadratics up to rounding.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (set, _) =
        random_gradcheck_scene(&mut rng, Parametrization::Cartesian, &GradcheckSceneSpec::default());
    let c = Vector3::new(0.1, 0.2, 3.0);
    let loss = |s: &GaussianSet| -> f64 {
        s.params
            .positions
            .iter()
            .map(|p| (Vector3::from(*p) - c).norm_squared())
            .sum()
    };
    let g = finite_diff_set_gradients(&set, loss, 1e-4);
    for (fd, p) in g.params.positions.iter().zip(&set.params.positions) {
        for a in 0..3 {
            assert!((fd[a] - 2.0 * (p[a] - c[a])).abs() < 1e-8);
        }
    }
    assert!(g.params.group(ParamGroup::Opacity).iter().all(|&v| v == 0.0));
}
