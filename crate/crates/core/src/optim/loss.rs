use crate::eval::ssim_with_grad;
use crate::image::Image;
use crate::Result;

/// `(1 - lambda) * L1 + lambda * (1 - SSIM)` and its gradient with respect
/// to `pred`. L1 is the mean over all channel values.
pub fn photometric_loss(pred: &Image, gt: &Image, lambda_dssim: f64) -> Result<(f64, Image)> {
    pred.check_same_shape(gt)?;
    let n = pred.data.len() as f64;
    let mut l1 = 0.0;
    let mut grad = Image::new(pred.width, pred.height);
    for ((g, &p), &t) in grad.data.iter_mut().zip(&pred.data).zip(&gt.data) {
        let d = p - t;
        l1 += d.abs();
        // Zero subgradient at d == 0.
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g = (1.0 - lambda_dssim) * sign / n;
    }
    l1 /= n;
    let mut loss = (1.0 - lambda_dssim) * l1;
    if lambda_dssim > 0.0 {
        let (s, ds) = ssim_with_grad(pred, gt)?;
        loss += lambda_dssim * (1.0 - s);
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= lambda_dssim * d;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        let data = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_data(w, h, data).unwrap()
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 9, 7);
        let (l, _) = photometric_loss(&a, &a, 0.2).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pred = random_image(&mut rng, 12, 10);
        let gt = random_image(&mut rng, 12, 10);
        let (_, g) = photometric_loss(&pred, &gt, 0.2).unwrap();
        let h = 1e-6;
        for k in (0..pred.data.len()).step_by(17) {
            let mut a = pred.clone();
            let mut b = pred.clone();
            a.data[k] += h;
            b.data[k] -= h;
            let fd = (photometric_loss(&a, &gt, 0.2).unwrap().0
                - photometric_loss(&b, &gt, 0.2).unwrap().0)
                / (2.0 * h);
            assert!((fd - g.data[k]).abs() < 1e-7, "{k}: {fd} vs {}", g.data[k]);
        }
    }

    #[test]
    fn pure_l1() {
        let a = Image::filled(4, 4, [0.5; 3]);
        let b = Image::filled(4, 4, [0.25; 3]);
        let (l, g) = photometric_loss(&a, &b, 0.0).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert!(g.data.iter().all(|&v| (v - 1.0 / 48.0).abs() < 1e-15));
    }
}
