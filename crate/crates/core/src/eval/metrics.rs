use crate::image::Image;
use crate::Result;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(pred: &Image, gt: &Image) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let mse = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR over the pixels where `mask` is set; `None` for an empty mask.
pub fn masked_psnr(pred: &Image, gt: &Image, mask: &[bool]) -> Result<Option<f64>> {
    pred.check_same_shape(gt)?;
    check_mask(pred, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ch in 0..3 {
            let d = pred.data[k * 3 + ch] - gt.data[k * 3 + ch];
            sum += d * d;
        }
        n += 3;
    }
    Ok((n > 0).then(|| psnr_from_mse(sum / n as f64)))
}

fn check_mask(img: &Image, mask: &[bool]) -> Result<()> {
    if mask.len() != img.pixel_count() {
        return Err(crate::Error::ShapeMismatch(format!(
            "mask has {} entries, image has {} pixels",
            mask.len(),
            img.pixel_count()
        )));
    }
    Ok(())
}

/// Normalized 1D Gaussian window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "same" filtering with zero padding. The window is symmetric,
/// so this is also its own adjoint.
fn filter(plane: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += wk * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in win.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += wk * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Local statistics of one channel pair, kept for the gradient.
struct ChannelSsim {
    map: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn channel_ssim(x: &[f64], y: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> ChannelSsim {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter(x, w, h, win);
    let my = filter(y, w, h, win);
    let exx = filter(&xx, w, h, win);
    let eyy = filter(&yy, w, h, win);
    let exy = filter(&xy, w, h, win);
    let n = w * h;
    let (mut map, mut a1, mut a2, mut b1, mut b2) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let sxx = exx[k] - mx[k] * mx[k];
        let syy = eyy[k] - my[k] * my[k];
        let sxy = exy[k] - mx[k] * my[k];
        a1[k] = 2.0 * mx[k] * my[k] + SSIM_C1;
        a2[k] = 2.0 * sxy + SSIM_C2;
        b1[k] = mx[k] * mx[k] + my[k] * my[k] + SSIM_C1;
        b2[k] = sxx + syy + SSIM_C2;
        map[k] = a1[k] * a2[k] / (b1[k] * b2[k]);
    }
    ChannelSsim {
        map,
        mx,
        my,
        a1,
        a2,
        b1,
        b2,
    }
}

/// Per-pixel SSIM averaged over the three channels.
pub fn ssim_map(pred: &Image, gt: &Image) -> Result<Vec<f64>> {
    pred.check_same_shape(gt)?;
    let (w, h) = (pred.width, pred.height);
    let win = gaussian_window();
    let mut out = vec![0.0; w * h];
    for ch in 0..3 {
        let c = channel_ssim(&pred.channel(ch), &gt.channel(ch), w, h, &win);
        for (o, v) in out.iter_mut().zip(&c.map) {
            *o += v / 3.0;
        }
    }
    Ok(out)
}

pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    let map = ssim_map(pred, gt)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean of the full-image SSIM map over the masked pixels; `None` for an
/// empty mask.
pub fn masked_ssim(pred: &Image, gt: &Image, mask: &[bool]) -> Result<Option<f64>> {
    check_mask(pred, mask)?;
    let map = ssim_map(pred, gt)?;
    let (sum, n) = map
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}

/// Mean SSIM and its gradient with respect to `pred`.
pub fn ssim_with_grad(pred: &Image, gt: &Image) -> Result<(f64, Image)> {
    pred.check_same_shape(gt)?;
    let (w, h) = (pred.width, pred.height);
    let n = w * h;
    let win = gaussian_window();
    let norm = 1.0 / (3 * n) as f64;
    let mut total = 0.0;
    let mut grad = Image::new(w, h);
    for ch in 0..3 {
        let x = pred.channel(ch);
        let y = gt.channel(ch);
        let c = channel_ssim(&x, &y, w, h, &win);
        total += c.map.iter().sum::<f64>();
        let mut g_mx = vec![0.0; n];
        let mut g_exx = vec![0.0; n];
        let mut g_exy = vec![0.0; n];
        for k in 0..n {
            let s = c.map[k];
            let b = c.b1[k] * c.b2[k];
            g_mx[k] = norm
                * (2.0 * c.my[k] * (c.a2[k] - c.a1[k]) / b
                    - 2.0 * s * c.mx[k] * (1.0 / c.b1[k] - 1.0 / c.b2[k]));
            g_exx[k] = -norm * s / c.b2[k];
            g_exy[k] = norm * 2.0 * c.a1[k] / b;
        }
        let t_mx = filter(&g_mx, w, h, &win);
        let t_exx = filter(&g_exx, w, h, &win);
        let t_exy = filter(&g_exy, w, h, &win);
        for k in 0..n {
            grad.data[k * 3 + ch] = t_mx[k] + 2.0 * x[k] * t_exx[k] + y[k] * t_exy[k];
        }
    }
    Ok((total * norm, grad))
}
