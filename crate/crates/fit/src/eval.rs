//! Quality metrics and the reference resampler.
//!
//! The bicubic resizer is the Catmull-Rom (a = -0.5) separable kernel with
//! half-pixel centering, edge clamping, per-tap weight normalization, and —
//! crucially — kernel widening when downscaling. That widening (antialias)
//! is what the standard super-resolution baselines assume; without it a
//! synthesized LR input carries aliasing the baselines never saw and every
//! published number is off by tenths of a dB.

use crate::error::Error;
use crate::fft::{fft2, fftshift2_r};
use crate::model::{fit_forward, scaled_extent, ModelParams};
use crate::tensor::Tensor;
use crate::Result;

/// Peak signal-to-noise ratio in dB over all channels; both images are
/// clamped to `[0, peak]` first (model output is not clipped elsewhere).
/// Indistinguishable images (MSE below 1e-12) report the 99 dB cap, and
/// the cap also bounds the value from above so the scale stays finite.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(crate::error::shape_err("psnr", a.dims(), b.dims()));
    }
    let clamp = |v: f64| v.clamp(0.0, peak);
    let n = a.numel() as f64;
    let mut mse = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        let d = clamp(x) - clamp(y);
        mse += d * d;
    }
    mse /= n;
    if mse <= 1e-12 {
        return Ok(99.0);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(99.0))
}

/// BT.601 luma plane of an RGB image, `[3,h,w] -> [1,h,w]`.
pub fn luma(img: &Tensor) -> Result<Tensor> {
    if img.rank() != 3 || img.dims()[0] != 3 {
        return Err(Error::Shape(format!(
            "luma wants a [3,h,w] image, got {:?}",
            img.dims()
        )));
    }
    let (h, w) = (img.dims()[1], img.dims()[2]);
    let mut out = Tensor::zeros(&[1, h, w]);
    let hw = h * w;
    let d = img.data();
    for p in 0..hw {
        out.data_mut()[p] = 0.299 * d[p] + 0.587 * d[hw + p] + 0.114 * d[2 * hw + p];
    }
    Ok(out)
}

fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index source taps for one axis. When shrinking, the kernel
/// is stretched by the inverse ratio so it averages everything a target
/// pixel covers; out-of-range taps clamp to the border.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    let ratio = n_out as f64 / n_in as f64;
    let scale = ratio.min(1.0);
    let support = 2.0 / scale;
    let mut all = Vec::with_capacity(n_out);
    for d in 0..n_out {
        let src = (d as f64 + 0.5) / ratio - 0.5;
        let lo = (src - support).ceil() as isize;
        let hi = (src + support).floor() as isize;
        let mut idx = Vec::new();
        let mut wts = Vec::new();
        let mut sum = 0.0;
        for j in lo..=hi {
            let w = cubic((src - j as f64) * scale);
            if w == 0.0 {
                continue;
            }
            idx.push(j.clamp(0, n_in as isize - 1) as usize);
            wts.push(w);
            sum += w;
        }
        for w in &mut wts {
            *w /= sum;
        }
        all.push((idx, wts));
    }
    all
}

/// Bicubic resize of a `[c, h, w]` image to explicit output extents.
/// Height is resampled first, then width.
pub fn bicubic_resize_to(img: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    if img.rank() != 3 {
        return Err(Error::Shape(format!(
            "bicubic_resize wants a [c,h,w] image, got {:?}",
            img.dims()
        )));
    }
    if oh == 0 || ow == 0 {
        return Err(Error::Usage(format!("cannot resize to {oh}x{ow}")));
    }
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);

    let row_taps = axis_taps(h, oh);
    let mut tmp = Tensor::zeros(&[c, oh, w]);
    for ch in 0..c {
        for (r, (idx, wts)) in row_taps.iter().enumerate() {
            for col in 0..w {
                let mut acc = 0.0;
                for (j, &src) in idx.iter().enumerate() {
                    acc += wts[j] * img.at3(ch, src, col);
                }
                tmp.set3(ch, r, col, acc);
            }
        }
    }

    let col_taps = axis_taps(w, ow);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for r in 0..oh {
            for (col, (idx, wts)) in col_taps.iter().enumerate() {
                let mut acc = 0.0;
                for (j, &src) in idx.iter().enumerate() {
                    acc += wts[j] * tmp.at3(ch, r, src);
                }
                out.set3(ch, r, col, acc);
            }
        }
    }
    Ok(out)
}

/// Bicubic resize by scale factors (up or down), output extents following
/// the same `round(eta * extent)` law as the model.
pub fn bicubic_resize(img: &Tensor, eta_h: f64, eta_w: f64) -> Result<Tensor> {
    if !(eta_h > 0.0 && eta_w > 0.0 && eta_h.is_finite() && eta_w.is_finite()) {
        return Err(Error::Usage(format!(
            "scale factors must be positive, got ({eta_h}, {eta_w})"
        )));
    }
    let oh = scaled_extent(img.dims()[1], eta_h).max(1);
    let ow = scaled_extent(img.dims()[2], eta_w).max(1);
    bicubic_resize_to(img, oh, ow)
}

/// Where the reconstruction lost (or hallucinated) spectral energy:
/// `| log(1+|F(sr_luma)|) - log(1+|F(hr_luma)|) |`, DC shifted to the
/// center. Returns an `[h, w]` map.
pub fn frequency_error_map(sr: &Tensor, hr: &Tensor) -> Result<Tensor> {
    if sr.dims() != hr.dims() {
        return Err(crate::error::shape_err("frequency_error_map", sr.dims(), hr.dims()));
    }
    let (h, w) = (sr.dims()[1], sr.dims()[2]);
    let fa = fft2(&luma(sr)?)?;
    let fb = fft2(&luma(hr)?)?;
    let mut map = Tensor::zeros(&[h, w]);
    for i in 0..h * w {
        let ma = (fa.re().data()[i].powi(2) + fa.im().data()[i].powi(2)).sqrt();
        let mb = (fb.re().data()[i].powi(2) + fb.im().data()[i].powi(2)).sqrt();
        map.data_mut()[i] = ((1.0 + ma).ln() - (1.0 + mb).ln()).abs();
    }
    fftshift2_r(&map)
}

/// Render an error map as RGB: strong error is red, no error is green.
pub fn render_error_map(map: &Tensor) -> Result<Tensor> {
    if map.rank() != 2 {
        return Err(Error::Shape(format!(
            "render wants an [h,w] map, got {:?}",
            map.dims()
        )));
    }
    let (h, w) = (map.dims()[0], map.dims()[1]);
    let peak = map.abs_max();
    let mut out = Tensor::zeros(&[3, h, w]);
    for p in 0..h * w {
        let t = if peak > 0.0 { map.data()[p] / peak } else { 0.0 };
        out.data_mut()[p] = t; // red
        out.data_mut()[h * w + p] = 1.0 - t; // green
    }
    Ok(out)
}

/// One evaluation at integer-or-fractional scale `eta` against a ground
/// truth image, following the standard protocol: crop the ground truth so
/// the scale divides it under the rounding law, synthesize the LR input
/// with the antialiased bicubic resampler, reconstruct, and score PSNR.
/// `model = None` scores the bicubic upsampling baseline itself.
pub fn eval_pair(
    hr: &Tensor,
    eta: f64,
    model: Option<&ModelParams>,
    luma_only: bool,
) -> Result<f64> {
    if !(eta >= 1.0 && eta.is_finite()) {
        return Err(Error::Usage(format!("evaluation scale must be >= 1, got {eta}")));
    }
    let (h, w) = (hr.dims()[1], hr.dims()[2]);
    let (lh, lw) = ((h as f64 / eta).floor() as usize, (w as f64 / eta).floor() as usize);
    if lh == 0 || lw == 0 {
        return Err(Error::Usage(format!(
            "image {h}x{w} is smaller than one LR pixel at scale {eta}"
        )));
    }
    let (oh, ow) = (scaled_extent(lh, eta), scaled_extent(lw, eta));
    let rows = crate::tensor::slice_axis(hr, 1, 0, oh)?;
    let truth = crate::tensor::slice_axis(&rows, 2, 0, ow)?;
    let lr = bicubic_resize_to(&truth, lh, lw)?;
    let sr = match model {
        // effective per-axis factors absorb the crop rounding so the
        // model's output extents land exactly on the cropped truth
        Some(params) => fit_forward(&lr, oh as f64 / lh as f64, ow as f64 / lw as f64, params)?,
        None => bicubic_resize_to(&lr, oh, ow)?,
    };
    if luma_only {
        psnr(&luma(&sr)?, &luma(&truth)?, 1.0)
    } else {
        psnr(&sr, &truth, 1.0)
    }
}
