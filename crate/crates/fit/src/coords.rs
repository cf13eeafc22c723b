//! Coordinate conventions, samplers, and the positional encoding.
//!
//! Every image axis is normalized to [-1, 1] with pixel centers at
//! `-1 + (2r+1)/n`, so low-resolution and high-resolution grids share one
//! continuous domain and a scale factor never appears in sampling code.
//! The HR pixel footprint ("cell") is `2/(eta * n)` per axis.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Center of pixel `r` on an axis with `n` pixels.
#[inline]
pub fn pixel_center(r: usize, n: usize) -> f64 {
    -1.0 + (2.0 * r as f64 + 1.0) / n as f64
}

/// Map a normalized coordinate to continuous pixel space, where pixel `r`
/// sits at position `r` exactly.
#[inline]
fn to_pixel(t: f64, n: usize) -> f64 {
    (t + 1.0) * n as f64 / 2.0 - 0.5
}

/// The full pixel-center grid of an HxW image: `coords` is [h*w, 2] with
/// rows (y, x) in row-major pixel order, `cell` repeats the per-axis pixel
/// extent (2/h, 2/w) for every row.
pub struct CoordGrid {
    pub coords: Tensor,
    pub cell: Tensor,
}

pub fn make_coord_grid(h: usize, w: usize) -> Result<CoordGrid> {
    if h == 0 || w == 0 {
        return Err(Error::Usage(format!("coordinate grid for empty image {h}x{w}")));
    }
    let mut coords = Vec::with_capacity(h * w * 2);
    let mut cell = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            coords.push(pixel_center(r, h));
            coords.push(pixel_center(c, w));
            cell.push(2.0 / h as f64);
            cell.push(2.0 / w as f64);
        }
    }
    Ok(CoordGrid {
        coords: Tensor::new(vec![h * w, 2], coords)?,
        cell: Tensor::new(vec![h * w, 2], cell)?,
    })
}

/// Cell (HR pixel footprint) for upscaling an HxW image by (eta_h, eta_w).
pub fn cell_for_scale(eta_h: f64, eta_w: f64, h: usize, w: usize) -> Result<(f64, f64)> {
    if eta_h <= 0.0 || eta_w <= 0.0 || h == 0 || w == 0 {
        return Err(Error::Usage(format!(
            "cell_for_scale wants positive scales and extents, got eta=({eta_h}, {eta_w}) on {h}x{w}"
        )));
    }
    Ok((2.0 / (eta_h * h as f64), 2.0 / (eta_w * w as f64)))
}

/// One bilinear lookup: four flattened pixel indices and their weights.
/// Out-of-range coordinates are clamped to the border pixel, so border
/// queries degrade to nearest-edge sampling instead of reading zeros.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTap {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

fn axis_taps(t: f64, n: usize) -> (usize, usize, f64) {
    let p = to_pixel(t, n).clamp(0.0, (n - 1) as f64);
    let lo = p.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    (lo, hi, p - lo as f64)
}

/// Bilinear taps for each row of an [n, 2] coordinate tensor against an
/// HxW grid.
pub fn bilinear_taps(h: usize, w: usize, coords: &Tensor) -> Result<Vec<BilinearTap>> {
    if coords.rank() != 2 || coords.dims()[1] != 2 {
        return Err(Error::Shape(format!(
            "coords must be [n, 2], got {:?}",
            coords.dims()
        )));
    }
    let n = coords.dims()[0];
    let mut taps = Vec::with_capacity(n);
    for i in 0..n {
        let (y0, y1, fy) = axis_taps(coords.at2(i, 0), h);
        let (x0, x1, fx) = axis_taps(coords.at2(i, 1), w);
        taps.push(BilinearTap {
            idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
            w: [
                (1.0 - fy) * (1.0 - fx),
                (1.0 - fy) * fx,
                fy * (1.0 - fx),
                fy * fx,
            ],
        });
    }
    Ok(taps)
}

fn nearest_axis(t: f64, n: usize) -> usize {
    let p = to_pixel(t, n).clamp(0.0, (n - 1) as f64);
    let lo = p.floor();
    // Ties break toward the lower index.
    if p - lo > 0.5 {
        lo as usize + 1
    } else {
        lo as usize
    }
}

/// Flattened nearest-pixel index per coordinate row.
pub fn nearest_indices(h: usize, w: usize, coords: &Tensor) -> Result<Vec<usize>> {
    if coords.rank() != 2 || coords.dims()[1] != 2 {
        return Err(Error::Shape(format!(
            "coords must be [n, 2], got {:?}",
            coords.dims()
        )));
    }
    let n = coords.dims()[0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let y = nearest_axis(coords.at2(i, 0), h);
        let x = nearest_axis(coords.at2(i, 1), w);
        out.push(y * w + x);
    }
    Ok(out)
}

/// Sample a [c, h, w] feature map at [n, 2] coordinates -> [n, c].
pub fn bilinear_sample(feat: &Tensor, coords: &Tensor) -> Result<Tensor> {
    if feat.rank() != 3 {
        return Err(Error::Shape(format!(
            "bilinear_sample wants a [c,h,w] map, got {:?}",
            feat.dims()
        )));
    }
    let (c, h, w) = (feat.dims()[0], feat.dims()[1], feat.dims()[2]);
    let taps = bilinear_taps(h, w, coords)?;
    let n = taps.len();
    let hw = h * w;
    let mut out = vec![0.0; n * c];
    for (i, tap) in taps.iter().enumerate() {
        for ch in 0..c {
            let plane = &feat.data()[ch * hw..(ch + 1) * hw];
            out[i * c + ch] = tap.w[0] * plane[tap.idx[0]]
                + tap.w[1] * plane[tap.idx[1]]
                + tap.w[2] * plane[tap.idx[2]]
                + tap.w[3] * plane[tap.idx[3]];
        }
    }
    Tensor::new(vec![n, c], out)
}

/// Nearest-pixel sampling of a [c, h, w] map at [n, 2] coordinates -> [n, c].
pub fn nearest_sample(feat: &Tensor, coords: &Tensor) -> Result<Tensor> {
    if feat.rank() != 3 {
        return Err(Error::Shape(format!(
            "nearest_sample wants a [c,h,w] map, got {:?}",
            feat.dims()
        )));
    }
    let (c, h, w) = (feat.dims()[0], feat.dims()[1], feat.dims()[2]);
    let idxs = nearest_indices(h, w, coords)?;
    let hw = h * w;
    let n = idxs.len();
    let mut out = vec![0.0; n * c];
    for (i, &px) in idxs.iter().enumerate() {
        for ch in 0..c {
            out[i * c + ch] = feat.data()[ch * hw + px];
        }
    }
    Tensor::new(vec![n, c], out)
}

/// Resize a `[c, h, w]` image by sampling the source bilinearly at the
/// target's pixel centers. Resizing to the input extents returns the input
/// unchanged, bit for bit.
pub fn bilinear_resize(img: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    if img.rank() != 3 {
        return Err(Error::Shape(format!(
            "bilinear_resize wants a [c,h,w] image, got {:?}",
            img.dims()
        )));
    }
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    if (oh, ow) == (h, w) {
        return Ok(img.clone());
    }
    let grid = make_coord_grid(oh, ow)?;
    let rows = bilinear_sample(img, &grid.coords)?;
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for p in 0..oh * ow {
        for ch in 0..c {
            out.set3(ch, p / ow, p % ow, rows.at2(p, ch));
        }
    }
    Ok(out)
}

/// The local key grid for one query: centered on the LR pixel nearest the
/// query coordinate, spaced at the LR pixel pitch, clamped into [-1, 1].
pub struct QueryGrid {
    /// Center coordinate (an exact LR pixel center).
    pub center: (f64, f64),
    /// [gh*gw, 2] key coordinates in row-major grid order.
    pub coords: Tensor,
}

pub fn make_query_grid(
    theta: (f64, f64),
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
) -> Result<QueryGrid> {
    if gh % 2 == 0 || gw % 2 == 0 || gh == 0 || gw == 0 {
        return Err(Error::Config(format!(
            "query grid sides must be odd and positive, got {gh}x{gw}"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::Usage(format!("query grid over empty map {h}x{w}")));
    }
    let cy = nearest_axis(theta.0, h);
    let cx = nearest_axis(theta.1, w);
    let center = (pixel_center(cy, h), pixel_center(cx, w));
    let (py, px) = (2.0 / h as f64, 2.0 / w as f64);
    let mut coords = Vec::with_capacity(gh * gw * 2);
    let (ry, rx) = ((gh / 2) as isize, (gw / 2) as isize);
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            coords.push((center.0 + dy as f64 * py).clamp(-1.0, 1.0));
            coords.push((center.1 + dx as f64 * px).clamp(-1.0, 1.0));
        }
    }
    Ok(QueryGrid {
        center,
        coords: Tensor::new(vec![gh * gw, 2], coords)?,
    })
}

/// Frequencies pi * 2^(k-1) for k = 1..=p.
pub fn standard_freqs(p: usize) -> Vec<f64> {
    (0..p).map(|k| std::f64::consts::PI * (1u64 << k) as f64).collect()
}

/// Sinusoidal encoding of per-key offsets plus the query cell.
///
/// Row layout: for each frequency `f` in order,
/// `[sin(f*dy), cos(f*dy), sin(f*dx), cos(f*dx)]`, then the two cell
/// entries — width `4p + 2`.
pub fn pos_encode(delta: &Tensor, cell: &Tensor, freqs: &[f64]) -> Result<Tensor> {
    if delta.rank() != 2 || delta.dims()[1] != 2 {
        return Err(Error::Shape(format!(
            "pos_encode delta must be [n, 2], got {:?}",
            delta.dims()
        )));
    }
    if cell.dims() != delta.dims() {
        return Err(crate::error::shape_err("pos_encode cell", delta.dims(), cell.dims()));
    }
    if freqs.is_empty() {
        return Err(Error::Config("pos_encode needs at least one frequency".into()));
    }
    let n = delta.dims()[0];
    let width = 4 * freqs.len() + 2;
    let mut out = Vec::with_capacity(n * width);
    for i in 0..n {
        let (dy, dx) = (delta.at2(i, 0), delta.at2(i, 1));
        for &f in freqs {
            out.push((f * dy).sin());
            out.push((f * dy).cos());
            out.push((f * dx).sin());
            out.push((f * dx).cos());
        }
        out.push(cell.at2(i, 0));
        out.push(cell.at2(i, 1));
    }
    Tensor::new(vec![n, width], out)
}
