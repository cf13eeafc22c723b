//! Scalar-loop oracles shared by the integration suites.
//!
//! Everything here is written from the documented contracts with plain
//! loops over `Vec<f64>` — no tensor ops, no tape, no library helpers — so
//! agreement with the library is evidence the vectorized implementations
//! compute what they claim. Spectra use the unitary transform,
//! `1/sqrt(h*w)` in both directions.

// each integration target compiles its own copy and uses a subset
#![allow(dead_code)]

use fit::fcsa::FcsaParams;
use fit::iisa::IisaParams;
use fit::tensor::Tensor;

pub fn center_of(r: usize, n: usize) -> f64 {
    -1.0 + (2.0 * r as f64 + 1.0) / n as f64
}

pub fn to_pixel_space(t: f64, n: usize) -> f64 {
    ((t + 1.0) * n as f64 / 2.0 - 0.5).clamp(0.0, (n - 1) as f64)
}

pub fn nearest_index(t: f64, n: usize) -> usize {
    let p = to_pixel_space(t, n);
    let lo = p.floor();
    if p - lo > 0.5 {
        lo as usize + 1
    } else {
        lo as usize
    }
}

/// Bilinear read of channel plane `plane` (h x w) at normalized (ty, tx).
pub fn bilinear_at(plane: &[f64], h: usize, w: usize, ty: f64, tx: f64) -> f64 {
    let py = to_pixel_space(ty, h);
    let px = to_pixel_space(tx, w);
    let (y0, x0) = (py.floor() as usize, px.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (py - y0 as f64, px - x0 as f64);
    (1.0 - fy) * (1.0 - fx) * plane[y0 * w + x0]
        + (1.0 - fy) * fx * plane[y0 * w + x1]
        + fy * (1.0 - fx) * plane[y1 * w + x0]
        + fy * fx * plane[y1 * w + x1]
}

pub fn nearest_at(plane: &[f64], h: usize, w: usize, ty: f64, tx: f64) -> f64 {
    plane[nearest_index(ty, h) * w + nearest_index(tx, w)]
}

pub fn plane(map: &Tensor, ch: usize) -> &[f64] {
    let hw = map.dims()[1] * map.dims()[2];
    &map.data()[ch * hw..(ch + 1) * hw]
}

/// Unitary 2-D DFT by direct O(n^2) summation; sign -1 forward, +1 inverse.
pub fn naive_dft2(x: &[(f64, f64)], h: usize, w: usize, sign: f64) -> Vec<(f64, f64)> {
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = (0.0, 0.0);
            for r in 0..h {
                for cc in 0..w {
                    let ang = sign
                        * 2.0
                        * std::f64::consts::PI
                        * (u as f64 * r as f64 / h as f64 + v as f64 * cc as f64 / w as f64);
                    let (cos, sin) = (ang.cos(), ang.sin());
                    let (re, im) = x[r * w + cc];
                    acc.0 += re * cos - im * sin;
                    acc.1 += re * sin + im * cos;
                }
            }
            out[u * w + v] = (acc.0 * norm, acc.1 * norm);
        }
    }
    out
}

/// Local attention for one query, written out long-hand: the key grid, the
/// sin/cos offset encoding and bias MLP, bilinear/nearest sampling, and
/// per-head softmax attention.
pub fn iisa_attend_oracle(
    q_map: &Tensor,
    v_map: &Tensor,
    theta: (f64, f64),
    cell: (f64, f64),
    params: &IisaParams,
) -> Vec<f64> {
    let cfg = &params.cfg;
    let (c, h, w) = (q_map.dims()[0], q_map.dims()[1], q_map.dims()[2]);
    let (gh, gw) = (cfg.grid_h, cfg.grid_w);
    let n_keys = gh * gw;
    let head_c = c / cfg.heads;

    // key grid: pixel-pitch lattice around the LR pixel nearest the query
    let cy = center_of(nearest_index(theta.0, h), h);
    let cx = center_of(nearest_index(theta.1, w), w);
    let (py, px) = (2.0 / h as f64, 2.0 / w as f64);
    let mut keys = Vec::with_capacity(n_keys);
    for dy in 0..gh {
        for dx in 0..gw {
            let oy = dy as f64 - (gh / 2) as f64;
            let ox = dx as f64 - (gw / 2) as f64;
            keys.push((
                (cy + oy * py).clamp(-1.0, 1.0),
                (cx + ox * px).clamp(-1.0, 1.0),
            ));
        }
    }

    // positional bias: sin/cos ladder of the offsets, cell appended, then
    // the two-layer MLP with a ReLU between
    let width = 4 * cfg.pos_freqs + 2;
    let mut bias = vec![vec![0.0; cfg.heads]; n_keys];
    for (j, key) in keys.iter().enumerate() {
        let (dy, dx) = (theta.0 - key.0, theta.1 - key.1);
        let mut enc = Vec::with_capacity(width);
        for k in 0..cfg.pos_freqs {
            let f = std::f64::consts::PI * (1u64 << k) as f64;
            enc.push((f * dy).sin());
            enc.push((f * dy).cos());
            enc.push((f * dx).sin());
            enc.push((f * dx).cos());
        }
        enc.push(cell.0);
        enc.push(cell.1);
        let mut hidden = vec![0.0; cfg.pe_hidden];
        for (t, slot) in hidden.iter_mut().enumerate() {
            let mut acc = params.pe_b1.data()[t];
            for (s, &e) in enc.iter().enumerate() {
                acc += params.pe_w1.at2(t, s) * e;
            }
            *slot = acc.max(0.0);
        }
        for mu in 0..cfg.heads {
            let mut acc = params.pe_b2.data()[mu];
            for (t, &hv) in hidden.iter().enumerate() {
                acc += params.pe_w2.at2(mu, t) * hv;
            }
            bias[j][mu] = acc;
        }
    }

    // sampled rows: query and keys bilinear off the query map, values
    // nearest off the value map
    let q_row: Vec<f64> =
        (0..c).map(|ch| bilinear_at(plane(q_map, ch), h, w, theta.0, theta.1)).collect();
    let k_rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|&(ty, tx)| (0..c).map(|ch| bilinear_at(plane(q_map, ch), h, w, ty, tx)).collect())
        .collect();
    let v_rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|&(ty, tx)| (0..c).map(|ch| nearest_at(plane(v_map, ch), h, w, ty, tx)).collect())
        .collect();

    // per-head softmax attention
    let mut out = vec![0.0; c];
    for mu in 0..cfg.heads {
        let lo = mu * head_c;
        let mut logits = vec![0.0; n_keys];
        for (j, logit) in logits.iter_mut().enumerate() {
            let mut dot = 0.0;
            for d in 0..head_c {
                dot += q_row[lo + d] * k_rows[j][lo + d];
            }
            *logit = bias[j][mu] + dot / (head_c as f64).sqrt();
        }
        let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
        let norm: f64 = exps.iter().sum();
        for (j, &e) in exps.iter().enumerate() {
            let wgt = e / norm;
            for d in 0..head_c {
                out[lo + d] += wgt * v_rows[j][lo + d];
            }
        }
    }
    out
}

/// Whole-map spectral attention sampled at one pixel center, long-hand:
/// fused projection, naive unitary spectra, bin-pair similarity without
/// conjugation, per-column inverse transforms, scaled row softmax, value
/// mixing, and the residual.
pub fn fcsa_forward_oracle(z: &Tensor, center: (f64, f64), params: &FcsaParams) -> Vec<f64> {
    let (c, h, w) = (z.dims()[0], z.dims()[1], z.dims()[2]);
    let n = h * w;

    // fused pointwise projection -> query, key, value planes
    let project = |o: usize, p: usize| -> f64 {
        let mut acc = params.qkv_b.data()[o];
        for i in 0..c {
            acc += params.qkv_w.at2(o, i) * plane(z, i)[p];
        }
        acc
    };
    let mut q = vec![vec![0.0; n]; c];
    let mut k = vec![vec![0.0; n]; c];
    let mut v = vec![vec![0.0; n]; c];
    for ch in 0..c {
        for p in 0..n {
            q[ch][p] = project(ch, p);
            k[ch][p] = project(c + ch, p);
            v[ch][p] = project(2 * c + ch, p);
        }
    }

    // per-channel spectra of the real planes
    let complexify = |real: &[f64]| -> Vec<(f64, f64)> { real.iter().map(|&r| (r, 0.0)).collect() };
    let fq: Vec<Vec<(f64, f64)>> =
        q.iter().map(|pl| naive_dft2(&complexify(pl), h, w, -1.0)).collect();
    let fk: Vec<Vec<(f64, f64)>> =
        k.iter().map(|pl| naive_dft2(&complexify(pl), h, w, -1.0)).collect();

    // bin-pair similarity with a channel contraction, no conjugation
    let mut m = vec![vec![(0.0, 0.0); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = (0.0, 0.0);
            for ch in 0..c {
                let (ar, ai) = fq[ch][i];
                let (br, bi) = fk[ch][j];
                acc.0 += ar * br - ai * bi;
                acc.1 += ar * bi + ai * br;
            }
            *slot = acc;
        }
    }

    // each column of M is a spectrum; its inverse transform's real part is
    // a column of the similarity matrix
    let mut sim = vec![vec![0.0; n]; n];
    for j in 0..n {
        let col: Vec<(f64, f64)> = (0..n).map(|i| m[i][j]).collect();
        let back = naive_dft2(&col, h, w, 1.0);
        for i in 0..n {
            sim[i][j] = back[i].0;
        }
    }

    // scaled row softmax, value mixing, residual
    let scale = 1.0 / (c as f64).sqrt();
    let mut out_rows = vec![vec![0.0; c]; n];
    for i in 0..n {
        let logits: Vec<f64> = sim[i].iter().map(|&s| s * scale).collect();
        let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
        let norm: f64 = exps.iter().sum();
        for ch in 0..c {
            let mut acc = 0.0;
            for j in 0..n {
                acc += exps[j] / norm * v[ch][j];
            }
            out_rows[i][ch] = acc + plane(z, ch)[i];
        }
    }

    let pixel = nearest_index(center.0, h) * w + nearest_index(center.1, w);
    out_rows[pixel].clone()
}
