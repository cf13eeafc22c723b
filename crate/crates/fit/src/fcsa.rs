//! Spectral cross-similarity attention over a whole feature map.
//!
//! Queries, keys, and values come from one pointwise `channels -> 3*channels`
//! projection. Queries and keys are moved into the 2-D Fourier domain, the
//! pairwise pixel similarity matrix is formed there, and every column of
//! that complex matrix is brought back to the spatial domain by an inverse
//! transform before the real part feeds a row softmax:
//!
//! ```text
//! [q | k | v] = qkv_pconv(z)
//! Fq, Fk      = fft2(q), fft2(k)           flattened to [n, c]
//! M           = Fq Fk^T                    [n, n], no conjugation
//! R[:, j]     = Re(ifft2(M[:, j] as a map))
//! out         = softmax(R / sqrt(c)) V + z   rows, per pixel
//! ```
//!
//! The map is quadratic in the pixel count, so the forward refuses inputs
//! with more than `token_limit` pixels instead of silently thrashing.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Error;
use crate::tensor::Tensor;
use crate::Result;

/// Learnable state: one fused query/key/value projection.
#[derive(Debug, Clone)]
pub struct FcsaParams {
    pub qkv_w: Tensor,
    pub qkv_b: Tensor,
}

/// Tape handles for a registered [`FcsaParams`].
#[derive(Debug, Clone, Copy)]
pub struct FcsaVars {
    pub qkv_w: Var,
    pub qkv_b: Var,
}

impl FcsaParams {
    pub fn init(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        FcsaParams {
            qkv_w: Tensor::rand_uniform(&[3 * channels, channels], -bound, bound, rng),
            qkv_b: Tensor::zeros(&[3 * channels]),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        FcsaParams {
            qkv_w: Tensor::zeros(&[3 * channels, channels]),
            qkv_b: Tensor::zeros(&[3 * channels]),
        }
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.qkv.w"), self.qkv_w.clone()));
        out.push((format!("{prefix}.qkv.b"), self.qkv_b.clone()));
    }

    pub fn register(&self, tape: &mut Tape, prefix: &str, trainable: bool) -> Result<FcsaVars> {
        let (w, b) = if trainable {
            (
                tape.param(&format!("{prefix}.qkv.w"), self.qkv_w.clone())?,
                tape.param(&format!("{prefix}.qkv.b"), self.qkv_b.clone())?,
            )
        } else {
            (tape.constant(self.qkv_w.clone()), tape.constant(self.qkv_b.clone()))
        };
        Ok(FcsaVars { qkv_w: w, qkv_b: b })
    }
}

/// Full-map attention: every output pixel is a softmax-weighted mix of the
/// value rows plus the untouched input feature at that pixel. Returns a
/// `[c, h, w]` map that queries then sample from.
pub fn attn_map_on(tape: &mut Tape, z: Var, vars: &FcsaVars, token_limit: usize) -> Result<Var> {
    let dims = tape.value(z).dims().to_vec();
    if dims.len() != 3 {
        return Err(Error::Shape(format!(
            "spectral attention wants a [c,h,w] map, got {dims:?}"
        )));
    }
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let n = h * w;
    if n > token_limit {
        return Err(Error::Config(format!(
            "feature map has {n} pixels, over the spectral-attention limit of {token_limit}; \
             shrink the input or raise the limit"
        )));
    }

    let qkv = tape.pconv(z, vars.qkv_w, vars.qkv_b)?;
    let q = tape.slice_axis(qkv, 0, 0, c)?;
    let k = tape.slice_axis(qkv, 0, c, c)?;
    let v = tape.slice_axis(qkv, 0, 2 * c, c)?;

    // Similarity in the frequency domain: row i of the flattened spectra
    // holds every channel's coefficient at bin i, so M[i][j] pairs bins
    // across the two spectra with a channel contraction and no conjugation.
    let fq = tape.fft2(q)?;
    let fk = tape.fft2(k)?;
    let fq_flat = tape.c_reshape(fq, &[c, n])?;
    let fq_rows = tape.c_transpose2(fq_flat)?; // [n, c]
    let fk_cols = tape.c_reshape(fk, &[c, n])?; // [c, n] == Fk^T, no conjugate
    let m = tape.c_matmul(fq_rows, fk_cols)?; // [n, n]

    // Column j of M, reshaped to [h, w], is a spectrum; its inverse
    // transform's real part becomes column j of the similarity matrix.
    let m_t = tape.c_transpose2(m)?;
    let col_maps = tape.c_reshape(m_t, &[n, h, w])?;
    let back = tape.ifft2(col_maps)?;
    let back_re = tape.c_re(back);
    let cols_flat = tape.reshape(back_re, &[n, n])?;
    let sim = tape.transpose2(cols_flat)?;
    let sim = tape.scale(sim, 1.0 / (c as f64).sqrt());
    let weights = tape.softmax(sim, 1)?;

    let v_flat = tape.reshape(v, &[c, n])?;
    let v_rows = tape.transpose2(v_flat)?; // [n, c]
    let mixed = tape.matmul(weights, v_rows)?; // [n, c]

    let z_flat = tape.reshape(z, &[c, n])?;
    let z_rows = tape.transpose2(z_flat)?;
    let out_rows = tape.add(mixed, z_rows)?;
    let out_flat = tape.transpose2(out_rows)?;
    tape.reshape(out_flat, &[c, h, w])
}

/// One query's slice of the attention map: nearest sample at the key-grid
/// center (an exact LR pixel center), returned as `[1, c]`.
pub fn sample_at_center_on(tape: &mut Tape, attn_map: Var, center: (f64, f64)) -> Result<Var> {
    let coords = Tensor::new(vec![1, 2], vec![center.0, center.1])?;
    tape.nearest_sample(attn_map, &coords)
}

/// Pure wrapper: attention map for a feature map.
pub fn fcsa_map(z: &Tensor, params: &FcsaParams, token_limit: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = params.register(&mut tape, "fcsa", false)?;
    let out = attn_map_on(&mut tape, zv, &vars, token_limit)?;
    Ok(tape.value(out).clone())
}

/// Pure wrapper: one query row sampled from the attention map.
pub fn fcsa_forward(
    z: &Tensor,
    center: (f64, f64),
    params: &FcsaParams,
    token_limit: usize,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = params.register(&mut tape, "fcsa", false)?;
    let map = attn_map_on(&mut tape, zv, &vars, token_limit)?;
    let out = sample_at_center_on(&mut tape, map, center)?;
    Ok(tape.value(out).clone())
}
