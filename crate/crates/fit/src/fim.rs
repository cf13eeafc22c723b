//! Frequency integration block.
//!
//! The block lifts a feature map into the 2-D Fourier domain, applies a
//! separate spatial convolution to the real and imaginary planes of the
//! spectrum, adds the untouched spectrum back as a residual, returns to the
//! spatial domain, and mixes channels with a pointwise convolution:
//!
//! ```text
//! F   = fft2(z)
//! F'  = comp(conv_re(Re F), conv_im(Im F)) + F
//! out = pconv(Re(ifft2(F')))
//! ```
//!
//! The spectrum is computed once and reused for both the convolution branch
//! and the residual. Only the real part of the inverse transform feeds the
//! pointwise mix; for exactly Hermitian spectra the imaginary part is zero
//! anyway, and the convolution branch does not preserve Hermitian symmetry,
//! so the projection is what makes the block's output real.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::tensor::Tensor;
use crate::Result;

/// Learnable state for one frequency-integration block. Both spectral
/// convolutions map `channels -> channels` with the same odd kernel size,
/// and the pointwise mix is `channels -> channels`.
#[derive(Debug, Clone)]
pub struct FimParams {
    pub conv_re_w: Tensor,
    pub conv_re_b: Tensor,
    pub conv_im_w: Tensor,
    pub conv_im_b: Tensor,
    pub pconv_w: Tensor,
    pub pconv_b: Tensor,
}

/// Tape handles for a registered [`FimParams`].
#[derive(Debug, Clone, Copy)]
pub struct FimVars {
    pub conv_re_w: Var,
    pub conv_re_b: Var,
    pub conv_im_w: Var,
    pub conv_im_b: Var,
    pub pconv_w: Var,
    pub pconv_b: Var,
}

impl FimParams {
    /// Fan-in-scaled uniform init for the weights, zero biases.
    pub fn init(channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv_bound = 1.0 / ((channels * kernel * kernel) as f64).sqrt();
        let pconv_bound = 1.0 / (channels as f64).sqrt();
        let conv_dims = [channels, channels, kernel, kernel];
        FimParams {
            conv_re_w: Tensor::rand_uniform(&conv_dims, -conv_bound, conv_bound, rng),
            conv_re_b: Tensor::zeros(&[channels]),
            conv_im_w: Tensor::rand_uniform(&conv_dims, -conv_bound, conv_bound, rng),
            conv_im_b: Tensor::zeros(&[channels]),
            pconv_w: Tensor::rand_uniform(&[channels, channels], -pconv_bound, pconv_bound, rng),
            pconv_b: Tensor::zeros(&[channels]),
        }
    }

    /// All-zero parameters; the block then maps every input to zero.
    pub fn zeros(channels: usize, kernel: usize) -> Self {
        FimParams {
            conv_re_w: Tensor::zeros(&[channels, channels, kernel, kernel]),
            conv_re_b: Tensor::zeros(&[channels]),
            conv_im_w: Tensor::zeros(&[channels, channels, kernel, kernel]),
            conv_im_b: Tensor::zeros(&[channels]),
            pconv_w: Tensor::zeros(&[channels, channels]),
            pconv_b: Tensor::zeros(&[channels]),
        }
    }

    /// Identity configuration: both spectral convolutions and the pointwise
    /// mix pass their input through unchanged, so the block computes
    /// `Re(ifft2(F + F)) = 2 z`.
    pub fn identity(channels: usize, kernel: usize) -> Self {
        let mut p = Self::zeros(channels, kernel);
        let mid = kernel / 2;
        for c in 0..channels {
            let at = ((c * channels + c) * kernel + mid) * kernel + mid;
            p.conv_re_w.data_mut()[at] = 1.0;
            p.conv_im_w.data_mut()[at] = 1.0;
            p.pconv_w.data_mut()[c * channels + c] = 1.0;
        }
        p
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (suffix, t) in self.fields() {
            out.push((format!("{prefix}.{suffix}"), t.clone()));
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor); 6] {
        [
            ("conv_re.w", &self.conv_re_w),
            ("conv_re.b", &self.conv_re_b),
            ("conv_im.w", &self.conv_im_w),
            ("conv_im.b", &self.conv_im_b),
            ("pconv.w", &self.pconv_w),
            ("pconv.b", &self.pconv_b),
        ]
    }

    pub fn fields_mut(&mut self) -> [(&'static str, &mut Tensor); 6] {
        [
            ("conv_re.w", &mut self.conv_re_w),
            ("conv_re.b", &mut self.conv_re_b),
            ("conv_im.w", &mut self.conv_im_w),
            ("conv_im.b", &mut self.conv_im_b),
            ("pconv.w", &mut self.pconv_w),
            ("pconv.b", &mut self.pconv_b),
        ]
    }

    /// Register every tensor as a named trainable parameter, or as an
    /// anonymous constant when `trainable` is false (inference).
    pub fn register(&self, tape: &mut Tape, prefix: &str, trainable: bool) -> Result<FimVars> {
        let push = |tape: &mut Tape, suffix: &str, t: &Tensor| -> Result<Var> {
            if trainable {
                tape.param(&format!("{prefix}.{suffix}"), t.clone())
            } else {
                Ok(tape.constant(t.clone()))
            }
        };
        Ok(FimVars {
            conv_re_w: push(tape, "conv_re.w", &self.conv_re_w)?,
            conv_re_b: push(tape, "conv_re.b", &self.conv_re_b)?,
            conv_im_w: push(tape, "conv_im.w", &self.conv_im_w)?,
            conv_im_b: push(tape, "conv_im.b", &self.conv_im_b)?,
            pconv_w: push(tape, "pconv.w", &self.pconv_w)?,
            pconv_b: push(tape, "pconv.b", &self.pconv_b)?,
        })
    }
}

/// One block applied to a `[channels, h, w]` feature map already on the tape.
pub fn forward_on(tape: &mut Tape, z: Var, vars: &FimVars) -> Result<Var> {
    let spectrum = tape.fft2(z)?;
    let re = tape.c_re(spectrum);
    let im = tape.c_im(spectrum);
    let re_f = tape.conv2d(re, vars.conv_re_w, vars.conv_re_b)?;
    let im_f = tape.conv2d(im, vars.conv_im_w, vars.conv_im_b)?;
    let filtered = tape.comp(re_f, im_f)?;
    let merged = tape.c_add(filtered, spectrum)?;
    let spatial = tape.ifft2(merged)?;
    let real = tape.c_re(spatial);
    tape.pconv(real, vars.pconv_w, vars.pconv_b)
}

/// Pure convenience wrapper around [`forward_on`].
pub fn fim_forward(z: &Tensor, params: &FimParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = params.register(&mut tape, "fim", false)?;
    let out = forward_on(&mut tape, zv, &vars)?;
    Ok(tape.value(out).clone())
}
